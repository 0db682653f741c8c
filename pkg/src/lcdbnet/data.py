"""Paired low/normal-light data: directory scanning, PNG I/O, augmentation, batching."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, NamedTuple, Sequence

import numpy as np
from PIL import Image

from .colorspace import encode_uint8


class DataError(RuntimeError):
    pass


class UnpairedFileError(DataError):
    pass


def read_png(path: str | Path) -> np.ndarray:
    """Decode to float64 ``(H, W, 3)`` in [0, 1]; alpha is dropped."""
    try:
        with Image.open(path) as im:
            rgb = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot decode {path}: {exc}") from None
    return rgb.astype(np.float64) / 255.0


def write_png(path: str | Path, img: np.ndarray) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(encode_uint8(img)).save(path, format="PNG")


@dataclass(frozen=True)
class PairDescriptor:
    name: str
    low_path: Path
    high_path: Path


@dataclass
class PairedSample:
    low: np.ndarray
    ref: np.ndarray
    name: str

    def __post_init__(self):
        if self.low.shape != self.ref.shape:
            raise DataError(f"{self.name}: low {self.low.shape} and ref {self.ref.shape} differ")


def scan_dataset(root: str | Path) -> list[PairDescriptor]:
    """Pair ``root/low/*.png`` with ``root/high/*.png`` by filename."""
    root = Path(root)
    low_dir, high_dir = root / "low", root / "high"
    for d in (low_dir, high_dir):
        if not d.is_dir():
            raise DataError(f"missing directory {d}")
    lows = {p.name: p for p in low_dir.glob("*.png")}
    highs = {p.name: p for p in high_dir.glob("*.png")}
    orphans = sorted(set(lows) ^ set(highs))
    if orphans:
        where = "high" if orphans[0] in lows else "low"
        raise UnpairedFileError(f"{orphans[0]} has no counterpart in {root / where}")
    return [PairDescriptor(Path(n).stem, lows[n], highs[n]) for n in sorted(lows)]


def load_pair(desc: PairDescriptor) -> PairedSample:
    return PairedSample(read_png(desc.low_path), read_png(desc.high_path), desc.name)


class PairedDataset(Sequence):
    """Lazily decoded pairs with an in-memory cache."""

    def __init__(self, descriptors: Sequence[PairDescriptor], cache: bool = True):
        self.descriptors = list(descriptors)
        self._cache: dict[int, PairedSample] | None = {} if cache else None

    @classmethod
    def from_root(cls, root, cache: bool = True) -> "PairedDataset":
        return cls(scan_dataset(root), cache)

    def __len__(self) -> int:
        return len(self.descriptors)

    def __getitem__(self, i):
        if self._cache is None:
            return load_pair(self.descriptors[i])
        if i not in self._cache:
            self._cache[i] = load_pair(self.descriptors[i])
        return self._cache[i]


class AugmentParams(NamedTuple):
    top: int
    left: int
    flip: bool
    rotations: int


def draw_augment(rng: np.random.Generator, height: int, width: int, crop: int) -> AugmentParams:
    top = int(rng.integers(0, max(height, crop) - crop + 1))
    left = int(rng.integers(0, max(width, crop) - crop + 1))
    return AugmentParams(top, left, bool(rng.random() < 0.5), int(rng.integers(0, 4)))


def _pad_to(img: np.ndarray, crop: int) -> np.ndarray:
    ph, pw = max(0, crop - img.shape[0]), max(0, crop - img.shape[1])
    if not (ph or pw):
        return img
    mode = "reflect" if ph < img.shape[0] and pw < img.shape[1] else "symmetric"
    return np.pad(img, ((0, ph), (0, pw)) + ((0, 0),) * (img.ndim - 2), mode=mode)


def apply_augment(img: np.ndarray, params: AugmentParams, crop: int) -> np.ndarray:
    """Crop, optionally flip horizontally, then rotate by ``rotations * 90`` degrees."""
    img = _pad_to(img, crop)
    out = img[params.top:params.top + crop, params.left:params.left + crop]
    if params.flip:
        out = out[:, ::-1]
    return np.ascontiguousarray(np.rot90(out, params.rotations, axes=(0, 1)))


def augment(sample: PairedSample, rng: np.random.Generator, crop: int = 128) -> tuple[PairedSample, AugmentParams]:
    params = draw_augment(rng, sample.low.shape[0], sample.low.shape[1], crop)
    out = PairedSample(apply_augment(sample.low, params, crop), apply_augment(sample.ref, params, crop), sample.name)
    return out, params


def sample_rng(epoch_seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([int(epoch_seed), int(index)])


def epoch_seed(seed: int, epoch: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(epoch)]).generate_state(1)[0])


@dataclass
class Batch:
    low: np.ndarray  # (N, 3, h, w) float32
    ref: np.ndarray
    names: list[str]

    def __len__(self) -> int:
        return len(self.names)


def num_batches(n: int, batch_size: int) -> int:
    return math.ceil(n / batch_size)


def _prepare(dataset, index: int, seed: int, crop: int | None) -> PairedSample:
    sample = dataset[index]
    if crop is None:
        return sample
    return augment(sample, sample_rng(seed, index), crop)[0]


def iterate_batches(dataset: Sequence[PairedSample], batch_size: int = 8, epoch_seed: int = 0,
                    crop: int | None = 128, workers: int = 0, skip: int = 0) -> Iterator[Batch]:
    """One shuffled epoch of batches; the last batch may be smaller.

    Augmentation randomness depends only on ``(epoch_seed, sample index)``,
    so the stream is identical for any ``workers`` count. ``crop=None``
    disables augmentation and requires equal-sized images.
    """
    if len(dataset) == 0:
        raise DataError("cannot batch an empty dataset")
    order = np.random.default_rng(epoch_seed).permutation(len(dataset))
    chunks = [order[i:i + batch_size] for i in range(0, len(order), batch_size)][skip:]
    pool = ThreadPoolExecutor(workers) if workers > 0 else None
    try:
        for chunk in chunks:
            args = [(dataset, int(i), epoch_seed, crop) for i in chunk]
            if pool is None:
                samples = [_prepare(*a) for a in args]
            else:
                samples = list(pool.map(lambda a: _prepare(*a), args))
            yield Batch(
                low=np.stack([s.low.transpose(2, 0, 1) for s in samples]).astype(np.float32),
                ref=np.stack([s.ref.transpose(2, 0, 1) for s in samples]).astype(np.float32),
                names=[s.name for s in samples],
            )
    finally:
        if pool is not None:
            pool.shutdown()
