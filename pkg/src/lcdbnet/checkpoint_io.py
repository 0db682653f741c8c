"""The ``.lcdb`` checkpoint container.

Layout (all integers little-endian)::

    b"LCDB" | uint32 format_version | uint64 header_len | header JSON | payload

The header lists every array with its byte offset into the payload. Arrays
are stored as row-major little-endian float32, sorted by name, so the same
state always serializes to the same bytes. See ``docs/checkpoint_format.md``.
"""
from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .config import NetworkConfig

MAGIC = b"LCDB"
FORMAT_VERSION = 1
_PREAMBLE = struct.Struct("<4sIQ")
_MOMENTS = ("exp_avg", "exp_avg_sq")


class CheckpointError(RuntimeError):
    pass


class IntegrityError(CheckpointError):
    pass


class ParameterMismatchError(CheckpointError):
    def __init__(self, missing: list[str], unexpected: list[str], shapes: list[str] | None = None):
        self.missing, self.unexpected, self.shapes = missing, unexpected, shapes or []
        first = (missing or unexpected or self.shapes)[0]
        parts = [f"first mismatched parameter: {first}"]
        if missing:
            parts.append(f"missing: {', '.join(missing)}")
        if unexpected:
            parts.append(f"unexpected: {', '.join(unexpected)}")
        if self.shapes:
            parts.append(f"shape mismatch: {', '.join(self.shapes)}")
        super().__init__("; ".join(parts))


@dataclass
class Checkpoint:
    network_config: NetworkConfig
    parameters: dict[str, np.ndarray]
    step: int = 0
    train_config: dict | None = None
    train_config_digest: str | None = None
    optimizer: dict | None = None  # {"exp_avg": {...}, "exp_avg_sq": {...}, "step": {name: int}}
    best: dict = field(default_factory=dict)
    format_version: int = FORMAT_VERSION


def _as_le_f32(a) -> np.ndarray:
    if isinstance(a, torch.Tensor):
        a = a.detach().cpu().numpy()
    return np.ascontiguousarray(np.asarray(a), dtype="<f4")


def _entries(ckpt: Checkpoint) -> dict[str, np.ndarray]:
    arrays = {f"param.{k}": v for k, v in ckpt.parameters.items()}
    if ckpt.optimizer is not None:
        for moment in _MOMENTS:
            for k, v in ckpt.optimizer.get(moment, {}).items():
                arrays[f"optimizer.{moment}.{k}"] = v
    return {k: _as_le_f32(arrays[k]) for k in sorted(arrays)}


def to_bytes(ckpt: Checkpoint) -> bytes:
    arrays = _entries(ckpt)
    tensors, chunks, offset = [], [], 0
    for name, arr in arrays.items():
        raw = arr.tobytes(order="C")
        tensors.append({"name": name, "dtype": "float32", "shape": list(arr.shape),
                        "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    payload = b"".join(chunks)
    header = {
        "format_version": ckpt.format_version,
        "network_config": ckpt.network_config.to_dict(),
        "train_config": ckpt.train_config,
        "train_config_digest": ckpt.train_config_digest,
        "step": int(ckpt.step),
        "best": ckpt.best,
        "optimizer_steps": None if ckpt.optimizer is None else
        {k: int(v) for k, v in sorted(ckpt.optimizer.get("step", {}).items())},
        "has_optimizer": ckpt.optimizer is not None,
        "tensors": tensors,
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return _PREAMBLE.pack(MAGIC, FORMAT_VERSION, len(blob)) + blob + payload


def from_bytes(data: bytes) -> Checkpoint:
    if len(data) < _PREAMBLE.size:
        raise IntegrityError("file too short for an LCDB header")
    magic, version, hlen = _PREAMBLE.unpack_from(data)
    if magic != MAGIC:
        raise IntegrityError(f"bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported format version {version}")
    start = _PREAMBLE.size
    try:
        header = json.loads(data[start:start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise IntegrityError(f"corrupt header: {exc}") from None
    payload = data[start + hlen:]
    if hashlib.sha256(payload).hexdigest() != header["payload_sha256"]:
        raise IntegrityError("payload checksum mismatch")
    params, moments = {}, {m: {} for m in _MOMENTS}
    for t in header["tensors"]:
        if t["nbytes"] != 4 * int(np.prod(t["shape"], dtype=np.int64)):
            raise IntegrityError(f"{t['name']}: payload length disagrees with shape")
        raw = payload[t["offset"]:t["offset"] + t["nbytes"]]
        arr = np.frombuffer(raw, dtype="<f4").reshape(t["shape"]).astype(np.float32)
        kind, rest = t["name"].split(".", 1)
        if kind == "param":
            params[rest] = arr
        else:
            moment, pname = rest.split(".", 1)
            moments[moment][pname] = arr
    optimizer = None
    if header.get("has_optimizer"):
        optimizer = dict(moments, step=dict(header.get("optimizer_steps") or {}))
    return Checkpoint(
        network_config=NetworkConfig.from_dict(header["network_config"]),
        parameters=params,
        step=header["step"],
        train_config=header.get("train_config"),
        train_config_digest=header.get("train_config_digest"),
        optimizer=optimizer,
        best=header.get("best") or {},
        format_version=header["format_version"],
    )


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> Path:
    """Write atomically: a temporary file in the target directory is renamed over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = to_bytes(ckpt)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def load_checkpoint(path: str | Path) -> Checkpoint:
    return from_bytes(Path(path).read_bytes())


def model_parameters(model: torch.nn.Module) -> dict[str, np.ndarray]:
    return {k: v.detach().cpu().numpy().astype(np.float32) for k, v in model.state_dict().items()}


def apply_parameters(model: torch.nn.Module, params: dict[str, np.ndarray]) -> None:
    """Copy ``params`` into ``model``; name or shape disagreement raises
    :class:`ParameterMismatchError`."""
    expected = model.state_dict()
    missing = sorted(set(expected) - set(params))
    unexpected = sorted(set(params) - set(expected))
    shapes = sorted(k for k in set(expected) & set(params) if tuple(expected[k].shape) != tuple(params[k].shape))
    if missing or unexpected or shapes:
        raise ParameterMismatchError(missing, unexpected, shapes)
    with torch.no_grad():
        for k, t in expected.items():
            t.copy_(torch.from_numpy(np.asarray(params[k])).to(t.dtype))
