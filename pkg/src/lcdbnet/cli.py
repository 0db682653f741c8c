"""Command-line entry point: ``lcdbnet {train,enhance,evaluate,decompose,info}``.

Exit codes: 0 ok, 1 usage/config error, 2 data error, 3 runtime error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np
from PIL import Image

from . import checkpoint_io
from .colorspace import normalize_ycc, rgb_to_ycc
from .config import ABLATIONS, ConfigError, build_run_config, load_config_file, parse_override
from .data import DataError, read_png, write_png
from .networks import LCDBNet, count_parameters

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3
DATA_ROOT_ENV = "LCDBNET_DATA_ROOT"
DECOMPOSE_SUFFIXES = ("R", "G", "B", "Y", "Cb", "Cr", "original")

log = logging.getLogger("lcdbnet")


def _run_config(args):
    problems, overrides = [], {}
    for text in args.override or []:
        try:
            k, v = parse_override(text)
            overrides[k] = v
        except ConfigError as exc:
            problems += exc.problems
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "ablate", None):
        overrides["ablations"] = list(args.ablate)
    if getattr(args, "out", None):
        overrides["out_dir"] = args.out
    if problems:
        raise ConfigError(problems)
    return build_run_config(load_config_file(args.config), overrides)


def cmd_train(args) -> int:
    from .training import train

    run = _run_config(args)
    data_root = args.data or run.data_root or os.environ.get(DATA_ROOT_ENV)
    if not data_root:
        raise ConfigError([f"no dataset root: pass --data, set data_root, or set ${DATA_ROOT_ENV}"])
    log.info("training %d parameters, grad clip %.3g", count_parameters(LCDBNet(run.network)), run.train.grad_clip)
    ckpt = train(run.train, data_root, run.out_dir, eval_root=run.eval_root, resume=not args.no_resume)
    print(f"finished at step {ckpt.step}; checkpoint {Path(run.out_dir) / 'latest.lcdb'}")
    return EXIT_OK


def _inputs(path: Path) -> list[Path]:
    if path.is_dir():
        return sorted(p for p in path.iterdir() if p.suffix.lower() == ".png")
    return [path]


def cmd_enhance(args) -> int:
    from .training import enhance_array, model_from_checkpoint

    model = model_from_checkpoint(checkpoint_io.load_checkpoint(args.checkpoint))
    out_dir = Path(args.output)
    failures, done = [], 0
    inputs = _inputs(Path(args.input))
    for p in inputs:
        try:
            img = read_png(p)
        except DataError as exc:
            log.warning("skipping %s: %s", p, exc)
            failures.append(str(p))
            continue
        t0 = time.perf_counter()
        out = enhance_array(model, img)
        write_png(out_dir / p.name, out)
        done += 1
        log.info("%s: %dx%d in %.3fs", p.name, img.shape[1], img.shape[0], time.perf_counter() - t0)
    print(f"enhanced {done} image(s), {len(failures)} failed")
    for f in failures:
        print(f"  failed: {f}")
    return EXIT_DATA if inputs and done == 0 else EXIT_OK


def cmd_evaluate(args) -> int:
    from .training import evaluate_checkpoint

    data_root = args.data or os.environ.get(DATA_ROOT_ENV)
    if not data_root:
        raise ConfigError([f"no dataset root: pass --data or set ${DATA_ROOT_ENV}"])
    report = evaluate_checkpoint(args.checkpoint, data_root)
    report_path = Path(args.report)
    report_path.parent.mkdir(parents=True, exist_ok=True)
    report_path.with_suffix(".json").write_text(report.to_json())
    report_path.with_suffix(".txt").write_text(report.to_text() + "\n")
    print(report.to_text())
    return EXIT_OK


def _write_gray16(path: Path, plane: np.ndarray) -> None:
    q = np.round(np.clip(plane, 0.0, 1.0) * 65535.0).astype(np.uint16)
    Image.fromarray(q).save(path, format="PNG")


def _write_gray8(path: Path, plane: np.ndarray) -> None:
    q = np.round(np.clip(plane, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(q, mode="L").save(path, format="PNG")


def decompose_image(src: Path, out_dir: Path, depth: int = 16) -> list[Path]:
    """Write R, G, B, Y, Cb, Cr and original panels for one image.

    Cb/Cr use the unit remap (0.5 is neutral). Y/Cb/Cr are written at
    ``depth`` bits so the planes recombine to the source within one 8-bit step.
    """
    rgb = read_png(src)
    unit = normalize_ycc(rgb_to_ycc(rgb))
    out_dir.mkdir(parents=True, exist_ok=True)
    writer = _write_gray16 if depth == 16 else _write_gray8
    paths = []
    for i, name in enumerate("RGB"):
        p = out_dir / f"{src.stem}_{name}.png"
        _write_gray8(p, rgb[..., i])
        paths.append(p)
    for i, name in enumerate(("Y", "Cb", "Cr")):
        p = out_dir / f"{src.stem}_{name}.png"
        writer(p, unit[..., i])
        paths.append(p)
    p = out_dir / f"{src.stem}_original.png"
    write_png(p, rgb)
    paths.append(p)
    return paths


def read_plane(path: Path) -> np.ndarray:
    """Decode a panel written by :func:`decompose_image` to [0, 1]."""
    with Image.open(path) as im:
        arr = np.asarray(im)
    peak = 65535.0 if arr.dtype != np.uint8 else 255.0
    return arr.astype(np.float64) / peak


def cmd_decompose(args) -> int:
    inputs = _inputs(Path(args.input))
    for p in inputs:
        decompose_image(p, Path(args.output), args.depth)
    print(f"decomposed {len(inputs)} image(s) into {len(inputs) * len(DECOMPOSE_SUFFIXES)} files")
    return EXIT_OK


def cmd_info(args) -> int:
    if args.checkpoint:
        net = checkpoint_io.load_checkpoint(args.checkpoint).network_config
        info = {"network": net.to_dict()}
    else:
        run = _run_config(args)
        net = run.network
        info = {"train": run.train.to_dict(), "out_dir": run.out_dir}
    model = LCDBNet(net)
    info["parameters"] = count_parameters(model)
    info["fusion_layers"] = model.fn.layer_table() if model.fn is not None else []
    print(json.dumps(info, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lcdbnet", description="Luminance/chrominance dual-branch low-light enhancement.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def run_options(p):
        p.add_argument("--config", default="default", help="YAML config file or 'default'")
        p.add_argument("--override", action="append", metavar="KEY=VALUE", help="repeatable")
        p.add_argument("--ablate", action="append", choices=ABLATIONS)
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("train", help="train a model")
    run_options(p)
    p.add_argument("--data", help=f"dataset root with low/ and high/ (default ${DATA_ROOT_ENV})")
    p.add_argument("--no-resume", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("enhance", help="enhance PNG images")
    p.add_argument("checkpoint")
    p.add_argument("input", help="PNG file or directory")
    p.add_argument("output", help="output directory")
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("evaluate", help="PSNR/SSIM report on a paired dataset")
    p.add_argument("checkpoint")
    p.add_argument("--data")
    p.add_argument("--report", required=True, help="report path stem; .json and .txt are written")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("decompose", help="write R/G/B/Y/Cb/Cr channel panels")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--depth", type=int, choices=(8, 16), default=16)
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("info", help="print config and parameter count")
    run_options(p)
    p.add_argument("--checkpoint")
    p.set_defaults(func=cmd_info)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (checkpoint_io.CheckpointError, RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
