"""Adam + cosine-annealed training of LCDBNet on the joint YCbCr objective."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch

from . import checkpoint_io
from .checkpoint_io import Checkpoint
from .colorspace import rgb_to_unit_ycc_tensor
from .config import TrainConfig
from .data import Batch, PairedDataset, PairedSample, epoch_seed, iterate_batches, num_batches
from .losses import LossBreakdown, joint_loss
from .metrics import MetricReport, evaluate_pair
from .networks import LCDBNet

log = logging.getLogger(__name__)


class NonFiniteError(FloatingPointError):
    pass


def lr_at(step: int, total_steps: int, cfg: TrainConfig) -> float:
    """Single-cycle cosine decay from ``lr_init`` at step 0 to ``lr_final`` at ``total_steps``."""
    if total_steps <= 0:
        return cfg.lr_init
    t = min(max(step, 0), total_steps) / total_steps
    return cfg.lr_final + 0.5 * (cfg.lr_init - cfg.lr_final) * (1.0 + math.cos(math.pi * t))


@dataclass
class TrainState:
    model: LCDBNet
    optimizer: torch.optim.Adam
    total_steps: int
    step: int = 0
    best: dict = field(default_factory=dict)

    def parameter_names(self) -> dict[torch.nn.Parameter, str]:
        return {p: n for n, p in self.model.named_parameters()}


def init_state(cfg: TrainConfig, total_steps: int) -> TrainState:
    torch.manual_seed(cfg.seed)
    model = LCDBNet(cfg.network)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr_init, betas=(cfg.beta1, cfg.beta2),
                           eps=cfg.adam_eps, weight_decay=0.0)
    return TrainState(model, opt, total_steps)


def compute_loss(model: LCDBNet, low: torch.Tensor, ref: torch.Tensor, cfg: TrainConfig) -> LossBreakdown:
    out = model(low).outputs
    ref_ycc = rgb_to_unit_ycc_tensor(ref)
    return joint_loss(out.sm_lum, out.sm_chrom, out.enhanced_ycc, ref_ycc,
                      cfg.lambda1, cfg.lambda2, cfg.charbonnier_eps)


def _check_finite_loss(b: LossBreakdown) -> None:
    for name, value in b.as_dict().items():
        if not math.isfinite(value):
            raise NonFiniteError(f"non-finite loss term {name}={value}")


def train_step(state: TrainState, batch: Batch, cfg: TrainConfig) -> tuple[TrainState, LossBreakdown, float]:
    """One Adam update; returns the state, the loss breakdown and the learning rate used."""
    model = state.model
    model.train()
    dtype = next(model.parameters()).dtype
    low = torch.from_numpy(batch.low).to(dtype)
    ref = torch.from_numpy(batch.ref).to(dtype)
    lr = lr_at(state.step, state.total_steps, cfg)
    for group in state.optimizer.param_groups:
        group["lr"] = lr
    state.optimizer.zero_grad(set_to_none=True)
    breakdown = compute_loss(model, low, ref, cfg)
    _check_finite_loss(breakdown)
    breakdown.total.backward()
    names = state.parameter_names()
    for p in model.parameters():
        if p.grad is not None and not torch.isfinite(p.grad).all():
            raise NonFiniteError(f"non-finite gradient in {names[p]}")
    if cfg.grad_clip > 0:
        torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip)
    if lr > 0:
        state.optimizer.step()
    state.step += 1
    return state, breakdown, lr


@torch.no_grad()
def enhance_array(model: LCDBNet, rgb: np.ndarray) -> np.ndarray:
    """Enhance one ``(H, W, 3)`` image at native resolution; output clamped to [0, 1]."""
    model.eval()
    dtype = next(model.parameters()).dtype
    x = torch.from_numpy(np.ascontiguousarray(rgb.transpose(2, 0, 1)))[None].to(dtype)
    return model(x).rgb[0].permute(1, 2, 0).double().numpy()


def evaluate_model(model: LCDBNet, samples: Sequence[PairedSample], quantize: bool = True) -> MetricReport:
    """RGB PSNR/SSIM of the model on each pair, in order.

    With ``quantize=True`` predictions go through the 8-bit encode/decode
    a saved PNG would, so reports match metrics recomputed from files.
    """
    report = MetricReport()
    for i in range(len(samples)):
        s = samples[i]
        pred = enhance_array(model, s.low)
        if quantize:
            pred = np.round(np.clip(pred, 0, 1) * 255.0) / 255.0
        report.add(s.name, *evaluate_pair(pred, s.ref))
    return report


def state_to_checkpoint(state: TrainState, cfg: TrainConfig, with_optimizer: bool = True) -> Checkpoint:
    params = checkpoint_io.model_parameters(state.model)
    optimizer = None
    if with_optimizer:
        names = state.parameter_names()
        optimizer = {"exp_avg": {}, "exp_avg_sq": {}, "step": {}}
        for p, st in state.optimizer.state.items():
            n = names[p]
            optimizer["exp_avg"][n] = st["exp_avg"].detach().numpy()
            optimizer["exp_avg_sq"][n] = st["exp_avg_sq"].detach().numpy()
            optimizer["step"][n] = int(st["step"])
    return Checkpoint(
        network_config=cfg.network,
        parameters=params,
        step=state.step,
        train_config=dict(cfg.to_dict(), total_steps=state.total_steps),
        train_config_digest=cfg.digest(),
        optimizer=optimizer,
        best=dict(state.best),
    )


def model_from_checkpoint(ckpt: Checkpoint) -> LCDBNet:
    model = LCDBNet(ckpt.network_config)
    checkpoint_io.apply_parameters(model, ckpt.parameters)
    model.eval()
    return model


def state_from_checkpoint(ckpt: Checkpoint, cfg: TrainConfig, total_steps: int) -> TrainState:
    if ckpt.network_config != cfg.network:
        raise checkpoint_io.CheckpointError("checkpoint network config differs from the run config")
    state = init_state(cfg, total_steps)
    checkpoint_io.apply_parameters(state.model, ckpt.parameters)
    state.step, state.best = ckpt.step, dict(ckpt.best)
    if ckpt.optimizer is not None:
        for n, p in state.model.named_parameters():
            if n in ckpt.optimizer["exp_avg"]:
                state.optimizer.state[p] = {
                    "step": torch.tensor(float(ckpt.optimizer["step"][n])),
                    "exp_avg": torch.from_numpy(ckpt.optimizer["exp_avg"][n].copy()),
                    "exp_avg_sq": torch.from_numpy(ckpt.optimizer["exp_avg_sq"][n].copy()),
                }
    return state


def fit(state: TrainState, dataset: Sequence[PairedSample], cfg: TrainConfig,
        eval_set: Sequence[PairedSample] | None = None, out_dir: str | Path | None = None,
        stop_at_step: int | None = None, on_step: Callable | None = None) -> TrainState:
    """Run epochs until ``state.total_steps`` (or ``stop_at_step``) is reached.

    Starting mid-run (``state.step > 0``) skips the batches already consumed,
    so an interrupted and resumed run follows the uninterrupted schedule.
    """
    per_epoch = num_batches(len(dataset), cfg.batch_size)
    out = Path(out_dir) if out_dir is not None else None
    step_log = history = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        step_log = open(out / "train_log.jsonl", "a")
        history = out / "history.jsonl"
    limit = state.total_steps if stop_at_step is None else min(stop_at_step, state.total_steps)
    try:
        while state.step < limit:
            epoch, offset = divmod(state.step, per_epoch)
            batches = iterate_batches(dataset, cfg.batch_size, epoch_seed(cfg.seed, epoch),
                                      crop=cfg.crop, workers=cfg.workers, skip=offset)
            for batch in batches:
                if state.step >= limit:
                    break
                state, breakdown, lr = train_step(state, batch, cfg)
                record = {"step": state.step, "lr": lr, **breakdown.as_dict(), "grad_clip": cfg.grad_clip}
                if step_log is not None:
                    step_log.write(json.dumps(record) + "\n")
                if on_step is not None:
                    on_step(state, breakdown, lr)
            finished_epoch = state.step % per_epoch == 0
            done_epochs = state.step // per_epoch
            if finished_epoch and eval_set is not None and (done_epochs % cfg.eval_every == 0 or state.step >= limit):
                report = evaluate_model(state.model, eval_set)
                log.info("step %d: eval PSNR %.3f SSIM %.4f", state.step, report.psnr_db, report.ssim)
                if not state.best or report.psnr_db > state.best.get("psnr_db", -math.inf):
                    state.best = {"step": state.step, "psnr_db": report.psnr_db, "ssim": report.ssim}
                if history is not None:
                    with open(history, "a") as fh:
                        fh.write(json.dumps({"step": state.step, **report.to_dict()}) + "\n")
            if out is not None and finished_epoch and (done_epochs % cfg.checkpoint_every == 0 or state.step >= limit):
                checkpoint_io.save_checkpoint(state_to_checkpoint(state, cfg), out / "latest.lcdb")
    finally:
        if step_log is not None:
            step_log.close()
    if out is not None:
        checkpoint_io.save_checkpoint(state_to_checkpoint(state, cfg), out / "latest.lcdb")
    return state


def train(cfg: TrainConfig, dataset_root, out_dir, eval_root=None, resume: bool = True,
          stop_at_step: int | None = None) -> Checkpoint:
    """Train from a ``low/``+``high/`` directory, resuming from ``out_dir/latest.lcdb`` if present."""
    cfg.validate()
    dataset = PairedDataset.from_root(dataset_root)
    if len(dataset) == 0:
        raise ValueError(f"no training pairs under {dataset_root}")
    eval_set = PairedDataset.from_root(eval_root) if eval_root is not None else None
    total = cfg.epochs * num_batches(len(dataset), cfg.batch_size)
    out = Path(out_dir)
    latest = out / "latest.lcdb"
    if resume and latest.exists():
        state = state_from_checkpoint(checkpoint_io.load_checkpoint(latest), cfg, total)
        log.info("resuming from step %d", state.step)
    else:
        state = init_state(cfg, total)
    state = fit(state, dataset, cfg, eval_set, out, stop_at_step)
    return state_to_checkpoint(state, cfg)


def evaluate_checkpoint(ckpt: Checkpoint | str | Path, dataset_root) -> MetricReport:
    if not isinstance(ckpt, Checkpoint):
        ckpt = checkpoint_io.load_checkpoint(ckpt)
    model = model_from_checkpoint(ckpt)
    return evaluate_model(model, PairedDataset.from_root(dataset_root))
