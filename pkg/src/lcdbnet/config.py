"""Network and training configuration, plus the flat YAML run-config loader."""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

ABLATIONS = ("no_lan", "no_crn", "no_fn", "no_swin", "no_dacb")


class ConfigError(ValueError):
    """Raised with every validation problem found, not just the first."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass(frozen=True)
class NetworkConfig:
    base_channels_lan: int = 48
    base_channels_crn: int = 48
    lan_stages: int = 3
    crn_wavelet_levels: int = 3
    rcabs_per_level: int = 2
    fn_channels: int = 96
    fn_conv_layers: int = 5
    window: int = 8
    heads_divisor: int = 16
    reduction: int = 16
    swin_depth: int = 2
    ablations: tuple[str, ...] = ()

    def problems(self) -> list[str]:
        out = []
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name != "ablations" and (not isinstance(v, int) or v < 1):
                out.append(f"network.{f.name} must be a positive integer, got {v!r}")
        for a in self.ablations:
            if a not in ABLATIONS:
                out.append(f"unknown ablation {a!r}; choose from {', '.join(ABLATIONS)}")
        if "no_fn" not in self.ablations and self.base_channels_lan + self.base_channels_crn != self.fn_channels:
            out.append("fn_channels must equal base_channels_lan + base_channels_crn")
        if {"no_swin", "no_dacb"} <= set(self.ablations):
            out.append("no_swin and no_dacb together leave GLAB without a branch")
        if self.swin_depth > 2:
            out.append("swin_depth must be 1 or 2")
        return out

    def validate(self) -> "NetworkConfig":
        problems = self.problems()
        if problems:
            raise ConfigError(problems)
        return self

    def has(self, ablation: str) -> bool:
        return ablation in self.ablations

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["ablations"] = list(self.ablations)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        d = dict(d)
        d["ablations"] = tuple(d.get("ablations", ()))
        return cls(**d)


TOY_NETWORK = NetworkConfig(base_channels_lan=8, base_channels_crn=8, fn_channels=16, reduction=4,
                            rcabs_per_level=1, swin_depth=1)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 2000
    batch_size: int = 8
    lr_init: float = 1e-4
    lr_final: float = 1e-6
    beta1: float = 0.9
    beta2: float = 0.99
    adam_eps: float = 1e-8
    lambda1: float = 0.1
    lambda2: float = 0.1
    charbonnier_eps: float = 1e-3
    crop: int = 128
    seed: int = 0
    eval_every: int = 50
    checkpoint_every: int = 50
    grad_clip: float = 1.0
    workers: int = 0
    network: NetworkConfig = field(default_factory=NetworkConfig)

    def problems(self) -> list[str]:
        out = []
        for name in ("epochs", "batch_size", "crop", "eval_every", "checkpoint_every"):
            if getattr(self, name) < 1:
                out.append(f"{name} must be >= 1")
        for name in ("lr_init", "lr_final", "adam_eps", "charbonnier_eps"):
            if not getattr(self, name) > 0:
                out.append(f"{name} must be positive")
        if self.lr_final > self.lr_init:
            out.append("lr_final must not exceed lr_init")
        for name in ("beta1", "beta2"):
            if not 0 <= getattr(self, name) < 1:
                out.append(f"{name} must lie in [0, 1)")
        for name in ("lambda1", "lambda2", "grad_clip", "workers"):
            if getattr(self, name) < 0:
                out.append(f"{name} must be non-negative")
        return out + self.network.problems()

    def validate(self) -> "TrainConfig":
        problems = self.problems()
        if problems:
            raise ConfigError(problems)
        return self

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "network"}
        d["network"] = self.network.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        net = NetworkConfig.from_dict(d.pop("network", {}))
        return cls(network=net, **d)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


_NET_KEYS = {f.name for f in fields(NetworkConfig)}
_TRAIN_KEYS = {f.name for f in fields(TrainConfig)} - {"network"}
_PATH_KEYS = {"data_root", "eval_root", "out_dir"}


@dataclass
class RunConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    data_root: str | None = None
    eval_root: str | None = None
    out_dir: str = "runs/lcdbnet"

    @property
    def network(self) -> NetworkConfig:
        return self.train.network


def _coerce(key: str, value, target, problems: list[str]):
    if isinstance(target, bool) or target is None:
        return value
    if key == "ablations":
        if isinstance(value, str):
            value = [v.strip() for v in value.split(",") if v.strip()]
        if not isinstance(value, (list, tuple)):
            problems.append(f"ablations must be a list, got {value!r}")
            return target
        return tuple(value)
    try:
        if isinstance(target, int):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError
            return int(value)
        if isinstance(target, float):
            return float(value)
    except (TypeError, ValueError):
        problems.append(f"{key} expects {type(target).__name__}, got {value!r}")
        return target
    return value


def parse_override(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise ConfigError([f"override {text!r} is not of the form key=value"])
    key, raw = text.split("=", 1)
    return key.strip(), yaml.safe_load(raw) if raw.strip() else ""


def build_run_config(file_values: dict | None = None, overrides: dict | None = None) -> RunConfig:
    """Merge built-in defaults < config file < overrides, validating everything at once.

    Keys may be flat (``epochs``, ``base_channels_lan``) or dotted
    (``network.window``). Unknown keys are rejected.
    """
    merged: dict = {}
    for source in (file_values or {}, overrides or {}):
        for key, value in source.items():
            if key == "network" and isinstance(value, dict):
                for k, v in value.items():
                    merged[k] = v
            else:
                merged[key.split(".", 1)[1] if key.startswith(("network.", "train.")) else key] = value

    problems = []
    defaults_net, defaults_train = NetworkConfig(), TrainConfig()
    net_kw, train_kw, paths = {}, {}, {}
    for key, value in merged.items():
        if key in _NET_KEYS:
            net_kw[key] = _coerce(key, value, getattr(defaults_net, key), problems)
        elif key in _TRAIN_KEYS:
            train_kw[key] = _coerce(key, value, getattr(defaults_train, key), problems)
        elif key in _PATH_KEYS:
            paths[key] = None if value is None else str(value)
        else:
            problems.append(f"unknown config key {key!r}")
    if problems:
        raise ConfigError(problems)
    cfg = TrainConfig(network=NetworkConfig(**net_kw), **train_kw)
    problems = cfg.problems()
    if problems:
        raise ConfigError(problems)
    return RunConfig(train=cfg, **paths)


def load_config_file(path: str | Path) -> dict:
    """Read a flat YAML mapping. The special name ``default`` yields no values."""
    if str(path) == "default":
        return {}
    text = Path(path).read_text()
    data = yaml.safe_load(text) or {}
    if not isinstance(data, dict):
        raise ConfigError([f"{path}: expected a key/value mapping"])
    return data
