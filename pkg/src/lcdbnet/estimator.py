"""scikit-learn compatible wrappers around the color transform and the model."""
from __future__ import annotations

import numpy as np
import torch
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import checkpoint_io
from .colorspace import denormalize_ycc, normalize_ycc, rgb_to_ycc, ycc_to_rgb
from .config import NetworkConfig, TrainConfig
from .data import PairedSample, num_batches
from .metrics import MetricReport, evaluate_pair
from .networks import count_parameters
from .training import (TrainState, enhance_array, fit, init_state, model_from_checkpoint,
                       state_to_checkpoint)
from .validation import ValidationError, check_image_list


class YCbCrTransformer(TransformerMixin, BaseEstimator):
    """Stateless RGB -> YCbCr transform on channel-last arrays.

    With ``unit=True`` the output chroma is remapped onto [0, 1].
    """

    def __init__(self, unit: bool = False):
        self.unit = unit

    def fit(self, X, y=None):
        X = np.asarray(X)
        if X.shape[-1] != 3:
            raise ValidationError(f"expected a trailing axis of size 3, got {X.shape}")
        self.n_features_in_ = 3
        return self

    def transform(self, X):
        out = rgb_to_ycc(X)
        return normalize_ycc(out) if self.unit else out

    def inverse_transform(self, X):
        X = np.asarray(X)
        return ycc_to_rgb(denormalize_ycc(X) if self.unit else X)


class LCDBNetEnhancer(RegressorMixin, BaseEstimator):
    """Low-light enhancer with a fit/predict interface.

    ``X`` is a list (or ``(N, H, W, 3)`` array) of low-light RGB images in
    [0, 1] or uint8, ``y`` the matching normal-light references. ``score``
    returns mean RGB PSNR in dB.
    """

    def __init__(self, base_channels: int = 48, crn_wavelet_levels: int = 3, rcabs_per_level: int = 2,
                 fn_conv_layers: int = 5, window: int = 8, swin_depth: int = 2, reduction: int = 16,
                 ablations: tuple = (), epochs: int = 2000, batch_size: int = 8, crop: int = 128,
                 lr_init: float = 1e-4, lr_final: float = 1e-6, lambda1: float = 0.1,
                 lambda2: float = 0.1, grad_clip: float = 1.0, random_state: int = 0):
        self.base_channels = base_channels
        self.crn_wavelet_levels = crn_wavelet_levels
        self.rcabs_per_level = rcabs_per_level
        self.fn_conv_layers = fn_conv_layers
        self.window = window
        self.swin_depth = swin_depth
        self.reduction = reduction
        self.ablations = ablations
        self.epochs = epochs
        self.batch_size = batch_size
        self.crop = crop
        self.lr_init = lr_init
        self.lr_final = lr_final
        self.lambda1 = lambda1
        self.lambda2 = lambda2
        self.grad_clip = grad_clip
        self.random_state = random_state

    def _train_config(self) -> TrainConfig:
        net = NetworkConfig(
            base_channels_lan=self.base_channels,
            base_channels_crn=self.base_channels,
            fn_channels=2 * self.base_channels,
            crn_wavelet_levels=self.crn_wavelet_levels,
            rcabs_per_level=self.rcabs_per_level,
            fn_conv_layers=self.fn_conv_layers,
            window=self.window,
            swin_depth=self.swin_depth,
            reduction=self.reduction,
            ablations=tuple(self.ablations),
        )
        return TrainConfig(
            epochs=self.epochs, batch_size=self.batch_size, crop=self.crop,
            lr_init=self.lr_init, lr_final=self.lr_final, lambda1=self.lambda1,
            lambda2=self.lambda2, grad_clip=self.grad_clip, seed=self.random_state,
            network=net,
        ).validate()

    def fit(self, X, y):
        lows = check_image_list(X, "X")
        refs = check_image_list(y, "y")
        if len(lows) != len(refs):
            raise ValidationError(f"X has {len(lows)} images but y has {len(refs)}")
        samples = [PairedSample(lo, re, f"{i:06d}") for i, (lo, re) in enumerate(zip(lows, refs))]
        cfg = self._train_config()
        total = cfg.epochs * num_batches(len(samples), cfg.batch_size)
        history = []
        state = init_state(cfg, total)
        state = fit(state, samples, cfg, on_step=lambda s, b, lr: history.append(b.as_dict()["total"]))
        self.model_ = state.model.eval()
        self.train_config_ = cfg
        self.n_steps_ = state.step
        self.loss_history_ = np.asarray(history)
        self.n_parameters_ = count_parameters(self.model_)
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        imgs = check_image_list(X, "X")
        out = [enhance_array(self.model_, img) for img in imgs]
        if isinstance(X, np.ndarray) and X.ndim == 3:
            return out[0]
        return out

    def transform(self, X):
        return self.predict(X)

    def evaluate(self, X, y) -> MetricReport:
        report = MetricReport()
        for i, (pred, ref) in enumerate(zip(self.predict(list(check_image_list(X, "X"))), check_image_list(y, "y"))):
            report.add(f"{i:06d}", *evaluate_pair(pred, ref))
        return report

    def score(self, X, y, sample_weight=None) -> float:
        return self.evaluate(X, y).psnr_db

    def save(self, path) -> None:
        check_is_fitted(self, "model_")
        state = TrainState(self.model_, torch.optim.Adam(self.model_.parameters()), 0, self.n_steps_)
        checkpoint_io.save_checkpoint(state_to_checkpoint(state, self.train_config_, with_optimizer=False), path)

    @classmethod
    def from_checkpoint(cls, path) -> "LCDBNetEnhancer":
        ckpt = checkpoint_io.load_checkpoint(path)
        net = ckpt.network_config
        est = cls(base_channels=net.base_channels_lan, crn_wavelet_levels=net.crn_wavelet_levels,
                  rcabs_per_level=net.rcabs_per_level, fn_conv_layers=net.fn_conv_layers,
                  window=net.window, swin_depth=net.swin_depth, reduction=net.reduction,
                  ablations=net.ablations)
        est.model_ = model_from_checkpoint(ckpt)
        est.train_config_ = TrainConfig(network=net) if ckpt.train_config is None else \
            TrainConfig.from_dict({k: v for k, v in ckpt.train_config.items() if k != "total_steps"})
        est.n_steps_ = ckpt.step
        est.n_parameters_ = count_parameters(est.model_)
        return est
