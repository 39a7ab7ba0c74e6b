"""scikit-learn style front end: fit on (audio, target curve) pairs, predict
GCI mark arrays, transform to predicted target curves."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .audio import normalize_peak
from .dsp import spline_upsample
from .model import ArchConfig, DetectConfig, build_model, detect, predict_curve
from .train import TrainConfig, WindowDataset, train
from .validation import as_audio_buffer, check_curve


class FcnGciDetector(BaseEstimator):
    """Fully-convolutional GCI detector with a fit/predict interface.

    Parameters
    ----------
    target_kind : "triangle" or "glottal_flow"
        Which regression target the curves in y represent; also selects the
        matching peak-picking rule at predict time.
    arch : "small", "paper", or an ArchConfig
        Network width preset.
    sample_rate : int
        Rate of the input signals (16 kHz is the only supported value).
    val_fraction : float
        Fraction of the fitted sequences held out to drive the learning-rate
        schedule and early stopping.
    max_epochs, epoch_batches, batch_size, lr_init, lr_factor, lr_patience,
    lr_min, early_stop_patience, val_windows, seed
        Training-loop knobs, mirrored into TrainConfig.

    Attributes
    ----------
    model_ : Model
        Trained network (best validation weights).
    history_ : list[EpochRecord]
        Per-epoch train/validation losses and learning rates.
    """

    def __init__(self, target_kind: str = "triangle", arch: str = "small",
                 sample_rate: int = 16000, val_fraction: float = 0.2,
                 max_epochs: int = 10, epoch_batches: int = 500,
                 batch_size: int = 128, lr_init: float = 0.0002,
                 lr_factor: float = 0.75, lr_patience: int = 10,
                 lr_min: float = 0.0000025, early_stop_patience: int = 64,
                 val_windows: int = 8192, seed: int = 0):
        self.target_kind = target_kind
        self.arch = arch
        self.sample_rate = sample_rate
        self.val_fraction = val_fraction
        self.max_epochs = max_epochs
        self.epoch_batches = epoch_batches
        self.batch_size = batch_size
        self.lr_init = lr_init
        self.lr_factor = lr_factor
        self.lr_patience = lr_patience
        self.lr_min = lr_min
        self.early_stop_patience = early_stop_patience
        self.val_windows = val_windows
        self.seed = seed

    def _arch_config(self) -> ArchConfig:
        if isinstance(self.arch, ArchConfig):
            return self.arch
        presets = {"small": ArchConfig.small, "paper": ArchConfig.paper}
        if self.arch not in presets:
            raise ValueError(f"arch must be 'small', 'paper', or an ArchConfig, "
                             f"got {self.arch!r}")
        return presets[self.arch]()

    def _normalized(self, X) -> list[np.ndarray]:
        if self.sample_rate != 16000:
            raise ValueError("only 16 kHz input is supported")
        out = []
        for x in X:
            buf = as_audio_buffer(x, self.sample_rate)
            if buf.sample_rate != self.sample_rate:
                raise ValueError(f"signal rate {buf.sample_rate} != {self.sample_rate}")
            out.append(normalize_peak(buf, -3.0).samples)
        return out

    def fit(self, X, y):
        """Train on sequences X (mono 16 kHz signals) and y (same-length
        target curves in [0, 1])."""
        if self.target_kind not in ("triangle", "glottal_flow"):
            raise ValueError(f"unknown target_kind {self.target_kind!r}")
        arch = self._arch_config()
        if len(X) != len(y):
            raise ValueError(f"got {len(X)} signals but {len(y)} target curves")
        if len(X) < 2:
            raise ValueError("need at least 2 sequences (one is held out)")
        signals = self._normalized(X)
        pairs = [(sig, check_curve(t, len(sig))) for sig, t in zip(signals, y)]
        rng = np.random.default_rng([self.seed, 0xf17])
        order = rng.permutation(len(pairs))
        n_val = max(1, int(round(self.val_fraction * len(pairs))))
        val_items = [pairs[i] for i in order[:n_val]]
        train_items = [pairs[i] for i in order[n_val:]]
        cfg = TrainConfig(
            batch_size=self.batch_size, lr_init=self.lr_init,
            lr_factor=self.lr_factor, lr_patience=self.lr_patience,
            lr_min=self.lr_min, epoch_batches=self.epoch_batches,
            early_stop_patience=self.early_stop_patience, seed=self.seed,
            max_epochs=self.max_epochs, val_windows=self.val_windows)
        self.model_ = build_model(arch, seed=self.seed)
        self.history_ = train(self.model_,
                              WindowDataset(train_items, cfg.segment_len),
                              WindowDataset(val_items, cfg.segment_len), cfg)
        return self

    def predict(self, X) -> list[np.ndarray]:
        """GCI times (seconds) for each input signal."""
        check_is_fitted(self, "model_")
        cfg = DetectConfig(target_kind=self.target_kind)
        marks = []
        for sig in self._normalized(X):
            marks.append(detect(self.model_, as_audio_buffer(sig, self.sample_rate), cfg))
        return marks

    def transform(self, X) -> list[np.ndarray]:
        """Predicted target curve per signal, resampled to the input rate and
        trimmed to the input length (composable with array pipelines)."""
        check_is_fitted(self, "model_")
        out = []
        for sig in self._normalized(X):
            curve = predict_curve(self.model_, as_audio_buffer(sig, self.sample_rate))
            if curve.size >= 4:
                up = spline_upsample(curve, 8)
            else:
                up = np.repeat(curve, 8)
            if up.size < sig.size:
                up = np.pad(up, (0, sig.size - up.size), mode="edge")
            out.append(up[:sig.size])
        return out

    def fit_predict(self, X, y) -> list[np.ndarray]:
        return self.fit(X, y).predict(X)
