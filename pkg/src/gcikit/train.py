"""Mini-batch training: random 993-sample windows against the target value
at the window center, Adam, plateau learning-rate decay, early stopping on
the validation loss."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from . import nn
from .audio import read_wav
from .corpus import CorpusManifest
from .model import Model


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 128
    lr_init: float = 0.0002
    lr_factor: float = 0.75
    lr_patience: int = 10
    lr_min: float = 0.0000025
    epoch_batches: int = 500
    early_stop_patience: int = 64
    segment_len: int = 993
    seed: int = 0
    max_epochs: int = 10000
    val_windows: int = 8192

    def __post_init__(self):
        if min(self.batch_size, self.lr_patience, self.epoch_batches,
               self.early_stop_patience, self.segment_len, self.max_epochs) <= 0:
            raise ValueError("all sizes and patiences must be positive")
        if not 0 < self.lr_min < self.lr_init:
            raise ValueError("need 0 < lr_min < lr_init")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float


class WindowDataset:
    """In-memory (audio, target) pairs a sampler can draw windows from."""

    def __init__(self, items: list[tuple[np.ndarray, np.ndarray]], segment_len: int = 993):
        self.segment_len = segment_len
        self.items = []
        n_short = 0
        for audio, target in items:
            if audio.shape != target.shape:
                raise ValueError("audio and target curve lengths differ")
            if audio.size < segment_len:
                n_short += 1
                continue
            self.items.append((np.asarray(audio, dtype=np.float32),
                               np.asarray(target, dtype=np.float32)))
        if n_short:
            warnings.warn(f"skipped {n_short} files shorter than {segment_len} samples",
                          stacklevel=2)
        if not self.items:
            raise ValueError("no file is long enough to sample windows from")


def load_split(manifest: CorpusManifest, split: str, target_kind: str,
               segment_len: int = 993) -> WindowDataset:
    """Load one manifest split as an in-memory window dataset."""
    key = {"triangle": "target_tri", "glottal_flow": "target_gf"}[target_kind]
    entries = manifest.split_entries(split)
    if not entries:
        raise ValueError(f"manifest has no entries in split {split!r}")
    items = []
    for entry in entries:
        paths = manifest.paths(entry)
        if paths[key] is None:
            raise ValueError(f"entry {entry.audio} has no {target_kind} target")
        audio = read_wav(paths["audio"])[0]
        target = read_wav(paths[key])[0]
        items.append((audio.samples, target.samples))
    return WindowDataset(items, segment_len=segment_len)


def sample_batch(dataset: WindowDataset, rng: np.random.Generator,
                 batch_size: int = 128) -> tuple[np.ndarray, np.ndarray]:
    """Uniform random (file, center) windows; the target is the curve value
    at the window center sample."""
    seg = dataset.segment_len
    half = (seg - 1) // 2
    x = np.empty((batch_size, seg, 1), dtype=np.float32)
    t = np.empty(batch_size, dtype=np.float32)
    file_idx = rng.integers(0, len(dataset.items), size=batch_size)
    for row, fi in enumerate(file_idx):
        audio, target = dataset.items[fi]
        center = int(rng.integers(half, audio.size - half))
        x[row, :, 0] = audio[center - half:center + half + 1]
        t[row] = target[center]
    return x, t


def _evaluate(model: Model, x: np.ndarray, t: np.ndarray, chunk: int = 1024) -> float:
    total = 0.0
    for i in range(0, x.shape[0], chunk):
        xi = x[i:i + chunk]
        y, _ = model.forward(xi, train=False)
        total += float(np.sum((y.reshape(-1) - t[i:i + chunk]) ** 2))
    return total / x.shape[0]


def train(model: Model, train_set: WindowDataset, val_set: WindowDataset,
          cfg: TrainConfig, history_path: str | None = None,
          log=None) -> list[EpochRecord]:
    """Run the training loop and leave the best-validation weights in model.

    Each epoch draws cfg.epoch_batches mini-batches; the validation loss is
    measured on a fixed set of windows pre-sampled with a seed derived from
    cfg.seed. The learning rate shrinks by lr_factor after lr_patience
    epochs without a new best validation loss (never below lr_min), and
    training stops after early_stop_patience epochs without improvement.
    """
    rng = np.random.default_rng([cfg.seed, 0x7a1])
    val_rng = np.random.default_rng([cfg.seed, 0x7a2])
    val_x = np.empty((cfg.val_windows, cfg.segment_len, 1), dtype=np.float32)
    val_t = np.empty(cfg.val_windows, dtype=np.float32)
    for i in range(0, cfg.val_windows, 1024):
        n = min(1024, cfg.val_windows - i)
        val_x[i:i + n], val_t[i:i + n] = sample_batch(val_set, val_rng, n)

    params = model.params()
    adam = nn.AdamState.for_params(params, cfg.lr_init)
    lr = cfg.lr_init
    best_val = np.inf
    best_state = model.get_state()
    since_best = 0
    history: list[EpochRecord] = []
    hist_fh = open(history_path, "w", encoding="utf-8") if history_path else None
    try:
        for epoch in range(1, cfg.max_epochs + 1):
            adam.learning_rate = lr
            train_loss = 0.0
            for _ in range(cfg.epoch_batches):
                x, t = sample_batch(train_set, rng, cfg.batch_size)
                y, caches = model.forward(x, train=True)
                loss, grad = nn.mse_loss(y.reshape(-1), t)
                if not np.isfinite(loss):
                    raise RuntimeError(
                        f"non-finite training loss at epoch {epoch} (lr={lr})")
                grads = model.backward(caches, grad.reshape(y.shape))
                nn.adam_step(params, grads, adam)
                train_loss += loss
            train_loss /= cfg.epoch_batches
            val_loss = _evaluate(model, val_x, val_t)
            if not np.isfinite(val_loss):
                raise RuntimeError(f"non-finite validation loss at epoch {epoch}")
            record = EpochRecord(epoch=epoch, train_loss=train_loss,
                                 val_loss=val_loss, lr=lr)
            history.append(record)
            if hist_fh:
                hist_fh.write(json.dumps(vars(record)) + "\n")
                hist_fh.flush()
            if log:
                log(f"epoch {epoch}: train {train_loss:.6f} val {val_loss:.6f} lr {lr:g}")
            if val_loss < best_val:
                best_val = val_loss
                best_state = model.get_state()
                since_best = 0
            else:
                since_best += 1
            if since_best >= cfg.early_stop_patience:
                break
            if since_best and since_best % cfg.lr_patience == 0 and lr * cfg.lr_factor >= cfg.lr_min:
                lr *= cfg.lr_factor
    finally:
        if hist_fh:
            hist_fh.close()
    model.set_state(best_state)
    return history
