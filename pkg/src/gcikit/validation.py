"""Input validation helpers shared by the estimator and the CLI."""

from __future__ import annotations

import numpy as np

from .audio import AudioBuffer


def as_audio_buffer(x, sample_rate: int = 16000) -> AudioBuffer:
    """Accept an AudioBuffer or a 1-D array-like at the given rate."""
    if isinstance(x, AudioBuffer):
        return x
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"expected a mono signal, got shape {arr.shape}")
    return AudioBuffer(arr, sample_rate)


def check_marks(marks) -> np.ndarray:
    """Validate a strictly increasing, finite 1-D array of event times."""
    arr = np.asarray(marks, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError("marks must be 1-D")
    if arr.size and not np.all(np.isfinite(arr)):
        raise ValueError("marks contain NaN or Inf")
    if arr.size > 1 and np.any(np.diff(arr) <= 0):
        raise ValueError("marks must be strictly increasing")
    return arr


def check_curve(values, length: int | None = None) -> np.ndarray:
    """Validate a target curve: 1-D, finite, within [0, 1]."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError("target curve must be 1-D")
    if arr.size and (not np.all(np.isfinite(arr)) or arr.min() < 0 or arr.max() > 1):
        raise ValueError("target curve values must be finite and within [0, 1]")
    if length is not None and arr.size != length:
        raise ValueError(f"target curve length {arr.size} != audio length {length}")
    return arr
