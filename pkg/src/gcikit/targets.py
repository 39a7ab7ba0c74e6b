"""Regression target curves: triangles peaking on GCIs and per-period
max-normalized glottal flow. Both live in [0, 1] and annotate an audio
buffer sample for sample."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio import AudioBuffer

MAX_HALF_PERIOD_GAP = 0.020  # beyond this a neighbor gap is not a period
FALLBACK_PERIOD = 0.010      # isolated marks get a nominal 100 Hz period


@dataclass(frozen=True)
class TargetCurve:
    values: np.ndarray
    sample_rate: int
    kind: str  # "triangle" or "glottal_flow"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.size and (values.min() < 0.0 or values.max() > 1.0):
            raise ValueError("target values must lie in [0, 1]")
        object.__setattr__(self, "values", values)


def _local_periods(gci: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Left/right period estimates per mark from inter-GCI gaps.

    A gap wider than 20 ms is not a period; the other side's gap stands in
    if usable, else the 10 ms fallback.
    """
    n = gci.size
    left = np.full(n, np.nan)
    right = np.full(n, np.nan)
    if n > 1:
        gaps = np.diff(gci)
        usable = gaps <= MAX_HALF_PERIOD_GAP
        left[1:][usable] = gaps[usable]
        right[:-1][usable] = gaps[usable]
    left = np.where(np.isnan(left), right, left)
    right = np.where(np.isnan(right), left, right)
    left = np.where(np.isnan(left), FALLBACK_PERIOD, left)
    right = np.where(np.isnan(right), FALLBACK_PERIOD, right)
    return left, right


def triangle_target(gci: np.ndarray, length: int, fs: int) -> TargetCurve:
    """Piecewise-linear curve: 1.0 on each GCI, falling to 0 half a period away.

    The apex is snapped to the nearest sample so the maximum of 1 is
    representable; overlapping ramps from irregular marks resolve by
    pointwise maximum.
    """
    gci = np.asarray(gci, dtype=np.float64)
    if gci.size > 1 and np.any(np.diff(gci) <= 0):
        raise ValueError("GCI marks must be strictly increasing")
    if gci.size and (gci.min() < 0 or gci.max() >= length / fs):
        raise ValueError("GCI marks must lie inside the buffer")
    values = np.zeros(length)
    left, right = _local_periods(gci)
    for t, pl, pr in zip(gci, left, right):
        apex = int(round(t * fs))
        apex = min(max(apex, 0), length - 1)
        lo = apex - pl / 2.0 * fs
        hi = apex + pr / 2.0 * fs
        i0 = max(int(np.ceil(lo)), 0)
        i1 = min(int(np.floor(hi)), length - 1)
        idx = np.arange(i0, i1 + 1)
        rise = 1.0 - (apex - idx) / (apex - lo) if apex > lo else np.ones_like(idx, float)
        fall = 1.0 - (idx - apex) / (hi - apex) if hi > apex else np.ones_like(idx, float)
        tri = np.clip(np.minimum(rise, fall), 0.0, 1.0)
        np.maximum(values[i0:i1 + 1], tri, out=values[i0:i1 + 1])
    return TargetCurve(values=values, sample_rate=fs, kind="triangle")


def glottal_flow_target(flow: AudioBuffer, gci: np.ndarray,
                        period_start_idx: np.ndarray) -> TargetCurve:
    """Per-period max-normalized glottal flow, 0 outside voiced periods.

    Period boundaries are the synthesis period starts; each period is
    divided by its own maximum (near-silent periods stay at 0) so the curve
    is independent of the signal's energy.
    """
    samples = flow.samples
    if samples.size and samples.min() < -1e-9:
        raise ValueError("flow must be nonnegative")
    gci = np.asarray(gci, dtype=np.float64)
    starts = np.asarray(period_start_idx, dtype=np.int64)
    if starts.size != gci.size:
        raise ValueError("one period start per GCI mark expected")
    if starts.size and (starts.min() < 0 or starts.max() >= samples.size):
        raise ValueError("period starts must lie inside the buffer")
    values = np.zeros(samples.size)
    bounds = np.append(starts, samples.size)
    for k in range(starts.size):
        s, e = bounds[k], bounds[k + 1]
        seg = np.maximum(samples[s:e], 0.0)
        peak = seg.max() if seg.size else 0.0
        if peak >= 1e-6:
            values[s:e] = seg / peak
    return TargetCurve(values=values, sample_rate=flow.sample_rate, kind="glottal_flow")
