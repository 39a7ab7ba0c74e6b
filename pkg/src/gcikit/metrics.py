"""Epoch-detection scoring: identification, miss, and false-alarm rates plus
identification accuracy, over larynx-cycle windows bounded by midpoints
between reference GCIs."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

PERIOD_MIN_S = 0.002   # 500 Hz
PERIOD_MAX_S = 0.020   # 50 Hz


@dataclass(frozen=True)
class EvalMode:
    variant: str = "voiced_restricted"  # or "all_gcis"
    f0_band: tuple[float, float] = (50.0, 500.0)
    edge_half_window_s: float = 0.010

    def __post_init__(self):
        if self.variant not in ("voiced_restricted", "all_gcis"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.f0_band[0] >= self.f0_band[1]:
            raise ValueError("f0 band low must be below high")


@dataclass(frozen=True)
class CycleWindow:
    center: float
    start: float
    end: float
    kept: bool


@dataclass
class EvalReport:
    """Rates in percent, accuracy in milliseconds, plus the raw counts.

    n_ref counts the evaluated cycles. In voiced_restricted mode n_false
    counts cycles holding more than one detection; in all_gcis mode it
    counts every detection that does not uniquely identify a cycle, so the
    false-alarm rate may exceed 100.
    """

    variant: str
    idr: float
    mr: float
    far: float
    ida: float
    n_ref: int
    n_identified: int
    n_missed: int
    n_false: int
    errors: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "variant": self.variant, "idr": self.idr, "mr": self.mr,
            "far": self.far, "ida_ms": self.ida, "n_ref": self.n_ref,
            "n_identified": self.n_identified, "n_missed": self.n_missed,
            "n_false": self.n_false,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)


def _period_band(mode: EvalMode) -> tuple[float, float]:
    lo_f, hi_f = mode.f0_band
    return 1.0 / hi_f, 1.0 / lo_f


def cycle_windows(ref: np.ndarray, mode: EvalMode) -> list[CycleWindow]:
    """One window per reference GCI, bounded by midpoints to its neighbors.

    voiced_restricted keeps only GCIs whose left and right gaps both look
    like a voiced period (2-20 ms for the default band), dropping segment
    extremities and isolated pulses. all_gcis keeps everything; a missing
    neighbor gap is replaced by min(the existing gap, 10 ms), or 10 ms for
    a fully isolated mark.
    """
    ref = np.asarray(ref, dtype=np.float64)
    if ref.size > 1 and np.any(np.diff(ref) <= 0):
        raise ValueError("reference marks must be strictly increasing")
    p_lo, p_hi = _period_band(mode)
    windows = []
    for i, t in enumerate(ref):
        left_gap = t - ref[i - 1] if i > 0 else None
        right_gap = ref[i + 1] - t if i < ref.size - 1 else None
        if mode.variant == "voiced_restricted":
            kept = (left_gap is not None and right_gap is not None
                    and p_lo <= left_gap <= p_hi and p_lo <= right_gap <= p_hi)
        else:
            kept = True
        fallback = mode.edge_half_window_s
        if left_gap is not None:
            half_left = left_gap / 2.0
        else:
            half_left = min(right_gap, fallback) if right_gap is not None else fallback
        if right_gap is not None:
            half_right = right_gap / 2.0
        else:
            half_right = min(left_gap, fallback) if left_gap is not None else fallback
        windows.append(CycleWindow(center=t, start=t - half_left,
                                   end=t + half_right, kept=kept))
    return windows


def evaluate(ref: np.ndarray, det: np.ndarray, mode: EvalMode) -> EvalReport:
    """Score detections against reference marks.

    Each kept cycle is identified by exactly one detection inside its
    window (timing error = detection - reference), missed when empty, and a
    false alarm when it holds several. voiced_restricted ignores detections
    outside kept windows; all_gcis charges every stray or surplus detection
    to the false-alarm count. Identification accuracy is the population
    standard deviation of the timing errors, in milliseconds.
    """
    ref = np.asarray(ref, dtype=np.float64)
    det = np.sort(np.asarray(det, dtype=np.float64))
    windows = [w for w in cycle_windows(ref, mode) if w.kept]
    if not windows:
        raise ValueError("no reference cycles to evaluate (rates undefined)")
    n_cycles = len(windows)
    n_identified = n_missed = n_multi = 0
    errors: list[float] = []
    for w in windows:
        lo = np.searchsorted(det, w.start, side="left")
        hi = np.searchsorted(det, w.end, side="left")
        count = hi - lo
        if count == 1:
            n_identified += 1
            errors.append(float(det[lo] - w.center))
        elif count == 0:
            n_missed += 1
        else:
            n_multi += 1
    if mode.variant == "voiced_restricted":
        n_false = n_multi
    else:
        n_false = int(det.size) - n_identified
    ida = float(np.std(errors) * 1000.0) if errors else 0.0
    return EvalReport(
        variant=mode.variant,
        idr=100.0 * n_identified / n_cycles,
        mr=100.0 * n_missed / n_cycles,
        far=100.0 * n_false / n_cycles,
        ida=ida,
        n_ref=n_cycles,
        n_identified=n_identified,
        n_missed=n_missed,
        n_false=n_false,
        errors=errors,
    )


def aggregate(reports: list[EvalReport]) -> EvalReport:
    """Corpus-level report: counts summed, rates recomputed from the sums,
    accuracy from the pooled error list (weighting by cycle count)."""
    if not reports:
        raise ValueError("nothing to aggregate")
    variant = reports[0].variant
    if any(r.variant != variant for r in reports):
        raise ValueError("cannot mix evaluation variants")
    n_ref = sum(r.n_ref for r in reports)
    n_identified = sum(r.n_identified for r in reports)
    n_missed = sum(r.n_missed for r in reports)
    n_false = sum(r.n_false for r in reports)
    errors = [e for r in reports for e in r.errors]
    ida = float(np.std(errors) * 1000.0) if errors else 0.0
    return EvalReport(
        variant=variant,
        idr=100.0 * n_identified / n_ref,
        mr=100.0 * n_missed / n_ref,
        far=100.0 * n_false / n_ref,
        ida=ida,
        n_ref=n_ref,
        n_identified=n_identified,
        n_missed=n_missed,
        n_false=n_false,
        errors=errors,
    )


def format_table(rows: dict[str, EvalReport]) -> str:
    """Aligned plain-text table with IDR / MR / FAR / IDA columns."""
    name_w = max([len(n) for n in rows] + [6])
    lines = [f"{'':<{name_w}}  {'IDR':>7}  {'MR':>7}  {'FAR':>7}  {'IDA':>7}"]
    for name, r in rows.items():
        lines.append(f"{name:<{name_w}}  {r.idr:7.2f}  {r.mr:7.2f}  "
                     f"{r.far:7.2f}  {r.ida:7.2f}")
    return "\n".join(lines)
