"""Liljencrants-Fant glottal source: pulse synthesis and pitch-synchronous tracks.

One period of the glottal flow derivative is described by a fundamental
period t0, the dimensionless shape parameter rd, and the excitation
amplitude ee (magnitude of the flow-derivative minimum at the closure
instant te). The rd value maps to the classic timing ratios Ra, Rk, Rg,
from which the exponential rates alpha and epsilon follow by solving the
zero-net-flow and return-phase closure conditions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio import AudioBuffer

RD_MIN, RD_MAX = 0.3, 2.7
T0_MIN, T0_MAX = 0.002, 0.020

_MAX_ITER = 100


class SolverError(RuntimeError):
    """An implicit-parameter solve failed to converge."""


@dataclass(frozen=True)
class LfPulseSpec:
    """Per-period source description: period, shape parameter, amplitude."""

    t0: float
    rd: float
    ee: float

    def __post_init__(self):
        if not T0_MIN <= self.t0 <= T0_MAX:
            raise ValueError(f"t0 {self.t0} outside [{T0_MIN}, {T0_MAX}] s")
        if not RD_MIN <= self.rd <= RD_MAX:
            raise ValueError(f"rd {self.rd} outside [{RD_MIN}, {RD_MAX}]")
        if self.ee <= 0:
            raise ValueError("ee must be positive")


@dataclass(frozen=True)
class LfTiming:
    """Derived timing of one period: flow peak tp, closure te, return constant ta,
    growth rate alpha, return rate epsilon, opening-branch scale e0."""

    tp: float
    te: float
    ta: float
    alpha: float
    epsilon: float
    e0: float


@dataclass
class SourceTrack:
    """Pitch-synchronous source: flow derivative, per-period-reset flow, and
    exact closure instants with their periods and period-start sample indices."""

    flow_derivative: AudioBuffer
    flow: AudioBuffer
    gci: np.ndarray
    period_at_gci: np.ndarray
    period_start_idx: np.ndarray


def _safe_exp(x):
    return np.exp(np.clip(x, -700.0, 700.0))


def _solve_epsilon(ta: float, tb: float) -> float:
    # epsilon * ta = 1 - exp(-epsilon * tb), positive root; Newton from 1/ta
    eps = 1.0 / ta
    for _ in range(_MAX_ITER):
        f = eps * ta - 1.0 + np.exp(-eps * tb)
        fp = ta - tb * np.exp(-eps * tb)
        nxt = eps - f / fp
        if not np.isfinite(nxt) or nxt <= 0.0:
            nxt = eps / 2.0
        if abs(nxt - eps) <= 1e-15 * abs(eps):
            return nxt
        eps = nxt
    raise SolverError(f"epsilon did not converge (ta={ta}, tb={tb})")


def _net_flow_unit(alpha: float, t0: float, tp: float, te: float, ta: float,
                   epsilon: float) -> float:
    # closed-form integral of one period of the flow derivative with ee = 1
    w = np.pi / tp
    theta = w * te
    s = np.sin(theta)
    tb = t0 - te
    i_open = -(alpha * s - w * np.cos(theta) + w * _safe_exp(-alpha * te)) / (
        s * (alpha * alpha + w * w))
    i_ret = -(ta - tb * np.exp(-epsilon * tb)) / (epsilon * ta)
    return i_open + i_ret


def _solve_alpha(t0: float, tp: float, te: float, ta: float, epsilon: float) -> float:
    # bisection on [-1e5, 1e5] 1/s down to 1e-3, then Newton polish
    lo, hi = -1e5, 1e5
    flo = _net_flow_unit(lo, t0, tp, te, ta, epsilon)
    fhi = _net_flow_unit(hi, t0, tp, te, ta, epsilon)
    if flo * fhi > 0:
        raise SolverError(f"zero-net-flow condition has no root in bracket (t0={t0})")
    while hi - lo > 1e-3:
        mid = 0.5 * (lo + hi)
        if np.sign(_net_flow_unit(mid, t0, tp, te, ta, epsilon)) == np.sign(flo):
            lo = mid
        else:
            hi = mid
    alpha = 0.5 * (lo + hi)
    for _ in range(_MAX_ITER):
        f = _net_flow_unit(alpha, t0, tp, te, ta, epsilon)
        h = max(1e-6, abs(alpha) * 1e-7)
        fp = (_net_flow_unit(alpha + h, t0, tp, te, ta, epsilon)
              - _net_flow_unit(alpha - h, t0, tp, te, ta, epsilon)) / (2.0 * h)
        step = f / fp
        alpha -= step
        if abs(step) <= 1e-10 * max(1.0, abs(alpha)):
            return alpha
    raise SolverError(f"alpha did not converge (t0={t0}, tp={tp}, te={te})")


def rd_to_timing(spec: LfPulseSpec) -> LfTiming:
    """Map the rd shape parameter to explicit period timing.

    Uses the standard regression Ra = (-1 + 4.8 rd)/100,
    Rk = (22.4 + 11.8 rd)/100, Rg = Rk / (4 (0.11 rd / (0.5 + 1.2 Rk) - Ra)),
    then tp = t0 / (2 Rg), te = tp (1 + Rk), ta = Ra t0. The return rate
    epsilon solves epsilon ta = 1 - exp(-epsilon (t0 - te)); the growth rate
    alpha zeroes the net flow over the period.
    """
    t0, rd = spec.t0, spec.rd
    ra = (-1.0 + 4.8 * rd) / 100.0
    rk = (22.4 + 11.8 * rd) / 100.0
    rg = rk / (4.0 * (0.11 * rd / (0.5 + 1.2 * rk) - ra))
    tp = t0 / (2.0 * rg)
    te = tp * (1.0 + rk)
    ta = ra * t0
    if not 0.0 < tp < te < t0:
        raise SolverError(f"degenerate timing for rd={rd}: tp={tp}, te={te}, t0={t0}")
    if not 0.0 < ta < t0 - te:
        raise SolverError(f"return phase does not fit: ta={ta}, t0-te={t0 - te}")
    epsilon = _solve_epsilon(ta, t0 - te)
    alpha = _solve_alpha(t0, tp, te, ta, epsilon)
    e0 = -spec.ee / (_safe_exp(alpha * te) * np.sin(np.pi * te / tp))
    return LfTiming(tp=tp, te=te, ta=ta, alpha=alpha, epsilon=epsilon, e0=e0)


def _sample_unit_pulse(t: np.ndarray, t0: float, tp: float, te: float, ta: float,
                       epsilon: float, alpha: float) -> np.ndarray:
    e0 = -1.0 / (_safe_exp(alpha * te) * np.sin(np.pi * te / tp))
    opening = e0 * _safe_exp(alpha * t) * np.sin(np.pi * t / tp)
    ret = -(np.exp(-epsilon * np.maximum(t - te, 0.0))
            - np.exp(-epsilon * (t0 - te))) / (epsilon * ta)
    return np.where(t <= te, opening, ret)


def lf_pulse(spec: LfPulseSpec, fs: float) -> np.ndarray:
    """One period of the flow derivative, round(t0 * fs) samples.

    alpha is re-polished on the sampling grid so the sampled period sums to
    zero net flow exactly; the continuous solution seeds the polish. Output
    scales linearly with ee by construction.
    """
    if fs < 8000:
        raise ValueError("fs must be >= 8000 Hz")
    timing = rd_to_timing(LfPulseSpec(spec.t0, spec.rd, 1.0))
    n = round(spec.t0 * fs)
    t = np.arange(n) / fs
    t0, tp, te, ta, epsilon = spec.t0, timing.tp, timing.te, timing.ta, timing.epsilon
    alpha = timing.alpha

    def grid_sum(a: float) -> float:
        return float(_sample_unit_pulse(t, t0, tp, te, ta, epsilon, a).sum())

    for _ in range(_MAX_ITER):
        f = grid_sum(alpha)
        h = max(1e-5, abs(alpha) * 1e-6)
        fp = (grid_sum(alpha + h) - grid_sum(alpha - h)) / (2.0 * h)
        if fp == 0.0:
            break
        step = f / fp
        alpha -= step
        if abs(f) <= 1e-13 * n:
            break
    else:
        raise SolverError("grid alpha polish did not converge")
    return spec.ee * _sample_unit_pulse(t, t0, tp, te, ta, epsilon, alpha)


def synth_source(f0_contour: np.ndarray, rd_contour: np.ndarray, ee: float,
                 voicing_mask: np.ndarray, fs: int, hop_s: float = 0.005) -> SourceTrack:
    """Concatenate LF periods pitch-synchronously along frame contours.

    Contours are sampled every hop_s seconds (values anchored at frame
    starts, linearly interpolated in between). Each period reads f0 and rd
    at its start time; a period is emitted only if it fits entirely inside
    voiced frames, otherwise the cursor advances to the next frame. The
    flow is the running integral of the flow derivative, reset to zero at
    every period start and clamped at zero elsewhere.
    """
    f0_contour = np.asarray(f0_contour, dtype=np.float64)
    rd_contour = np.asarray(rd_contour, dtype=np.float64)
    voicing_mask = np.asarray(voicing_mask, dtype=bool)
    if not (f0_contour.shape == rd_contour.shape == voicing_mask.shape):
        raise ValueError("contours and voicing mask must share one frame grid")
    voiced_f0 = f0_contour[voicing_mask]
    if voiced_f0.size and (voiced_f0.min() < 50.0 or voiced_f0.max() > 500.0):
        raise ValueError("voiced f0 values must lie in [50, 500] Hz")

    n_frames = f0_contour.size
    hop = int(round(hop_s * fs))
    n_samples = n_frames * hop
    frame_t = np.arange(n_frames) * hop_s

    dflow = np.zeros(n_samples)
    flow = np.zeros(n_samples)
    gci, periods, starts = [], [], []

    s = 0
    while s < n_samples:
        frame = min(s // hop, n_frames - 1)
        if not voicing_mask[frame]:
            s = (frame + 1) * hop
            continue
        t_start = s / fs
        f0 = float(np.interp(t_start, frame_t, f0_contour))
        rd = float(np.clip(np.interp(t_start, frame_t, rd_contour), RD_MIN, RD_MAX))
        spec = LfPulseSpec(t0=1.0 / f0, rd=rd, ee=ee)
        pulse = lf_pulse(spec, fs)
        n = pulse.size
        last_frame = min((s + n - 1) // hop, n_frames - 1)
        if s + n > n_samples or not voicing_mask[frame:last_frame + 1].all():
            s = (frame + 1) * hop
            continue
        dflow[s:s + n] = pulse
        flow[s:s + n] = np.maximum(np.cumsum(pulse) / fs, 0.0)
        timing = rd_to_timing(spec)
        gci.append(t_start + timing.te)
        periods.append(n / fs)
        starts.append(s)
        s += n

    return SourceTrack(
        flow_derivative=AudioBuffer(dflow, fs),
        flow=AudioBuffer(flow, fs),
        gci=np.asarray(gci, dtype=np.float64),
        period_at_gci=np.asarray(periods, dtype=np.float64),
        period_start_idx=np.asarray(starts, dtype=np.int64),
    )
