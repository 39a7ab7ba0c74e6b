"""Filter design, zero-phase filtering, resampling, differentiation, peak search."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.signal
from scipy.interpolate import CubicSpline

from .audio import AudioBuffer


@dataclass(frozen=True)
class SosFilter:
    """Cascade of second-order sections; every section must be stable."""

    sections: np.ndarray  # shape (n_sections, 6): b0 b1 b2 1 a1 a2

    def __post_init__(self):
        sections = np.atleast_2d(np.asarray(self.sections, dtype=np.float64))
        if sections.shape[1] != 6:
            raise ValueError(f"sections must have 6 coefficients, got {sections.shape}")
        for sec in sections:
            poles = np.roots(sec[3:])
            if np.any(np.abs(poles) >= 1.0):
                raise ValueError("unstable section: pole outside the unit circle")
        object.__setattr__(self, "sections", sections)

    @property
    def n_sections(self) -> int:
        return self.sections.shape[0]

    def freq_response(self, freqs_hz: np.ndarray, fs: float) -> np.ndarray:
        """Complex response evaluated on the unit circle at the given frequencies."""
        _, h = scipy.signal.sosfreqz(self.sections, worN=np.atleast_1d(freqs_hz), fs=fs)
        return h


@dataclass(frozen=True)
class PeakPickConfig:
    threshold: float
    min_distance_s: float
    polarity: str = "positive"  # or "negative"

    def __post_init__(self):
        if self.min_distance_s <= 0:
            raise ValueError("min_distance_s must be positive")
        if self.polarity not in ("positive", "negative"):
            raise ValueError(f"unknown polarity {self.polarity!r}")


def butter_design(order: int, cutoff_hz: float, kind: str, fs: float) -> SosFilter:
    """Butterworth filter as second-order sections (bilinear transform, pre-warped)."""
    if order < 1:
        raise ValueError("order must be >= 1")
    if not 0.0 < cutoff_hz < fs / 2.0:
        raise ValueError(f"cutoff {cutoff_hz} Hz outside (0, {fs / 2}) at fs {fs}")
    if kind not in ("lowpass", "highpass"):
        raise ValueError(f"unknown filter kind {kind!r}")
    sos = scipy.signal.butter(order, cutoff_hz, btype=kind, fs=fs, output="sos")
    return SosFilter(sos)


def filtfilt(filt: SosFilter, x: AudioBuffer) -> AudioBuffer:
    """Forward-backward application: zero phase, squared magnitude response.

    Edges use odd-symmetric reflection padding of 3 * (2 * n_sections)
    samples, trimmed after the backward pass. The result is symmetrized over
    the two processing directions, so time-reversing the input exactly
    time-reverses the output (edge transients would otherwise break that).
    """
    padlen = 3 * (2 * filt.n_sections)
    if len(x) <= padlen:
        raise ValueError(f"input length {len(x)} too short for padding {padlen}")
    fwd = scipy.signal.sosfiltfilt(filt.sections, x.samples,
                                   padtype="odd", padlen=padlen)
    rev = scipy.signal.sosfiltfilt(filt.sections, x.samples[::-1],
                                   padtype="odd", padlen=padlen)[::-1]
    return AudioBuffer(0.5 * (fwd + rev), x.sample_rate)


def decimate(x: AudioBuffer, factor: int) -> AudioBuffer:
    """Zero-phase anti-alias lowpass, then keep every factor-th sample."""
    if factor < 2:
        raise ValueError("decimation factor must be >= 2")
    if x.sample_rate % factor != 0:
        raise ValueError(f"rate {x.sample_rate} not divisible by factor {factor}")
    out_rate = x.sample_rate // factor
    antialias = butter_design(8, 0.45 * (out_rate / 2.0), "lowpass", x.sample_rate)
    filtered = filtfilt(antialias, x)
    return AudioBuffer(filtered.samples[::factor], out_rate)


def spline_upsample(x: np.ndarray, factor: int) -> np.ndarray:
    """Natural cubic spline through the input points, evaluated on a grid
    `factor` times finer. Output length is (len(x) - 1) * factor + 1 and the
    input values are reproduced exactly at the coarse-grid positions.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.size < 4:
        raise ValueError("need at least 4 points for cubic spline upsampling")
    if factor < 2:
        raise ValueError("upsampling factor must be >= 2")
    coarse = np.arange(x.size, dtype=np.float64)
    fine = np.arange((x.size - 1) * factor + 1, dtype=np.float64) / factor
    spline = CubicSpline(coarse, x, bc_type="natural")
    out = spline(fine)
    out[::factor] = x  # knots exact; no roundoff at coarse positions
    return out


def derivative(x: np.ndarray, fs: float) -> np.ndarray:
    """Forward difference scaled by fs; d[i] describes time (i + 0.5) / fs."""
    x = np.asarray(x, dtype=np.float64)
    if x.size < 2:
        raise ValueError("need at least 2 samples to differentiate")
    return np.diff(x) * fs


def find_peaks(x: np.ndarray, fs: float, cfg: PeakPickConfig) -> np.ndarray:
    """Thresholded local extrema with greedy minimum-distance suppression.

    Candidates are local extrema of the requested polarity whose magnitude
    reaches the threshold. They are accepted in order of descending
    magnitude (ties to the earlier index) and only if at least
    min_distance_s away from every already-accepted peak. Returned as
    times in seconds, sorted ascending.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.size < 3:
        return np.empty(0, dtype=np.float64)
    v = x if cfg.polarity == "positive" else -x
    inner = v[1:-1]
    is_peak = (inner > v[:-2]) & (inner >= v[2:]) & (inner >= cfg.threshold)
    candidates = np.flatnonzero(is_peak) + 1
    if candidates.size == 0:
        return np.empty(0, dtype=np.float64)
    order = np.lexsort((candidates, -v[candidates]))
    min_dist = cfg.min_distance_s * fs
    accepted: list[int] = []
    for idx in candidates[order]:
        if all(abs(idx - j) >= min_dist for j in accepted):
            accepted.append(idx)
    accepted.sort()
    return np.asarray(accepted, dtype=np.float64) / fs
