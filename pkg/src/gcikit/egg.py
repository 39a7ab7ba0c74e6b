"""Reference GCI extraction from electroglottographic recordings.

The EGG channel is band-limited with zero-phase 5th-order Butterworth
filters (30 Hz highpass, 500 Hz lowpass by default), and closure instants
are the negative peaks of its derivative, picked with a threshold relative
to the strongest negative excursion so the result is amplitude invariant.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .audio import AudioBuffer
from .dsp import PeakPickConfig, butter_design, derivative, filtfilt, find_peaks


@dataclass(frozen=True)
class EggConfig:
    hp_cutoff: float = 30.0
    lp_cutoff: float = 500.0
    filter_order: int = 5
    peak_threshold_rel: float = 0.2
    min_distance_s: float = 0.002

    def validate(self, fs: float) -> None:
        if not 0.0 < self.hp_cutoff < self.lp_cutoff < fs / 2.0:
            raise ValueError(
                f"need 0 < hp {self.hp_cutoff} < lp {self.lp_cutoff} < fs/2 {fs / 2}")


def preprocess_egg(egg: AudioBuffer, cfg: EggConfig = EggConfig()) -> AudioBuffer:
    """Zero-phase highpass then lowpass per the config."""
    cfg.validate(egg.sample_rate)
    hp = butter_design(cfg.filter_order, cfg.hp_cutoff, "highpass", egg.sample_rate)
    lp = butter_design(cfg.filter_order, cfg.lp_cutoff, "lowpass", egg.sample_rate)
    return filtfilt(lp, filtfilt(hp, egg))


def extract_gci_from_egg(egg: AudioBuffer, cfg: EggConfig = EggConfig()) -> np.ndarray:
    """GCI times from the negative derivative peaks of the pre-processed EGG.

    The threshold is peak_threshold_rel times the strongest negative
    derivative excursion of the whole file; a flat or silent EGG yields no
    marks (with a warning).
    """
    pre = preprocess_egg(egg, cfg)
    d = derivative(pre.samples, egg.sample_rate)
    strongest = -d.min() if d.size else 0.0
    if strongest <= 0.0 or not np.isfinite(strongest):
        warnings.warn("flat EGG signal: no glottal activity found", stacklevel=2)
        return np.empty(0, dtype=np.float64)
    picks = find_peaks(d, egg.sample_rate, PeakPickConfig(
        threshold=cfg.peak_threshold_rel * strongest,
        min_distance_s=cfg.min_distance_s,
        polarity="negative"))
    # derivative sample i describes time (i + 0.5) / fs
    return picks + 0.5 / egg.sample_rate
