"""Audio containers, WAV file I/O, peak normalization, and event-marker files."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from scipy.io import wavfile

INT16_FULL_SCALE = 32768.0


@dataclass(frozen=True)
class AudioBuffer:
    """Mono sample sequence plus its sample rate.

    Samples are dimensionless amplitudes, nominally in [-1, 1]; sample i
    sits at time i / sample_rate seconds.
    """

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError(f"samples must be 1-D, got shape {samples.shape}")
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if samples.size and not np.all(np.isfinite(samples)):
            raise ValueError("samples contain NaN or Inf")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def times(self) -> np.ndarray:
        return np.arange(self.samples.size) / self.sample_rate


def read_wav(path: str | os.PathLike) -> list[AudioBuffer]:
    """Read a PCM16 or float WAV file, one AudioBuffer per channel.

    Integer samples are scaled by 1/32768 so that the most negative int16
    value maps to -1.0 exactly.
    """
    rate, data = wavfile.read(os.fspath(path))
    if data.size == 0:
        raise ValueError(f"{path}: zero-length data chunk")
    if data.dtype == np.int16:
        scaled = data.astype(np.float64) / INT16_FULL_SCALE
    elif data.dtype == np.int32:
        scaled = data.astype(np.float64) / 2147483648.0
    elif data.dtype in (np.float32, np.float64):
        scaled = data.astype(np.float64)
    elif data.dtype == np.uint8:
        scaled = (data.astype(np.float64) - 128.0) / 128.0
    else:
        raise ValueError(f"{path}: unsupported WAV sample format {data.dtype}")
    if scaled.ndim == 1:
        scaled = scaled[:, None]
    return [AudioBuffer(scaled[:, ch], rate) for ch in range(scaled.shape[1])]


def write_wav(path: str | os.PathLike, channels: list[AudioBuffer] | AudioBuffer) -> None:
    """Write one or more equal-length channels as 16-bit PCM.

    Samples are clipped to [-1, 1 - 1/32768] before quantization, so a
    read_wav round trip differs by at most 1/32768 per sample.
    """
    if isinstance(channels, AudioBuffer):
        channels = [channels]
    if not channels:
        raise ValueError("empty channel list")
    n = len(channels[0])
    rate = channels[0].sample_rate
    for ch in channels[1:]:
        if len(ch) != n or ch.sample_rate != rate:
            raise ValueError("mismatched channel lengths or rates")
    stacked = np.stack([ch.samples for ch in channels], axis=1)
    clipped = np.clip(stacked, -1.0, 1.0 - 1.0 / INT16_FULL_SCALE)
    quantized = np.round(clipped * INT16_FULL_SCALE).astype(np.int16)
    if quantized.shape[1] == 1:
        quantized = quantized[:, 0]
    wavfile.write(os.fspath(path), rate, quantized)


def write_wav_float32(path: str | os.PathLike, buf: AudioBuffer) -> None:
    """Write a mono buffer as IEEE float32 WAV (lossless for target curves)."""
    wavfile.write(os.fspath(path), buf.sample_rate, buf.samples.astype(np.float32))


def normalize_peak(audio: AudioBuffer, level_db: float = -3.0) -> AudioBuffer:
    """Scale so the maximum absolute sample equals 10**(level_db / 20)."""
    if len(audio) == 0:
        raise ValueError("cannot normalize an empty buffer")
    peak = float(np.max(np.abs(audio.samples)))
    if peak == 0.0:
        raise ValueError("cannot normalize an all-zero buffer")
    gain = 10.0 ** (level_db / 20.0) / peak
    return AudioBuffer(audio.samples * gain, audio.sample_rate)


def read_marks(path: str | os.PathLike) -> np.ndarray:
    """Read a marker file: one event time in seconds per line, '#' comments allowed."""
    times = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            try:
                times.append(float(stripped))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: not a time value: {stripped!r}") from exc
    marks = np.asarray(times, dtype=np.float64)
    if marks.size > 1 and np.any(np.diff(marks) <= 0):
        raise ValueError(f"{path}: marker times are not strictly increasing")
    return marks


def write_marks(path: str | os.PathLike, marks: np.ndarray) -> None:
    """Write marker times, fixed 6 decimal places, LF line endings."""
    marks = np.asarray(marks, dtype=np.float64)
    if marks.size > 1 and np.any(np.diff(marks) <= 0):
        raise ValueError("marker times must be strictly increasing")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for t in marks:
            fh.write(f"{t:.6f}\n")
