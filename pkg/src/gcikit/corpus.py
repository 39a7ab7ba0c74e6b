"""Synthetic multi-speaker corpus: randomized source contours, vocal-tract
resonator filtering, gated consonant noise, rd-shift augmentation, and an
on-disk manifest with exact ground truth."""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace

import numpy as np
import scipy.signal

from .audio import AudioBuffer, normalize_peak, write_marks, write_wav, write_wav_float32
from .lf import RD_MAX, RD_MIN, SourceTrack, synth_source
from .targets import TargetCurve, glottal_flow_target, triangle_target

SAMPLE_RATE = 16000
HOP_S = 0.005
RD_SHIFTS = (-0.5, 0.0, +0.5)
_SHIFT_TAGS = {-0.5: "dn", 0.0: "md", 0.5: "up"}
MANIFEST_NAME = "manifest.json"
MANIFEST_VERSION = 1


@dataclass(frozen=True)
class UtteranceSpec:
    """Everything needed to synthesize one utterance deterministically."""

    seed: int
    duration_s: float
    f0_base: float
    formants: tuple[tuple[float, float], ...]  # (center Hz, bandwidth Hz)
    rd_shift: float = 0.0
    noise_gain: float = 0.05  # unvoiced-noise RMS relative to voiced peak

    def __post_init__(self):
        if not 1.0 <= self.duration_s <= 10.0:
            raise ValueError("duration_s must lie in [1, 10]")
        if not 3 <= len(self.formants) <= 5:
            raise ValueError("need 3 to 5 formants")
        centers = [f for f, _ in self.formants]
        if any(b <= a for a, b in zip(centers, centers[1:])):
            raise ValueError("formant centers must be strictly increasing")
        if max(centers) >= 7600:
            raise ValueError("formant centers must stay below 7600 Hz")
        if self.rd_shift not in RD_SHIFTS:
            raise ValueError(f"rd_shift must be one of {RD_SHIFTS}")


@dataclass
class GroundTruth:
    """Exact annotations carried alongside a synthesized utterance."""

    gci: np.ndarray
    period_at_gci: np.ndarray
    triangle: TargetCurve
    glottal_flow: TargetCurve
    voicing_mask: np.ndarray   # per 5 ms frame
    noise_mask: np.ndarray     # per 5 ms frame
    source: SourceTrack


@dataclass
class CorpusEntry:
    audio: str
    gci: str
    target_tri: str
    target_gf: str | None  # EGG-derived corpora carry no glottal-flow target
    split: str
    spec: UtteranceSpec


@dataclass
class CorpusManifest:
    entries: list[CorpusEntry]
    root: str
    version: int = MANIFEST_VERSION

    def paths(self, entry: CorpusEntry) -> dict[str, str | None]:
        return {k: (os.path.join(self.root, v) if (v := getattr(entry, k)) else None)
                for k in ("audio", "gci", "target_tri", "target_gf")}

    def split_entries(self, split: str) -> list[CorpusEntry]:
        return [e for e in self.entries if e.split == split]


def gen_contours(spec: UtteranceSpec, hop_s: float = HOP_S
                 ) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Frame-rate f0/rd contours plus voicing and noise-gate masks.

    Segments alternate voiced (0.3-0.8 s) and nonvoiced (0.1-0.2 s); the
    nonvoiced kind is a coin flip between breathy noise ("unvoiced") and
    silence. Starting voiced and keeping nonvoiced runs short guarantees at
    least 60% voiced frames. f0 follows a bounded random walk in the log
    domain around f0_base, clamped to [70, 400] Hz; rd walks inside
    [0.3, 2.7], then the fixed rd_shift is applied and re-clamped.
    """
    rng = np.random.default_rng(spec.seed)
    n_frames = int(round(spec.duration_s / hop_s))

    voiced = np.zeros(n_frames, dtype=bool)
    noise = np.zeros(n_frames, dtype=bool)
    pos = 0
    state_voiced = True
    while pos < n_frames:
        if state_voiced:
            seg = int(round(rng.uniform(0.3, 0.8) / hop_s))
            voiced[pos:pos + seg] = True
        else:
            seg = int(round(rng.uniform(0.1, 0.2) / hop_s))
            if rng.random() < 0.5:
                noise[pos:pos + seg] = True
        pos += seg
        state_voiced = not state_voiced

    # mean-reverting walk keeps f0 near f0_base without killing variety
    x = np.log(spec.f0_base) + _ou_walk(rng, n_frames, sigma=0.012, theta=0.02)
    f0 = np.clip(np.exp(x), 70.0, 400.0)

    rd_center = rng.uniform(0.6, 2.2)
    rd = rd_center + _ou_walk(rng, n_frames, sigma=0.02, theta=0.01)
    rd = np.clip(rd, RD_MIN, RD_MAX)
    rd = np.clip(rd + spec.rd_shift, RD_MIN, RD_MAX)
    return f0, rd, voiced, noise


def _ou_walk(rng: np.random.Generator, n: int, sigma: float, theta: float) -> np.ndarray:
    steps = sigma * rng.standard_normal(n)
    x = np.empty(n)
    acc = 0.0
    for i in range(n):
        acc += -theta * acc + steps[i]
        x[i] = acc
    return x


def vocal_tract_filter(source: AudioBuffer, formants,
                       normalize: bool = True) -> AudioBuffer:
    """Cascade of two-pole resonators, unit gain at each center frequency.

    The cascade itself is linear; with normalize=True (the synthesis
    default) the output peak is scaled back to the source peak.
    """
    fs = source.sample_rate
    y = source.samples.astype(np.float64)
    for center, bw in formants:
        if center >= fs / 2:
            raise ValueError(f"formant {center} Hz at or above Nyquist")
        r = np.exp(-np.pi * bw / fs)
        theta = 2.0 * np.pi * center / fs
        a = np.array([1.0, -2.0 * r * np.cos(theta), r * r])
        gain = abs(np.polyval(a[::-1], np.exp(-1j * theta)))
        y = scipy.signal.lfilter([gain], a, y)
    if normalize:
        src_peak = np.max(np.abs(source.samples)) if len(source) else 0.0
        out_peak = np.max(np.abs(y)) if y.size else 0.0
        if src_peak > 0 and out_peak > 0:
            y *= src_peak / out_peak
    return AudioBuffer(y, fs)


def _noise_component(spec: UtteranceSpec, n_samples: int, noise_mask: np.ndarray,
                     voiced_peak: float, fs: int, hop_s: float) -> np.ndarray:
    if spec.noise_gain <= 0 or not noise_mask.any() or voiced_peak <= 0:
        return np.zeros(n_samples)
    rng = np.random.default_rng([spec.seed, 0x7e15e])
    white = rng.standard_normal(n_samples)
    sos = scipy.signal.butter(4, [2000.0, 7000.0], btype="bandpass", fs=fs, output="sos")
    band = scipy.signal.sosfilt(sos, white)
    band /= np.std(band)
    hop = int(round(hop_s * fs))
    gate = np.repeat(noise_mask.astype(np.float64), hop)[:n_samples]
    if gate.size < n_samples:
        gate = np.pad(gate, (0, n_samples - gate.size))
    ramp = int(0.010 * fs)
    kernel = np.hanning(2 * ramp + 1)
    gate = np.convolve(gate, kernel / kernel.sum(), mode="same")
    return spec.noise_gain * voiced_peak * band * gate


def synth_utterance(spec: UtteranceSpec, fs: int = SAMPLE_RATE, ee: float = 0.3
                    ) -> tuple[AudioBuffer, GroundTruth]:
    """Synthesize one utterance and its exact ground truth.

    The voiced source runs through the formant cascade; band-limited noise
    (2-7 kHz) plays only in the unvoiced segments; the mix is peak
    normalized to -3 dB.
    """
    f0, rd, voiced_mask, noise_mask = gen_contours(spec)
    track = synth_source(f0, rd, ee, voiced_mask, fs, hop_s=HOP_S)
    n = len(track.flow_derivative)
    voiced = vocal_tract_filter(track.flow_derivative, spec.formants)
    voiced_peak = float(np.max(np.abs(voiced.samples))) if n else 0.0
    noise = _noise_component(spec, n, noise_mask, voiced_peak, fs, HOP_S)
    audio = normalize_peak(AudioBuffer(voiced.samples + noise, fs), -3.0)
    truth = GroundTruth(
        gci=track.gci,
        period_at_gci=track.period_at_gci,
        triangle=triangle_target(track.gci, n, fs),
        glottal_flow=glottal_flow_target(track.flow, track.gci, track.period_start_idx),
        voicing_mask=voiced_mask,
        noise_mask=noise_mask,
        source=track,
    )
    return audio, truth


def make_base_specs(n_utterances: int, master_seed: int,
                    duration_range: tuple[float, float] = (2.0, 4.0)) -> list[UtteranceSpec]:
    """Randomized speaker proxies: log-uniform f0 base plus a sampled formant set."""
    specs = []
    for i in range(n_utterances):
        rng = np.random.default_rng([master_seed, i])
        f0_base = float(np.exp(rng.uniform(np.log(80.0), np.log(300.0))))
        n_formants = int(rng.integers(3, 6))
        centers = [rng.uniform(250.0, 900.0)]
        for gap_lo, gap_hi in ((500, 1500), (800, 1600), (800, 1600), (800, 1600)):
            centers.append(centers[-1] + rng.uniform(gap_lo, gap_hi))
        formants = tuple(
            (float(c), float(rng.uniform(60.0, 250.0))) for c in centers[:n_formants])
        specs.append(UtteranceSpec(
            seed=int(rng.integers(0, 2**31 - 1)),
            duration_s=float(rng.uniform(*duration_range)),
            f0_base=f0_base,
            formants=formants,
            rd_shift=0.0,
            noise_gain=float(rng.uniform(0.02, 0.12)),
        ))
    return specs


def _split_assignment(n: int, ratios: tuple[float, float, float],
                      master_seed: int) -> list[str]:
    # exact largest-remainder allocation, then a seeded permutation
    names = ("train", "validation", "test")
    counts = [int(np.floor(r * n)) for r in ratios]
    rema = [r * n - c for r, c in zip(ratios, counts)]
    for k in np.argsort(rema)[::-1][: n - sum(counts)]:
        counts[int(k)] += 1
    order = np.random.default_rng([master_seed, 0x5b1d]).permutation(n)
    labels = [""] * n
    cursor = 0
    for name, count in zip(names, counts):
        for idx in order[cursor:cursor + count]:
            labels[int(idx)] = name
        cursor += count
    return labels


def _build_entry(args) -> CorpusEntry:
    out_dir, stem, spec, split = args
    audio, truth = synth_utterance(spec)
    write_wav(os.path.join(out_dir, stem + ".wav"), audio)
    write_marks(os.path.join(out_dir, stem + ".gci.txt"), truth.gci)
    write_wav_float32(os.path.join(out_dir, stem + ".tri.wav"),
                      AudioBuffer(truth.triangle.values, audio.sample_rate))
    write_wav_float32(os.path.join(out_dir, stem + ".gf.wav"),
                      AudioBuffer(truth.glottal_flow.values, audio.sample_rate))
    return CorpusEntry(audio=stem + ".wav", gci=stem + ".gci.txt",
                       target_tri=stem + ".tri.wav", target_gf=stem + ".gf.wav",
                       split=split, spec=spec)


def build_corpus(n_utterances: int, ratios: tuple[float, float, float], out_dir: str,
                 master_seed: int, jobs: int = 1, force: bool = False,
                 duration_range: tuple[float, float] = (2.0, 4.0)) -> CorpusManifest:
    """Build the corpus: each base utterance is emitted three times with rd
    contours shifted by -0.5 / 0 / +0.5, all landing in the same split."""
    if n_utterances < 10:
        raise ValueError("need at least 10 base utterances")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError("split ratios must sum to 1")
    manifest_path = os.path.join(out_dir, MANIFEST_NAME)
    if os.path.exists(manifest_path) and not force:
        raise FileExistsError(f"{manifest_path} exists; pass force=True to rebuild")
    os.makedirs(out_dir, exist_ok=True)

    bases = make_base_specs(n_utterances, master_seed, duration_range)
    splits = _split_assignment(n_utterances, tuple(ratios), master_seed)
    tasks = []
    for i, base in enumerate(bases):
        for shift in RD_SHIFTS:
            stem = f"utt{i:05d}_{_SHIFT_TAGS[shift]}"
            tasks.append((out_dir, stem, replace(base, rd_shift=shift), splits[i]))

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            entries = list(pool.map(_build_entry, tasks, chunksize=4))
    else:
        entries = [_build_entry(t) for t in tasks]

    manifest = CorpusManifest(entries=entries, root=out_dir)
    save_manifest(manifest, manifest_path)
    return manifest


def save_manifest(manifest: CorpusManifest, path: str) -> None:
    payload = {
        "version": manifest.version,
        "entries": [
            {"audio": e.audio, "gci": e.gci, "target_tri": e.target_tri,
             "target_gf": e.target_gf, "split": e.split, "spec": asdict(e.spec)}
            for e in manifest.entries
        ],
    }
    tmp = path + f".tmp-{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def load_manifest(path: str) -> CorpusManifest:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("version") != MANIFEST_VERSION:
        raise ValueError(f"unsupported manifest version {payload.get('version')!r}")
    entries = []
    for raw in payload["entries"]:
        spec_raw = dict(raw["spec"])
        spec_raw["formants"] = tuple(tuple(f) for f in spec_raw["formants"])
        entries.append(CorpusEntry(
            audio=raw["audio"], gci=raw["gci"], target_tri=raw["target_tri"],
            target_gf=raw["target_gf"], split=raw["split"],
            spec=UtteranceSpec(**spec_raw)))
    return CorpusManifest(entries=entries, root=os.path.dirname(os.path.abspath(path)))
