"""The fully-convolutional GCI network: architecture, inference over whole
files, peak-picking detection, and weight serialization."""

from __future__ import annotations

import copy
import struct
from dataclasses import dataclass

import numpy as np

from . import nn
from .audio import AudioBuffer
from .dsp import PeakPickConfig, derivative, find_peaks, spline_upsample

REQUIRED_RECEPTIVE_FIELD = 993
REQUIRED_DECIMATION = 8
MAGIC = b"FCNG"
WEIGHTS_VERSION = 1

_ACT_CODES = {"relu": 0, "sigmoid": 1}
_ACT_NAMES = {v: k for k, v in _ACT_CODES.items()}


@dataclass(frozen=True)
class LayerSpec:
    filters: int
    kernel: int
    pooled: bool
    activation: str


@dataclass(frozen=True)
class ArchConfig:
    """Seven valid convolutions, pooling after the first three, sigmoid last."""

    layers: tuple[LayerSpec, ...]

    def __post_init__(self):
        if len(self.layers) != 7:
            raise ValueError("architecture must have exactly 7 layers")
        for i, layer in enumerate(self.layers):
            expect_pool = i < 3
            if layer.pooled != expect_pool:
                raise ValueError("pooling belongs after the first 3 layers only")
            expect_act = "sigmoid" if i == 6 else "relu"
            if layer.activation != expect_act:
                raise ValueError(f"layer {i + 1} must use {expect_act}")
        if self.layers[-1].filters != 1:
            raise ValueError("final layer must have exactly 1 filter")

    @property
    def receptive_field(self) -> int:
        n = 1
        for layer in reversed(self.layers):
            if layer.pooled:
                n *= 2
            n += layer.kernel - 1
        return n

    @property
    def decimation(self) -> int:
        return 2 ** sum(1 for layer in self.layers if layer.pooled)

    def output_length(self, input_length: int) -> int:
        n = input_length
        for layer in self.layers:
            n = n - layer.kernel + 1
            if n < 1:
                raise ValueError(f"input of {input_length} samples is too short")
            if layer.pooled:
                n //= 2
        return n

    def layer_lengths(self, input_length: int) -> list[int]:
        lengths = []
        n = input_length
        for layer in self.layers:
            n = n - layer.kernel + 1
            lengths.append(n)
            if layer.pooled:
                n //= 2
                lengths.append(n)
        return lengths

    @classmethod
    def from_filters(cls, filters, kernels=(32, 32, 32, 32, 32, 32, 4)) -> "ArchConfig":
        layers = tuple(
            LayerSpec(filters=f, kernel=k, pooled=i < 3,
                      activation="sigmoid" if i == 6 else "relu")
            for i, (f, k) in enumerate(zip(filters, kernels)))
        return cls(layers=layers)

    @classmethod
    def paper(cls) -> "ArchConfig":
        return cls.from_filters((512, 64, 64, 256, 512, 1024, 1))

    @classmethod
    def small(cls) -> "ArchConfig":
        return cls.from_filters((128, 16, 16, 64, 128, 256, 1))


@dataclass
class Layer:
    w: np.ndarray  # [kernel, in_ch, out_ch]
    b: np.ndarray
    bn: nn.BatchNormParams
    pooled: bool
    activation: str


class Model:
    """Feed-forward chain conv -> batchnorm -> activation -> (pool)."""

    def __init__(self, arch: ArchConfig, layers: list[Layer], dtype=np.float32):
        self.arch = arch
        self.layers = layers
        self.dtype = dtype

    def forward(self, x: np.ndarray, train: bool = False):
        """Run the chain on x [B, T, 1]; returns (y, caches). caches is a
        per-layer tuple list when training, else None."""
        caches = [] if train else None
        for layer in self.layers:
            z = nn.conv1d_forward(x, layer.w, layer.b)
            h, bn_cache = nn.batchnorm_forward(z, layer.bn, train=train)
            if layer.activation == "relu":
                a = np.maximum(h, 0.0, out=h)  # h not needed past this point
            else:
                a = nn.sigmoid(h)
            if layer.pooled:
                y, pool_mask = nn.maxpool2_forward(a)
            else:
                y, pool_mask = a, None
            if train:
                # post-activation values drive both relu and sigmoid backward
                caches.append((x, bn_cache, a, pool_mask, a.shape[1]))
            x = y
        return x, caches

    def backward(self, caches, grad_out: np.ndarray) -> list[np.ndarray]:
        """Gradients for every parameter, aligned with params()."""
        grads: list[np.ndarray] = []
        grad = grad_out
        for i in reversed(range(len(self.layers))):
            layer = self.layers[i]
            x, bn_cache, act_ref, pool_mask, pre_pool_t = caches[i]
            if layer.pooled:
                grad = nn.maxpool2_backward(grad, pool_mask, pre_pool_t)
            if layer.activation == "relu":
                grad = nn.relu_backward(grad, act_ref)
            else:
                grad = nn.sigmoid_backward(grad, act_ref)
            grad, g_gamma, g_beta = nn.batchnorm_backward(grad, layer.bn, bn_cache)
            grad, g_w, g_b = nn.conv1d_backward(x, layer.w, grad, need_grad_x=i > 0)
            grads[:0] = [g_w, g_b, g_gamma, g_beta]
        return grads

    def params(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out += [layer.w, layer.b, layer.bn.gamma, layer.bn.beta]
        return out

    def get_state(self) -> list[np.ndarray]:
        state = []
        for layer in self.layers:
            state += [layer.w, layer.b, layer.bn.gamma, layer.bn.beta,
                      layer.bn.running_mean, layer.bn.running_var]
        return copy.deepcopy(state)

    def set_state(self, state: list[np.ndarray]) -> None:
        it = iter(copy.deepcopy(state))
        for layer in self.layers:
            layer.w, layer.b = next(it), next(it)
            layer.bn.gamma, layer.bn.beta = next(it), next(it)
            layer.bn.running_mean, layer.bn.running_var = next(it), next(it)


def build_model(arch: ArchConfig, seed: int = 0, dtype=np.float32) -> Model:
    """Initialize the network; rejects any layout whose receptive field is
    not 993 samples or whose pooling does not decimate by 8."""
    if arch.receptive_field != REQUIRED_RECEPTIVE_FIELD:
        raise ValueError(
            f"receptive field {arch.receptive_field} != {REQUIRED_RECEPTIVE_FIELD}")
    if arch.decimation != REQUIRED_DECIMATION:
        raise ValueError(f"decimation {arch.decimation} != {REQUIRED_DECIMATION}")
    rng = np.random.default_rng(seed)
    layers = []
    in_ch = 1
    for spec in arch.layers:
        fan_in = in_ch * spec.kernel
        limit = np.sqrt(6.0 / fan_in)
        w = rng.uniform(-limit, limit, size=(spec.kernel, in_ch, spec.filters))
        layers.append(Layer(
            w=w.astype(dtype),
            b=np.zeros(spec.filters, dtype=dtype),
            bn=nn.BatchNormParams.init(spec.filters, dtype=dtype),
            pooled=spec.pooled,
            activation=spec.activation,
        ))
        in_ch = spec.filters
    return Model(arch, layers, dtype=dtype)


def predict_curve(model: Model, audio: AudioBuffer) -> np.ndarray:
    """Target curve over the whole file at 2 kHz.

    The input is zero-padded by half the receptive field on both sides so
    output index i lines up with input sample 8 * i; the output has
    floor((len - 1) / 8) + 1 points.
    """
    if audio.sample_rate != 16000:
        raise ValueError(f"expected 16 kHz audio, got {audio.sample_rate}")
    if len(audio) < 1:
        raise ValueError("empty audio")
    half = (model.arch.receptive_field - 1) // 2
    x = np.zeros((1, len(audio) + 2 * half, 1), dtype=model.dtype)
    x[0, :, 0] = np.pad(audio.samples, (half, half)).astype(model.dtype)
    y, _ = model.forward(x, train=False)
    return y[0, :, 0].astype(np.float64)


@dataclass(frozen=True)
class DetectConfig:
    target_kind: str = "triangle"  # or "glottal_flow"
    tri_threshold: float = 0.5
    gf_rel_threshold: float = 0.2
    min_distance_s: float = 0.002
    upsample_factor: int = REQUIRED_DECIMATION

    def __post_init__(self):
        if self.target_kind not in ("triangle", "glottal_flow"):
            raise ValueError(f"unknown target kind {self.target_kind!r}")
        if not 0.0 < self.tri_threshold < 1.0 or not 0.0 < self.gf_rel_threshold < 1.0:
            raise ValueError("thresholds must lie in (0, 1)")


def marks_from_curve(curve: np.ndarray, cfg: DetectConfig,
                     curve_rate: float = 2000.0,
                     duration: float | None = None) -> np.ndarray:
    """Peak-picking on a predicted (or oracle) target curve.

    The curve is spline-upsampled back to the audio rate first. Triangle
    curves yield their thresholded positive peaks; glottal-flow curves
    yield the negative peaks of their derivative.
    """
    curve = np.asarray(curve, dtype=np.float64)
    if curve.size < 4:
        return np.empty(0, dtype=np.float64)
    fs = curve_rate * cfg.upsample_factor
    up = spline_upsample(curve, cfg.upsample_factor)
    if cfg.target_kind == "triangle":
        marks = find_peaks(up, fs, PeakPickConfig(
            threshold=cfg.tri_threshold, min_distance_s=cfg.min_distance_s,
            polarity="positive"))
    else:
        d = derivative(up, fs)
        strongest = -d.min() if d.size else 0.0
        if strongest <= 0:
            return np.empty(0, dtype=np.float64)
        marks = find_peaks(d, fs, PeakPickConfig(
            threshold=cfg.gf_rel_threshold * strongest,
            min_distance_s=cfg.min_distance_s, polarity="negative"))
        marks = marks + 0.5 / fs
    if duration is not None:
        marks = marks[(marks >= 0.0) & (marks < duration)]
    return marks


def detect(model: Model, audio: AudioBuffer, cfg: DetectConfig) -> np.ndarray:
    """GCI times for one file: predict the curve, upsample, pick peaks."""
    curve = predict_curve(model, audio)
    return marks_from_curve(curve, cfg, curve_rate=audio.sample_rate / REQUIRED_DECIMATION,
                            duration=audio.duration)


def save_weights(model: Model, path: str) -> None:
    """Binary weight file: magic 'FCNG', version, then per layer the shape
    header and float32 arrays (weights [out][in][kernel], bias, gamma, beta,
    running mean, running variance, eps)."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", WEIGHTS_VERSION, len(model.layers)))
        for layer in model.layers:
            k, in_ch, out_ch = layer.w.shape
            fh.write(struct.pack("<IIIBB", in_ch, out_ch, k, int(layer.pooled),
                                 _ACT_CODES[layer.activation]))
            w_oik = np.ascontiguousarray(layer.w.transpose(2, 1, 0), dtype=np.float32)
            fh.write(w_oik.tobytes())
            for arr in (layer.b, layer.bn.gamma, layer.bn.beta,
                        layer.bn.running_mean, layer.bn.running_var):
                fh.write(np.ascontiguousarray(arr, dtype=np.float32).tobytes())
            fh.write(struct.pack("<f", layer.bn.eps))


def load_weights(path: str) -> Model:
    """Inverse of save_weights; validates magic, version, and shape chaining."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise ValueError(f"bad magic {blob[:4]!r}, expected {MAGIC!r}")
    off = 4
    try:
        version, n_layers = struct.unpack_from("<II", blob, off)
        off += 8
        if version != WEIGHTS_VERSION:
            raise ValueError(f"unsupported weights version {version}")
        layers = []
        specs = []
        prev_out = 1
        for _ in range(n_layers):
            in_ch, out_ch, k, pooled, act_code = struct.unpack_from("<IIIBB", blob, off)
            off += 14
            if act_code not in _ACT_NAMES:
                raise ValueError(f"unknown activation code {act_code}")
            if in_ch != prev_out:
                raise ValueError(f"layer input {in_ch} does not chain from {prev_out}")

            def take(count):
                nonlocal off
                arr = np.frombuffer(blob, dtype="<f4", count=count, offset=off).copy()
                off += 4 * count
                return arr

            w = take(out_ch * in_ch * k).reshape(out_ch, in_ch, k).transpose(2, 1, 0)
            b, gamma, beta = take(out_ch), take(out_ch), take(out_ch)
            run_mean, run_var = take(out_ch), take(out_ch)
            (eps,) = struct.unpack_from("<f", blob, off)
            off += 4
            layers.append(Layer(
                w=np.ascontiguousarray(w), b=b,
                bn=nn.BatchNormParams(gamma=gamma, beta=beta, running_mean=run_mean,
                                      running_var=run_var, eps=float(eps)),
                pooled=bool(pooled),
                activation=_ACT_NAMES[act_code]))
            specs.append(LayerSpec(filters=out_ch, kernel=k, pooled=bool(pooled),
                                   activation=_ACT_NAMES[act_code]))
            prev_out = out_ch
    except (struct.error, ValueError) as exc:
        if isinstance(exc, ValueError) and "buffer" not in str(exc):
            raise
        raise ValueError(f"{path}: truncated or corrupt weight file") from exc
    if off != len(blob):
        raise ValueError(f"{path}: {len(blob) - off} trailing bytes")
    return Model(ArchConfig(layers=tuple(specs)), layers, dtype=np.float32)
