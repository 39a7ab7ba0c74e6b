"""From-scratch building blocks for 1-D convolutional regression nets.

Arrays are laid out [batch, time, channels] (channels last) so valid
convolutions reduce to plain BLAS matmuls on contiguous slices. Training
runs in float32; gradient checking uses float64 inputs end to end, every
op preserves the dtype it is given.
"""

from __future__ import annotations

import ctypes
import ctypes.util
from dataclasses import dataclass, field

import numpy as np

_IM2COL_BUDGET_BYTES = 128 << 20


def _tune_allocator() -> None:
    # Activation buffers run to tens of MB; with glibc defaults each one is
    # a fresh mmap whose page faults dominate the elementwise ops. Raising
    # the mmap/trim thresholds keeps the blocks on the heap for reuse.
    try:
        libc = ctypes.CDLL(ctypes.util.find_library("c") or "libc.so.6")
        libc.mallopt(-3, 1 << 30)  # M_MMAP_THRESHOLD
        libc.mallopt(-1, 1 << 30)  # M_TRIM_THRESHOLD
    except (OSError, AttributeError):
        pass


_tune_allocator()


def _window_view(x: np.ndarray, kernel: int) -> np.ndarray:
    """All length-`kernel` time windows of x [B, T, I] as a [B, L, kernel*I]
    view. In channels-last layout each window is one contiguous memory run,
    so materializing a slice of this view is a plain block copy."""
    B, T, I = x.shape
    L = T - kernel + 1
    sb, st, si = x.strides
    return np.lib.stride_tricks.as_strided(x, shape=(B, L, kernel * I),
                                           strides=(sb, st, si))


def _conv_core(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Valid correlation of x [B, T, I] with w [K, I, O] -> [B, L, O], L = T-K+1."""
    B, T, I = x.shape
    K, _, O = w.shape
    L = T - K + 1
    window_bytes = x.itemsize * B * L * K * I
    if O >= 32 or (K * I >= 256 and window_bytes <= _IM2COL_BUDGET_BYTES):
        return _conv_im2col(np.ascontiguousarray(x), w)
    # thin outputs: one full-length GEMM per kernel tap, then shifted adds
    xf = np.ascontiguousarray(x).reshape(B * T, I)
    acc = np.zeros((B, L, O), dtype=x.dtype)
    for k in range(K):
        acc += (xf @ w[k]).reshape(B, T, O)[:, k:k + L, :]
    return acc


def _windows_tall(x: np.ndarray, kernel: int) -> np.ndarray:
    """Windows of a single-channel x [B, T, 1] as [K, B*L]; built by K long
    contiguous copies, cheap where the per-window copy would be tiny."""
    B, T, _ = x.shape
    L = T - kernel + 1
    x2 = x.reshape(B, T)
    win = np.empty((kernel, B, L), dtype=x.dtype)
    for k in range(kernel):
        win[k] = x2[:, k:k + L]
    return win.reshape(kernel, B * L)


def _conv_im2col(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    B, T, I = x.shape
    K, _, O = w.shape
    L = T - K + 1
    w2 = w.reshape(K * I, O)
    if I == 1:
        return (_windows_tall(x, K).T @ w2).reshape(B, L, O)
    win = _window_view(x, K)
    out = np.empty((B, L, O), dtype=x.dtype)
    l_chunk = max(1, min(L, _IM2COL_BUDGET_BYTES // max(1, x.itemsize * K * I * B)))
    for l0 in range(0, L, l_chunk):
        l1 = min(L, l0 + l_chunk)
        block = np.ascontiguousarray(win[:, l0:l1])
        out[:, l0:l1] = (block.reshape(B * (l1 - l0), K * I) @ w2).reshape(B, l1 - l0, O)
    return out


def conv1d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """out[b, t, o] = bias[o] + sum_{k, i} w[k, i, o] * x[b, t + k, i]."""
    if x.ndim != 3 or w.ndim != 3:
        raise ValueError("expected x [B, T, I] and w [K, I, O]")
    if x.shape[2] != w.shape[1]:
        raise ValueError(f"channel mismatch: x has {x.shape[2]}, w expects {w.shape[1]}")
    if x.shape[1] < w.shape[0]:
        raise ValueError(f"input time {x.shape[1]} shorter than kernel {w.shape[0]}")
    return _conv_core(x, w) + b


def conv1d_backward(x: np.ndarray, w: np.ndarray, grad_out: np.ndarray,
                    need_grad_x: bool = True):
    """Exact gradients of conv1d_forward: (grad_x, grad_w, grad_b)."""
    B, T, I = x.shape
    K, _, O = w.shape
    L = T - K + 1
    if grad_out.shape != (B, L, O):
        raise ValueError(f"grad_out shape {grad_out.shape} != {(B, L, O)}")
    grad_b = grad_out.sum(axis=(0, 1))
    g2 = np.ascontiguousarray(grad_out).reshape(B * L, O)
    if I == 1:
        grad_w = (_windows_tall(np.ascontiguousarray(x), K) @ g2).reshape(K, I, O)
    elif O >= 32:
        # one deep GEMM over all window rows
        xc = np.ascontiguousarray(x)
        win = _window_view(xc, K)
        l_chunk = max(1, min(L, _IM2COL_BUDGET_BYTES // max(1, x.itemsize * K * I * B)))
        gw2 = np.zeros((K * I, O), dtype=w.dtype)
        for l0 in range(0, L, l_chunk):
            l1 = min(L, l0 + l_chunk)
            block = np.ascontiguousarray(win[:, l0:l1]).reshape(B * (l1 - l0), K * I)
            gw2 += block.T @ grad_out[:, l0:l1, :].reshape(B * (l1 - l0), O)
        grad_w = gw2.reshape(K, I, O)
    else:
        grad_w = np.empty_like(w)
        for k in range(K):
            # [I, L] @ [L, O], batched over B and summed
            grad_w[k] = np.matmul(x[:, k:k + L, :].transpose(0, 2, 1),
                                  grad_out).sum(axis=0)
    grad_x = None
    if need_grad_x:
        if L < 2 * K:
            # short outputs: scatter each tap, avoiding padded-conv waste
            grad_x = np.zeros((B, T, I), dtype=grad_out.dtype)
            for k in range(K):
                grad_x[:, k:k + L, :] += (g2 @ w[k].T).reshape(B, L, I)
        else:
            pad = np.zeros((B, L + 2 * (K - 1), O), dtype=grad_out.dtype)
            pad[:, K - 1:K - 1 + L, :] = grad_out
            w_rev = np.ascontiguousarray(w[::-1].transpose(0, 2, 1))  # [K, O, I]
            grad_x = _conv_core(pad, w_rev)
    return grad_x, grad_w, grad_b


def maxpool2_forward(x: np.ndarray):
    """Window 2, stride 2; an odd tail sample is dropped. Ties keep the
    earlier index. Returns (y, take_second) where take_second flags the
    pooling windows whose second sample won."""
    if x.shape[1] < 2:
        raise ValueError("need at least 2 time steps to pool")
    T2 = x.shape[1] // 2
    a = x[:, 0:2 * T2:2, :]
    b = x[:, 1:2 * T2:2, :]
    take_second = b > a
    return np.where(take_second, b, a), take_second


def maxpool2_backward(grad_y: np.ndarray, take_second: np.ndarray,
                      in_time: int) -> np.ndarray:
    B, T2, C = grad_y.shape
    grad_x = np.zeros((B, in_time, C), dtype=grad_y.dtype)
    paired = grad_x[:, :2 * T2, :].reshape(B, T2, 2, C)
    paired[:, :, 1, :] = grad_y * take_second
    paired[:, :, 0, :] = grad_y - paired[:, :, 1, :]
    return grad_x


@dataclass
class BatchNormParams:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    eps: float = 1e-3
    momentum: float = 0.99

    @classmethod
    def init(cls, channels: int, dtype=np.float32, eps: float = 1e-3,
             momentum: float = 0.99) -> "BatchNormParams":
        return cls(gamma=np.ones(channels, dtype=dtype),
                   beta=np.zeros(channels, dtype=dtype),
                   running_mean=np.zeros(channels, dtype=dtype),
                   running_var=np.ones(channels, dtype=dtype),
                   eps=eps, momentum=momentum)


def batchnorm_forward(x: np.ndarray, bn: BatchNormParams, train: bool):
    """Normalize per channel over (batch, time). Train mode uses batch
    statistics and updates the running ones in place; infer mode uses the
    running statistics. Returns (y, cache); cache is None in infer mode."""
    if train:
        B, T, C = x.shape
        n = B * T
        if n < 2:
            raise ValueError("batchnorm train mode needs batch*time >= 2")
        x2 = x.reshape(n, C)
        mean = x2.mean(axis=0)
        centered = x2 - mean
        var = np.einsum("nc,nc->c", centered, centered) / n
        inv_std = 1.0 / np.sqrt(var + bn.eps)
        centered *= inv_std  # becomes xhat
        xhat = centered.reshape(B, T, C)
        bn.running_mean *= bn.momentum
        bn.running_mean += (1.0 - bn.momentum) * mean
        bn.running_var *= bn.momentum
        bn.running_var += (1.0 - bn.momentum) * var
        return bn.gamma * xhat + bn.beta, (xhat, inv_std)
    inv_std = 1.0 / np.sqrt(bn.running_var + bn.eps)
    return bn.gamma * inv_std * (x - bn.running_mean) + bn.beta, None


def batchnorm_backward(grad_y: np.ndarray, bn: BatchNormParams, cache):
    """Gradients of the train-mode forward: (grad_x, grad_gamma, grad_beta)."""
    xhat, inv_std = cache
    B, T, C = grad_y.shape
    n = B * T
    g2 = grad_y.reshape(n, C)
    xh2 = xhat.reshape(n, C)
    grad_beta = g2.sum(axis=0)
    grad_gamma = np.einsum("nc,nc->c", g2, xh2)
    # gamma factors out of the centered form, saving full-size temporaries
    grad_x = g2 - grad_beta / n
    grad_x -= xh2 * (grad_gamma / n)
    grad_x *= bn.gamma * inv_std
    return grad_x.reshape(B, T, C), grad_gamma, grad_beta


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(grad_y: np.ndarray, x: np.ndarray) -> np.ndarray:
    return grad_y * (x > 0)


def sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form is overflow-free at both tails
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def sigmoid_backward(grad_y: np.ndarray, y: np.ndarray) -> np.ndarray:
    return grad_y * y * (1.0 - y)


def mse_loss(pred: np.ndarray, target: np.ndarray):
    """Mean squared error over all elements, with its gradient on pred."""
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred - target
    loss = float(np.mean(diff * diff))
    return loss, 2.0 * diff / diff.size


@dataclass
class AdamState:
    learning_rate: float
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params: list[np.ndarray], learning_rate: float) -> "AdamState":
        state = cls(learning_rate=learning_rate)
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
        return state


def adam_step(params: list[np.ndarray], grads: list[np.ndarray],
              state: AdamState) -> None:
    """One bias-corrected Adam update, in place on params and state."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads, and optimizer state must align")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError(f"grad shape {g.shape} != param shape {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.eps)


def grad_check(loss_fn, param: np.ndarray, analytic: np.ndarray,
               h: float = 1e-6, n_coords: int = 64,
               rng: np.random.Generator | None = None) -> float:
    """Max relative error of analytic vs central-difference gradients over a
    random coordinate subset. loss_fn re-evaluates the loss from the current
    contents of param."""
    rng = rng or np.random.default_rng(0)
    flat = param.reshape(-1)
    ana = analytic.reshape(-1)
    count = min(n_coords, flat.size)
    coords = rng.choice(flat.size, size=count, replace=False)
    worst = 0.0
    for c in coords:
        orig = flat[c]
        flat[c] = orig + h
        lp = loss_fn()
        flat[c] = orig - h
        lm = loss_fn()
        flat[c] = orig
        num = (lp - lm) / (2.0 * h)
        denom = max(abs(num), abs(ana[c]), 1e-8)
        worst = max(worst, abs(num - ana[c]) / denom)
    return worst
