"""Dense float32 tensors and the CPU kernels needed by exported image models.

All functions take and return ``numpy.ndarray`` in float32, row-major, HWC
layout for images. Accumulation stays in float32 to match the numeric
profile of the browser runtime these models were exported for.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyInput, ShapeMismatch

__all__ = [
    "ConvParams",
    "as_f32",
    "conv2d",
    "depthwise_conv2d",
    "batch_norm",
    "dense",
    "relu",
    "softmax",
    "pool2d",
    "zero_pad2d",
    "add",
    "flatten",
    "reshape",
]


def as_f32(x) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(x, dtype=np.float32))


@dataclass(frozen=True)
class ConvParams:
    """Weights and geometry for a (depthwise) convolution.

    kernel layout: [kh, kw, in_c, out_c] for conv2d,
    [kh, kw, in_c, multiplier] for depthwise_conv2d.
    """

    kernel: np.ndarray
    bias: np.ndarray | None = None
    strides: tuple[int, int] = (1, 1)
    padding: str = "same"  # "same" | "valid"

    def __post_init__(self):
        if self.kernel.ndim != 4:
            raise ShapeMismatch(f"conv kernel must be rank 4, got {self.kernel.ndim}")
        if self.padding not in ("same", "valid"):
            raise ShapeMismatch(f"unknown padding mode {self.padding!r}")
        if self.strides[0] < 1 or self.strides[1] < 1:
            raise ShapeMismatch("strides must be positive")


def _same_pads(size: int, k: int, stride: int) -> tuple[int, int]:
    total = max((math.ceil(size / stride) - 1) * stride + k - size, 0)
    before = total // 2
    return before, total - before


def _pad_input(x: np.ndarray, kh: int, kw: int, strides, padding: str, fill: float):
    if padding == "valid":
        return x
    pt, pb = _same_pads(x.shape[0], kh, strides[0])
    pl, pr = _same_pads(x.shape[1], kw, strides[1])
    return np.pad(x, ((pt, pb), (pl, pr), (0, 0)), constant_values=fill)


def _windows(x: np.ndarray, kh: int, kw: int, strides):
    # (out_h, out_w, kh, kw, c) view over the padded input
    if x.shape[0] < kh or x.shape[1] < kw:
        raise ShapeMismatch(
            f"window {kh}x{kw} larger than padded input {x.shape[0]}x{x.shape[1]}"
        )
    w = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(0, 1))
    w = w[:: strides[0], :: strides[1]]
    return np.moveaxis(w, 2, 4)  # (oh, ow, kh, kw, c)


def conv2d(x: np.ndarray, p: ConvParams) -> np.ndarray:
    """Cross-correlation of an HWC input with an [kh,kw,in_c,out_c] kernel."""
    x = as_f32(x)
    if x.ndim != 3:
        raise ShapeMismatch(f"conv2d input must be HWC, got rank {x.ndim}")
    kh, kw, in_c, out_c = p.kernel.shape
    if x.shape[2] != in_c:
        raise ShapeMismatch(f"input channels {x.shape[2]} != kernel in_c {in_c}")
    xp = _pad_input(x, kh, kw, p.strides, p.padding, 0.0)
    win = _windows(xp, kh, kw, p.strides)
    out = np.einsum("hwijc,ijco->hwo", win, as_f32(p.kernel), dtype=np.float32)
    if p.bias is not None:
        if p.bias.shape != (out_c,):
            raise ShapeMismatch("bias length != output channels")
        out = out + as_f32(p.bias)
    return np.ascontiguousarray(out, dtype=np.float32)


def depthwise_conv2d(x: np.ndarray, p: ConvParams) -> np.ndarray:
    """Per-channel convolution with channel multiplier; output has in_c*mult channels."""
    x = as_f32(x)
    if x.ndim != 3:
        raise ShapeMismatch(f"depthwise input must be HWC, got rank {x.ndim}")
    kh, kw, in_c, mult = p.kernel.shape
    if x.shape[2] != in_c:
        raise ShapeMismatch(f"input channels {x.shape[2]} != kernel in_c {in_c}")
    xp = _pad_input(x, kh, kw, p.strides, p.padding, 0.0)
    win = _windows(xp, kh, kw, p.strides)
    out = np.einsum("hwijc,ijcm->hwcm", win, as_f32(p.kernel), dtype=np.float32)
    oh, ow = out.shape[:2]
    out = out.reshape(oh, ow, in_c * mult)
    if p.bias is not None:
        if p.bias.shape != (in_c * mult,):
            raise ShapeMismatch("bias length != output channels")
        out = out + as_f32(p.bias)
    return np.ascontiguousarray(out, dtype=np.float32)


def batch_norm(x, gamma, beta, mean, variance, epsilon: float = 1e-3) -> np.ndarray:
    """Per-channel normalization over the last axis."""
    x = as_f32(x)
    c = x.shape[-1]
    for name, arr in (("gamma", gamma), ("beta", beta), ("mean", mean), ("variance", variance)):
        if np.asarray(arr).shape != (c,):
            raise ShapeMismatch(f"{name} must have shape ({c},)")
    inv = np.float32(1.0) / np.sqrt(as_f32(variance) + np.float32(epsilon))
    return ((x - as_f32(mean)) * (as_f32(gamma) * inv) + as_f32(beta)).astype(np.float32)


def dense(x, kernel, bias=None, activation=None) -> np.ndarray:
    """x @ kernel (+ bias), kernel laid out [in, out]."""
    x = as_f32(x).reshape(-1)
    kernel = as_f32(kernel)
    if kernel.ndim != 2 or x.shape[0] != kernel.shape[0]:
        raise ShapeMismatch(
            f"dense: input length {x.shape[0]} vs kernel {kernel.shape}"
        )
    out = x @ kernel
    if bias is not None:
        if np.asarray(bias).shape != (kernel.shape[1],):
            raise ShapeMismatch("dense bias length != units")
        out = out + as_f32(bias)
    out = out.astype(np.float32)
    if activation in (None, "linear"):
        return out
    if activation == "relu":
        return relu(out)
    if activation == "softmax":
        return softmax(out)
    raise ShapeMismatch(f"unknown dense activation {activation!r}")


def relu(x, max_value: float | None = None) -> np.ndarray:
    out = np.maximum(as_f32(x), np.float32(0.0))
    if max_value is not None:
        out = np.minimum(out, np.float32(max_value))
    return out.astype(np.float32)


def softmax(x) -> np.ndarray:
    x = as_f32(x).reshape(-1)
    if x.size == 0:
        raise EmptyInput("softmax of empty input")
    e = np.exp(x - np.max(x))
    return (e / np.sum(e)).astype(np.float32)


def pool2d(x, kind: str, window: tuple[int, int] = (2, 2),
           strides: tuple[int, int] | None = None, padding: str = "valid") -> np.ndarray:
    """Max / average / global-average pooling over HWC input.

    Average pooling with SAME padding excludes padded cells from the divisor.
    """
    x = as_f32(x)
    if x.ndim != 3:
        raise ShapeMismatch(f"pool2d input must be HWC, got rank {x.ndim}")
    if kind == "global_average":
        return np.mean(x, axis=(0, 1), dtype=np.float32).astype(np.float32)
    if kind not in ("max", "average"):
        raise ShapeMismatch(f"unknown pooling kind {kind!r}")
    if strides is None:
        strides = window
    kh, kw = window
    fill = -np.inf if kind == "max" else np.nan
    xp = _pad_input(x, kh, kw, strides, padding, fill)
    win = _windows(xp, kh, kw, strides)
    if kind == "max":
        out = np.max(win, axis=(2, 3))
    else:
        out = np.nanmean(win, axis=(2, 3), dtype=np.float32)
    return np.ascontiguousarray(out, dtype=np.float32)


def zero_pad2d(x, pads: tuple[tuple[int, int], tuple[int, int]]) -> np.ndarray:
    x = as_f32(x)
    if x.ndim != 3:
        raise ShapeMismatch("zero_pad2d input must be HWC")
    (pt, pb), (pl, pr) = pads
    return np.pad(x, ((pt, pb), (pl, pr), (0, 0))).astype(np.float32)


def add(a, b) -> np.ndarray:
    a, b = as_f32(a), as_f32(b)
    if a.shape != b.shape:
        raise ShapeMismatch(f"add shapes differ: {a.shape} vs {b.shape}")
    return (a + b).astype(np.float32)


def flatten(x) -> np.ndarray:
    return as_f32(x).reshape(-1)


def reshape(x, shape) -> np.ndarray:
    x = as_f32(x)
    if int(np.prod(shape)) != x.size:
        raise ShapeMismatch(f"cannot reshape {x.size} elements into {tuple(shape)}")
    return x.reshape(shape)
