"""Deterministic dense-array kernels used by the propagation engine.

All kernels take and return C-contiguous float32 arrays ("tensors") and are
pure: identical inputs give bit-identical outputs.  Reductions inside matmul
accumulate in float64 before casting back to float32.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError

__all__ = ["as_tensor", "matmul", "softmax", "bilinear_resize", "channel_argmax"]


def as_tensor(x) -> np.ndarray:
    """Coerce input to a finite, C-contiguous float32 array."""
    a = np.ascontiguousarray(x, dtype=np.float32)
    if not np.all(np.isfinite(a)):
        raise ValueError("tensor contains non-finite values")
    return a


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product of a [m,k] and b [k,n] with float64 accumulation.

    Uses a fixed single-threaded einsum reduction so the result is
    bit-reproducible regardless of BLAS threading.
    """
    a = as_tensor(a)
    b = as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-d operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"inner dims differ: {a.shape} x {b.shape}")
    out64 = np.einsum("ij,jk->ik", a.astype(np.float64), b.astype(np.float64), optimize=False)
    out = out64.astype(np.float32)
    if not np.all(np.isfinite(out)):
        raise ValueError("matmul overflowed float32 range")
    return np.ascontiguousarray(out)


def softmax(x: np.ndarray, axis: int = -1, temperature: float = 1.0) -> np.ndarray:
    """Temperature softmax along `axis` with max-subtraction.

    Each slice of the output sums to 1 (within float tolerance) and the
    result is invariant to adding a constant to a slice.
    """
    x = as_tensor(x)
    if temperature <= 0.0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    if not -x.ndim <= axis < x.ndim:
        raise ShapeError(f"axis {axis} out of range for rank-{x.ndim} tensor")
    z = x.astype(np.float64) / float(temperature)
    z -= np.max(z, axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / np.sum(e, axis=axis, keepdims=True)
    return np.ascontiguousarray(out.astype(np.float32))


def bilinear_resize(x: np.ndarray, new_h: int, new_w: int) -> np.ndarray:
    """Bilinear resize of an [H,W,C] tensor with align-corners-false sampling.

    Source coordinates are (i + 0.5) * H / new_h - 0.5, clamped to the valid
    range.  The interpolation is factored (v0 + (v1 - v0) * t) so constant
    inputs map to bit-identical constant outputs, and every output value lies
    within the input's [min, max] range.
    """
    x = as_tensor(x)
    if x.ndim != 3:
        raise ShapeError(f"bilinear_resize expects [H,W,C], got {x.shape}")
    if new_h < 1 or new_w < 1:
        raise ShapeError(f"target size must be >= 1, got {new_h}x{new_w}")
    h, w, _ = x.shape

    sy = np.clip((np.arange(new_h, dtype=np.float64) + 0.5) * (h / new_h) - 0.5, 0.0, h - 1.0)
    sx = np.clip((np.arange(new_w, dtype=np.float64) + 0.5) * (w / new_w) - 0.5, 0.0, w - 1.0)
    y0 = np.floor(sy).astype(np.int64)
    x0 = np.floor(sx).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (sy - y0).astype(np.float32)[:, None, None]
    fx = (sx - x0).astype(np.float32)[None, :, None]

    v00 = x[y0[:, None], x0[None, :]]
    v01 = x[y0[:, None], x1[None, :]]
    v10 = x[y1[:, None], x0[None, :]]
    v11 = x[y1[:, None], x1[None, :]]
    top = v00 + (v01 - v00) * fx
    bot = v10 + (v11 - v10) * fx
    return np.ascontiguousarray(top + (bot - top) * fy)


def channel_argmax(x: np.ndarray) -> np.ndarray:
    """Per-pixel index of the maximal channel of an [H,W,C] tensor.

    Ties break toward the lowest channel index, so label 0 wins ambiguous
    pixels.
    """
    x = as_tensor(x)
    if x.ndim != 3 or x.shape[2] < 1:
        raise ShapeError(f"channel_argmax expects [H,W,C] with C >= 1, got {x.shape}")
    return np.ascontiguousarray(np.argmax(x, axis=2).astype(np.int32))
