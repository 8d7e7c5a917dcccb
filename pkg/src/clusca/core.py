"""Dense float64 feature-map primitives.

A feature map is a 2-D float64 array of shape (tokens, dim). Everything in
the package flows through the handful of operations here, so their shape and
finiteness checks are the package's numerical front door.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError
from .rng import SeededRng


def as_feature_map(data, *, name: str = "feature map") -> np.ndarray:
    """Validate and return data as a (T, D) float64 array, T, D >= 1."""
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeError(f"{name} must have at least one row and column, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ShapeError(f"{name} contains non-finite values")
    return arr


def matmul(a, b) -> np.ndarray:
    """Matrix product with an explicit inner-dimension check."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"inner dimensions differ: {a.shape} x {b.shape}")
    return a @ b


def softmax_rows(x) -> np.ndarray:
    """Row-wise softmax with max subtraction for overflow safety.

    Constant rows (including all-equal large values) come out uniform.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"softmax_rows expects a 2-D array, got shape {x.shape}")
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def layer_norm(x, gain=None, bias=None, *, eps: float = 1e-12) -> np.ndarray:
    """Per-row standardization (population variance) followed by gain and bias.

    Zero-variance rows standardize to zero and therefore map to the bias.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"layer_norm expects a 2-D array, got shape {x.shape}")
    mean = x.mean(axis=1, keepdims=True)
    var = x.var(axis=1, keepdims=True)
    normed = (x - mean) / np.sqrt(var + eps)
    if gain is not None:
        gain = np.asarray(gain, dtype=np.float64)
        if gain.shape != (x.shape[1],):
            raise ShapeError(f"gain shape {gain.shape} does not match width {x.shape[1]}")
        normed = normed * gain
    if bias is not None:
        bias = np.asarray(bias, dtype=np.float64)
        if bias.shape != (x.shape[1],):
            raise ShapeError(f"bias shape {bias.shape} does not match width {x.shape[1]}")
        normed = normed + bias
    return normed


def seeded_gaussian(rng: SeededRng, rows: int, cols: int) -> np.ndarray:
    """Standard-normal (rows, cols) matrix drawn from the given stream."""
    if rows < 1 or cols < 1:
        raise ShapeError(f"gaussian shape must be positive, got ({rows}, {cols})")
    return rng.standard_normal(rows, cols)


def frobenius(x) -> float:
    return float(np.linalg.norm(np.asarray(x, dtype=np.float64)))
