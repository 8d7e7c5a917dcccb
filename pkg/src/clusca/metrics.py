"""Run-analysis metrics: errors, similarity maps, ARI series, 2-D projection."""

from __future__ import annotations

import numpy as np

from .clustering import ari
from .errors import ShapeError

#: Floor for the reference norm in relative_error, so a zero reference with a
#: zero candidate reports 0 instead of dividing by zero.
TINY_NORM = 1e-30


def relative_error(a, b) -> float:
    """Frobenius distance of a from reference b, over max(||b||_F, TINY_NORM)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"shapes differ: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), TINY_NORM))


def _row_cosine(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    num = np.sum(a * b, axis=-1)
    den = np.linalg.norm(a, axis=-1) * np.linalg.norm(b, axis=-1)
    out = np.zeros_like(num)
    nz = den > 0.0
    out[nz] = num[nz] / den[nz]
    return out


def similarity_map(snapshots, mode: str = "temporal", *, step_delta: int = 1) -> np.ndarray:
    """Cosine similarities across time or across tokens.

    temporal: ``snapshots`` is a sequence of (T, D) maps; entry [s, i] is the
    cosine between token i at snapshot s and snapshot s + step_delta, giving
    a (S - step_delta, T) matrix. spatial: a single (T, D) map (or the first
    element of a sequence) yields the (T, T) token-by-token cosine matrix.
    Zero vectors contribute similarity 0.
    """
    if mode == "temporal":
        maps = [np.asarray(m, dtype=np.float64) for m in snapshots]
        if step_delta < 1:
            raise ShapeError(f"step_delta must be >= 1, got {step_delta}")
        if len(maps) < step_delta + 1:
            raise ShapeError(
                f"temporal mode needs at least {step_delta + 1} snapshots, got {len(maps)}"
            )
        if any(m.shape != maps[0].shape for m in maps):
            raise ShapeError("snapshots must share one shape")
        stack = np.stack(maps)
        return _row_cosine(stack[:-step_delta], stack[step_delta:])
    if mode == "spatial":
        arr = np.asarray(snapshots, dtype=np.float64)
        if arr.ndim == 3:
            arr = arr[0]
        if arr.ndim != 2 or arr.shape[0] < 2:
            raise ShapeError(f"spatial mode needs one (T>=2, D) map, got shape {arr.shape}")
        norms = np.linalg.norm(arr, axis=1)
        denom = np.outer(norms, norms)
        out = np.zeros((arr.shape[0], arr.shape[0]))
        nz = denom > 0.0
        gram = arr @ arr.T
        out[nz] = gram[nz] / denom[nz]
        return out
    raise ShapeError(f"mode must be 'temporal' or 'spatial', got {mode!r}")


def ari_series(assignments, deltas):
    """ARI between cluster assignments whose originating steps differ by
    each delta.

    ``assignments`` is a sequence of (step, labels) pairs with distinct,
    increasing steps. Returns {delta: [(step_a, step_b, ari), ...]} covering
    every pair whose step difference equals the delta exactly.
    """
    pairs = [(int(s), np.asarray(l)) for s, l in assignments]
    by_step = dict(pairs)
    if len(by_step) != len(pairs):
        raise ShapeError("assignment steps must be distinct")
    out = {}
    for delta in deltas:
        delta = int(delta)
        if delta < 1:
            raise ShapeError(f"deltas must be >= 1, got {delta}")
        rows = []
        for step, labels in pairs:
            other = by_step.get(step + delta)
            if other is not None:
                rows.append((step, step + delta, ari(labels, other)))
        out[delta] = rows
    return out


def pca2d(points, *, budget: int = 500, tol: float = 1e-12):
    """Top-2 principal projection via power iteration with deflation.

    Returns (coords, components, explained) with coords (n, 2), unit-norm
    components (2, D), and the two leading variances. Components are
    sign-fixed so their largest-magnitude entry is positive. Data already
    lying in a 2-D subspace is reproduced up to rotation, so pairwise
    distances survive exactly.
    """
    x = np.asarray(points, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ShapeError(f"pca2d needs (n >= 2, D) points, got shape {x.shape}")
    n, d = x.shape
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / n
    components = np.zeros((2, d))
    explained = np.zeros(2)
    work = cov.copy()
    for comp in range(2):
        if d == 1:
            if comp == 0:
                components[0, 0] = 1.0
                explained[0] = work[0, 0]
            break
        v = np.ones(d) / np.sqrt(d)
        if float(np.linalg.norm(work @ v)) <= tol:
            # All-ones start is orthogonal to (or annihilated by) the
            # operator: fall back to the heaviest coordinate axis.
            v = np.zeros(d)
            v[int(np.argmax(np.diag(work)))] = 1.0
        for _ in range(budget):
            w = work @ v
            norm = float(np.linalg.norm(w))
            if norm <= tol:
                break
            w /= norm
            if float(np.linalg.norm(w - v)) < tol:
                v = w
                break
            v = w
        lam = float(v @ work @ v)
        if lam <= tol:
            break
        peak = int(np.argmax(np.abs(v)))
        if v[peak] < 0:
            v = -v
        components[comp] = v
        explained[comp] = lam
        work = work - lam * np.outer(v, v)
    coords = centered @ components.T
    return coords, components, explained
