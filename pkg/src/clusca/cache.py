"""Cache-cycle planning and per-module feature cache state.

A run is divided into cache cycles of length ``interval``: one full step that
computes every token and refreshes the cache, followed by partial steps that
compute little or nothing and reconstruct module outputs from cached state.

Each (layer, module) pair owns a ``TaylorCacheEntry`` holding the feature map
from the last full refresh, a stack of backward differences over successive
refreshes, and a working copy that partial updates write into. Forecasts
evaluate the unique polynomial through the refresh history (Newton-Gregory
backward form), which is exact for trajectories polynomial of degree <= order
and reduces to plain reuse at order 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, PolicyError, ShapeError

POLICIES = ("full", "fora", "toca-proxy", "taylorseer", "clusca")
MODULES = ("sa", "mlp")

FULL = "full"
PARTIAL = "partial"


@dataclass
class CacheConfig:
    """Knobs for one caching policy run.

    FORA and the ToCa proxy ignore ``order`` (their reuse is order 0);
    TaylorSeer ignores ``clusters`` and ``gamma``. ``force_empty_compute``
    is a diagnostic switch that makes partial steps compute nothing, which
    degenerates the cluster policy into pure temporal forecasting.
    """

    policy: str = "clusca"
    interval: int = 5           # cache cycle length N
    clusters: int = 16          # K
    gamma: float = 0.005        # spatial propagation weight
    order: int = 2              # forecast order O
    rearrange_last: bool = False
    cluster_layer: int = -1     # block whose output feeds clustering (-1 = last)
    cluster_module: str = "mlp"
    kmeans_max_iters: int = 100
    kmeans_tol: float = 1e-8
    force_empty_compute: bool = False

    def validate(self):
        if self.policy not in POLICIES:
            raise ConfigError(
                f"unknown policy {self.policy!r}, expected one of {POLICIES}",
                field="policy.kind",
            )
        if self.interval < 1:
            raise ConfigError(f"interval must be >= 1, got {self.interval}", field="policy.interval")
        if self.clusters < 1:
            raise ConfigError(f"clusters must be >= 1, got {self.clusters}", field="policy.clusters")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError(f"gamma must lie in [0, 1], got {self.gamma}", field="policy.gamma")
        if self.order < 0:
            raise ConfigError(f"order must be >= 0, got {self.order}", field="policy.order")
        if self.cluster_module not in MODULES:
            raise ConfigError(
                f"cluster_module must be one of {MODULES}, got {self.cluster_module!r}",
                field="policy.cluster_module",
            )
        if self.kmeans_max_iters < 1:
            raise ConfigError("kmeans_max_iters must be >= 1", field="policy.kmeans_max_iters")
        if self.kmeans_tol < 0:
            raise ConfigError("kmeans_tol must be >= 0", field="policy.kmeans_tol")
        return self

    def effective_interval(self) -> int:
        # The oracle policy computes everything every step regardless of N.
        return 1 if self.policy == "full" else self.interval


@dataclass(frozen=True)
class StepPlan:
    """Full/partial tag and cycle offset for every denoising position."""

    steps: int
    interval: int
    rearranged: bool
    tags: tuple = field(repr=False)
    offsets: tuple = field(repr=False)

    @property
    def full_positions(self) -> tuple:
        return tuple(i for i, t in enumerate(self.tags) if t == FULL)


def plan_schedule(steps: int, interval: int, rearrange_last: bool = False) -> StepPlan:
    """Full steps at positions divisible by interval; position 0 is always full.

    With rearrange_last set and a partial final position, the latest
    non-initial full step is relocated onto the final position (the count of
    full steps is conserved). If the only full step is the initial one there
    is nothing to relocate and the plan is returned unchanged.
    """
    if steps < 1:
        raise ConfigError(f"steps must be >= 1, got {steps}", field="schedule.steps")
    if interval < 1:
        raise ConfigError(f"interval must be >= 1, got {interval}", field="policy.interval")
    full = {i for i in range(steps) if i % interval == 0}
    rearranged = False
    if rearrange_last and (steps - 1) not in full:
        movable = [p for p in sorted(full) if p != 0]
        if movable:
            full.discard(movable[-1])
            full.add(steps - 1)
            rearranged = True
    tags, offsets = [], []
    last_full = None
    for pos in range(steps):
        if pos in full:
            tags.append(FULL)
            last_full = pos
            offsets.append(0)
        else:
            tags.append(PARTIAL)
            offsets.append(pos - last_full)
    return StepPlan(
        steps=steps,
        interval=interval,
        rearranged=rearranged,
        tags=tuple(tags),
        offsets=tuple(offsets),
    )


class TaylorCacheEntry:
    """Cache state for one (layer, module) pair.

    ``base`` and ``deltas`` snapshot only full refreshes; ``deltas[i-1]`` is
    the i-th backward difference over successive refreshes and stays None
    until enough refreshes have happened (the i-th level needs i+1).
    ``working`` is the current best full-map estimate and is what partial
    updates overwrite; it never feeds the difference stack.
    """

    __slots__ = ("order", "base", "deltas", "working", "refreshes", "last_full_step")

    def __init__(self, order: int):
        if order < 0:
            raise ConfigError(f"order must be >= 0, got {order}", field="policy.order")
        self.order = order
        self.base = None
        self.deltas = [None] * order
        self.working = None
        self.refreshes = 0
        self.last_full_step = None

    def available_order(self) -> int:
        n = 0
        for d in self.deltas:
            if d is None:
                break
            n += 1
        return n


def refresh_full(entry: TaylorCacheEntry, fresh, step: int | None = None) -> None:
    """Fold a freshly computed full map into the difference stack.

    delta1_new = fresh - base_old, and each higher level is the difference of
    successive lower-level values, so level i becomes available after i+1
    refreshes. The working copy is reset to the fresh map.
    """
    fresh = np.asarray(fresh, dtype=np.float64)
    if fresh.ndim != 2:
        raise ShapeError(f"refresh expects a full (T, D) map, got shape {fresh.shape}")
    if entry.base is not None and fresh.shape != entry.base.shape:
        raise ShapeError(f"refresh shape {fresh.shape} does not match cached {entry.base.shape}")
    new_deltas = [None] * entry.order
    prev_level = None
    if entry.base is not None and entry.order >= 1:
        prev_level = fresh - entry.base
        new_deltas[0] = prev_level
        for i in range(1, entry.order):
            if entry.deltas[i - 1] is None:
                break
            prev_level = prev_level - entry.deltas[i - 1]
            new_deltas[i] = prev_level
    entry.base = fresh.copy()
    entry.deltas = new_deltas
    entry.working = fresh.copy()
    entry.refreshes += 1
    entry.last_full_step = step


def taylor_forecast(entry: TaylorCacheEntry, offset: int, interval: int) -> np.ndarray:
    """Extrapolate the cached map ``offset`` steps past the last full refresh.

    Evaluates the polynomial through the refresh history in Newton-Gregory
    backward form with u = offset / interval: each term multiplies the i-th
    backward difference by u(u+1)...(u+i-1)/i!. Truncated at the highest
    populated difference level; order 0 (or offset 0) returns the base map.
    """
    if entry.refreshes < 1 or entry.base is None:
        raise PolicyError("forecast requested before any full refresh")
    if offset < 0:
        raise PolicyError(f"cycle offset must be >= 0, got {offset}")
    if interval < 1:
        raise PolicyError(f"interval must be >= 1, got {interval}")
    out = entry.base.copy()
    u = offset / interval
    coeff = 1.0
    for i, d in enumerate(entry.deltas, start=1):
        if d is None:
            break
        coeff *= (u + i - 1) / i
        out += coeff * d
    return out


def cluster_mean(fresh_rows, indices, labels, n_clusters: int):
    """Per-cluster mean of freshly computed rows.

    Returns (means, present): means[c] is the mean of fresh rows whose token
    belongs to cluster c, and present[c] says whether any computed row landed
    in that cluster. Absent clusters keep a zero mean and must be skipped by
    the caller.
    """
    fresh_rows = np.asarray(fresh_rows, dtype=np.float64)
    indices = np.asarray(indices, dtype=np.intp)
    labels = np.asarray(labels)
    if fresh_rows.shape[0] != indices.shape[0]:
        raise ShapeError(
            f"{fresh_rows.shape[0]} fresh rows but {indices.shape[0]} indices"
        )
    if n_clusters < 1:
        raise ConfigError(f"n_clusters must be >= 1, got {n_clusters}", field="policy.clusters")
    dim = fresh_rows.shape[1] if fresh_rows.ndim == 2 else 0
    means = np.zeros((n_clusters, dim), dtype=np.float64)
    counts = np.zeros(n_clusters, dtype=np.int64)
    if indices.size:
        row_labels = labels[indices]
        np.add.at(means, row_labels, fresh_rows)
        counts = np.bincount(row_labels, minlength=n_clusters)
        nonzero = counts > 0
        means[nonzero] /= counts[nonzero, None]
    return means, counts > 0


def clusca_update(entry, fresh_rows, indices, labels, n_clusters, gamma, temporal) -> np.ndarray:
    """Assemble a full map from fresh rows, cluster means, and the forecast.

    Computed rows enter verbatim. Every other row whose cluster received at
    least one computed row becomes gamma * cluster_mean + (1 - gamma) *
    temporal; rows in clusters with no computed member fall back to the
    temporal forecast alone. The result is returned and written back as the
    entry's working estimate.
    """
    if not 0.0 <= gamma <= 1.0:
        raise ConfigError(f"gamma must lie in [0, 1], got {gamma}", field="policy.gamma")
    temporal = np.asarray(temporal, dtype=np.float64)
    labels = np.asarray(labels)
    if labels.shape[0] != temporal.shape[0]:
        raise ShapeError(
            f"labels cover {labels.shape[0]} tokens but the map has {temporal.shape[0]}"
        )
    indices = np.asarray(indices, dtype=np.intp)
    out = temporal.copy()
    means, present = cluster_mean(fresh_rows, indices, labels, n_clusters)
    has_mean = present[labels]
    if np.any(has_mean):
        out[has_mean] = gamma * means[labels[has_mean]] + (1.0 - gamma) * temporal[has_mean]
    if indices.size:
        out[indices] = fresh_rows
    entry.working = out.copy()
    return out
