"""Closed-form FLOP accounting.

All counts are analytic unit counts (matrix-multiply entries, not hardware
ops) split into three categories: model (attention and MLP work), clustering
(K-Means iterations), and propagation (the cluster-mean blend). Forecast evaluation
and plain cache reuse are charged zero, so an interval-N reuse policy shows
exactly the interval's model-FLOPs speedup.

With c computed tokens out of T at width D:
    attention: T*D^2 (keys/values) + c*D^2 (queries) + 2*c*T*D (scores and
               mixing) + c*D^2 (output projection)
    mlp:       8*c*D^2
    kmeans:    T*K*D per Lloyd iteration
    blend:     (3*(T - c) + c)*D per module application
A module that computes nothing costs nothing.
"""

from __future__ import annotations

from dataclasses import dataclass

from .cache import MODULES, PARTIAL, CacheConfig, StepPlan
from .errors import ConfigError


def attention_flops(tokens: int, dim: int, computed: int) -> int:
    if computed <= 0:
        return 0
    return tokens * dim * dim + computed * dim * dim + 2 * computed * tokens * dim + computed * dim * dim


def mlp_flops(dim: int, computed: int) -> int:
    if computed <= 0:
        return 0
    return 8 * computed * dim * dim


def module_flops(module: str, tokens: int, dim: int, computed: int) -> int:
    if module == "sa":
        return attention_flops(tokens, dim, computed)
    if module == "mlp":
        return mlp_flops(dim, computed)
    raise ConfigError(f"unknown module {module!r}, expected one of {MODULES}")


def kmeans_iter_flops(tokens: int, clusters: int, dim: int) -> int:
    return tokens * clusters * dim


def propagation_flops(tokens: int, dim: int, computed: int) -> int:
    """Blend cost for one module: 3 ops per blended element plus the
    cluster-mean accumulation over the computed rows."""
    blended = max(tokens - computed, 0)
    return (3 * blended + computed) * dim


@dataclass
class CostLedger:
    """Running analytic totals for one run."""

    model: int = 0
    clustering: int = 0
    propagation: int = 0

    @property
    def total(self) -> int:
        return self.model + self.clustering + self.propagation

    def as_dict(self) -> dict:
        return {
            "model": self.model,
            "clustering": self.clustering,
            "propagation": self.propagation,
            "total": self.total,
        }


def full_step_flops(tokens: int, dim: int, depth: int) -> int:
    return depth * (attention_flops(tokens, dim, tokens) + mlp_flops(dim, tokens))


def partial_compute_size(cfg: CacheConfig, tokens: int) -> int:
    """Planned fresh-token count per partial step under each policy."""
    if cfg.policy in ("fora", "taylorseer"):
        return 0
    if cfg.policy == "full":
        return tokens
    if cfg.force_empty_compute:
        return 0
    return min(cfg.clusters, tokens)


def count_flops(tokens: int, dim: int, depth: int, plan: StepPlan, cfg: CacheConfig) -> dict:
    """Planned model and propagation FLOPs for a whole run.

    Assumes every partial step computes the planned token count (for the
    cluster policy: one representative per cluster, all clusters occupied).
    Clustering work is iteration-count dependent and is accounted at run time
    instead.
    """
    c_partial = partial_compute_size(cfg, tokens)
    model = 0
    propagation = 0
    for tag in plan.tags:
        c = tokens if tag != PARTIAL else c_partial
        model += depth * (attention_flops(tokens, dim, c) + mlp_flops(dim, c))
        if tag == PARTIAL and cfg.policy == "clusca" and c > 0:
            propagation += depth * len(MODULES) * propagation_flops(tokens, dim, c)
    return {"model": model, "propagation": propagation}


def speedup(full_model_flops: int, policy_model_flops: int) -> float:
    """Model-FLOPs ratio of the always-compute baseline to a policy."""
    if policy_model_flops <= 0:
        return float("inf")
    return full_model_flops / policy_model_flops
