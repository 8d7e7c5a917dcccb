"""Policy orchestration: turns a step plan into per-module directives.

The engine is the cache context handed to ``predict_noise``. It owns every
(layer, module) cache entry, the cluster state for the spatial policy, the
dedicated RNG streams for cluster seeding and token selection, and the
analytic cost ledger. One engine drives exactly one run.

Per-step behavior by policy:

    full        every step computes all tokens (the oracle run)
    fora        partial steps reuse the last full refresh unchanged
    taylorseer  partial steps evaluate the order-O forecast
    toca-proxy  partial steps compute a seeded random subset of K tokens and
                overwrite those rows of the working cache; other rows carry
                the working cache forward
    clusca      full steps additionally cluster the designated layer output;
                partial steps compute one random representative per cluster
                and blend everyone else between the cluster mean (weight
                gamma) and the order-O forecast (weight 1 - gamma)
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .cache import (
    FULL,
    MODULES,
    CacheConfig,
    StepPlan,
    TaylorCacheEntry,
    clusca_update,
    refresh_full,
    taylor_forecast,
)
from .clustering import ari, distance_stats, kmeans, select_representatives
from .errors import PolicyError
from .flops import CostLedger, kmeans_iter_flops, module_flops, propagation_flops
from .model import ComputeRows, ModelConfig, UseMap
from .rng import STREAM_CLUSTERING, STREAM_SELECTION, SeededRng


@dataclass(frozen=True)
class Seeds:
    noise: int = 7
    clustering: int = 11
    selection: int = 13


class CacheEngine:
    def __init__(self, cfg: CacheConfig, plan: StepPlan, model_cfg: ModelConfig, seeds: Seeds):
        cfg.validate()
        self.cfg = cfg
        self.plan = plan
        self.tokens = model_cfg.tokens
        self.dim = model_cfg.dim
        self.depth = model_cfg.depth
        order = cfg.order if cfg.policy in ("taylorseer", "clusca") else 0
        self.entries = {
            (layer, module): TaylorCacheEntry(order)
            for layer in range(self.depth)
            for module in MODULES
        }
        self.cluster_rng = SeededRng(seeds.clustering, STREAM_CLUSTERING)
        self.select_rng = SeededRng(seeds.selection, STREAM_SELECTION)
        self.designated = (cfg.cluster_layer % self.depth, cfg.cluster_module)
        self.assignment = None
        self.centroids = None
        self.ledger = CostLedger()
        self.timers = {"clustering": 0.0, "propagation": 0.0}
        self.kmeans_rows = []
        self.distance_rows = []
        self._assignment_log = []   # (step, labels) at each clustering
        self._step = None
        self._tag = None
        self._offset = 0
        self._compute = None
        self._cluster_input = None
        self.last_compute_size = 0
        self.last_kmeans_iterations = 0

    # -- step lifecycle -------------------------------------------------

    def begin_step(self, position: int):
        self._step = position
        self._tag = self.plan.tags[position]
        self._offset = self.plan.offsets[position]
        self.last_kmeans_iterations = 0
        if self._tag == FULL:
            self._compute = np.arange(self.tokens, dtype=np.intp)
        elif self.cfg.policy in ("fora", "taylorseer"):
            self._compute = np.empty(0, dtype=np.intp)
        elif self.cfg.policy == "toca-proxy":
            size = min(self.cfg.clusters, self.tokens)
            self._compute = self.select_rng.choice_no_replace(self.tokens, size)
        elif self.cfg.policy == "clusca":
            if self.cfg.force_empty_compute:
                self._compute = np.empty(0, dtype=np.intp)
            else:
                if self.assignment is None:
                    raise PolicyError(f"partial step {position} before any clustering")
                self._compute = select_representatives(
                    self.assignment, self.cfg.clusters, self.select_rng
                )
        else:
            raise PolicyError(f"policy {self.cfg.policy!r} cannot take partial steps")
        self.last_compute_size = int(self._compute.size)

    def end_step(self, position: int):
        if self._tag == FULL and self.cfg.policy == "clusca":
            self._cluster_full_step(position)
        self._cluster_input = None

    # -- cache context protocol (used by predict_noise) ------------------

    def directive(self, layer: int, module: str):
        if self._tag == FULL:
            return ComputeRows(np.arange(self.tokens, dtype=np.intp))
        if self.cfg.policy in ("fora", "taylorseer"):
            entry = self._entry(layer, module)
            t0 = time.perf_counter()
            forecast = taylor_forecast(entry, self._offset, self.plan.interval)
            self.timers["propagation"] += time.perf_counter() - t0
            return UseMap(forecast)
        return ComputeRows(self._compute)

    def finish(self, layer: int, module: str, indices: np.ndarray, fresh: np.ndarray) -> np.ndarray:
        entry = self._entry(layer, module)
        computed = int(indices.size)
        self.ledger.model += module_flops(module, self.tokens, self.dim, computed)
        if self._tag == FULL:
            refresh_full(entry, fresh, step=self._step)
            if self.cfg.policy == "clusca" and (layer, module) == self.designated:
                self._cluster_input = fresh.copy()
            return fresh
        if self.cfg.policy == "toca-proxy":
            if entry.working is None:
                raise PolicyError(f"partial step {self._step} before any full refresh")
            if computed:
                entry.working[indices] = fresh
            return entry.working.copy()
        if self.cfg.policy == "clusca":
            t0 = time.perf_counter()
            temporal = taylor_forecast(entry, self._offset, self.plan.interval)
            labels = self.assignment
            if labels is None:
                raise PolicyError(f"partial step {self._step} before any clustering")
            estimate = clusca_update(
                entry, fresh, indices, labels, self.cfg.clusters, self.cfg.gamma, temporal
            )
            self.timers["propagation"] += time.perf_counter() - t0
            if computed:
                self.ledger.propagation += propagation_flops(self.tokens, self.dim, computed)
            return estimate
        raise PolicyError(f"policy {self.cfg.policy!r} received fresh rows on a partial step")

    # -- internals --------------------------------------------------------

    def _entry(self, layer: int, module: str) -> TaylorCacheEntry:
        try:
            return self.entries[(layer, module)]
        except KeyError:
            raise PolicyError(f"no cache entry for layer {layer} module {module!r}") from None

    def _cluster_full_step(self, position: int):
        feats = self._cluster_input
        if feats is None:
            raise PolicyError(
                f"designated module {self.designated} produced no output at step {position}"
            )
        t0 = time.perf_counter()
        warm = self.centroids is not None
        result = kmeans(
            feats,
            self.cfg.clusters,
            rng=None if warm else self.cluster_rng,
            warm_start=self.centroids if warm else None,
            max_iters=self.cfg.kmeans_max_iters,
            tol=self.cfg.kmeans_tol,
        )
        stats = distance_stats(feats, result.labels) if feats.shape[0] >= 2 else None
        self.timers["clustering"] += time.perf_counter() - t0
        self.ledger.clustering += result.iterations * kmeans_iter_flops(
            self.tokens, self.cfg.clusters, self.dim
        )
        self.kmeans_rows.append(
            {"step": position, "iterations": result.iterations, "warm": warm,
             "inertia": result.inertia}
        )
        if stats is not None:
            self.distance_rows.append(
                {"step": position, "intra_mean": stats.intra_mean,
                 "global_mean": stats.global_mean, "ratio": stats.ratio}
            )
        self._assignment_log.append((position, result.labels.copy()))
        self.assignment = result.labels
        self.centroids = result.centroids
        self.last_kmeans_iterations = result.iterations

    def ari_rows(self):
        """Consecutive-refresh ARI pairs (step delta = the plan interval)."""
        log = self._assignment_log
        return [
            {"step_a": sa, "step_b": sb, "delta": sb - sa, "ari": ari(la, lb)}
            for (sa, la), (sb, lb) in zip(log, log[1:])
        ]

    def assignment_log(self):
        return list(self._assignment_log)
