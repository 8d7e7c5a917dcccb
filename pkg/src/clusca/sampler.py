"""The denoising loop and its run record.

``sample`` walks timesteps from T down to 1, asking the cache engine for a
step plan tag before each noise prediction and folding the result through the
deterministic backward step. Everything observable about a run lands in a
RunReport: analytic FLOPs by category, wall time by category, clustering
diagnostics, long-format per-step trace rows, optional latent and feature
snapshots, and a 2-D projection of recorded feature trajectories.

Runs with equal configs and seeds are bit-identical; wall times are the one
exception and are kept apart from the deterministic payload.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass, field

import numpy as np

from .cache import FULL, CacheConfig, plan_schedule
from .core import frobenius, seeded_gaussian
from .engine import CacheEngine, Seeds
from .errors import ConfigError, NumericsError
from .flops import count_flops, full_step_flops
from .metrics import pca2d
from .model import ToyDiT, predict_noise
from .rng import STREAM_NOISE, SeededRng
from .schedule import NoiseSchedule, ddim_step


@dataclass(frozen=True)
class TrajectorySpec:
    """What to record along the run.

    latent_stride / feature_stride of 0 disable the respective snapshots.
    Feature snapshots record the designated cluster layer's module estimate;
    pca_tokens caps how many tokens enter the exported 2-D trajectories.
    """

    latent_stride: int = 0
    feature_stride: int = 0
    pca_tokens: int = 8

    def validate(self):
        if self.latent_stride < 0 or self.feature_stride < 0:
            raise ConfigError("trajectory strides must be >= 0", field="trajectory")
        if self.pca_tokens < 1:
            raise ConfigError("pca_tokens must be >= 1", field="trajectory.pca_tokens")
        return self


@dataclass
class RunReport:
    run_id: str
    policy: str
    steps: int
    plan_full_positions: tuple
    config: dict
    final_latent: np.ndarray = field(repr=False)
    flops: dict = field(default_factory=dict)
    flops_planned: dict = field(default_factory=dict)
    full_model_flops: int = 0
    speedup: float = 1.0
    speedup_planned: float = 1.0
    timing: dict = field(default_factory=dict)
    ari_rows: list = field(default_factory=list)
    distance_rows: list = field(default_factory=list)
    kmeans_rows: list = field(default_factory=list)
    trace_rows: list = field(default_factory=list)
    pca_rows: list = field(default_factory=list)
    latent_snapshots: list = field(default_factory=list, repr=False)
    feature_snapshots: list = field(default_factory=list, repr=False)
    error_vs_oracle: float | None = None

    def latent_digest(self) -> str:
        buf = np.ascontiguousarray(self.final_latent, dtype=">f8").tobytes()
        shape = ",".join(str(s) for s in self.final_latent.shape).encode()
        return hashlib.sha256(shape + b"|" + buf).hexdigest()


def sample(
    model: ToyDiT,
    schedule: NoiseSchedule,
    cache_cfg: CacheConfig,
    seeds: Seeds,
    *,
    class_id: int = 0,
    trajectory: TrajectorySpec | None = None,
    run_id: str = "run",
    divergence_factor: float = 10.0,
    config_echo: dict | None = None,
) -> RunReport:
    """Run the full denoising loop under one caching policy."""
    cache_cfg.validate()
    trajectory = (trajectory or TrajectorySpec()).validate()
    cfg = model.config
    steps = schedule.steps
    plan = plan_schedule(steps, cache_cfg.effective_interval(), cache_cfg.rearrange_last)
    engine = CacheEngine(cache_cfg, plan, cfg, seeds)
    noise_rng = SeededRng(seeds.noise, STREAM_NOISE)
    x = seeded_gaussian(noise_rng, cfg.tokens, cfg.dim)

    report = RunReport(
        run_id=run_id,
        policy=cache_cfg.policy,
        steps=steps,
        plan_full_positions=plan.full_positions,
        config=dict(config_echo or {}),
        final_latent=x,
    )
    model_seconds = 0.0
    prev_norm = frobenius(x)

    for position in range(steps):
        t = steps - position
        engine.begin_step(position)
        before = dict(engine.timers)
        t0 = time.perf_counter()
        eps = predict_noise(model, x, t, class_id, engine)
        step_seconds = time.perf_counter() - t0
        engine.end_step(position)
        overhead = (engine.timers["clustering"] - before["clustering"]) + (
            engine.timers["propagation"] - before["propagation"]
        )
        model_seconds += max(step_seconds - overhead, 0.0)

        x = ddim_step(schedule, x, eps, t)
        if not np.all(np.isfinite(x)):
            raise NumericsError(f"non-finite latent after step {position} (t={t})", step=position)
        norm = frobenius(x)
        if norm > divergence_factor * max(prev_norm, 1e-6):
            raise NumericsError(
                f"latent norm grew {norm / max(prev_norm, 1e-6):.1f}x at step {position} (t={t})",
                step=position,
            )
        prev_norm = norm

        rows = [
            ("plan_full", 1.0 if plan.tags[position] == FULL else 0.0),
            ("cycle_offset", float(plan.offsets[position])),
            ("compute_tokens", float(engine.last_compute_size)),
            ("eps_norm", frobenius(eps)),
            ("latent_norm", norm),
        ]
        if plan.tags[position] == FULL and cache_cfg.policy == "clusca":
            rows.append(("kmeans_iterations", float(engine.last_kmeans_iterations)))
        for metric, value in rows:
            report.trace_rows.append({"step": position, "metric": metric, "value": value})

        if trajectory.latent_stride and position % trajectory.latent_stride == 0:
            report.latent_snapshots.append((position, x.copy()))
        if trajectory.feature_stride and position % trajectory.feature_stride == 0:
            entry = engine.entries[engine.designated]
            if entry.working is not None:
                report.feature_snapshots.append((position, entry.working.copy()))

    report.final_latent = x
    report.flops = engine.ledger.as_dict()
    report.flops_planned = _planned(cfg, plan, cache_cfg)
    report.full_model_flops = _full_baseline(cfg, steps)
    report.speedup = _safe_ratio(report.full_model_flops, report.flops["model"])
    report.speedup_planned = _safe_ratio(report.full_model_flops, report.flops_planned["model"])
    report.timing = {
        "model_s": model_seconds,
        "clustering_s": engine.timers["clustering"],
        "propagation_s": engine.timers["propagation"],
    }
    report.ari_rows = engine.ari_rows()
    report.distance_rows = list(engine.distance_rows)
    report.kmeans_rows = list(engine.kmeans_rows)
    report.pca_rows = _project_trajectories(report.feature_snapshots, trajectory.pca_tokens)
    return report


def _planned(model_cfg, plan, cache_cfg) -> dict:
    return count_flops(model_cfg.tokens, model_cfg.dim, model_cfg.depth, plan, cache_cfg)


def _full_baseline(model_cfg, steps: int) -> int:
    return steps * full_step_flops(model_cfg.tokens, model_cfg.dim, model_cfg.depth)


def _safe_ratio(num: int, den: int) -> float:
    return float("inf") if den <= 0 else num / den


def _project_trajectories(feature_snapshots, pca_tokens: int) -> list:
    """2-D coordinates of token feature trajectories, one shared basis."""
    if len(feature_snapshots) < 2:
        return []
    n_tokens = min(pca_tokens, feature_snapshots[0][1].shape[0])
    stacked = np.concatenate([snap[:n_tokens] for _, snap in feature_snapshots], axis=0)
    if stacked.shape[0] < 2:
        return []
    coords, _, _ = pca2d(stacked)
    rows = []
    for s_idx, (position, _) in enumerate(feature_snapshots):
        for tok in range(n_tokens):
            xy = coords[s_idx * n_tokens + tok]
            rows.append(
                {"step": position, "token": tok, "x": float(xy[0]), "y": float(xy[1])}
            )
    return rows
