"""Experiment configuration: a TOML file with nested sections.

Unknown keys are rejected so typos fail loudly, every range check names the
offending dotted field, and all defaults are embedded here rather than
scattered across the call sites. See the README for a full annotated example.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

from .cache import CacheConfig
from .engine import Seeds
from .errors import ConfigError
from .model import ModelConfig
from .sampler import TrajectorySpec
from .schedule import BACKWARD_FORMS, NoiseSchedule, make_schedule

OUTPUT_ROOT_ENV = "CLUSCA_OUTPUT_ROOT"

POLICY_ALIASES = {
    "full": "full",
    "fora": "fora",
    "toca": "toca-proxy",
    "toca-proxy": "toca-proxy",
    "taylor": "taylorseer",
    "taylorseer": "taylorseer",
    "clusca": "clusca",
}


@dataclass
class ScheduleSpec:
    steps: int = 50
    alpha_start: float = 0.999
    alpha_end: float = 0.95
    shape: str = "linear"
    backward: str = "per-step"

    def build(self) -> NoiseSchedule:
        return make_schedule(self.steps, self.alpha_start, self.alpha_end, self.shape, self.backward)


@dataclass
class ExperimentConfig:
    run_id: str = "run"
    output_dir: str = "runs"
    class_id: int = 0
    divergence_factor: float = 10.0
    model: ModelConfig = field(default_factory=ModelConfig)
    schedule: ScheduleSpec = field(default_factory=ScheduleSpec)
    cache: CacheConfig = field(default_factory=CacheConfig)
    seeds: Seeds = field(default_factory=Seeds)
    trajectory: TrajectorySpec = field(default_factory=TrajectorySpec)

    def validate(self):
        self.model.validate()
        self.cache.validate()
        self.trajectory.validate()
        if self.cache.clusters > self.model.tokens:
            raise ConfigError(
                f"policy.clusters = {self.cache.clusters} exceeds the "
                f"{self.model.tokens} grid tokens",
                field="policy.clusters",
            )
        if not 0 <= self.class_id < self.model.classes:
            raise ConfigError(
                f"class_id {self.class_id} outside [0, {self.model.classes})",
                field="class_id",
            )
        if abs(self.cache.cluster_layer) > self.model.depth or (
            self.cache.cluster_layer >= self.model.depth
        ):
            raise ConfigError(
                f"policy.cluster_layer {self.cache.cluster_layer} outside "
                f"[-{self.model.depth}, {self.model.depth})",
                field="policy.cluster_layer",
            )
        if self.schedule.backward not in BACKWARD_FORMS:
            raise ConfigError(
                f"schedule.backward must be one of {BACKWARD_FORMS}",
                field="schedule.backward",
            )
        if self.divergence_factor <= 1.0:
            raise ConfigError("divergence_factor must exceed 1", field="divergence_factor")
        if not self.run_id or any(c in self.run_id for c in "/\\"):
            raise ConfigError(f"run_id {self.run_id!r} must be a bare name", field="run_id")
        self.schedule.build()  # runs the schedule range checks
        return self

    def output_root(self) -> Path:
        env = os.environ.get(OUTPUT_ROOT_ENV)
        return Path(env) if env else Path(self.output_dir)

    def echo(self) -> dict:
        """Deterministic snapshot embedded in reports."""
        return {
            "run_id": self.run_id,
            "class_id": self.class_id,
            "model": {
                "depth": self.model.depth,
                "grid": list(self.model.grid),
                "dim": self.model.dim,
                "heads": self.model.heads,
                "classes": self.model.classes,
                "weight_seed": self.model.weight_seed,
            },
            "schedule": {
                "steps": self.schedule.steps,
                "alpha_start": self.schedule.alpha_start,
                "alpha_end": self.schedule.alpha_end,
                "shape": self.schedule.shape,
                "backward": self.schedule.backward,
            },
            "policy": {
                "kind": self.cache.policy,
                "interval": self.cache.interval,
                "clusters": self.cache.clusters,
                "gamma": self.cache.gamma,
                "order": self.cache.order,
                "rearrange_last": self.cache.rearrange_last,
                "cluster_layer": self.cache.cluster_layer,
                "cluster_module": self.cache.cluster_module,
            },
            "seeds": {
                "noise": self.seeds.noise,
                "clustering": self.seeds.clustering,
                "selection": self.seeds.selection,
            },
        }


def _take(section: dict, key: str, default, caster, path: str):
    value = section.pop(key, default)
    try:
        return caster(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {path}: {value!r} ({exc})", field=path) from None


def _no_leftovers(section: dict, path: str):
    if section:
        stray = sorted(section)[0]
        raise ConfigError(f"unknown key {path}.{stray}", field=f"{path}.{stray}")


def _grid(value):
    pair = tuple(int(v) for v in value)
    if len(pair) != 2:
        raise ValueError("grid needs exactly two sides")
    return pair


def _bool(value):
    if not isinstance(value, bool):
        raise ValueError("expected true or false")
    return value


def config_from_dict(data: dict) -> ExperimentConfig:
    data = dict(data)
    cfg = ExperimentConfig()
    cfg.run_id = _take(data, "run_id", cfg.run_id, str, "run_id")
    cfg.output_dir = _take(data, "output_dir", cfg.output_dir, str, "output_dir")
    cfg.class_id = _take(data, "class_id", cfg.class_id, int, "class_id")
    cfg.divergence_factor = _take(
        data, "divergence_factor", cfg.divergence_factor, float, "divergence_factor"
    )

    m = dict(data.pop("model", {}))
    cfg.model = ModelConfig(
        depth=_take(m, "depth", 6, int, "model.depth"),
        grid=_take(m, "grid", (16, 16), _grid, "model.grid"),
        dim=_take(m, "dim", 64, int, "model.dim"),
        heads=_take(m, "heads", 4, int, "model.heads"),
        classes=_take(m, "classes", 10, int, "model.classes"),
        weight_seed=_take(m, "weight_seed", 1, int, "model.weight_seed"),
    )
    _no_leftovers(m, "model")

    s = dict(data.pop("schedule", {}))
    cfg.schedule = ScheduleSpec(
        steps=_take(s, "steps", 50, int, "schedule.steps"),
        alpha_start=_take(s, "alpha_start", 0.999, float, "schedule.alpha_start"),
        alpha_end=_take(s, "alpha_end", 0.95, float, "schedule.alpha_end"),
        shape=_take(s, "shape", "linear", str, "schedule.shape"),
        backward=_take(s, "backward", "per-step", str, "schedule.backward"),
    )
    _no_leftovers(s, "schedule")

    p = dict(data.pop("policy", {}))
    kind_raw = _take(p, "kind", "clusca", str, "policy.kind").lower()
    if kind_raw not in POLICY_ALIASES:
        raise ConfigError(
            f"unknown policy.kind {kind_raw!r}, expected one of {sorted(set(POLICY_ALIASES))}",
            field="policy.kind",
        )
    cfg.cache = CacheConfig(
        policy=POLICY_ALIASES[kind_raw],
        interval=_take(p, "interval", 5, int, "policy.interval"),
        clusters=_take(p, "clusters", 16, int, "policy.clusters"),
        gamma=_take(p, "gamma", 0.005, float, "policy.gamma"),
        order=_take(p, "order", 2, int, "policy.order"),
        rearrange_last=_take(p, "rearrange_last", False, _bool, "policy.rearrange_last"),
        cluster_layer=_take(p, "cluster_layer", -1, int, "policy.cluster_layer"),
        cluster_module=_take(p, "cluster_module", "mlp", str, "policy.cluster_module"),
        kmeans_max_iters=_take(p, "kmeans_max_iters", 100, int, "policy.kmeans_max_iters"),
        kmeans_tol=_take(p, "kmeans_tol", 1e-8, float, "policy.kmeans_tol"),
        force_empty_compute=_take(
            p, "force_empty_compute", False, _bool, "policy.force_empty_compute"
        ),
    )
    _no_leftovers(p, "policy")

    sd = dict(data.pop("seeds", {}))
    cfg.seeds = Seeds(
        noise=_take(sd, "noise", 7, int, "seeds.noise"),
        clustering=_take(sd, "clustering", 11, int, "seeds.clustering"),
        selection=_take(sd, "selection", 13, int, "seeds.selection"),
    )
    _no_leftovers(sd, "seeds")

    tr = dict(data.pop("trajectory", {}))
    cfg.trajectory = TrajectorySpec(
        latent_stride=_take(tr, "latent_stride", 0, int, "trajectory.latent_stride"),
        feature_stride=_take(tr, "feature_stride", 0, int, "trajectory.feature_stride"),
        pca_tokens=_take(tr, "pca_tokens", 8, int, "trajectory.pca_tokens"),
    )
    _no_leftovers(tr, "trajectory")

    _no_leftovers(data, "config")
    return cfg.validate()


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}", field="config")
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config parse error in {path}: {exc}", field="config") from None
    return config_from_dict(data)
