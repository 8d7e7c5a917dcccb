"""Cluster-driven feature caching on a deterministic toy diffusion transformer.

Diffusion transformers spend most of their sampling time recomputing features
that barely changed since the previous timestep. This package implements the
interval-cache family of shortcuts on a fully seeded toy model so the
policies can be compared against an exact oracle: plain per-interval reuse,
polynomial forecasting of cached features, token-subset recomputation, and
the cluster-driven variant that recomputes one representative token per
cluster and propagates it to clustermates.

Everything is deterministic given a config: weights, noise, cluster seeding,
and representative picks each draw from their own named stream.
"""

from .cache import (
    MODULES,
    POLICIES,
    CacheConfig,
    StepPlan,
    TaylorCacheEntry,
    cluster_mean,
    clusca_update,
    plan_schedule,
    refresh_full,
    taylor_forecast,
)
from .clustering import DistanceStats, KMeansResult, ari, distance_stats, kmeans, select_representatives
from .config import ExperimentConfig, config_from_dict, load_config
from .core import as_feature_map, frobenius, layer_norm, matmul, seeded_gaussian, softmax_rows
from .engine import CacheEngine, Seeds
from .errors import ConfigError, NumericsError, PolicyError, ShapeError
from .flops import count_flops, full_step_flops, speedup
from .metrics import ari_series, pca2d, relative_error, similarity_map
from .model import (
    BlockWeights,
    ComputeRows,
    ModelConfig,
    ToyDiT,
    UseMap,
    block_forward,
    conditioning,
    init_model,
    predict_noise,
    timestep_embedding,
)
from .report import (
    dumps_json,
    format_table,
    report_payload,
    write_compare_csv,
    write_report,
    write_sweep_csv,
)
from .rng import SeededRng
from .sampler import RunReport, TrajectorySpec, sample
from .schedule import NoiseSchedule, ddim_step, forward_diffuse, make_schedule

__version__ = "0.1.0"

__all__ = [
    "MODULES",
    "POLICIES",
    "CacheConfig",
    "CacheEngine",
    "ComputeRows",
    "ConfigError",
    "DistanceStats",
    "ExperimentConfig",
    "KMeansResult",
    "ModelConfig",
    "NoiseSchedule",
    "NumericsError",
    "PolicyError",
    "RunReport",
    "SeededRng",
    "Seeds",
    "ShapeError",
    "StepPlan",
    "TaylorCacheEntry",
    "ToyDiT",
    "TrajectorySpec",
    "UseMap",
    "ari",
    "ari_series",
    "as_feature_map",
    "block_forward",
    "BlockWeights",
    "cluster_mean",
    "clusca_update",
    "conditioning",
    "config_from_dict",
    "count_flops",
    "ddim_step",
    "distance_stats",
    "dumps_json",
    "format_table",
    "forward_diffuse",
    "frobenius",
    "full_step_flops",
    "init_model",
    "kmeans",
    "layer_norm",
    "load_config",
    "make_schedule",
    "matmul",
    "pca2d",
    "plan_schedule",
    "predict_noise",
    "refresh_full",
    "relative_error",
    "report_payload",
    "sample",
    "seeded_gaussian",
    "select_representatives",
    "similarity_map",
    "softmax_rows",
    "speedup",
    "taylor_forecast",
    "timestep_embedding",
    "write_compare_csv",
    "write_report",
    "write_sweep_csv",
]
