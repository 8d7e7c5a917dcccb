"""A deterministic toy diffusion transformer.

Tokens are cells of an H x W grid carrying D-dimensional features. Each block
applies pre-norm self-attention and a 4x MLP, both as residual increments,
with class and timestep conditioning folded in as an additive shift on the
normalized activations. Weights are seeded Gaussians scaled by 1/sqrt(D);
norm gains start at one and biases at zero.

The two residual branches ("sa" and "mlp") are the cacheable units: a block's
output is input + sa_increment + mlp_increment, and partial computation
restricts attention queries and MLP rows to a chosen token subset while keys
and values still come from every token of the input estimate. Row i of a
partial result therefore equals row i of the unrestricted forward pass on the
same input estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cache import MODULES
from .core import as_feature_map, layer_norm, seeded_gaussian
from .errors import ConfigError, ShapeError
from .rng import STREAM_WEIGHTS, SeededRng


@dataclass(frozen=True)
class ModelConfig:
    depth: int = 6
    grid: tuple = (16, 16)
    dim: int = 64
    heads: int = 4
    classes: int = 10
    weight_seed: int = 1

    @property
    def tokens(self) -> int:
        return int(self.grid[0]) * int(self.grid[1])

    def validate(self):
        if self.depth < 1:
            raise ConfigError(f"depth must be >= 1, got {self.depth}", field="model.depth")
        if len(self.grid) != 2 or self.grid[0] < 1 or self.grid[1] < 1:
            raise ConfigError(f"grid must be two positive sides, got {self.grid}", field="model.grid")
        if self.dim < 1:
            raise ConfigError(f"dim must be >= 1, got {self.dim}", field="model.dim")
        if self.heads < 1 or self.dim % self.heads != 0:
            raise ConfigError(
                f"heads must divide dim, got heads={self.heads}, dim={self.dim}",
                field="model.heads",
            )
        if self.classes < 1:
            raise ConfigError(f"classes must be >= 1, got {self.classes}", field="model.classes")
        return self


@dataclass
class BlockWeights:
    heads: int
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    w_in: np.ndarray
    w_out: np.ndarray
    ln1_gain: np.ndarray
    ln1_bias: np.ndarray
    ln2_gain: np.ndarray
    ln2_bias: np.ndarray
    mod_sa: np.ndarray
    mod_mlp: np.ndarray


@dataclass
class ToyDiT:
    config: ModelConfig
    blocks: list = field(repr=False)
    class_emb: np.ndarray = field(repr=False)


def init_model(config: ModelConfig) -> ToyDiT:
    """Draw all weights from the dedicated weight stream in a fixed order."""
    config.validate()
    rng = SeededRng(config.weight_seed, STREAM_WEIGHTS)
    d = config.dim
    scale = 1.0 / math.sqrt(d)
    blocks = []
    for _ in range(config.depth):
        blocks.append(
            BlockWeights(
                heads=config.heads,
                wq=seeded_gaussian(rng, d, d) * scale,
                wk=seeded_gaussian(rng, d, d) * scale,
                wv=seeded_gaussian(rng, d, d) * scale,
                wo=seeded_gaussian(rng, d, d) * scale,
                w_in=seeded_gaussian(rng, d, 4 * d) * scale,
                w_out=seeded_gaussian(rng, 4 * d, d) * scale,
                ln1_gain=np.ones(d),
                ln1_bias=np.zeros(d),
                ln2_gain=np.ones(d),
                ln2_bias=np.zeros(d),
                mod_sa=seeded_gaussian(rng, 1, d)[0] * scale,
                mod_mlp=seeded_gaussian(rng, 1, d)[0] * scale,
            )
        )
    class_emb = seeded_gaussian(rng, config.classes, d) * scale
    return ToyDiT(config=config, blocks=blocks, class_emb=class_emb)


def timestep_embedding(t: int, dim: int) -> np.ndarray:
    """Fixed sinusoidal embedding of an integer timestep."""
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half) / max(half, 1))
    args = float(t) * freqs
    emb = np.concatenate([np.sin(args), np.cos(args)])
    if emb.size < dim:
        emb = np.concatenate([emb, np.zeros(dim - emb.size)])
    return emb


def conditioning(model: ToyDiT, t: int, class_id: int) -> np.ndarray:
    if not 0 <= class_id < model.config.classes:
        raise ConfigError(
            f"class_id {class_id} outside [0, {model.config.classes})", field="class_id"
        )
    return model.class_emb[class_id] + timestep_embedding(t, model.config.dim)


def gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + np.tanh(math.sqrt(2.0 / math.pi) * (x + 0.044715 * x**3)))


def _normalize_compute(compute, tokens: int) -> np.ndarray:
    if compute is None:
        return np.arange(tokens, dtype=np.intp)
    idx = np.asarray(compute, dtype=np.intp).ravel()
    if idx.size and (idx.min() < 0 or idx.max() >= tokens):
        raise ShapeError(f"compute indices outside [0, {tokens})")
    if idx.size != np.unique(idx).size:
        raise ShapeError("compute indices must be unique")
    return idx


def sa_rows(block: BlockWeights, features: np.ndarray, cond: np.ndarray, compute) -> np.ndarray:
    """Self-attention increment for the requested rows.

    Queries are restricted to ``compute``; keys and values are formed from
    every token of the input estimate.
    """
    tokens, dim = features.shape
    idx = _normalize_compute(compute, tokens)
    if idx.size == 0:
        return np.zeros((0, dim))
    h = layer_norm(features, block.ln1_gain, block.ln1_bias) + block.mod_sa * cond
    q = h[idx] @ block.wq
    k = h @ block.wk
    v = h @ block.wv
    dh = dim // block.heads
    q = q.reshape(idx.size, block.heads, dh).transpose(1, 0, 2)
    k = k.reshape(tokens, block.heads, dh).transpose(1, 0, 2)
    v = v.reshape(tokens, block.heads, dh).transpose(1, 0, 2)
    scores = q @ k.transpose(0, 2, 1) / math.sqrt(dh)
    scores -= scores.max(axis=2, keepdims=True)
    weights = np.exp(scores)
    weights /= weights.sum(axis=2, keepdims=True)
    ctx = weights @ v
    ctx = ctx.transpose(1, 0, 2).reshape(idx.size, dim)
    return ctx @ block.wo


def mlp_rows(block: BlockWeights, rows: np.ndarray, cond: np.ndarray) -> np.ndarray:
    """MLP increment for the given row matrix (already subset)."""
    if rows.shape[0] == 0:
        return np.zeros((0, rows.shape[1]))
    h = layer_norm(rows, block.ln2_gain, block.ln2_bias) + block.mod_mlp * cond
    return gelu(h @ block.w_in) @ block.w_out


def block_forward(block: BlockWeights, features, cond, compute=None):
    """Both residual increments of one block for the tokens in ``compute``.

    Returns (sa_out, mlp_out) restricted to the compute rows. The MLP sees
    the input rows plus their fresh attention increment, matching the
    unrestricted pass row for row. ``compute=None`` means all tokens.
    """
    features = as_feature_map(features)
    idx = _normalize_compute(compute, features.shape[0])
    sa = sa_rows(block, features, cond, idx)
    mlp_in = features[idx] + sa
    mlp = mlp_rows(block, mlp_in, cond)
    return sa, mlp


@dataclass(frozen=True)
class ComputeRows:
    """Directive: compute these token rows fresh, then hand them back."""

    indices: np.ndarray


@dataclass(frozen=True)
class UseMap:
    """Directive: skip computation and use this full-map estimate."""

    features: np.ndarray


def predict_noise(model: ToyDiT, x, t: int, class_id: int, ctx) -> np.ndarray:
    """Noise estimate for latent x at timestep t under a cache context.

    For every (layer, module) in order, ``ctx.directive(layer, module)``
    yields either ComputeRows (the model computes those rows fresh and passes
    them to ``ctx.finish``, which assembles and returns the full-map
    estimate) or UseMap (a cache-derived estimate used as-is). Residuals are
    applied per token; the returned map is the stacked blocks' output.
    """
    x = as_feature_map(x)
    cfg = model.config
    if x.shape != (cfg.tokens, cfg.dim):
        raise ShapeError(f"latent shape {x.shape} does not match ({cfg.tokens}, {cfg.dim})")
    cond = conditioning(model, t, class_id)
    h = x
    for layer, block in enumerate(model.blocks):
        for module in MODULES:
            directive = ctx.directive(layer, module)
            if isinstance(directive, UseMap):
                estimate = directive.features
            else:
                idx = _normalize_compute(directive.indices, cfg.tokens)
                if module == "sa":
                    fresh = sa_rows(block, h, cond, idx)
                else:
                    fresh = mlp_rows(block, h[idx], cond)
                estimate = ctx.finish(layer, module, idx, fresh)
            if estimate.shape != h.shape:
                raise ShapeError(
                    f"estimate for layer {layer} {module} has shape {estimate.shape}, "
                    f"expected {h.shape}"
                )
            h = h + estimate
    return h
