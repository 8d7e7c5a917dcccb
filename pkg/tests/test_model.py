"""Toy transformer: determinism, subset consistency, and the cache protocol."""

from __future__ import annotations

import numpy as np
import pytest

from clusca import (
    ComputeRows,
    ConfigError,
    ModelConfig,
    ShapeError,
    UseMap,
    block_forward,
    conditioning,
    init_model,
    predict_noise,
    timestep_embedding,
)
from clusca.model import gelu, mlp_rows, sa_rows
from clusca.rng import SeededRng

CFG = ModelConfig(depth=3, grid=(4, 4), dim=16, heads=2, classes=4, weight_seed=1)


def _features(seed=0, cfg=CFG):
    return SeededRng(seed, "noise").standard_normal(cfg.tokens, cfg.dim)


class _AllFresh:
    """Cache context that always computes everything and echoes it back."""

    def __init__(self, tokens):
        self.tokens = tokens
        self.maps = {}

    def directive(self, layer, module):
        return ComputeRows(np.arange(self.tokens))

    def finish(self, layer, module, indices, fresh):
        self.maps[(layer, module)] = fresh
        return fresh


class _Replay:
    """Cache context that serves stored maps without any computation."""

    def __init__(self, maps):
        self.maps = maps

    def directive(self, layer, module):
        return UseMap(self.maps[(layer, module)])


def test_model_config_validation():
    assert CFG.tokens == 16
    for kwargs in (
        {"depth": 0},
        {"grid": (0, 4)},
        {"grid": (4,)},
        {"dim": 0},
        {"heads": 3},  # does not divide dim=16
        {"classes": 0},
    ):
        with pytest.raises(ConfigError):
            ModelConfig(**{**CFG.__dict__, **kwargs}).validate()


def test_init_model_is_deterministic():
    a = init_model(CFG)
    b = init_model(CFG)
    assert np.array_equal(a.class_emb, b.class_emb)
    for ba, bb in zip(a.blocks, b.blocks):
        assert np.array_equal(ba.wq, bb.wq)
        assert np.array_equal(ba.w_out, bb.w_out)


def test_init_model_seed_changes_weights():
    a = init_model(CFG)
    b = init_model(ModelConfig(**{**CFG.__dict__, "weight_seed": 2}))
    assert not np.array_equal(a.blocks[0].wq, b.blocks[0].wq)


def test_weight_scale_tracks_inverse_sqrt_dim():
    cfg = ModelConfig(depth=4, grid=(4, 4), dim=64, heads=4, weight_seed=1)
    model = init_model(cfg)
    pool = np.concatenate(
        [b.wq.ravel() for b in model.blocks]
        + [b.wk.ravel() for b in model.blocks]
        + [b.wv.ravel() for b in model.blocks]
        + [b.wo.ravel() for b in model.blocks]
    )
    target = 1.0 / np.sqrt(cfg.dim)
    assert abs(pool.std() - target) < 0.2 * target


def test_timestep_embedding_shape_and_range():
    emb = timestep_embedding(17, 16)
    assert emb.shape == (16,)
    assert np.all(np.abs(emb) <= 1.0)
    assert not np.array_equal(emb, timestep_embedding(18, 16))


def test_timestep_embedding_odd_dim_pads_zero():
    emb = timestep_embedding(3, 7)
    assert emb.shape == (7,)
    assert emb[-1] == 0.0


def test_conditioning_rejects_bad_class():
    model = init_model(CFG)
    with pytest.raises(ConfigError):
        conditioning(model, 1, CFG.classes)
    with pytest.raises(ConfigError):
        conditioning(model, 1, -1)


def test_gelu_hand_values():
    assert gelu(np.array([0.0]))[0] == 0.0
    assert gelu(np.array([1.0]))[0] == pytest.approx(0.8411919906082768, abs=1e-12)
    assert gelu(np.array([30.0]))[0] == pytest.approx(30.0, abs=1e-9)
    assert gelu(np.array([-30.0]))[0] == pytest.approx(0.0, abs=1e-9)


def test_sa_rows_subset_matches_full_pass():
    model = init_model(CFG)
    block = model.blocks[0]
    h = _features()
    cond = conditioning(model, 5, 1)
    idx = np.array([3, 7, 11])
    full = sa_rows(block, h, cond, None)
    subset = sa_rows(block, h, cond, idx)
    assert np.max(np.abs(subset - full[idx])) <= 1e-12


def test_mlp_rows_are_row_local():
    model = init_model(CFG)
    block = model.blocks[0]
    rows = _features()
    cond = conditioning(model, 5, 1)
    idx = np.array([0, 4, 9])
    full = mlp_rows(block, rows, cond)
    subset = mlp_rows(block, rows[idx], cond)
    assert np.max(np.abs(subset - full[idx])) <= 1e-12


def test_empty_compute_yields_empty_rows():
    model = init_model(CFG)
    cond = conditioning(model, 2, 0)
    out = sa_rows(model.blocks[0], _features(), cond, np.array([], dtype=np.intp))
    assert out.shape == (0, CFG.dim)
    sa, mlp = block_forward(model.blocks[0], _features(), cond, np.array([], dtype=int))
    assert sa.shape == (0, CFG.dim) and mlp.shape == (0, CFG.dim)


def test_compute_index_validation():
    model = init_model(CFG)
    cond = conditioning(model, 2, 0)
    with pytest.raises(ShapeError):
        sa_rows(model.blocks[0], _features(), cond, [0, 0])
    with pytest.raises(ShapeError):
        sa_rows(model.blocks[0], _features(), cond, [CFG.tokens])
    with pytest.raises(ShapeError):
        sa_rows(model.blocks[0], _features(), cond, [-1])


def test_block_forward_composes_both_increments():
    model = init_model(CFG)
    block = model.blocks[1]
    h = _features(3)
    cond = conditioning(model, 4, 2)
    sa, mlp = block_forward(block, h, cond)
    assert np.array_equal(sa, sa_rows(block, h, cond, None))
    assert np.array_equal(mlp, mlp_rows(block, h + sa, cond))


def test_block_forward_subset_matches_full():
    model = init_model(CFG)
    block = model.blocks[2]
    h = _features(4)
    cond = conditioning(model, 6, 3)
    sa_all, mlp_all = block_forward(block, h, cond)
    idx = np.array([1, 5, 6, 14])
    sa_sub, mlp_sub = block_forward(block, h, cond, idx)
    assert np.max(np.abs(sa_sub - sa_all[idx])) <= 1e-12
    assert np.max(np.abs(mlp_sub - mlp_all[idx])) <= 1e-12


def test_predict_noise_matches_block_composition():
    model = init_model(CFG)
    x = _features(7)
    out = predict_noise(model, x, 3, 1, _AllFresh(CFG.tokens))
    cond = conditioning(model, 3, 1)
    h = x
    for block in model.blocks:
        sa, mlp = block_forward(block, h, cond)
        h = h + sa + mlp
    assert np.array_equal(out, h)


def test_predict_noise_replay_reproduces_full_pass():
    model = init_model(CFG)
    x = _features(8)
    recorder = _AllFresh(CFG.tokens)
    fresh_out = predict_noise(model, x, 2, 0, recorder)
    replay_out = predict_noise(model, x, 2, 0, _Replay(recorder.maps))
    assert np.array_equal(replay_out, fresh_out)


def test_predict_noise_usemap_zeros_is_identity():
    model = init_model(CFG)
    x = _features(9)
    zeros = {None: np.zeros((CFG.tokens, CFG.dim))}

    class _Zeros:
        def directive(self, layer, module):
            return UseMap(zeros[None])

    out = predict_noise(model, x, 1, 0, _Zeros())
    assert np.array_equal(out, x)


def test_predict_noise_shape_checks():
    model = init_model(CFG)
    with pytest.raises(ShapeError):
        predict_noise(model, np.zeros((2, 2)), 1, 0, _AllFresh(CFG.tokens))

    class _WrongShape:
        def directive(self, layer, module):
            return UseMap(np.zeros((2, 2)))

    with pytest.raises(ShapeError):
        predict_noise(model, _features(), 1, 0, _WrongShape())
