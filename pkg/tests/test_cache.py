"""Step planning, the difference cache, forecasting, and the blend update."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from clusca import (
    CacheConfig,
    ConfigError,
    PolicyError,
    ShapeError,
    TaylorCacheEntry,
    cluster_mean,
    clusca_update,
    plan_schedule,
    refresh_full,
    taylor_forecast,
)
from clusca.cache import FULL, PARTIAL

# -- config -----------------------------------------------------------------


def test_cache_config_defaults_validate():
    assert CacheConfig().validate().policy == "clusca"


@pytest.mark.parametrize(
    "kwargs, field",
    [
        ({"policy": "magic"}, "policy.kind"),
        ({"interval": 0}, "policy.interval"),
        ({"clusters": 0}, "policy.clusters"),
        ({"gamma": -0.1}, "policy.gamma"),
        ({"gamma": 1.1}, "policy.gamma"),
        ({"order": -1}, "policy.order"),
        ({"cluster_module": "norm"}, "policy.cluster_module"),
        ({"kmeans_max_iters": 0}, "policy.kmeans_max_iters"),
        ({"kmeans_tol": -1.0}, "policy.kmeans_tol"),
    ],
)
def test_cache_config_rejects_bad_values(kwargs, field):
    with pytest.raises(ConfigError) as err:
        CacheConfig(**kwargs).validate()
    assert err.value.field == field


def test_effective_interval_oracle_ignores_n():
    assert CacheConfig(policy="full", interval=7).effective_interval() == 1
    assert CacheConfig(policy="clusca", interval=7).effective_interval() == 7


# -- step plan ----------------------------------------------------------------


def test_plan_full_positions_are_interval_multiples():
    plan = plan_schedule(50, 5)
    assert plan.full_positions == tuple(range(0, 50, 5))
    assert len(plan.full_positions) == 10


def test_plan_offsets_count_from_last_full():
    plan = plan_schedule(10, 5)
    assert plan.full_positions == (0, 5)
    assert plan.offsets == (0, 1, 2, 3, 4, 0, 1, 2, 3, 4)
    assert plan.tags[0] == FULL and plan.tags[1] == PARTIAL


def test_plan_interval_one_is_all_full():
    plan = plan_schedule(4, 1)
    assert plan.full_positions == (0, 1, 2, 3)


def test_plan_rearrange_moves_latest_full_to_the_end():
    plan = plan_schedule(10, 5, rearrange_last=True)
    assert plan.full_positions == (0, 9)
    assert plan.rearranged is True
    assert plan.offsets == (0, 1, 2, 3, 4, 5, 6, 7, 8, 0)


def test_plan_rearrange_noop_when_final_already_full():
    plan = plan_schedule(11, 5, rearrange_last=True)
    assert plan.full_positions == (0, 5, 10)
    assert plan.rearranged is False


def test_plan_rearrange_noop_with_single_full():
    plan = plan_schedule(5, 5, rearrange_last=True)
    assert plan.full_positions == (0,)
    assert plan.rearranged is False


def test_plan_validation():
    with pytest.raises(ConfigError):
        plan_schedule(0, 5)
    with pytest.raises(ConfigError):
        plan_schedule(5, 0)


@given(st.integers(1, 60), st.integers(1, 10), st.booleans())
def test_plan_invariants(steps, interval, rearrange):
    plan = plan_schedule(steps, interval, rearrange)
    fulls = plan.full_positions
    base = tuple(i for i in range(steps) if i % interval == 0)
    assert plan.tags[0] == FULL
    assert len(fulls) == len(base)  # relocation conserves the count
    if not rearrange:
        assert fulls == base
    elif len(base) > 1 or (steps - 1) % interval == 0:
        assert fulls[-1] == steps - 1
    for pos in range(steps):
        if plan.tags[pos] == FULL:
            assert plan.offsets[pos] == 0
        else:
            prior = max(p for p in fulls if p < pos)
            assert plan.offsets[pos] == pos - prior


# -- difference cache and forecast -------------------------------------------


def test_refresh_builds_first_difference():
    entry = TaylorCacheEntry(order=1)
    refresh_full(entry, [[10.0]], step=0)
    assert entry.deltas == [None]
    refresh_full(entry, [[12.0]], step=5)
    assert entry.deltas[0].tolist() == [[2.0]]
    assert entry.base.tolist() == [[12.0]]
    assert entry.refreshes == 2
    assert entry.last_full_step == 5


def test_refresh_chains_higher_differences():
    entry = TaylorCacheEntry(order=2)
    for value in (10.0, 12.0, 16.0):
        refresh_full(entry, [[value]])
    assert entry.deltas[0].tolist() == [[4.0]]   # 16 - 12
    assert entry.deltas[1].tolist() == [[2.0]]   # 4 - 2
    assert entry.available_order() == 2


def test_available_order_ramps_with_refreshes():
    entry = TaylorCacheEntry(order=2)
    assert entry.available_order() == 0
    refresh_full(entry, [[1.0]])
    assert entry.available_order() == 0
    refresh_full(entry, [[2.0]])
    assert entry.available_order() == 1
    refresh_full(entry, [[3.0]])
    assert entry.available_order() == 2


def test_forecast_hand_values():
    # Base 10 with first difference 2 over a cycle of 4, asked 2 ahead.
    entry = TaylorCacheEntry(order=1)
    entry.base = np.array([[10.0]])
    entry.deltas = [np.array([[2.0]])]
    entry.refreshes = 2
    assert taylor_forecast(entry, 2, 4).tolist() == [[11.0]]

    # Adding a second difference of 4 contributes 4 * u(u+1)/2 = 1.5.
    entry = TaylorCacheEntry(order=2)
    entry.base = np.array([[10.0]])
    entry.deltas = [np.array([[2.0]]), np.array([[4.0]])]
    entry.refreshes = 3
    assert taylor_forecast(entry, 2, 4).tolist() == [[12.5]]


def test_forecast_offset_zero_returns_base():
    entry = TaylorCacheEntry(order=2)
    for value in (1.0, 4.0, 9.0):
        refresh_full(entry, [[value]])
    assert taylor_forecast(entry, 0, 5).tolist() == [[9.0]]


def test_order_zero_always_returns_base():
    entry = TaylorCacheEntry(order=0)
    refresh_full(entry, [[3.0]])
    refresh_full(entry, [[7.0]])
    for offset in (0, 1, 4):
        assert taylor_forecast(entry, offset, 5).tolist() == [[7.0]]


@pytest.mark.parametrize("order, degree", [(1, 0), (1, 1), (2, 0), (2, 1), (2, 2)])
def test_forecast_exact_on_polynomial_trajectories(order, degree):
    # Refresh along f(s) polynomial in the step index, then check forecasts
    # between refreshes against an independent least-squares fit.
    interval = 5
    coeffs = np.array([0.37, -1.2, 0.05][: degree + 1][::-1])  # highest first
    f = lambda s: float(np.polyval(coeffs, s))
    entry = TaylorCacheEntry(order=order)
    refresh_steps = [i * interval for i in range(order + 1)]
    for s in refresh_steps:
        refresh_full(entry, [[f(s)]], step=s)
    fit = np.polyfit(refresh_steps, [f(s) for s in refresh_steps], deg=degree)
    last = refresh_steps[-1]
    for offset in range(1, interval):
        got = taylor_forecast(entry, offset, interval)[0, 0]
        want = float(np.polyval(fit, last + offset))
        assert got == pytest.approx(want, abs=1e-9)
        assert got == pytest.approx(f(last + offset), abs=1e-9)


def test_forecast_requires_a_refresh():
    entry = TaylorCacheEntry(order=1)
    with pytest.raises(PolicyError):
        taylor_forecast(entry, 1, 5)


def test_forecast_rejects_bad_offsets():
    entry = TaylorCacheEntry(order=1)
    refresh_full(entry, [[1.0]])
    with pytest.raises(PolicyError):
        taylor_forecast(entry, -1, 5)
    with pytest.raises(PolicyError):
        taylor_forecast(entry, 1, 0)


def test_refresh_shape_checks():
    entry = TaylorCacheEntry(order=1)
    refresh_full(entry, [[1.0, 2.0]])
    with pytest.raises(ShapeError):
        refresh_full(entry, [[1.0]])
    with pytest.raises(ShapeError):
        refresh_full(TaylorCacheEntry(order=1), [1.0])


def test_working_copy_is_detached_from_base():
    entry = TaylorCacheEntry(order=1)
    refresh_full(entry, [[5.0]])
    entry.working[0, 0] = 99.0
    assert entry.base[0, 0] == 5.0


def test_entry_rejects_negative_order():
    with pytest.raises(ConfigError):
        TaylorCacheEntry(order=-1)


# -- cluster means and the blend update ---------------------------------------


def test_cluster_mean_hand_case():
    labels = np.array([0, 1, 0, 1])
    means, present = cluster_mean([[2.0], [4.0]], [0, 1], labels, 2)
    assert means.tolist() == [[2.0], [4.0]]
    assert present.tolist() == [True, True]


def test_cluster_mean_averages_same_cluster_rows():
    labels = np.array([0, 1, 0, 1])
    means, present = cluster_mean([[2.0], [4.0]], [0, 2], labels, 2)
    assert means.tolist() == [[3.0], [0.0]]
    assert present.tolist() == [True, False]


def test_cluster_mean_empty_indices():
    means, present = cluster_mean(np.zeros((0, 3)), [], np.array([0, 1]), 2)
    assert means.shape == (2, 3)
    assert not present.any()


def test_cluster_mean_validation():
    with pytest.raises(ShapeError):
        cluster_mean([[1.0]], [0, 1], np.array([0, 1]), 2)
    with pytest.raises(ConfigError):
        cluster_mean([[1.0]], [0], np.array([0]), 0)


def test_clusca_update_hand_value():
    # Non-representative tokens move 0.5% of the way to their cluster mean.
    entry = TaylorCacheEntry(order=1)
    temporal = np.ones((4, 1))
    labels = np.array([0, 0, 1, 1])
    fresh = np.array([[2.0], [2.0]])
    out = clusca_update(entry, fresh, [0, 2], labels, 2, 0.005, temporal)
    expected_blend = 0.005 * 2.0 + 0.995 * 1.0
    assert out[0, 0] == 2.0 and out[2, 0] == 2.0
    assert abs(out[1, 0] - expected_blend) <= 1e-15
    assert abs(out[3, 0] - expected_blend) <= 1e-15
    assert np.array_equal(entry.working, out)
    assert entry.working is not out


def test_clusca_update_gamma_zero_is_pure_temporal():
    entry = TaylorCacheEntry(order=1)
    temporal = np.arange(8.0).reshape(4, 2)
    labels = np.array([0, 0, 1, 1])
    fresh = np.array([[100.0, 100.0]])
    out = clusca_update(entry, fresh, [1], labels, 2, 0.0, temporal)
    assert np.array_equal(out[1], fresh[0])
    mask = np.array([True, False, True, True])
    assert np.array_equal(out[mask], temporal[mask])


def test_clusca_update_gamma_one_snaps_to_cluster_mean():
    entry = TaylorCacheEntry(order=1)
    temporal = np.zeros((4, 1))
    labels = np.array([0, 0, 1, 1])
    out = clusca_update(entry, [[6.0], [8.0]], [0, 2], labels, 2, 1.0, temporal)
    assert out.ravel().tolist() == [6.0, 6.0, 8.0, 8.0]


def test_clusca_update_absent_cluster_keeps_temporal():
    entry = TaylorCacheEntry(order=1)
    temporal = np.full((4, 1), 3.0)
    labels = np.array([0, 0, 1, 1])
    out = clusca_update(entry, [[5.0]], [0], labels, 2, 0.5, temporal)
    assert out[0, 0] == 5.0
    assert out[1, 0] == pytest.approx(0.5 * 5.0 + 0.5 * 3.0, abs=1e-15)
    assert out[2, 0] == 3.0 and out[3, 0] == 3.0


def test_clusca_update_validation():
    entry = TaylorCacheEntry(order=1)
    with pytest.raises(ConfigError):
        clusca_update(entry, [[1.0]], [0], np.array([0, 0]), 1, 1.5, np.ones((2, 1)))
    with pytest.raises(ShapeError):
        clusca_update(entry, [[1.0]], [0], np.array([0, 0, 0]), 1, 0.5, np.ones((2, 1)))


@given(
    st.integers(0, 2 ** 31 - 1),
    st.floats(0.0, 1.0),
    st.integers(1, 4),
)
def test_clusca_update_matches_reference_loop(seed, gamma, n_clusters):
    rng = np.random.default_rng(seed)
    tokens, dim = 9, 3
    labels = rng.integers(0, n_clusters, size=tokens)
    temporal = rng.standard_normal((tokens, dim))
    n_idx = int(rng.integers(0, tokens + 1))
    indices = rng.choice(tokens, size=n_idx, replace=False)
    fresh = rng.standard_normal((n_idx, dim))

    out = clusca_update(
        TaylorCacheEntry(order=1), fresh, indices, labels, n_clusters, gamma, temporal
    )

    # Independent per-token reconstruction.
    sums = {}
    counts = {}
    for row, idx in zip(fresh, indices):
        c = int(labels[idx])
        sums[c] = sums.get(c, 0.0) + row
        counts[c] = counts.get(c, 0) + 1
    expect = temporal.copy()
    for tok in range(tokens):
        c = int(labels[tok])
        if c in counts:
            mu = sums[c] / counts[c]
            expect[tok] = gamma * mu + (1.0 - gamma) * temporal[tok]
    for row, idx in zip(fresh, indices):
        expect[idx] = row
    assert np.allclose(out, expect, rtol=0.0, atol=1e-12)
