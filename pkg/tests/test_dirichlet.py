import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from hime import oracle
from hime.core import SigmaSchedule
from hime.dirichlet import (
    DirichletFamily,
    aggregate_pairs,
    dirichlet_escort,
    dirichlet_expected_loss,
    dirichlet_flow,
    dirichlet_hierarchical_sample,
    dirichlet_log_density,
    dirichlet_sample,
    dirichlet_solve_lambda,
)
from hime.errors import ContractError, FlowBreakdownError, InfeasibleConstraintError

from _frozen import ORACLE
from _instances import seeds


def fam(*b):
    return DirichletFamily(np.array(b, dtype=float))


def final_level_tv(alpha, lam, s, resolution=2000):
    flow = dirichlet_flow(alpha, lam, s, 2)
    grid = oracle.pair_pushforward_escort_grid(
        lambda x: dirichlet_log_density(flow.families[0], x), float(s.ratios[0]), resolution=resolution
    )
    top = flow.families[1]
    ref = oracle.simplex_grid_quadrature(
        lambda x: dirichlet_log_density(top, np.stack([x, 1.0 - x], axis=-1)), resolution
    )
    return oracle.grid_tv(grid, ref)


# --------------------------------------------------------------------------
# family operations
# --------------------------------------------------------------------------


def test_aggregate_examples():
    assert np.array_equal(aggregate_pairs(fam(1, 1, 1, 1)).beta, [2.0, 2.0])
    assert np.array_equal(aggregate_pairs(fam(3, 5, 7, 9)).beta, [8.0, 16.0])
    assert np.array_equal(aggregate_pairs(fam(0.5, 2.0)).beta, [2.5])
    with pytest.raises(ContractError):
        aggregate_pairs(fam(1, 2, 3))


@given(st.lists(st.floats(0.01, 100.0), min_size=1, max_size=16))
def test_aggregate_preserves_total(half):
    b = np.repeat(np.asarray(half), 2) * np.linspace(0.5, 1.5, 2 * len(half))
    f = DirichletFamily(b)
    assert aggregate_pairs(f).beta.sum() == pytest.approx(b.sum(), rel=1e-15)


def test_escort_examples():
    f = fam(0.3, 2.0, 7.5)
    assert np.array_equal(dirichlet_escort(f, 1.0).beta, f.beta)
    assert np.allclose(dirichlet_escort(fam(2, 2), 0.5).beta, [1.5, 1.5], atol=1e-15)
    for t in (0.1, 0.5, 3.0):
        assert np.array_equal(dirichlet_escort(fam(1, 1), t).beta, [1.0, 1.0])


def test_escort_matches_renormalized_power_on_grid():
    t = 0.5
    powered = oracle.simplex_grid_quadrature(
        lambda x: t * dirichlet_log_density(fam(2, 2), np.stack([x, 1 - x], axis=-1)), 2000
    )
    image = oracle.simplex_grid_quadrature(
        lambda x: dirichlet_log_density(dirichlet_escort(fam(2, 2), t), np.stack([x, 1 - x], axis=-1)), 2000
    )
    assert oracle.grid_tv(powered, image) <= 1e-12


@given(st.lists(st.floats(0.05, 50.0), min_size=2, max_size=8), st.floats(0.05, 1.0), st.floats(0.05, 1.0))
def test_escort_composition(beta, a, b):
    f = DirichletFamily(np.asarray(beta))
    twice = dirichlet_escort(dirichlet_escort(f, a), b)
    once = dirichlet_escort(f, a * b)
    assert np.allclose(twice.beta, once.beta, rtol=1e-13, atol=1e-13)


def test_escort_breakdown_names_component():
    with pytest.raises(FlowBreakdownError) as info:
        dirichlet_escort(fam(2.0, 0.1, 3.0), 2.0)
    assert info.value.component == 1
    with pytest.raises(ContractError):
        dirichlet_escort(fam(2.0, 2.0), 0.0)
    with pytest.raises(FlowBreakdownError):
        fam(1.0, 0.0)


# --------------------------------------------------------------------------
# flow
# --------------------------------------------------------------------------


def test_flow_worked_example():
    flow = dirichlet_flow([1, 2, 3, 4], 2.0, SigmaSchedule((1.0, 1.0)), 2)
    assert np.array_equal(flow.families[0].beta, [3.0, 5.0, 7.0, 9.0])
    assert np.allclose(flow.families[1].beta, [4.5, 8.5], atol=1e-15)
    assert final_level_tv([1, 2, 3, 4], 2.0, SigmaSchedule((1.0, 1.0))) <= 1e-3


def test_flow_from_zero_alpha_moves_off_uniform():
    # aggregation of uniform pairs gives beta 2, the escort then gives t + 1
    s = SigmaSchedule((1.0, 1.0))
    flow = dirichlet_flow([0, 0, 0, 0], 1.0, s, 2)
    assert np.array_equal(flow.families[0].beta, np.ones(4))
    assert np.allclose(flow.families[1].beta, [1.5, 1.5], atol=1e-15)
    assert final_level_tv([0, 0, 0, 0], 1.0, s) <= 1e-3


def test_flow_small_lambda_limit():
    s = SigmaSchedule((1.0, 2.0, 1.0))
    flow = dirichlet_flow([1.0, 4.0, 2.0, 0.5, 3.0, 1.0, 1.0, 2.0], 1e-12, s, 3)
    assert np.allclose(flow.families[0].beta, 1.0, atol=1e-10)
    t1, t2 = s.ratios
    assert np.allclose(flow.families[1].beta, t1 + 1.0, atol=1e-10)
    assert np.allclose(flow.families[2].beta, t2 * (2.0 * (t1 + 1.0) - 1.0) + 1.0, atol=1e-10)


@settings(max_examples=10)
@given(seeds)
def test_flow_matches_quadrature(seed):
    rng = np.random.default_rng(seed)
    alpha = rng.uniform(0.0, 3.0, size=4)
    s = SigmaSchedule(tuple(rng.uniform(0.3, 3.0, size=2)))
    lam = float(rng.uniform(0.2, 3.0))
    assert final_level_tv(alpha, lam, s) <= 1e-3


def test_quadrature_rejects_the_recursion_parameters():
    s = SigmaSchedule((1.0, 1.0))
    flow = dirichlet_flow([1, 2, 3, 4], 2.0, s, 2)
    grid = oracle.pair_pushforward_escort_grid(lambda x: dirichlet_log_density(flow.families[0], x), 0.5)
    alt = DirichletFamily(flow.recursion_betas[1])
    ref = oracle.simplex_grid_quadrature(
        lambda x: dirichlet_log_density(alt, np.stack([x, 1.0 - x], axis=-1)), 2000
    )
    assert oracle.grid_tv(grid, ref) > 1e-2


def test_recursion_gap_is_reported_not_hidden():
    s = SigmaSchedule((1.0, 1.0, 0.5))
    flow = dirichlet_flow([1, 2, 3, 4, 5, 6, 7, 8], 1.0, s, 3)
    assert flow.gaps[0] == 0.0
    # first step: t T(beta) against t (T(beta) - 1) + 1 differ by |1 - t|
    assert flow.gaps[1] == pytest.approx(abs(1.0 - s.ratios[0]), abs=1e-14)
    assert all(g > 0.0 for g in flow.gaps[1:])
    assert np.allclose(flow.recursion_betas[1], s.ratios[0] * aggregate_pairs(flow.families[0]).beta)


def test_flow_contracts():
    with pytest.raises(ContractError):
        dirichlet_flow([1, 2, 3], 1.0, SigmaSchedule((1.0, 1.0)), 2)
    with pytest.raises(ContractError):
        dirichlet_flow([1, 2, 3, 4], 1.0, SigmaSchedule((1.0,)), 2)
    with pytest.raises(ContractError):
        dirichlet_flow([1, -2, 3, 4], 1.0, SigmaSchedule((1.0, 1.0)), 2)
    with pytest.raises(ContractError):
        dirichlet_flow([1, 2, 3, 4], 0.0, SigmaSchedule((1.0, 1.0)), 2)


# --------------------------------------------------------------------------
# density
# --------------------------------------------------------------------------


def test_log_density_examples():
    assert dirichlet_log_density(fam(1, 1), [0.3, 0.7]) == pytest.approx(0.0, abs=1e-15)
    assert dirichlet_log_density(fam(2, 2), [0.5, 0.5]) == pytest.approx(math.log(1.5), abs=1e-14)
    assert dirichlet_log_density(fam(2, 2), [0.5, 0.5]) == pytest.approx(
        ORACLE["beta22_log_density_half"], abs=1e-14)
    assert dirichlet_log_density(fam(0.5, 2.0), [0.0, 1.0]) == math.inf
    with pytest.raises(ContractError):
        dirichlet_log_density(fam(2, 2), [0.6, 0.6])
    with pytest.raises(ContractError):
        dirichlet_log_density(fam(2, 2, 2), [0.5, 0.5])


def test_symmetric_density_peaks_at_center():
    x = np.linspace(0.01, 0.99, 99)
    vals = dirichlet_log_density(fam(3, 3), np.stack([x, 1 - x], axis=-1))
    assert x[np.argmax(vals)] == pytest.approx(0.5)


# --------------------------------------------------------------------------
# sampling
# --------------------------------------------------------------------------


@pytest.mark.parametrize("beta", [(1.0, 1.0), (4.5, 8.5)])
def test_sample_means(beta):
    x = dirichlet_sample(fam(*beta), 3, 100_000)
    se = x.std(axis=0) / math.sqrt(x.shape[0])
    assert np.all(np.abs(x.mean(axis=0) - np.array(beta) / sum(beta)) <= 5 * se)


def test_sample_ks_against_quadrature_cdf():
    f = fam(4.5, 8.5)
    grid = oracle.simplex_grid_quadrature(
        lambda x: dirichlet_log_density(f, np.stack([x, 1 - x], axis=-1)), 20000
    )
    edges = np.concatenate([[0.0], grid.x + 0.5 / grid.x.size])
    cdf_vals = np.concatenate([[0.0], np.cumsum(grid.probs)])

    def cdf(v):
        return np.interp(v, edges, cdf_vals)

    x = dirichlet_sample(f, 2024, 20_000)[:, 0]
    assert stats.kstest(x, cdf).pvalue > 1e-3


def test_sampling_is_deterministic():
    f = fam(0.7, 1.3, 2.0)
    a = dirichlet_sample(f, 9, 2500)
    assert np.array_equal(a, dirichlet_sample(f, 9, 2500))
    assert np.array_equal(a[:700], dirichlet_sample(f, 9, 700))
    assert dirichlet_sample(f, 9, 0).shape == (0, 3)


# --------------------------------------------------------------------------
# expected loss and multiplier
# --------------------------------------------------------------------------


@given(seeds)
def test_log_partition_derivative_is_minus_expected_loss(seed):
    rng = np.random.default_rng(seed)
    alpha = rng.uniform(0.1, 3.0, size=8)
    s = SigmaSchedule(tuple(rng.uniform(0.3, 3.0, size=3)))
    lam = float(rng.uniform(0.3, 3.0))
    fd = oracle.finite_diff(lambda x: dirichlet_flow(alpha, x, s, 3).log_partition, lam, 1e-5)
    assert fd == pytest.approx(-dirichlet_expected_loss(dirichlet_flow(alpha, lam, s, 3)), rel=1e-6)


def test_hierarchical_sample_expected_loss():
    alpha = np.array([1.0, 2.0, 0.5, 3.0])
    flow = dirichlet_flow(alpha, 1.5, SigmaSchedule((1.0, 0.7)), 2)
    x = dirichlet_hierarchical_sample(flow, 17, 100_000)
    assert np.allclose(x.sum(axis=1), 1.0, atol=1e-12)
    loss = -(np.log(x) @ alpha)
    se = loss.std() / math.sqrt(loss.size)
    assert abs(loss.mean() - dirichlet_expected_loss(flow)) <= 5 * se
    pair = x[:, 0] + x[:, 1]
    expected = flow.families[1].mean[0]
    assert abs(pair.mean() - expected) <= 5 * pair.std() / math.sqrt(pair.size)


def test_solve_lambda_round_trip():
    alpha = [1.0, 2.0, 3.0, 4.0]
    s = SigmaSchedule((1.0, 1.0))
    mu = dirichlet_expected_loss(dirichlet_flow(alpha, 2.0, s, 2))
    lam = dirichlet_solve_lambda(alpha, s, mu, 2)
    assert lam == pytest.approx(2.0, rel=1e-10)
    with pytest.raises(InfeasibleConstraintError):
        dirichlet_solve_lambda(alpha, s, 0.0, 2)
