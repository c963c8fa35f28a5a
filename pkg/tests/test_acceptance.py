"""Acceptance criteria, one test per criterion.

Every test records a one-line PASS/FAIL summary with its measured residual,
tolerance and runtime; the lines are printed at the end of the pytest run
(and immediately when run with ``-s``). Tolerances, instance counts and time
limits are fixed here and must not be relaxed.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
import pytest
from scipy import stats

from hime import oracle
from hime.core import (
    SigmaSchedule,
    TabularDistribution,
    TransformChain,
    dominates,
    spin_index,
    total_variation,
)
from hime.dirichlet import dirichlet_flow, dirichlet_log_density
from hime.gaussian import gaussian_dlogZ, gaussian_flow, gaussian_lambda_star
from hime.ising import ising_flow, ising_hierarchical_sample, ising_level_log_normalizers, ising_log_partition
from hime.rg import (
    bracket_and_bisect,
    log_partition,
    objective,
    pareto_sweep,
    run_generalized_rg,
    run_rg,
    solve_lambda,
    verify_relative_identity,
    verify_variational_identity,
)

from _instances import random_balanced_instance, random_dist, random_instance

RESULTS: list[str] = []


@dataclass
class Outcome:
    number: int
    title: str
    checks: list  # (label, value, tol) with pass meaning value <= tol
    seconds: float
    limit: float
    note: str = ""

    @property
    def passed(self) -> bool:
        return all(v <= tol for _, v, tol in self.checks) and self.seconds <= self.limit

    def line(self) -> str:
        parts = ", ".join(f"{lab} {v:.3g} (tol {tol:.3g})" for lab, v, tol in self.checks)
        verdict = "PASS" if self.passed else "FAIL"
        tail = f" [info: {self.note}]" if self.note else ""
        return (f"[{verdict}] criterion {self.number:2d} {self.title}: {parts}; "
                f"{self.seconds:.1f} s (limit {self.limit:g} s){tail}")


def record(number, title, limit, body):
    t0 = time.perf_counter()
    checks = body()
    note = ""
    if isinstance(checks, tuple):
        checks, note = checks
    out = Outcome(number, title, checks, time.perf_counter() - t0, limit, note)
    RESULTS.append(out.line())
    print(out.line())
    assert out.passed, out.line()


# --------------------------------------------------------------------------
# 1. hierarchical Gibbs identity
# --------------------------------------------------------------------------


def test_criterion_01_gibbs_identity():
    def body():
        rng = np.random.default_rng(101)
        worst = 0.0
        for _ in range(200):
            L, chain, s = random_instance(rng, max_size=64, max_levels=4)
            lam = float(rng.uniform(-3.0, 3.0))
            rep = run_rg(L, chain, s, lam)
            for _ in range(20):
                P = random_dist(rng, chain.finest_size, float(rng.choice([0.2, 1.0, 5.0])))
                worst = max(worst, verify_variational_identity(P, rep, L, chain, s))
        return [("max residual", worst, 1e-9)]

    record(1, "hierarchical Gibbs identity", 30.0, body)


# --------------------------------------------------------------------------
# 2. optimality
# --------------------------------------------------------------------------


def test_criterion_02_optimality():
    def body():
        rng = np.random.default_rng(102)
        worst_excess, worst_tv_near_tie = 0.0, 0.0
        for _ in range(50):
            L, chain, s = random_instance(rng, max_size=64, max_levels=4)
            lam = float(rng.uniform(-3.0, 3.0))
            rep = run_rg(L, chain, s, lam)
            best = objective(rep.joint, L, chain, s, lam)
            for _ in range(100):
                eps = 10.0 ** rng.uniform(-9.0, 0.0)
                noise = rng.dirichlet(np.ones(chain.finest_size))
                P = TabularDistribution.from_weights((1.0 - eps) * rep.joint.probs + eps * noise)
                gap = best - objective(P, L, chain, s, lam)
                # objective at the optimum must not be beaten beyond rounding
                worst_excess = max(worst_excess, -gap)
                if gap <= 1e-12:
                    worst_tv_near_tie = max(worst_tv_near_tie, total_variation(P, rep.joint))
        return [("max objective excess over optimum", worst_excess, 1e-12),
                ("max TV among gaps <= 1e-12", worst_tv_near_tie, 1e-6)]

    record(2, "optimality against perturbations", 30.0, body)


# --------------------------------------------------------------------------
# 3. multiplier condition
# --------------------------------------------------------------------------


def test_criterion_03_lambda_star_condition():
    def body():
        rng = np.random.default_rng(103)
        worst = 0.0
        h = 1e-4
        for _ in range(50):
            L, chain, s = random_instance(rng, max_size=64, max_levels=4)
            L = np.abs(L) + 0.5  # keeps mu away from zero so the relative error is meaningful
            lam0 = float(rng.uniform(-3.0, 3.0))
            mu = run_rg(L, chain, s, lam0).expected_loss
            lam, _ = solve_lambda(L, chain, s, mu, tol=1e-13)
            fd = oracle.finite_diff(lambda x: log_partition(run_rg(L, chain, s, x)), lam, h)
            worst = max(worst, abs(fd + mu) / abs(mu))
        return [("max relative error", worst, 1e-5)]

    record(3, "lambda* condition by finite difference", 30.0, body)


# --------------------------------------------------------------------------
# 4. Gaussian flow against dense marginalization
# --------------------------------------------------------------------------


def _random_spd_modular(rng, k, d):
    G = rng.normal(size=(k, k))
    A = G @ G.T + rng.uniform(0.1, 2.0) * np.eye(k)
    H = rng.normal(size=(k, k))
    # every block couples to the other d - 1, so ||B|| < lambda_min(A) / d keeps T_d[A, B] positive definite
    scale = rng.uniform(0.0, 0.95) * np.linalg.eigvalsh(A)[0] / (d * np.linalg.norm(H, 2))
    return A, scale * H


def test_criterion_04_gaussian_flow_vs_dense():
    def body():
        rng = np.random.default_rng(104)
        worst = 0.0
        for _ in range(50):
            k, d = int(rng.integers(1, 5)), int(rng.integers(1, 9))
            A, B = _random_spd_modular(rng, k, d)
            s = SigmaSchedule(tuple(rng.uniform(0.2, 3.0, size=d)))
            lam = float(rng.uniform(0.1, 5.0))
            flow = gaussian_flow(A, B, k, d, s, lam)
            route = oracle.dense_gaussian_route(A, B, k, d, s, lam)
            for lv, M in zip(flow.levels, route.level_precisions):
                worst = max(worst, np.linalg.norm(lv.precision() - M) / np.linalg.norm(M))
        return [("max Frobenius relative error", worst, 1e-8)]

    record(4, "Gaussian flow vs dense Schur marginalization", 20.0, body)


# --------------------------------------------------------------------------
# 5. Gaussian closed-form multiplier
# --------------------------------------------------------------------------


def test_criterion_05_gaussian_lambda_star():
    def body():
        rng = np.random.default_rng(105)
        worst = 0.0
        for _ in range(50):
            k, d = int(rng.integers(1, 5)), int(rng.integers(1, 9))
            s = SigmaSchedule(tuple(rng.uniform(0.1, 5.0, size=d)))
            mu = float(10.0 ** rng.uniform(-2.0, 2.0))
            closed = gaussian_lambda_star(k, d, s, mu)
            root, _ = bracket_and_bisect(
                lambda x: -gaussian_dlogZ(k, d, s, x) - mu if x > 0 else math.inf, 1e-15 * mu
            )
            worst = max(worst, abs(closed - root) / closed)
        return [("max relative gap", worst, 1e-8)]

    record(5, "Gaussian lambda* closed form vs bisection", 5.0, body)


# --------------------------------------------------------------------------
# 6. Dirichlet flow against quadrature
# --------------------------------------------------------------------------


def test_criterion_06_dirichlet_flow():
    def body():
        rng = np.random.default_rng(106)
        worst, min_gap = 0.0, math.inf
        for _ in range(20):
            alpha = rng.uniform(0.0, 4.0, size=4)
            s = SigmaSchedule(tuple(rng.uniform(0.2, 3.0, size=2)))
            lam = float(rng.uniform(0.1, 4.0))
            flow = dirichlet_flow(alpha, lam, s, 2)
            grid = oracle.pair_pushforward_escort_grid(
                lambda x: dirichlet_log_density(flow.families[0], x), float(s.ratios[0]), resolution=2000
            )
            top = flow.families[1]
            ref = oracle.simplex_grid_quadrature(
                lambda x: dirichlet_log_density(top, np.stack([x, 1.0 - x], axis=-1)), 2000
            )
            worst = max(worst, oracle.grid_tv(grid, ref))
            assert s.ratios[0] != 1.0
            min_gap = min(min_gap, flow.gaps[1])
        # the recursion gap is reported; it must be visible (nonzero) whenever the ratio is not 1
        return [("max TV", worst, 1e-3), ("gap column zero (1 = yes)", float(min_gap == 0.0), 0.0)]

    record(6, "Dirichlet flow vs pushforward-escort quadrature", 20.0, body)


# --------------------------------------------------------------------------
# 7. Ising flow against enumeration
# --------------------------------------------------------------------------


def test_criterion_07_ising_flow_vs_enumeration():
    def body():
        rng = np.random.default_rng(107)
        worst_p, worst_z = 0.0, 0.0
        for j in range(20):
            n = 8 if j % 2 == 0 else 16
            levels = 2 if n == 8 else int(rng.integers(2, 4))
            theta1 = float(rng.uniform(-2.0, 2.0))
            s = SigmaSchedule(tuple(rng.uniform(0.3, 3.0, size=levels))) if j % 4 < 2 \
                else SigmaSchedule((1.0,) * levels)
            lam = theta1 * s.sigma[0]  # J = 1
            flow = ising_flow(1.0, lam, s, levels, n)
            rep, _, _ = oracle.enumerate_rg_ising(n, 1.0, lam, s)
            for size, th, dist in zip(flow.sizes, flow.thetas, rep.level_dists):
                worst_p = max(worst_p, float(np.max(np.abs(oracle.enumerate_ising(size, th).probs - dist.probs))))
            worst_z = max(worst_z, float(np.max(np.abs(np.subtract(ising_level_log_normalizers(flow),
                                                                   rep.level_logZ)))))
            worst_z = max(worst_z, abs(ising_log_partition(flow) - rep.log_partition))
        return [("max per-configuration gap", worst_p, 1e-12), ("max log-normalizer gap", worst_z, 1e-10)]

    record(7, "Ising flow vs enumerated rg", 60.0, body)


# --------------------------------------------------------------------------
# 8. rejection-free sampler
# --------------------------------------------------------------------------


def test_criterion_08_ising_sampler():
    def body():
        s = SigmaSchedule((1.0, 1.0))
        flow = ising_flow(1.0, 1.0, s, 2, 8)
        rep, _, _ = oracle.enumerate_rg_ising(8, 1.0, 1.0, s)
        x = ising_hierarchical_sample(flow, 20240601, 100_000)
        counts = np.bincount(spin_index(x), minlength=256)
        pval = float(stats.chisquare(counts, rep.joint.probs * counts.sum()).pvalue)
        energy = (x.astype(np.int64) * np.roll(x, -1, axis=1)).sum(axis=1)
        exact = float(rep.joint.probs @ oracle.cyclic_sums(8))
        z = abs(energy.mean() - exact) / (energy.std() / math.sqrt(energy.size))
        return [("1 - chi-square p", 1.0 - pval, 1.0 - 1e-3), ("energy z-score", z, 5.0)]

    record(8, "rejection-free Ising sampler", 30.0, body)


# --------------------------------------------------------------------------
# 9. relative-entropy identity
# --------------------------------------------------------------------------


def test_criterion_09_relative_identity():
    def body():
        rng = np.random.default_rng(109)
        worst_id, worst_red = 0.0, 0.0
        for _ in range(100):
            L, chain, s = random_instance(rng, max_size=64, max_levels=4)
            lam = float(rng.uniform(-3.0, 3.0))
            base = random_dist(rng, chain.finest_size)
            rep = run_generalized_rg(L, chain, s, lam, base)
            for P in (rep.joint, random_dist(rng, chain.finest_size), random_dist(rng, chain.finest_size, 0.2)):
                worst_id = max(worst_id, verify_relative_identity(P, rep, L, chain, s, base))
        for _ in range(100):
            # a uniform base pushes forward to uniform levels only when fibers have equal size
            L, chain, s = random_balanced_instance(rng, max_size=64, max_levels=4)
            lam = float(rng.uniform(-3.0, 3.0))
            plain = run_rg(L, chain, s, lam)
            gen = run_generalized_rg(L, chain, s, lam, TabularDistribution.uniform(chain.finest_size))
            worst_red = max(worst_red, float(np.max(np.abs(plain.joint.probs - gen.joint.probs))))
        # diagnostic only: with unequal fibers a uniform base is not uniform on coarser levels
        unbalanced = 0.0
        for _ in range(20):
            L, chain, s = random_instance(rng, max_size=64, max_levels=4)
            plain = run_rg(L, chain, s, 0.5)
            gen = run_generalized_rg(L, chain, s, 0.5, TabularDistribution.uniform(chain.finest_size))
            unbalanced = max(unbalanced, float(np.max(np.abs(plain.joint.probs - gen.joint.probs))))
        checks = [("max identity residual", worst_id, 1e-9), ("max uniform-base elementwise gap", worst_red, 1e-12)]
        return checks, f"uniform-base gap on unequal fibers {unbalanced:.3g}"

    record(9, "relative-entropy identity and uniform-base reduction", 30.0, body)


# --------------------------------------------------------------------------
# 10. Pareto sweep
# --------------------------------------------------------------------------


PARETO_L = np.array([0.0, 0.4, 0.9, 1.3, 1.8, 2.1, 2.9, 3.5])
PARETO_CHAIN = TransformChain.from_maps([[0, 0, 1, 1, 2, 2, 3, 3], [0, 0, 1, 1]])
PARETO_MU = 1.2


def test_criterion_10_pareto_sweep():
    def body():
        grid = [SigmaSchedule((1.0, a, b)) for a in (0.25, 1.0, 4.0) for b in (0.25, 1.0, 4.0)]
        points = pareto_sweep(PARETO_L, PARETO_CHAIN, PARETO_MU, grid, tol=1e-13)
        dominated_pairs = sum(
            dominates(p.entropy_vector, q.entropy_vector)
            for p in points for q in points if p is not q
        )
        worst_tv = 0.0
        for sched in grid:
            _, r1 = solve_lambda(PARETO_L, PARETO_CHAIN, sched, PARETO_MU, tol=1e-13)
            for c in (0.1, 7.0):
                _, r2 = solve_lambda(PARETO_L, PARETO_CHAIN, sched.scaled(c), PARETO_MU, tol=1e-13)
                worst_tv = max(worst_tv, total_variation(r1.joint, r2.joint))
        return [("missing points", float(9 - len(points)), 0.0), ("dominated pairs", float(dominated_pairs), 0.0),
                ("max rescaling TV", worst_tv, 1e-8)]

    record(10, "Pareto sweep", 20.0, body)


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-s"]))
