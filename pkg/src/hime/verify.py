"""Oracle check suites behind ``hime verify``.

Each check compares a solver or flow against an independent oracle on a
small fixed instance and records the residual next to its tolerance.
"""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats

from . import oracle
from .core import SigmaSchedule, TabularDistribution, TransformChain, spin_index, total_variation
from .dirichlet import dirichlet_flow, dirichlet_log_density
from .gaussian import gaussian_dlogZ, gaussian_flow, gaussian_lambda_star
from .ising import (
    ising_flow,
    ising_hierarchical_sample,
    ising_level_log_normalizers,
    ising_log_partition,
    transfer_log_partition,
)
from .rg import (
    bracket_and_bisect,
    log_partition,
    run_generalized_rg,
    run_rg,
    solve_lambda,
    verify_relative_identity,
    verify_variational_identity,
)


@dataclass(frozen=True)
class Check:
    name: str
    residual: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(self.residual <= self.tol)

    def to_json(self) -> dict:
        d = asdict(self)
        d["residual"] = float(self.residual) if math.isfinite(self.residual) else repr(float(self.residual))
        d["pass"] = self.passed
        return d


def _random_instance(rng, sizes):
    maps = [rng.integers(0, b, size=a) for a, b in zip(sizes[:-1], sizes[1:])]
    for m, b in zip(maps, sizes[1:]):
        m[:b] = rng.permutation(b)  # every coarse outcome gets a preimage
    chain = TransformChain.from_maps(maps, sizes)
    L = rng.normal(size=sizes[0])
    s = SigmaSchedule(tuple(rng.uniform(0.3, 2.0, size=len(sizes))))
    return L, chain, s


def suite_rg(seed: int = 0) -> list[Check]:
    rng = np.random.default_rng(seed)
    out = []
    chain1 = TransformChain((), finest_size=2)
    rep = run_rg([0.0, 1.0], chain1, SigmaSchedule((1.0,)), math.log(3.0))
    out.append(Check("rg.two_point_gibbs", float(np.max(np.abs(rep.joint.probs - [0.75, 0.25]))), 1e-12))

    L, chain, s = _random_instance(rng, (12, 6, 3))
    lam = 0.8
    rep = run_rg(L, chain, s, lam)
    P = TabularDistribution(rng.dirichlet(np.ones(12)))
    out.append(Check("rg.variational_identity", verify_variational_identity(P, rep, L, chain, s), 1e-9))
    asc = oracle.projected_ascent_maxent(L, chain, s, lam)
    out.append(Check("rg.ascent_agreement_tv", total_variation(asc.dist, rep.joint), 1e-6))

    mu = float(np.dot(rep.joint.probs, L)) + 0.1
    lam_star, rep_star = solve_lambda(L, chain, s, mu, tol=1e-12)
    fd = oracle.finite_diff(lambda x: log_partition(run_rg(L, chain, s, x)), lam_star, 1e-5)
    out.append(Check("rg.lambda_star_finite_difference", abs(fd + mu) / abs(mu), 1e-5))

    base = TabularDistribution(rng.dirichlet(np.ones(12)))
    rep_b = run_generalized_rg(L, chain, s, lam, base)
    out.append(Check("rg.relative_identity", verify_relative_identity(P, rep_b, L, chain, s, base), 1e-9))
    # a uniform base cancels only when every fiber of every step has the same size
    balanced = TransformChain.from_maps(
        [rng.permutation(np.repeat(np.arange(6), 2)), rng.permutation(np.repeat(np.arange(3), 2))], (12, 6, 3)
    )
    rep_plain = run_rg(L, balanced, s, lam)
    rep_u = run_generalized_rg(L, balanced, s, lam, TabularDistribution.uniform(12))
    out.append(Check("rg.uniform_base_reduction",
                     float(np.max(np.abs(rep_u.joint.probs - rep_plain.joint.probs))), 1e-12))
    return out


def _random_modular(rng, k):
    A0 = rng.normal(size=(k, k))
    B = 0.3 * rng.normal(size=(k, k)) / k
    A = A0 @ A0.T + (2.0 + k) * np.eye(k)
    return A, B


def suite_gaussian(seed: int = 0) -> list[Check]:
    rng = np.random.default_rng(seed)
    out = []
    k, d = 2, 5
    A, B = _random_modular(rng, k)
    s = SigmaSchedule(tuple(rng.uniform(0.5, 2.0, size=d)))
    lam = 1.7
    flow = gaussian_flow(A, B, k, d, s, lam)
    route = oracle.dense_gaussian_route(A, B, k, d, s, lam)
    worst = 0.0
    for lv, M in zip(flow.levels, route.level_precisions):
        P = lv.precision()
        worst = max(worst, np.linalg.norm(P - M) / np.linalg.norm(M))
    out.append(Check("gaussian.flow_vs_dense_precisions", worst, 1e-8))
    out.append(Check("gaussian.level_logZ_vs_dense",
                     float(np.max(np.abs(np.subtract(flow.level_logZ, route.level_logZ)))), 1e-9))
    dense_obj = oracle.dense_gaussian_objective(A, B, k, d, s, lam)
    out.append(Check("gaussian.log_partition_vs_objective", abs(flow.log_partition - dense_obj), 1e-8))
    mu = 3.0
    closed = gaussian_lambda_star(k, d, s, mu)
    root, _ = bracket_and_bisect(lambda x: -gaussian_dlogZ(k, d, s, x) - mu if x > 0 else math.inf, 1e-14)
    out.append(Check("gaussian.lambda_star_closed_form", abs(closed - root) / closed, 1e-8))
    return out


def suite_dirichlet(seed: int = 0) -> list[Check]:
    rng = np.random.default_rng(seed)
    alpha = rng.uniform(0.5, 3.0, size=4)
    s = SigmaSchedule(tuple(rng.uniform(0.5, 2.0, size=2)))
    lam = float(rng.uniform(0.5, 3.0))
    flow = dirichlet_flow(alpha, lam, s, 2)
    fine = flow.families[0]
    grid = oracle.pair_pushforward_escort_grid(lambda x: dirichlet_log_density(fine, x), float(s.ratios[0]))
    top = flow.families[1]
    ref = oracle.simplex_grid_quadrature(
        lambda x: dirichlet_log_density(top, np.stack([x, 1.0 - x], axis=-1)), grid.x.size
    )
    return [Check("dirichlet.flow_vs_quadrature_tv", oracle.grid_tv(grid, ref), 1e-3)]


def suite_ising(seed: int = 0) -> list[Check]:
    rng = np.random.default_rng(seed)
    out = []
    out.append(Check("ising.transfer_vs_brute",
                     abs(transfer_log_partition(8, 0.5) - oracle.brute_log_partition(8, 0.5)), 1e-12))
    J = 1.0
    lam = float(rng.uniform(-2.0, 2.0))
    s = SigmaSchedule(tuple(rng.uniform(0.5, 2.0, size=3)))
    n = 16
    flow = ising_flow(J, lam, s, 3, n)
    rep, _, _ = oracle.enumerate_rg_ising(n, J, lam, s)
    gap = 0.0
    for size, th, dist in zip(flow.sizes, flow.thetas, rep.level_dists):
        gap = max(gap, float(np.max(np.abs(oracle.enumerate_ising(size, th).probs - dist.probs))))
    out.append(Check("ising.flow_vs_enumeration", gap, 1e-12))
    out.append(Check("ising.normalizers_vs_rg",
                     float(np.max(np.abs(np.subtract(ising_level_log_normalizers(flow), rep.level_logZ)))), 1e-10))
    out.append(Check("ising.log_partition_vs_rg", abs(ising_log_partition(flow) - rep.log_partition), 1e-10))

    s2 = SigmaSchedule((1.0, 1.0))
    flow8 = ising_flow(1.0, 1.0, s2, 2, 8)
    rep8, _, _ = oracle.enumerate_rg_ising(8, 1.0, 1.0, s2)
    x = ising_hierarchical_sample(flow8, 20240601, 100_000)
    counts = np.bincount(spin_index(x), minlength=256)
    expected = rep8.joint.probs * counts.sum()
    pval = stats.chisquare(counts, expected).pvalue
    # residual is 1 - p so that passing means residual <= 1 - alpha
    out.append(Check("ising.sampler_chi_square_1_minus_p", 1.0 - float(pval), 1.0 - 1e-3))
    return out


SUITES = {
    "rg": suite_rg,
    "gaussian": suite_gaussian,
    "dirichlet": suite_dirichlet,
    "ising": suite_ising,
}


def run_suite(name: str, seed: int = 0) -> dict:
    names = list(SUITES) if name == "all" else [name]
    checks, timings = [], {}
    for nm in names:
        t0 = time.perf_counter()
        checks.extend(SUITES[nm](seed))
        timings[nm] = time.perf_counter() - t0
    return {
        "suite": name,
        "seed": seed,
        "checks": [c.to_json() for c in checks],
        "seconds": timings,
        "pass": all(c.passed for c in checks),
    }


__all__ = ["Check", "SUITES", "run_suite"]
