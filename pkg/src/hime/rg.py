"""Renormalization-group solver on finite tabular spaces.

``run_rg`` tilts the finest level by ``exp(-(lam/sigma_1) L)`` and then
alternates pushforward and escort (exponent sigma_bar_i / sigma_bar_{i+1})
up the chain. The optimal joint is the coarsest level distribution composed
back down through the fine-given-coarse kernels of every level.

The optimal value of ``H_sigma(P) - lam * E_P[L]`` is
``sum_i sigma_bar_i * log Z_i``; that weighted sum is what
``SolveReport.log_partition`` holds, while ``level_logZ`` keeps the raw
per-level normalizers.
"""
from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .core import (
    ConditionalTable,
    SigmaSchedule,
    TabularDistribution,
    TransformChain,
    compose,
    disintegrate,
    dominates,
    hierarchical_entropy,
    hierarchical_kl,
    level_marginals,
    entropy,
)
from .errors import ContractError, InfeasibleConstraintError, NumericRangeError
from .renorm import _normalize_log, log_escort, log_generalized_escort

log = logging.getLogger(__name__)

LAMBDA_LIMIT = 1e6


@dataclass(frozen=True, eq=False)
class LossTable:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size == 0:
            raise ContractError("loss must be a non-empty 1-D table")
        if not np.all(np.isfinite(v)):
            raise ContractError(f"loss entry {int(np.flatnonzero(~np.isfinite(v))[0])} is not finite")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size


def as_loss(L) -> LossTable:
    return L if isinstance(L, LossTable) else LossTable(L)


@dataclass(frozen=True, eq=False)
class SolveReport:
    lam: float
    sigma: SigmaSchedule
    level_dists: tuple[TabularDistribution, ...]
    level_logZ: tuple[float, ...]
    conditionals: tuple[ConditionalTable, ...]
    joint: TabularDistribution
    entropy_vector: tuple[float, ...]
    expected_loss: float
    log_partition: float
    base: TabularDistribution | None = None
    flags: tuple[str, ...] = field(default=())

    @property
    def depth(self) -> int:
        return len(self.level_dists)


def weighted_log_partition(level_logZ: Sequence[float], s: SigmaSchedule) -> float:
    return float(np.dot(s.sigma_bar, np.asarray(level_logZ, dtype=float)))


def _check_shapes(L: LossTable, chain: TransformChain, s: SigmaSchedule):
    if len(L) != chain.finest_size:
        raise ContractError(f"loss has {len(L)} entries but the finest space has {chain.finest_size}")
    if s.depth != chain.depth:
        raise ContractError(f"sigma has {s.depth} levels but the chain has {chain.depth}")


def _initial_level(L: LossTable, s: SigmaSchedule, lam: float, base: TabularDistribution | None):
    with np.errstate(over="ignore", invalid="ignore"):
        tilt = -(lam / s.sigma[0]) * L.values
    bad = np.flatnonzero(~np.isfinite(tilt))
    if bad.size:
        raise NumericRangeError(f"tilt exponent overflows at loss index {int(bad[0])}", index=int(bad[0]))
    if base is not None:
        with np.errstate(divide="ignore"):
            tilt = tilt + np.log(base.probs)
    probs, logz = _normalize_log(tilt)
    if probs is None:
        raise NumericRangeError("initial level has no mass")
    return TabularDistribution(probs), logz


def _run(L, chain: TransformChain, s: SigmaSchedule, lam: float, base=None) -> SolveReport:
    L = as_loss(L)
    _check_shapes(L, chain, s)
    lam = float(lam)
    base_levels = None
    if base is not None:
        if base.n != chain.finest_size:
            raise ContractError("base distribution does not live on the finest space")
        base_levels = level_marginals(base, chain)

    P, logz = _initial_level(L, s, lam, base)
    dists, logzs, conds = [P], [logz], []
    for i, (step, ratio) in enumerate(zip(chain.steps, s.ratios)):
        U, cond = disintegrate(P, step)
        conds.append(cond)
        if base_levels is None:
            P, logz = log_escort(U, float(ratio))
        else:
            P, logz = log_generalized_escort(U, base_levels[i + 1], float(ratio))
        dists.append(P)
        logzs.append(logz)

    joint = dists[-1]
    for cond in reversed(conds):
        joint = compose(joint, cond)

    return SolveReport(
        lam=lam,
        sigma=s,
        level_dists=tuple(dists),
        level_logZ=tuple(float(z) for z in logzs),
        conditionals=tuple(conds),
        joint=joint,
        entropy_vector=tuple(entropy(m) for m in level_marginals(joint, chain)),
        expected_loss=float(np.dot(joint.probs, L.values)),
        log_partition=weighted_log_partition(logzs, s),
        base=base,
    )


def run_rg(L, chain: TransformChain, s: SigmaSchedule, lam: float) -> SolveReport:
    """Maximizer of ``H_sigma(P) - lam * E_P[L]`` over all distributions on the finest space."""
    return _run(L, chain, s, lam)


def run_generalized_rg(L, chain, s, lam, base: TabularDistribution) -> SolveReport:
    """Minimizer of ``D_sigma(P || base) + lam * E_P[L]``."""
    return _run(L, chain, s, lam, base=base)


def log_partition(report: SolveReport) -> float:
    return weighted_log_partition(report.level_logZ, report.sigma)


def expected_loss_by_levels(report: SolveReport, L) -> float:
    """E[L] under the optimal joint, folded level by level through the kernels.

    Never materializes the joint: the loss is averaged over each kernel to
    give a function on the next coarser space.
    """
    g = as_loss(L).values
    for cond in report.conditionals:
        g = np.bincount(cond.step.map, weights=cond.weights * g, minlength=cond.step.codomain_size)
    return float(np.dot(report.level_dists[-1].probs, g))


def objective(P: TabularDistribution, L, chain, s, lam) -> float:
    """Regularized objective ``H_sigma(P) - lam * E_P[L]``."""
    return hierarchical_entropy(P, chain, s) - lam * float(np.dot(P.probs, as_loss(L).values))


# --------------------------------------------------------------------------
# multiplier search
# --------------------------------------------------------------------------


def bracket_and_bisect(g: Callable[[float], float], tol: float, limit: float = LAMBDA_LIMIT):
    """Root of ``g`` by symmetric geometric bracket expansion from [-1, 1], then bisection.

    Returns ``(root, flags)``. ``g`` is expected to be non-increasing; if the
    sampled values say otherwise the widest sign-change bracket is used and
    ``"non-monotone"`` is flagged. Raises InfeasibleConstraintError when no
    sign change appears before ``|lam|`` exceeds ``limit``.
    """
    flags = []
    samples: dict[float, float] = {}

    def at(x):
        if x not in samples:
            samples[x] = g(x)
        return samples[x]

    width = 1.0
    while True:
        for x in (-width, width):
            if abs(at(x)) <= tol:
                return x, tuple(flags)
        xs = sorted(samples)
        vals = [samples[x] for x in xs]
        brackets = [(xs[j], xs[j + 1]) for j in range(len(xs) - 1) if vals[j] * vals[j + 1] < 0]
        if brackets:
            break
        width *= 2.0
        if width > limit:
            raise InfeasibleConstraintError(
                f"no sign change for |lambda| <= {limit:g}; target outside achievable range "
                f"(values {min(vals):.6g} .. {max(vals):.6g} relative to target)"
            )
    vals = [samples[x] for x in sorted(samples)]
    if any(b > a for a, b in zip(vals, vals[1:])):
        flags.append("non-monotone")
        log.warning("constraint residual is not monotone in lambda; using widest sign-change bracket")
    lo, hi = max(brackets, key=lambda b: b[1] - b[0])
    glo = samples[lo]
    while True:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            flags.append("tolerance-not-reached")
            best = min((lo, hi), key=lambda x: abs(samples[x]))
            return best, tuple(flags)
        gm = at(mid)
        if abs(gm) <= tol:
            return mid, tuple(flags)
        if (gm < 0) == (glo < 0):
            lo, glo = mid, gm
        else:
            hi = mid


def solve_lambda(L, chain, s, mu: float, tol: float = 1e-10, base: TabularDistribution | None = None):
    """Multiplier ``lam`` with ``E[L] = mu`` under the optimal joint, and the report there."""
    reports: dict[float, SolveReport] = {}

    def g(lam):
        rep = _run(L, chain, s, lam, base=base)
        reports[lam] = rep
        return rep.expected_loss - mu

    lam, flags = bracket_and_bisect(g, tol)
    report = reports[lam]
    if flags:
        report = replace(report, flags=report.flags + flags)
    return lam, report


# --------------------------------------------------------------------------
# identity checks
# --------------------------------------------------------------------------


def verify_variational_identity(P, report: SolveReport, L, chain, s) -> float:
    """|H_s(P) - lam E_P[L] - (log Z - D_s(P || joint))|; inf when the divergence is."""
    d = hierarchical_kl(P, report.joint, chain, s)
    if math.isinf(d):
        return math.inf
    lhs = objective(P, L, chain, s, report.lam)
    return abs(lhs - (report.log_partition - d))


def verify_relative_identity(P, report: SolveReport, L, chain, s, base) -> float:
    """|D_s(P || base) + lam E_P[L] - (D_s(P || joint) - log Z)|; inf when undefined."""
    d_base = hierarchical_kl(P, base, chain, s)
    d_opt = hierarchical_kl(P, report.joint, chain, s)
    if math.isinf(d_base) or math.isinf(d_opt):
        return math.inf
    lhs = d_base + report.lam * float(np.dot(P.probs, as_loss(L).values))
    return abs(lhs - (d_opt - report.log_partition))


# --------------------------------------------------------------------------
# pareto sweep
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ParetoPoint:
    sigma: SigmaSchedule
    entropy_vector: tuple[float, ...]
    lam: float
    log_partition: float
    report: SolveReport


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("HIME_THREADS", "1")))
    except ValueError:
        return 1


def pareto_sweep(L, chain, mu: float, sigma_grid: Sequence[SigmaSchedule], tol: float = 1e-10,
                 workers: int | None = None) -> list[ParetoPoint]:
    """Solve the constrained problem at every grid point; drop any dominated result."""
    grid = list(sigma_grid)

    def solve(s):
        lam, rep = solve_lambda(L, chain, s, mu, tol=tol)
        return ParetoPoint(s, rep.entropy_vector, lam, rep.log_partition, rep)

    workers = workers or _threads()
    if workers > 1 and len(grid) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            points = list(pool.map(solve, grid))
    else:
        points = [solve(s) for s in grid]

    kept = []
    for i, p in enumerate(points):
        if any(dominates(q.entropy_vector, p.entropy_vector, tol=1e-12) for j, q in enumerate(points) if j != i):
            log.warning("dropping dominated grid point sigma=%s", p.sigma.sigma)
            continue
        kept.append(p)
    return kept


__all__ = [
    "LossTable",
    "SolveReport",
    "ParetoPoint",
    "as_loss",
    "run_rg",
    "run_generalized_rg",
    "log_partition",
    "weighted_log_partition",
    "expected_loss_by_levels",
    "objective",
    "bracket_and_bisect",
    "solve_lambda",
    "verify_variational_identity",
    "verify_relative_identity",
    "pareto_sweep",
]
