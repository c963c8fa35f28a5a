"""Logarithmic losses on the simplex: Dirichlet aggregation and escort.

Families are stored in standard concentration coordinates ``beta``; the
density on the simplex is proportional to ``prod x_j**(beta_j - 1)``. With
loss ``-alpha^T log x`` the finest level is ``beta = lam * alpha / sigma_1 + 1``.
Summing adjacent pairs adds their concentrations, and raising a Dirichlet
density to the power ``t`` maps ``beta`` to ``t (beta - 1) + 1``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize
from scipy.special import digamma, gammaln, xlogy

from ._rng import blocked_draws
from .core import SigmaSchedule
from .errors import ContractError, FlowBreakdownError, InfeasibleConstraintError

SIMPLEX_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class DirichletFamily:
    beta: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.beta, dtype=float).ravel()
        if b.size == 0:
            raise ContractError("beta must be non-empty")
        bad = np.flatnonzero(~(b > 0.0) | ~np.isfinite(b))
        if bad.size:
            raise FlowBreakdownError(
                f"concentration beta[{int(bad[0])}]={b[bad[0]]!r} is not positive", component=int(bad[0])
            )
        b.setflags(write=False)
        object.__setattr__(self, "beta", b)

    def __len__(self):
        return self.beta.size

    @property
    def log_normalizer(self) -> float:
        """Log of the multivariate beta function."""
        return float(gammaln(self.beta).sum() - gammaln(self.beta.sum()))

    @property
    def mean(self) -> np.ndarray:
        return self.beta / self.beta.sum()


def aggregate_pairs(f: DirichletFamily) -> DirichletFamily:
    if len(f) % 2:
        raise ContractError("pair aggregation needs an even number of components")
    return DirichletFamily(f.beta[0::2] + f.beta[1::2])


def dirichlet_escort(f: DirichletFamily, t: float) -> DirichletFamily:
    if not (t > 0.0 and math.isfinite(t)):
        raise ContractError(f"escort exponent must be positive, got {t!r}")
    if t == 1.0:
        return f
    beta = t * (f.beta - 1.0) + 1.0
    bad = np.flatnonzero(~(beta > 0.0))
    if bad.size:
        j = int(bad[0])
        raise FlowBreakdownError(
            f"escort with t={t} sends beta[{j}]={f.beta[j]!r} to {beta[j]!r} (must stay positive)", component=j
        )
    return DirichletFamily(beta)


@dataclass(frozen=True, eq=False)
class DirichletFlow:
    """Per-level families from pushforward-then-escort, next to the alternative recursion.

    ``recursion_betas`` follows ``alpha_(i) = r T(alpha_(i-1) + 1) - 1`` read as
    Dirichlet parameters ``alpha_(i) + 1``; ``gaps`` is the largest absolute
    difference from ``families`` at each level.
    """

    families: tuple[DirichletFamily, ...]
    recursion_betas: tuple[np.ndarray, ...]
    gaps: tuple[float, ...]
    level_logZ: tuple[float, ...]
    alpha: np.ndarray
    lam: float
    sigma: SigmaSchedule

    @property
    def log_partition(self) -> float:
        return float(np.dot(self.sigma.sigma_bar, self.level_logZ))


def dirichlet_flow(alpha, lam: float, s: SigmaSchedule, levels: int) -> DirichletFlow:
    """Run the flow for loss ``-alpha^T log x`` through ``levels`` levels.

    ``levels`` counts distributions, so there are ``levels - 1`` pair
    aggregations and ``len(alpha)`` must be divisible by ``2**(levels-1)``.
    """
    alpha = np.asarray(alpha, dtype=float).ravel()
    if np.any(alpha < 0.0) or not np.all(np.isfinite(alpha)):
        raise ContractError("alpha must be finite and nonnegative")
    if levels < 1 or s.depth != levels:
        raise ContractError(f"sigma has {s.depth} levels, expected {levels}")
    if alpha.size % (2 ** (levels - 1)):
        raise ContractError(f"{alpha.size} components cannot be halved {levels - 1} times")
    if not (lam > 0.0 and math.isfinite(lam)):
        raise ContractError("lambda must be positive")

    fam = DirichletFamily(lam * alpha / s.sigma[0] + 1.0)
    families = [fam]
    logz = [fam.log_normalizer]
    rec_alpha = lam * alpha / s.sigma[0]
    recursion = [rec_alpha + 1.0]
    for r in s.ratios:
        agg = aggregate_pairs(fam)
        fam = dirichlet_escort(agg, float(r))
        families.append(fam)
        logz.append(fam.log_normalizer - r * agg.log_normalizer)
        rec_alpha = r * (rec_alpha[0::2] + rec_alpha[1::2] + 2.0) - 1.0
        recursion.append(rec_alpha + 1.0)
    gaps = tuple(float(np.max(np.abs(f.beta - p))) for f, p in zip(families, recursion))
    return DirichletFlow(tuple(families), tuple(recursion), gaps, tuple(logz), alpha, float(lam), s)


def dirichlet_log_density(f: DirichletFamily, x) -> np.ndarray | float:
    """Log density at simplex points ``x`` (last axis indexes components).

    Returns +inf at boundary points where a component with beta < 1 vanishes.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != len(f):
        raise ContractError(f"points have {x.shape[-1]} components, family has {len(f)}")
    if len(f) < 2:
        raise ContractError("density needs at least two components")
    if np.any(x < -SIMPLEX_TOL) or np.any(np.abs(x.sum(axis=-1) - 1.0) > SIMPLEX_TOL):
        raise ContractError("point is not on the simplex")
    x = np.clip(x, 0.0, None)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = xlogy(f.beta - 1.0, x).sum(axis=-1) - f.log_normalizer
    return val if val.ndim else float(val)


def dirichlet_sample(f: DirichletFamily, seed: int, count: int) -> np.ndarray:
    """Normalized gamma variates; row ``i`` depends only on ``(seed, i)``."""
    n = len(f)
    if count == 0:
        return np.empty((0, n))

    def draw(rng, size):
        g = rng.standard_gamma(f.beta, size=(size, n))
        return g / g.sum(axis=1, keepdims=True)

    return blocked_draws(seed, count, draw, n)


def _ancestors(n: int, levels: int):
    """Index of each finest component's ancestor at every level."""
    idx = np.arange(n)
    return [idx >> i for i in range(levels)]


def dirichlet_expected_log(flow: DirichletFlow) -> np.ndarray:
    """E[log x_j] at the finest level under the optimal joint.

    Under the joint the coarsest level is Dirichlet with the top family, and
    each finer pair splits its parent by an independent Beta fraction with
    that level's concentrations.
    """
    fams = flow.families
    n = len(fams[0])
    anc = _ancestors(n, len(fams))
    top = fams[-1].beta
    out = digamma(top[anc[-1]]) - digamma(top.sum())
    for i in range(len(fams) - 1):
        b = fams[i].beta
        c = anc[i]
        sib = c ^ 1
        out = out + digamma(b[c]) - digamma(b[c] + b[sib])
    return out


def dirichlet_expected_loss(flow: DirichletFlow) -> float:
    return float(-np.dot(flow.alpha, dirichlet_expected_log(flow)))


def dirichlet_solve_lambda(alpha, s: SigmaSchedule, mu: float, levels: int, tol: float = 1e-12) -> float:
    """Positive multiplier with expected loss ``mu`` (bracketed, then Brent)."""

    def g(lam):
        return dirichlet_expected_loss(dirichlet_flow(alpha, lam, s, levels)) - mu

    lo, hi = 1.0, 1.0
    while g(lo) < 0.0:
        lo *= 0.5
        if lo < 1e-12:
            raise _infeasible(mu)
    while g(hi) > 0.0:
        hi *= 2.0
        if hi > 1e12:
            raise _infeasible(mu)
    if lo == hi:
        return lo
    return optimize.brentq(g, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps)


def _infeasible(mu):
    return InfeasibleConstraintError(f"mu={mu!r} is not reachable by any positive multiplier")


def dirichlet_hierarchical_sample(flow: DirichletFlow, seed: int, count: int) -> np.ndarray:
    """Draw finest-level points from the optimal joint, coarse to fine."""
    fams = flow.families
    n = len(fams[0])
    if count == 0:
        return np.empty((0, n))

    def draw(rng, size):
        g = rng.standard_gamma(fams[-1].beta, size=(size, len(fams[-1])))
        x = g / g.sum(axis=1, keepdims=True)
        for fam in reversed(fams[:-1]):
            b = fam.beta
            frac = rng.beta(b[0::2], b[1::2], size=(size, b.size // 2))
            fine = np.empty((size, b.size))
            fine[:, 0::2] = x * frac
            fine[:, 1::2] = x * (1.0 - frac)
            x = fine
        return x

    return blocked_draws(seed, count, draw, n)
