"""Brute-force and numerical reference computations.

These are deliberately slow and direct. None of them call the solver
kernels they are used to check (escort, Schur flow, theta flow); they only
share data-layout helpers such as the spin index encoding.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from .core import SigmaSchedule, TabularDistribution, TransformChain, spin_table
from .errors import ContractError, SingularBlockError

MAX_ASCENT_SIZE = 256
MAX_DENSE_SIZE = 256
MAX_ENUM_SPINS = 16


# --------------------------------------------------------------------------
# generic
# --------------------------------------------------------------------------


def finite_diff(f: Callable[[float], float], x: float, h: float = 1e-5) -> float:
    """Central difference ``(f(x+h) - f(x-h)) / 2h``."""
    return (f(x + h) - f(x - h)) / (2.0 * h)


@dataclass(frozen=True)
class AscentResult:
    dist: TabularDistribution
    objective: float
    iterations: int
    converged: bool


def projected_ascent_maxent(L, chain: TransformChain, s: SigmaSchedule, lam: float,
                            iters: int = 200_000, step: float | None = None,
                            tol: float = 1e-15) -> AscentResult:
    """Maximize ``sum_i s_i H(level i) - lam E[L]`` by entropic mirror ascent.

    The default step ``1 / sum(s)`` is the inverse relative-smoothness
    constant of the objective with respect to negative entropy, which makes
    the iteration monotone. Convergence requires both the objective change
    and the largest log-probability change to settle.
    """
    L = np.asarray(L, dtype=float)
    n = L.size
    if n > MAX_ASCENT_SIZE:
        raise ContractError(f"ascent oracle limited to {MAX_ASCENT_SIZE} outcomes")
    maps = [np.arange(n)]
    for st in chain.steps:
        maps.append(np.asarray(st.map)[maps[-1]])
    sig = np.asarray(s.sigma, dtype=float)
    eta = step if step is not None else 1.0 / sig.sum()

    def evaluate(logp):
        p = np.exp(logp)
        grad = -lam * L
        obj = -lam * float(p @ L)
        for w, mp in zip(sig, maps):
            m = np.bincount(mp, weights=p)
            with np.errstate(divide="ignore"):
                lm = np.log(m)
            grad = grad - w * (lm[mp] + 1.0)
            pos = m > 0
            obj -= w * float(m[pos] @ lm[pos])
        return obj, grad

    logp = np.full(n, -math.log(n))
    obj, grad = evaluate(logp)
    for it in range(1, iters + 1):
        new = logp + eta * grad
        new -= logsumexp(new)
        new_obj, grad = evaluate(new)
        delta_p = np.max(np.abs(new - logp))
        delta_obj = abs(new_obj - obj)
        logp, obj = new, new_obj
        if delta_obj <= tol and delta_p <= 1e-11:
            return AscentResult(TabularDistribution.from_weights(np.exp(logp)), obj, it, True)
    return AscentResult(TabularDistribution.from_weights(np.exp(logp)), obj, iters, False)


# --------------------------------------------------------------------------
# gaussian
# --------------------------------------------------------------------------


def dense_modular(A, B, m: int) -> np.ndarray:
    """Assemble the block matrix with A on the diagonal, B below and B^T above."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    k = A.shape[0]
    M = np.empty((m * k, m * k))
    for r in range(m):
        for c in range(m):
            blk = A if r == c else (B if r > c else B.T)
            M[r * k:(r + 1) * k, c * k:(c + 1) * k] = blk
    return M


def dense_gaussian_marginal(A, B, k: int, m: int, drop_last: int) -> np.ndarray:
    """Precision of the leading ``m - drop_last`` blocks by inverting the full matrix."""
    if m * k > MAX_DENSE_SIZE:
        raise ContractError(f"dense oracle limited to {MAX_DENSE_SIZE} rows")
    if not 0 <= drop_last < m:
        raise ContractError("drop_last must be in [0, m)")
    M = dense_modular(A, B, m)
    try:
        cov = np.linalg.inv(M)
        keep = (m - drop_last) * k
        return np.linalg.inv(cov[:keep, :keep])
    except np.linalg.LinAlgError as exc:
        raise SingularBlockError(str(exc)) from exc


@dataclass(frozen=True)
class DenseGaussianRoute:
    """Level precisions and normalizers computed by dense marginalization.

    All precisions use the ``exp(-x^T M x)`` convention.
    """

    level_precisions: list
    level_logZ: list
    joint_precision: np.ndarray

    @property
    def joint_covariance(self) -> np.ndarray:
        return np.linalg.inv(2.0 * self.joint_precision)


def _logdet(M):
    sign, val = np.linalg.slogdet(M)
    if sign <= 0:
        raise SingularBlockError("matrix is not positive definite")
    return val


def dense_gaussian_route(A, B, k: int, d: int, s: SigmaSchedule, lam: float) -> DenseGaussianRoute:
    """Run the renormalization loop on full precision matrices for a quadratic loss."""
    sb = s.sigma_bar
    M = (lam / s.sigma[0]) * dense_modular(A, B, d)
    n = k * d
    precs = [M]
    logz = [0.5 * n * math.log(math.pi) - 0.5 * _logdet(M)]
    for i in range(d - 1):
        n -= k
        marg = np.linalg.inv(np.linalg.inv(M)[:n, :n])
        r = sb[i] / sb[i + 1]
        ld = _logdet(marg)
        logz.append(r * (0.5 * ld - 0.5 * n * math.log(math.pi)) + 0.5 * n * math.log(math.pi)
                    - 0.5 * (n * math.log(r) + ld))
        M = r * marg
        precs.append(M)

    # joint precision: top level plus one completed square per conditional
    N = k * d
    W = np.zeros((N, N))
    top = precs[-1]
    W[:top.shape[0], :top.shape[0]] += top
    for Mi in precs[:-1]:
        size = Mi.shape[0]
        rest = size - k
        K = Mi[rest:, rest:]
        C = Mi[rest:, :rest]
        W[rest:size, rest:size] += K
        W[rest:size, :rest] += C
        W[:rest, rest:size] += C.T
        W[:rest, :rest] += C.T @ np.linalg.solve(K, C)
    return DenseGaussianRoute(precs, logz, W)


def gaussian_entropy(cov: np.ndarray) -> float:
    n = cov.shape[0]
    return 0.5 * (n * math.log(2.0 * math.pi * math.e) + _logdet(cov))


def dense_gaussian_objective(A, B, k: int, d: int, s: SigmaSchedule, lam: float) -> float:
    """``H_sigma - lam E[x^T Q x]`` evaluated at the dense-route joint, from covariances."""
    route = dense_gaussian_route(A, B, k, d, s, lam)
    cov = route.joint_covariance
    Q = dense_modular(A, B, d)
    total = -lam * float(np.trace(Q @ cov))
    for i, w in enumerate(s.sigma):
        keep = k * (d - i)
        total += w * gaussian_entropy(cov[:keep, :keep])
    return total


# --------------------------------------------------------------------------
# simplex quadrature
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class GridTable:
    x: np.ndarray
    probs: np.ndarray
    log_integral: float

    @property
    def integral(self) -> float:
        return math.exp(self.log_integral)


def _grid_from_log(x, logv, h):
    finite = np.isfinite(logv)
    top = logv[finite].max()
    w = np.where(finite, np.exp(np.where(finite, logv - top, 0.0)), 0.0)
    total = w.sum()
    return GridTable(x, w / total, top + math.log(total * h))


def simplex_grid_quadrature(log_density: Callable[[np.ndarray], np.ndarray], resolution: int) -> GridTable:
    """Midpoint-rule table of a density on the 1-simplex, parameterized by its first coordinate."""
    if resolution < 100:
        raise ContractError("resolution must be at least 100")
    x = (np.arange(resolution) + 0.5) / resolution
    return _grid_from_log(x, np.asarray(log_density(x), dtype=float), 1.0 / resolution)


def pair_pushforward_escort_grid(fine_log_density: Callable[[np.ndarray], np.ndarray], t: float,
                                 resolution: int = 2000, inner: int = 32) -> GridTable:
    """Push a density on the 3-simplex through ``(x1+x2, x3+x4)`` and raise it to ``t``.

    ``fine_log_density`` takes an (..., 4) array of simplex points. The fiber
    over ``y = (y1, 1-y1)`` is parameterized as ``(y1 u, y1 (1-u), y2 v,
    y2 (1-v))`` with Jacobian ``y1 y2``; the fiber integral uses an
    ``inner x inner`` midpoint grid in ``(u, v)``.
    """
    if resolution < 100:
        raise ContractError("resolution must be at least 100")
    y1 = (np.arange(resolution) + 0.5) / resolution
    y2 = 1.0 - y1
    u = (np.arange(inner) + 0.5) / inner
    uu, vv = np.meshgrid(u, u, indexing="ij")
    uu, vv = uu.ravel(), vv.ravel()
    logu = np.empty(resolution)
    rows = max(1, 2**18 // uu.size)
    for j0 in range(0, resolution, rows):
        a = y1[j0:j0 + rows, None]
        b = y2[j0:j0 + rows, None]
        pts = np.stack([a * uu, a * (1 - uu), b * vv, b * (1 - vv)], axis=-1)
        lv = fine_log_density(pts)
        logu[j0:j0 + rows] = logsumexp(lv, axis=1) - 2 * math.log(inner) + np.log(a[:, 0] * b[:, 0])
    return _grid_from_log(y1, t * logu, 1.0 / resolution)


def grid_tv(a: GridTable, b: GridTable) -> float:
    return 0.5 * float(np.abs(a.probs - b.probs).sum())


# --------------------------------------------------------------------------
# ising
# --------------------------------------------------------------------------


def cyclic_sums(n: int) -> np.ndarray:
    if n > MAX_ENUM_SPINS:
        raise ContractError(f"enumeration limited to {MAX_ENUM_SPINS} spins")
    x = spin_table(n).astype(np.int64)
    return (x * np.roll(x, -1, axis=1)).sum(axis=1)


def enumerate_ising(n: int, theta: float) -> TabularDistribution:
    """Exact table of ``exp(theta * sum_cyc x_j x_{j+1})`` over all 2**n states."""
    logw = theta * cyclic_sums(n)
    return TabularDistribution(np.exp(logw - logsumexp(logw)))


def brute_log_partition(n: int, theta: float) -> float:
    return float(logsumexp(theta * cyclic_sums(n)))


def brute_cyclic_energy(n: int, theta: float) -> float:
    S = cyclic_sums(n)
    return float(enumerate_ising(n, theta).probs @ S)


def enumerate_rg_ising(n: int, J: float, lam: float, s: SigmaSchedule):
    """rg-exact solve of the nearest-neighbor loss on the full 2**n table."""
    from .rg import run_rg

    if n > MAX_ENUM_SPINS:
        raise ContractError(f"enumeration limited to {MAX_ENUM_SPINS} spins")
    chain = TransformChain.even_spin_decimation(n, s.depth)
    loss = -J * cyclic_sums(n)
    return run_rg(loss, chain, s, lam), chain, loss


def fit_nearest_neighbor_theta(dist: TabularDistribution, n: int) -> tuple[float, float]:
    """Least-squares fit of ``log p = theta * S - c``; returns (theta, max abs residual)."""
    S = cyclic_sums(n).astype(float)
    logp = np.log(dist.probs)
    X = np.stack([S, np.ones_like(S)], axis=1)
    coef, *_ = np.linalg.lstsq(X, logp, rcond=None)
    resid = logp - X @ coef
    return float(coef[0]), float(np.max(np.abs(resid)))
