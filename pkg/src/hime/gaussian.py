"""Quadratic modular losses: the block Schur flow.

Densities follow the ``exp(-c * x^T T_m[A, B] x)`` convention (no 1/2),
where ``T_m[A, B]`` has ``A`` on its diagonal blocks, ``B`` below and
``B^T`` above. Dropping the last block of such a Gaussian leaves another
modular Gaussian with ``(A - B^T A^{-1} B, B - B^T A^{-1} B)``, so every level
of the renormalization loop is described by two k-by-k matrices.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from ._rng import blocked_draws
from .core import SigmaSchedule
from .errors import ContractError, SingularBlockError

DENSE_PD_LIMIT = 4096
SYM_TOL = 1e-12


def _as_block(M, k=None):
    M = np.asarray(M, dtype=float)
    if M.ndim == 0:
        M = M.reshape(1, 1)
    elif M.ndim == 1:
        side = math.isqrt(M.size) if k is None else k
        if side * side != M.size:
            raise ContractError(f"row-major block of length {M.size} is not square")
        M = M.reshape(side, side)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ContractError("blocks must be square matrices")
    if k is not None and M.shape[0] != k:
        raise ContractError(f"block is {M.shape[0]}x{M.shape[0]}, expected {k}x{k}")
    return M


def _factor(A):
    try:
        return linalg.cho_factor(A, lower=True, check_finite=True)
    except linalg.LinAlgError as exc:
        raise SingularBlockError(f"diagonal block is not positive definite: {exc}") from exc


def _logdet_chol(cf) -> float:
    return 2.0 * float(np.sum(np.log(np.diag(cf[0]))))


def assemble(A, B, m: int) -> np.ndarray:
    """Dense ``T_m[A, B]``."""
    k = A.shape[0]
    M = np.kron(np.tril(np.ones((m, m)), -1), B) + np.kron(np.triu(np.ones((m, m)), 1), B.T)
    M += np.kron(np.eye(m), A)
    return M.reshape(m * k, m * k)


def schur_step(A, B):
    """Parameters of the marginal after dropping the last block.

    ``A`` must be symmetric positive definite (it is a diagonal block of a
    positive definite matrix). ``A^{-1} B`` comes from a Cholesky solve.
    """
    A = _as_block(A)
    B = _as_block(B, A.shape[0])
    cf = _factor(A)
    S = B.T @ linalg.cho_solve(cf, B)
    S = 0.5 * (S + S.T)
    return A - S, B - S


def _flow_blocks(A, B, m):
    """A_1..A_m and B_1..B_m of the Schur recursion, plus log det of every A_j."""
    As, Bs, logdets = [A], [B], []
    for j in range(m):
        cf = _factor(As[-1])
        logdets.append(_logdet_chol(cf))
        if j == m - 1:
            break
        S = Bs[-1].T @ linalg.cho_solve(cf, Bs[-1])
        S = 0.5 * (S + S.T)
        As.append(As[-1] - S)
        Bs.append(Bs[-1] - S)
    return As, Bs, logdets


@dataclass(frozen=True, eq=False)
class ModularGaussian:
    """Zero-mean Gaussian with density proportional to ``exp(-coeff x^T T_m[A,B] x)``."""

    A: np.ndarray
    B: np.ndarray
    m: int
    coeff: float
    linear: np.ndarray | None = None

    def __post_init__(self):
        A = _as_block(self.A)
        B = _as_block(self.B, A.shape[0])
        if self.linear is not None and np.any(np.asarray(self.linear, dtype=float) != 0.0):
            raise ContractError(
                "linear loss terms are not supported; shift the variable to the mean first"
            )
        if np.max(np.abs(A - A.T), initial=0.0) > SYM_TOL * max(1.0, np.max(np.abs(A))):
            raise ContractError("A must be symmetric")
        if not (self.coeff > 0.0 and math.isfinite(self.coeff)):
            raise ContractError("coeff must be positive")
        if int(self.m) < 1:
            raise ContractError("m must be at least 1")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "m", int(self.m))
        object.__setattr__(self, "coeff", float(self.coeff))
        self._check_pd()

    def _check_pd(self):
        if self.m * self.k <= DENSE_PD_LIMIT:
            try:
                np.linalg.cholesky(assemble(self.A, self.B, self.m))
            except np.linalg.LinAlgError as exc:
                raise ContractError("assembled precision is not positive definite") from exc
        else:
            # T_m PD iff every block of the Schur recursion is PD
            try:
                _flow_blocks(self.A, self.B, self.m)
            except SingularBlockError as exc:
                raise ContractError("assembled precision is not positive definite") from exc

    @classmethod
    def _trusted(cls, A, B, m, coeff):
        obj = object.__new__(cls)
        for name, val in (("A", A), ("B", B), ("m", m), ("coeff", coeff), ("linear", None)):
            object.__setattr__(obj, name, val)
        return obj

    @property
    def k(self) -> int:
        return self.A.shape[0]

    def precision(self) -> np.ndarray:
        """Dense ``coeff * T_m[A, B]``."""
        return self.coeff * assemble(self.A, self.B, self.m)


@dataclass(frozen=True, eq=False)
class GaussianFlowReport:
    levels: tuple[ModularGaussian, ...]
    level_logZ: tuple[float, ...]
    lam: float
    sigma: SigmaSchedule

    @property
    def log_partition(self) -> float:
        return float(np.dot(self.sigma.sigma_bar, self.level_logZ))

    def rows(self):
        """One dict per level: level, m, coeff, logZ, A and B row-major."""
        out = []
        for i, (lv, lz) in enumerate(zip(self.levels, self.level_logZ), start=1):
            row = {"level": i, "m": lv.m, "coeff": lv.coeff, "logZ": lz}
            row.update({f"A_{r + 1}{c + 1}": lv.A[r, c] for r in range(lv.k) for c in range(lv.k)})
            row.update({f"B_{r + 1}{c + 1}": lv.B[r, c] for r in range(lv.k) for c in range(lv.k)})
            out.append(row)
        return out


def gaussian_flow(A, B, k: int, d: int, s: SigmaSchedule, lam: float) -> GaussianFlowReport:
    """Per-level modular parameters and normalizers for the loss ``x^T T_d[A,B] x``."""
    if not lam > 0.0:
        raise ContractError("lambda must be positive for a Gaussian family")
    if s.depth != d:
        raise ContractError(f"sigma has {s.depth} levels, expected {d}")
    first = ModularGaussian(_as_block(A, k), _as_block(B, k), d, lam / s.sigma[0])
    As, Bs, logdets = _flow_blocks(first.A, first.B, d)
    sb = s.sigma_bar
    levels = tuple(
        ModularGaussian._trusted(As[i], Bs[i], d - i, lam / sb[i]) for i in range(d)
    )
    n = k * d
    logz = [0.5 * n * math.log(math.pi) - 0.5 * (n * math.log(lam / sb[0]) + sum(logdets))]
    for i in range(d - 1):
        n = k * (d - i - 1)
        r = sb[i] / sb[i + 1]
        # marginal U_i has precision (lam / sb_i) T_{d-i}[A_{i+1}, B_{i+1}]
        ld = n * math.log(lam / sb[i]) + sum(logdets[i + 1:])
        logz.append(0.5 * (r - 1.0) * ld + 0.5 * n * (1.0 - r) * math.log(math.pi) - 0.5 * n * math.log(r))
    return GaussianFlowReport(levels, tuple(logz), float(lam), s)


def gaussian_dlogZ(k: int, d: int, s: SigmaSchedule, lam: float) -> float:
    """Derivative in lambda of ``sum_i sigma_bar_i log Z_i`` (equals ``-E[x^T Q x]``)."""
    return -sum(k * (d - i) * s.sigma[i] for i in range(d)) / (2.0 * lam)


def gaussian_lambda_star(k: int, d: int, s: SigmaSchedule, mu: float) -> float:
    """Multiplier giving ``E[x^T Q x] = mu`` under the optimal joint."""
    if not mu > 0.0:
        raise ContractError("mu must be positive for a positive definite quadratic loss")
    if s.depth != d:
        raise ContractError(f"sigma has {s.depth} levels, expected {d}")
    return sum(k * (d - i) * s.sigma[i] for i in range(d)) / (2.0 * mu)


def gaussian_hierarchical_sample(report: GaussianFlowReport, seed: int, count: int) -> np.ndarray:
    """Draw ``count`` vectors of length k*d from the optimal joint.

    The coarsest level (one block) is drawn first; each finer level appends
    its last block from the conditional with precision ``2 c_i A_i`` and mean
    ``-A_i^{-1} B_i (sum of blocks drawn so far)``. The factor 2 converts the
    ``exp(-c x^T M x)`` convention into a standard precision.
    """
    d = len(report.levels)
    k = report.levels[0].k
    if count == 0:
        return np.empty((0, k * d))
    # per appended block: (cholesky of 2 c A, A^{-1} B)
    plan = []
    for i in range(d - 1, -1, -1):
        lv = report.levels[i]
        cf = _factor(2.0 * lv.coeff * lv.A)
        gain = linalg.cho_solve(_factor(lv.A), lv.B)
        plan.append((cf[0], gain))

    def draw(rng, size):
        z = rng.standard_normal((size, k * d))
        x = np.empty_like(z)
        for j, (chol, gain) in enumerate(plan):
            noise = linalg.solve_triangular(chol, z[:, j * k:(j + 1) * k].T, lower=True, trans="T").T
            if j == 0:
                x[:, :k] = noise
            else:
                acc = x[:, :j * k].reshape(size, j, k).sum(axis=1)
                x[:, j * k:(j + 1) * k] = noise - acc @ gain.T
        return x

    return blocked_draws(seed, count, draw, k * d)
