"""Nearest-neighbor losses on a periodic spin chain: the decimation flow.

Each level is a periodic chain with distribution proportional to
``exp(theta_i * sum_cyc x_j x_{j+1})``. Summing out every other spin and
escorting with exponent ``r = sigma_bar_i / sigma_bar_{i+1}`` gives
``theta_{i+1} = (r / 2) log cosh(2 theta_i)`` on half as many spins.

Spin configurations use the index encoding of :func:`hime.core.spin_table`
(bit j set means spin j is -1); positions are 0-based, so decimation keeps
positions 0, 2, 4, ...
"""
from __future__ import annotations

import logging
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from ._rng import blocked_draws
from .core import SigmaSchedule, TransformChain, spin_table
from .errors import ContractError

log = logging.getLogger(__name__)

THETA_CAP = 700.0
TABLE_SPINS = 16
MAGIC = b"HIME-ISING-1"


def _log2cosh(x):
    a = np.abs(x)
    return a + np.log1p(np.exp(-2.0 * a))


def log_cosh(x):
    # cosh x - 1 = 2 sinh^2(x/2) keeps full relative precision near zero
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 20.0
    xs = np.where(small, x, 0.0)
    out = np.where(small, np.log1p(2.0 * np.sinh(0.5 * xs) ** 2), _log2cosh(x) - math.log(2.0))
    return out if out.ndim else float(out)


def theta_step(theta: float, ratio: float) -> float:
    """Coupling after summing out every other spin and escorting with ``ratio``."""
    if not 0.0 < ratio <= 1.0:
        raise ContractError(f"ratio must lie in (0, 1], got {ratio!r}")
    return 0.5 * ratio * float(log_cosh(2.0 * theta))


@dataclass(frozen=True)
class IsingChain:
    n: int
    theta: float

    def __post_init__(self):
        if self.n < 4 or self.n & (self.n - 1):
            raise ContractError(f"spin count must be a power of two >= 4, got {self.n}")


@dataclass(frozen=True, eq=False)
class IsingFlow:
    J: float
    lam: float
    sigma: SigmaSchedule
    sizes: tuple[int, ...]
    thetas: tuple[float, ...]
    flags: tuple[str, ...] = field(default=())

    @property
    def levels(self) -> tuple[IsingChain, ...]:
        return tuple(IsingChain(n, t) for n, t in zip(self.sizes, self.thetas))

    @property
    def n(self) -> int:
        return self.sizes[0]


def ising_flow(J: float, lam: float, s: SigmaSchedule, levels: int, n: int | None = None) -> IsingFlow:
    """Coupling trajectory for loss ``-J sum_cyc x_j x_{j+1}`` on ``n`` spins.

    ``n`` defaults to ``2**(levels+1)``, the smallest chain whose coarsest
    level keeps four spins.
    """
    if s.depth != levels:
        raise ContractError(f"sigma has {s.depth} levels, expected {levels}")
    if n is None:
        n = 2 ** (levels + 1)
    if n < 4 or n & (n - 1):
        raise ContractError(f"spin count must be a power of two >= 4, got {n}")
    if n >> (levels - 1) < 4:
        raise ContractError(f"{n} spins cannot be halved {levels - 1} times and keep 4 spins")
    flags = []
    theta = lam * J / s.sigma[0]
    thetas = []
    for i in range(levels):
        if i:
            theta = theta_step(theta, float(s.ratios[i - 1]))
        if abs(theta) > THETA_CAP:
            theta = math.copysign(THETA_CAP, theta)
            if "theta-capped" not in flags:
                flags.append("theta-capped")
                log.warning("coupling capped at %g", THETA_CAP)
        thetas.append(float(theta))
    sizes = tuple(n >> i for i in range(levels))
    return IsingFlow(float(J), float(lam), s, sizes, tuple(thetas), tuple(flags))


def transfer_log_partition(n: int, theta: float) -> float:
    """``log[(2 cosh theta)^n + (2 sinh theta)^n]`` for the periodic chain."""
    if n < 3:
        raise ContractError("periodic chain needs at least 3 spins")
    return float(n * _log2cosh(theta) + math.log1p(math.tanh(theta) ** n))


def cyclic_energy_expectation(n: int, theta: float) -> float:
    """E[sum_cyc x_j x_{j+1}]: derivative of :func:`transfer_log_partition` in theta."""
    if n < 3:
        raise ContractError("periodic chain needs at least 3 spins")
    t = math.tanh(theta)
    tn = t**n
    return n * t + n * t ** (n - 1) * (1.0 - t * t) / (1.0 + tn)


def ising_level_log_normalizers(flow: IsingFlow) -> tuple[float, ...]:
    """Per-level normalizers ``log Z_i`` of the renormalization loop.

    Summing out the even spins of level i contributes the constant
    ``(2 cosh^{1/2}(2 theta_i))^{n_i/2}``; the escort then raises the
    normalized marginal to ``r`` and renormalizes on ``n_i/2`` spins.
    """
    out = [transfer_log_partition(flow.sizes[0], flow.thetas[0])]
    for i, r in enumerate(flow.sigma.ratios):
        n_i, th = flow.sizes[i], flow.thetas[i]
        log_const = 0.5 * n_i * (math.log(2.0) + 0.5 * float(log_cosh(2.0 * th)))
        out.append(float(r) * (log_const - transfer_log_partition(n_i, th))
                   + transfer_log_partition(flow.sizes[i + 1], flow.thetas[i + 1]))
    return tuple(out)


def ising_log_partition(flow: IsingFlow) -> float:
    return float(np.dot(flow.sigma.sigma_bar, ising_level_log_normalizers(flow)))


def ising_expected_loss(flow: IsingFlow) -> float:
    """E[L] under the optimal joint as ``-d/dlam`` of the weighted log-partition."""
    s = flow.sigma
    dtheta = flow.J / s.sigma[0]
    grads = [cyclic_energy_expectation(flow.sizes[0], flow.thetas[0]) * dtheta]
    for i, r in enumerate(s.ratios):
        n_i, th = flow.sizes[i], flow.thetas[i]
        dhalf = math.tanh(2.0 * th) * dtheta
        dnext = float(r) * dhalf
        g = float(r) * (0.5 * n_i * dhalf - cyclic_energy_expectation(n_i, th) * dtheta)
        g += cyclic_energy_expectation(flow.sizes[i + 1], flow.thetas[i + 1]) * dnext
        grads.append(g)
        dtheta = dnext
    return -float(np.dot(s.sigma_bar, grads))


def _exact_expected_loss(J, lam, s, n):
    from .rg import run_rg

    chain = TransformChain.even_spin_decimation(n, s.depth)
    x = spin_table(n).astype(np.int64)
    loss = -J * (x * np.roll(x, -1, axis=1)).sum(axis=1)
    return run_rg(loss, chain, s, lam).expected_loss


def solve_lambda_ising(J: float, s: SigmaSchedule, mu: float, n: int, levels: int, tol: float = 1e-10):
    """Multiplier with ``E[L] = mu``; exact table for n <= 16, analytic otherwise.

    Returns ``(lambda_star, flags)``.
    """
    from .rg import bracket_and_bisect

    ising_flow(J, 0.0, s, levels, n)  # validates sizes
    if n <= TABLE_SPINS:
        def g(lam):
            return _exact_expected_loss(J, lam, s, n) - mu
    else:
        def g(lam):
            return ising_expected_loss(ising_flow(J, lam, s, levels, n)) - mu
    return bracket_and_bisect(g, tol)


# --------------------------------------------------------------------------
# sampling
# --------------------------------------------------------------------------


def _sample_table(n, theta, rng, size):
    x = spin_table(n)
    S = (x.astype(np.int64) * np.roll(x, -1, axis=1)).sum(axis=1)
    logw = theta * S
    p = np.exp(logw - logw.max())
    cdf = np.cumsum(p)
    cdf /= cdf[-1]
    idx = np.searchsorted(cdf, rng.random(size), side="right")
    return x[np.minimum(idx, cdf.size - 1)]


def _sample_transfer(n, theta, rng, size):
    """Sequential exact sampling of a periodic chain through transfer-matrix powers."""
    x = np.empty((size, n), dtype=np.int8)
    x[:, 0] = np.where(rng.random(size) < 0.5, 1, -1)
    t = math.tanh(theta)
    for j in range(1, n):
        tail = t ** (n - j)
        prev = x[:, j - 1].astype(float)
        first = x[:, 0].astype(float)
        # log weight of x_j = s: theta*prev*s + log(1 + s*first*tail)
        with np.errstate(divide="ignore"):
            lp = theta * prev + np.log1p(first * tail)
            lm = -theta * prev + np.log1p(-first * tail)
        p_plus = 1.0 / (1.0 + np.exp(np.clip(lm - lp, -745, 745)))
        x[:, j] = np.where(rng.random(size) < p_plus, 1, -1)
    return x


def ising_hierarchical_sample(flow: IsingFlow, seed: int, count: int) -> np.ndarray:
    """Draw spin configurations from the optimal joint without rejection.

    The coarsest chain is sampled exactly; each finer level then inserts its
    odd-position spins independently given their two coarse neighbours,
    ``P(+1 | s) = e^{theta_i s} / (e^{theta_i s} + e^{-theta_i s})`` with the
    finer level's coupling ``theta_i``.
    """
    n = flow.sizes[0]
    if count == 0:
        return np.empty((0, n), dtype=np.int8)
    top_n, top_theta = flow.sizes[-1], flow.thetas[-1]

    def draw(rng, size):
        if top_n <= TABLE_SPINS:
            x = _sample_table(top_n, top_theta, rng, size)
        else:
            x = _sample_transfer(top_n, top_theta, rng, size)
        for n_i, th in zip(reversed(flow.sizes[:-1]), reversed(flow.thetas[:-1])):
            fine = np.empty((size, n_i), dtype=np.int8)
            fine[:, 0::2] = x
            field_ = x.astype(float) + np.roll(x, -1, axis=1)
            p_plus = 1.0 / (1.0 + np.exp(-2.0 * th * field_))
            fine[:, 1::2] = np.where(rng.random(x.shape) < p_plus, 1, -1)
            x = fine
        return x

    return blocked_draws(seed, count, draw, n)


def binary_bytes(spins: np.ndarray) -> bytes:
    """Bit-packed samples: magic, little-endian uint32 n and uint64 count, then rows.

    Each row holds ceil(n/8) bytes; bit j (little-endian within the row) is
    set when spin j is -1.
    """
    spins = np.asarray(spins)
    if spins.ndim != 2:
        raise ContractError("samples must be a (count, n) array")
    count, n = spins.shape
    head = MAGIC + struct.pack("<IQ", n, count)
    if count == 0:
        return head
    return head + np.packbits(spins < 0, axis=1, bitorder="little").tobytes()


def write_binary(path, spins: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(binary_bytes(spins))


def parse_binary(data: bytes) -> np.ndarray:
    if not data.startswith(MAGIC):
        raise ContractError("not a HIME-ISING-1 file")
    off = len(MAGIC)
    n, count = struct.unpack_from("<IQ", data, off)
    off += struct.calcsize("<IQ")
    width = -(-n // 8)
    if len(data) != off + width * count:
        raise ContractError(f"expected {width * count} payload bytes, found {len(data) - off}")
    raw = np.frombuffer(data, dtype=np.uint8, offset=off, count=width * count).reshape(count, width)
    bits = np.unpackbits(raw, axis=1, count=n, bitorder="little")
    return (1 - 2 * bits.astype(np.int8)).astype(np.int8)


def read_binary(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return parse_binary(fh.read())
