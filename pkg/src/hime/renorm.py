"""Escort and generalized escort operators on tabular distributions."""
from __future__ import annotations

import math

import numpy as np

from .core import TabularDistribution
from .errors import ContractError, DegenerateSupportError

DISJOINT_Z = 1e-300


def _log(p: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(p)


def _normalize_log(logw: np.ndarray):
    """Return (probabilities, log of the total) for log-weights that may contain -inf."""
    finite = np.isfinite(logw)
    if not finite.any():
        return None, -math.inf
    top = logw[finite].max()
    w = np.where(finite, np.exp(np.where(finite, logw - top, 0.0)), 0.0)
    total = w.sum()
    return w / total, top + math.log(total)


def escort(P: TabularDistribution, theta: float):
    """Normalized power ``p**theta / Z`` together with ``Z``.

    Powers are taken in log space; outcomes with zero probability stay zero.
    """
    if not (theta > 0.0 and math.isfinite(theta)):
        raise ContractError(f"escort exponent must be positive and finite, got {theta!r}")
    probs, logz = _normalize_log(theta * _log(P.probs))
    return TabularDistribution(probs), math.exp(logz)


def log_escort(P: TabularDistribution, theta: float):
    """Like :func:`escort` but returns ``log Z`` (no overflow for large exponents)."""
    if not (theta > 0.0 and math.isfinite(theta)):
        raise ContractError(f"escort exponent must be positive and finite, got {theta!r}")
    probs, logz = _normalize_log(theta * _log(P.probs))
    return TabularDistribution(probs), logz


def log_generalized_escort(P1: TabularDistribution, P2: TabularDistribution, theta: float):
    """Geometric interpolation ``p1**theta * p2**(1-theta)``, normalized; returns ``log Z``."""
    if P1.n != P2.n:
        raise ContractError(f"size mismatch: {P1.n} vs {P2.n}")
    if not 0.0 <= theta <= 1.0:
        raise ContractError(f"theta must lie in [0, 1], got {theta!r}")
    # exact endpoints: 0 * log 0 must not poison the other factor
    if theta == 1.0:
        logw = _log(P1.probs)
    elif theta == 0.0:
        logw = _log(P2.probs)
    else:
        logw = theta * _log(P1.probs) + (1.0 - theta) * _log(P2.probs)
    probs, logz = _normalize_log(logw)
    if probs is None or logz < math.log(DISJOINT_Z):
        raise DegenerateSupportError("generalized escort of distributions with disjoint supports")
    return TabularDistribution(probs), logz


def generalized_escort(P1: TabularDistribution, P2: TabularDistribution, theta: float):
    Q, logz = log_generalized_escort(P1, P2, theta)
    return Q, math.exp(logz)
