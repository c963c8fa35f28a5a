"""Finite outcome spaces: sigma schedules, coarse-graining chains, tables.

Every object here is immutable once built. Probability vectors are stored
as read-only float64 numpy arrays; coarse-graining maps as read-only int64
index arrays. Structured maps (block decimation, adjacent pair sums, even
spin decimation) are expanded into explicit index maps when constructed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ContractError

NORM_TOL = 1e-12


def _frozen(arr):
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


# --------------------------------------------------------------------------
# sigma schedules
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SigmaSchedule:
    """Positive per-level weights and their running sums."""

    sigma: tuple[float, ...]

    def __post_init__(self):
        values = tuple(float(s) for s in self.sigma)
        if not values:
            raise ContractError("sigma schedule must have at least one level")
        for i, s in enumerate(values):
            if not (math.isfinite(s) and s > 0.0):
                raise ContractError(f"sigma[{i}]={s!r} must be a positive finite number")
        object.__setattr__(self, "sigma", values)

    @classmethod
    def parse(cls, text: str) -> "SigmaSchedule":
        return cls(tuple(float(tok) for tok in text.split(",") if tok.strip()))

    @classmethod
    def equal(cls, depth: int, value: float = 1.0) -> "SigmaSchedule":
        return cls((value,) * depth)

    @property
    def depth(self) -> int:
        return len(self.sigma)

    @property
    def sigma_bar(self) -> np.ndarray:
        return np.cumsum(self.sigma)

    @property
    def ratios(self) -> np.ndarray:
        """Escort exponents sigma_bar[i] / sigma_bar[i+1], one per transform."""
        sb = self.sigma_bar
        return sb[:-1] / sb[1:]

    def scaled(self, c: float) -> "SigmaSchedule":
        return SigmaSchedule(tuple(c * s for s in self.sigma))

    def __len__(self):
        return len(self.sigma)


# --------------------------------------------------------------------------
# tabular distributions
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TabularDistribution:
    """Probability vector over ``range(n)``.

    Construction accepts vectors whose total is within ``NORM_TOL`` of one
    and renormalizes them; anything further off is rejected. Use
    :meth:`from_weights` for unnormalized nonnegative weights.
    """

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise ContractError("probs must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(p)):
            raise ContractError("probs must be finite")
        if np.any(p < 0.0):
            raise ContractError(f"negative probability at index {int(np.argmin(p))}")
        total = math.fsum(p)
        if abs(total - 1.0) > NORM_TOL:
            raise ContractError(f"probabilities sum to {total!r}, not 1 within {NORM_TOL}")
        object.__setattr__(self, "probs", _frozen(p / total))

    @classmethod
    def from_weights(cls, weights) -> "TabularDistribution":
        w = np.asarray(weights, dtype=float)
        if np.any(w < 0.0) or not np.all(np.isfinite(w)):
            raise ContractError("weights must be finite and nonnegative")
        total = w.sum()
        if not total > 0.0:
            raise ContractError("weights have zero total mass")
        return cls(w / total)

    @classmethod
    def uniform(cls, n: int) -> "TabularDistribution":
        return cls(np.full(n, 1.0 / n))

    @classmethod
    def point_mass(cls, n: int, index: int) -> "TabularDistribution":
        p = np.zeros(n)
        p[index] = 1.0
        return cls(p)

    @property
    def n(self) -> int:
        return self.probs.size

    def __len__(self):
        return self.probs.size

    def to_json(self) -> dict:
        return {"n": self.n, "probs": self.probs.tolist()}

    @classmethod
    def from_json(cls, doc, exact: bool = False) -> "TabularDistribution":
        """Parse ``{"n", "probs"}`` or a bare list.

        With ``exact`` the validated values are stored as given, without the
        renormalizing division, so serialized tables re-ingest bit for bit.
        """
        if isinstance(doc, dict):
            unknown = set(doc) - {"n", "probs"}
            if unknown:
                raise ContractError(f"unknown distribution fields {sorted(unknown)}")
            if "probs" not in doc:
                raise ContractError("distribution needs 'probs'")
            probs = doc["probs"]
            if "n" in doc and int(doc["n"]) != len(probs):
                raise ContractError("n does not match length of probs")
        else:
            probs = doc
        dist = cls(probs)
        if exact:
            object.__setattr__(dist, "probs", _frozen(np.asarray(probs, dtype=float)))
        return dist


# --------------------------------------------------------------------------
# coarse-graining maps
# --------------------------------------------------------------------------


def compositions(parts: int, total: int) -> list[tuple[int, ...]]:
    """All tuples of ``parts`` nonnegative integers summing to ``total``, lexicographic."""
    if parts == 1:
        return [(total,)]
    out = []
    for first in range(total + 1):
        for rest in compositions(parts - 1, total - first):
            out.append((first,) + rest)
    return out


def spin_table(n: int) -> np.ndarray:
    """(2**n, n) array of +-1 spins; bit j of the index set means spin j is -1."""
    idx = np.arange(2**n, dtype=np.int64)
    bits = (idx[:, None] >> np.arange(n, dtype=np.int64)) & 1
    return (1 - 2 * bits).astype(np.int8)


def spin_index(spins) -> np.ndarray:
    """Inverse of :func:`spin_table` for an (m, n) array of +-1 spins."""
    spins = np.atleast_2d(np.asarray(spins))
    bits = (spins < 0).astype(np.int64)
    return (bits << np.arange(spins.shape[1], dtype=np.int64)).sum(axis=1)


def _block_decimation_map(alphabet: int, block_size: int, blocks: int):
    if alphabet < 1 or block_size < 1 or blocks < 2:
        raise ContractError("block-decimation needs alphabet>=1, block_size>=1, blocks>=2")
    radix = alphabet**block_size
    dom = radix**blocks
    return np.arange(dom, dtype=np.int64) // radix, radix ** (blocks - 1)


def _pair_sum_map(components: int, total: int):
    if components < 2 or components % 2:
        raise ContractError("adjacent-pair-sum needs an even number of components >= 2")
    fine = compositions(components, total)
    coarse = compositions(components // 2, total)
    lookup = {c: i for i, c in enumerate(coarse)}
    mp = [lookup[tuple(c[2 * j] + c[2 * j + 1] for j in range(components // 2))] for c in fine]
    return np.asarray(mp, dtype=np.int64), len(coarse)


def _even_spin_map(n: int):
    if n < 2 or n % 2:
        raise ContractError("even-spin-decimation needs an even spin count >= 2")
    idx = np.arange(2**n, dtype=np.int64)
    keep = np.arange(0, n, 2, dtype=np.int64)
    kept_bits = (idx[:, None] >> keep) & 1
    return (kept_bits << np.arange(n // 2, dtype=np.int64)).sum(axis=1), 2 ** (n // 2)


_TAGS = {
    "block-decimation": lambda p: _block_decimation_map(
        int(p["alphabet"]), int(p["block_size"]), int(p["blocks"])
    ),
    "adjacent-pair-sum": lambda p: _pair_sum_map(int(p["components"]), int(p["total"])),
    "even-spin-decimation": lambda p: _even_spin_map(int(p["n"])),
}


@dataclass(frozen=True, eq=False)
class TransformStep:
    """Deterministic map ``range(domain_size) -> range(codomain_size)``."""

    map: np.ndarray
    codomain_size: int
    tag: dict | None = field(default=None, compare=False)

    def __post_init__(self):
        mp = np.asarray(self.map)
        if mp.ndim != 1 or mp.size == 0:
            raise ContractError("map must be a non-empty 1-D index array")
        if not np.issubdtype(mp.dtype, np.integer):
            if not np.all(np.equal(np.mod(mp, 1), 0)):
                raise ContractError("map entries must be integers")
        mp = mp.astype(np.int64)
        size = int(self.codomain_size)
        if size < 1:
            raise ContractError("codomain_size must be positive")
        if mp.min() < 0 or mp.max() >= size:
            raise ContractError(f"map values must lie in [0, {size})")
        object.__setattr__(self, "map", _frozen(mp))
        object.__setattr__(self, "codomain_size", size)

    @classmethod
    def identity(cls, n: int) -> "TransformStep":
        return cls(np.arange(n), n)

    @classmethod
    def from_tag(cls, tag: str, **params) -> "TransformStep":
        if tag not in _TAGS:
            raise ContractError(f"unknown transform tag {tag!r}; expected one of {sorted(_TAGS)}")
        mp, size = _TAGS[tag](params)
        return cls(mp, size, tag={"tag": tag, **params})

    @property
    def domain_size(self) -> int:
        return self.map.size

    def preimage(self, y: int) -> np.ndarray:
        return np.flatnonzero(self.map == y)

    def to_json(self):
        if self.tag is not None:
            return dict(self.tag)
        return self.map.tolist()


@dataclass(frozen=True)
class TransformChain:
    """Sequence of coarse-graining steps; ``depth`` counts levels, not steps."""

    steps: tuple[TransformStep, ...] = ()
    finest_size: int | None = None

    def __post_init__(self):
        steps = tuple(self.steps)
        if not steps and self.finest_size is None:
            raise ContractError("an empty chain needs an explicit finest_size")
        if steps and self.finest_size is not None and steps[0].domain_size != self.finest_size:
            raise ContractError("finest_size disagrees with the first step's domain")
        for i in range(len(steps) - 1):
            if steps[i].codomain_size != steps[i + 1].domain_size:
                raise ContractError(
                    f"step {i} codomain ({steps[i].codomain_size}) != step {i + 1} "
                    f"domain ({steps[i + 1].domain_size})"
                )
        object.__setattr__(self, "steps", steps)
        if steps:
            object.__setattr__(self, "finest_size", steps[0].domain_size)

    @property
    def depth(self) -> int:
        return len(self.steps) + 1

    @property
    def sizes(self) -> tuple[int, ...]:
        return (self.finest_size,) + tuple(s.codomain_size for s in self.steps)

    def level_maps(self) -> list[np.ndarray]:
        """Index map from the finest space to every level (level 1 is the identity)."""
        mp = np.arange(self.finest_size, dtype=np.int64)
        out = [mp]
        for step in self.steps:
            mp = step.map[mp]
            out.append(mp)
        return out

    # structured constructors --------------------------------------------

    @classmethod
    def even_spin_decimation(cls, n: int, levels: int) -> "TransformChain":
        steps = []
        for _ in range(levels - 1):
            steps.append(TransformStep.from_tag("even-spin-decimation", n=n))
            n //= 2
        return cls(tuple(steps), finest_size=None if steps else 2**n)

    @classmethod
    def pair_sum(cls, components: int, total: int, levels: int) -> "TransformChain":
        steps = []
        for _ in range(levels - 1):
            steps.append(TransformStep.from_tag("adjacent-pair-sum", components=components, total=total))
            components //= 2
        return cls(tuple(steps), finest_size=None if steps else len(compositions(components, total)))

    @classmethod
    def block_decimation(cls, alphabet: int, block_size: int, blocks: int, levels: int) -> "TransformChain":
        steps = []
        for _ in range(levels - 1):
            steps.append(
                TransformStep.from_tag("block-decimation", alphabet=alphabet, block_size=block_size, blocks=blocks)
            )
            blocks -= 1
        return cls(tuple(steps), finest_size=None if steps else (alphabet**block_size) ** blocks)

    @classmethod
    def from_maps(cls, maps: Sequence, sizes: Sequence[int] | None = None) -> "TransformChain":
        """Build from explicit index arrays and/or ``{"tag": ..., **params}`` dicts."""
        steps = []
        for i, m in enumerate(maps):
            if isinstance(m, dict):
                params = dict(m)
                tag = params.pop("tag", None)
                if tag is None:
                    raise ContractError(f"map {i}: structured step needs a 'tag'")
                steps.append(TransformStep.from_tag(tag, **params))
            else:
                if sizes is not None and len(sizes) > i + 1:
                    size = int(sizes[i + 1])
                else:
                    size = int(max(m)) + 1
                steps.append(TransformStep(np.asarray(m), size))
        finest = None
        if sizes is not None:
            if len(sizes) != len(steps) + 1:
                raise ContractError("sizes must list one entry per level")
            finest = int(sizes[0])
            for step, (dom, cod) in zip(steps, zip(sizes[:-1], sizes[1:])):
                if step.domain_size != int(dom) or step.codomain_size != int(cod):
                    raise ContractError("sizes disagree with the supplied maps")
        return cls(tuple(steps), finest_size=finest)

    def to_json(self) -> dict:
        return {"sizes": list(self.sizes), "maps": [s.to_json() for s in self.steps]}

    @classmethod
    def from_json(cls, doc) -> "TransformChain":
        if isinstance(doc, dict):
            unknown = set(doc) - {"sizes", "maps"}
            if unknown:
                raise ContractError(f"unknown chain fields {sorted(unknown)}")
            return cls.from_maps(doc.get("maps", []), doc.get("sizes"))
        return cls.from_maps(doc)


# --------------------------------------------------------------------------
# conditionals
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ConditionalTable:
    """Fine-given-coarse kernel for one step: ``weights[x] = P(x | map(x))``."""

    step: TransformStep
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (self.step.domain_size,):
            raise ContractError("conditional weights must match the step's domain")
        object.__setattr__(self, "weights", _frozen(w))

    def row(self, y: int) -> TabularDistribution:
        """Conditional over the preimage of ``y`` (preimage listed in increasing order)."""
        return TabularDistribution(self.weights[self.step.preimage(y)])


# --------------------------------------------------------------------------
# operations
# --------------------------------------------------------------------------


def _check_domain(P: TabularDistribution, step: TransformStep):
    if P.n != step.domain_size:
        raise ContractError(f"distribution has {P.n} outcomes but step domain is {step.domain_size}")


def _push(p: np.ndarray, step: TransformStep) -> np.ndarray:
    return np.bincount(step.map, weights=p, minlength=step.codomain_size)


def pushforward(P: TabularDistribution, step: TransformStep) -> TabularDistribution:
    _check_domain(P, step)
    return TabularDistribution.from_weights(_push(P.probs, step))


def entropy(P: TabularDistribution) -> float:
    p = P.probs[P.probs > 0.0]
    return float(-np.dot(p, np.log(p)))


def kl(P: TabularDistribution, Q: TabularDistribution) -> float:
    """Relative entropy in nats; ``math.inf`` when P is not dominated by Q."""
    if P.n != Q.n:
        raise ContractError(f"size mismatch: {P.n} vs {Q.n}")
    mask = P.probs > 0.0
    p, q = P.probs[mask], Q.probs[mask]
    if np.any(q == 0.0):
        return math.inf
    return float(np.dot(p, np.log(p) - np.log(q)))


def disintegrate(P: TabularDistribution, step: TransformStep):
    """Split ``P`` into its pushforward and the fine-given-coarse kernel.

    Coarse outcomes with zero mass get the uniform kernel over their preimage.
    """
    _check_domain(P, step)
    coarse = _push(P.probs, step)
    mass = coarse[step.map]
    counts = np.bincount(step.map, minlength=step.codomain_size)
    with np.errstate(invalid="ignore", divide="ignore"):
        w = np.where(mass > 0.0, P.probs / np.where(mass > 0.0, mass, 1.0), 1.0 / counts[step.map])
    return TabularDistribution.from_weights(coarse), ConditionalTable(step, w)


def compose(coarse: TabularDistribution, cond: ConditionalTable) -> TabularDistribution:
    if coarse.n != cond.step.codomain_size:
        raise ContractError("coarse distribution does not match the kernel's codomain")
    return TabularDistribution.from_weights(coarse.probs[cond.step.map] * cond.weights)


def level_marginals(P: TabularDistribution, chain: TransformChain) -> list[TabularDistribution]:
    if P.n != chain.finest_size:
        raise ContractError(f"distribution has {P.n} outcomes, chain expects {chain.finest_size}")
    out = [P]
    for step in chain.steps:
        out.append(pushforward(out[-1], step))
    return out


def _check_sigma(chain: TransformChain, s: SigmaSchedule):
    if s.depth != chain.depth:
        raise ContractError(f"sigma has {s.depth} levels but the chain has {chain.depth}")


def hierarchical_entropy(P: TabularDistribution, chain: TransformChain, s: SigmaSchedule) -> float:
    _check_sigma(chain, s)
    return float(sum(w * entropy(m) for w, m in zip(s.sigma, level_marginals(P, chain))))


def hierarchical_kl(P, Q, chain: TransformChain, s: SigmaSchedule) -> float:
    _check_sigma(chain, s)
    terms = [kl(a, b) for a, b in zip(level_marginals(P, chain), level_marginals(Q, chain))]
    if any(math.isinf(t) for t in terms):
        return math.inf
    return float(sum(w * t for w, t in zip(s.sigma, terms)))


def conditional_entropy(P: TabularDistribution, step: TransformStep) -> float:
    """H(fine | coarse) under P."""
    coarse, cond = disintegrate(P, step)
    w = cond.weights
    pos = w > 0.0
    return float(-np.sum(P.probs[pos] * np.log(w[pos])))


def conditional_kl(P: TabularDistribution, Q: TabularDistribution, step: TransformStep) -> float:
    """D(P_{fine|coarse} || Q_{fine|coarse} | P_coarse)."""
    _, cp = disintegrate(P, step)
    _, cq = disintegrate(Q, step)
    mask = P.probs > 0.0
    a, b = cp.weights[mask], cq.weights[mask]
    if np.any(b == 0.0):
        return math.inf
    return float(np.sum(P.probs[mask] * (np.log(a) - np.log(b))))


def total_variation(P: TabularDistribution, Q: TabularDistribution) -> float:
    if P.n != Q.n:
        raise ContractError(f"size mismatch: {P.n} vs {Q.n}")
    return 0.5 * float(np.abs(P.probs - Q.probs).sum())


def dominates(a: Iterable[float], b: Iterable[float], tol: float = 0.0) -> bool:
    """True when ``a`` is at least ``b`` everywhere and strictly better somewhere."""
    a = np.asarray(list(a), dtype=float)
    b = np.asarray(list(b), dtype=float)
    return bool(np.all(a >= b - tol) and np.any(a > b + tol))


__all__ = [
    "NORM_TOL",
    "SigmaSchedule",
    "TabularDistribution",
    "TransformStep",
    "TransformChain",
    "ConditionalTable",
    "compositions",
    "spin_table",
    "spin_index",
    "pushforward",
    "entropy",
    "kl",
    "disintegrate",
    "compose",
    "level_marginals",
    "hierarchical_entropy",
    "hierarchical_kl",
    "conditional_entropy",
    "conditional_kl",
    "total_variation",
    "dominates",
]
