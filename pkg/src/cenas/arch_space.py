"""Finite genome space, quality landscapes and elite sets.

Genomes are fixed-length token sequences over an alphabet ``{0, ..., m-1}``.
They stand in for generated programs; the quality function plays the role
of first-epoch validation accuracy and always lands in ``[0, 1]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

DEFAULT_ENUM_CAP = 10**6

MATCH = "match-ratio"
TRAP = "deceptive-trap"


class ValidationError(ValueError):
    """Raised when a genome, threshold or space parameter is out of range."""


@dataclass(frozen=True)
class Architecture:
    """A genome: an immutable tuple of token indices."""

    tokens: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(int(t) for t in self.tokens))
        if len(self.tokens) == 0:
            raise ValidationError("genome must have at least one token")
        if min(self.tokens) < 0:
            raise ValidationError("token indices must be non-negative")

    @property
    def length(self) -> int:
        return len(self.tokens)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.tokens, dtype=np.int64)

    def __len__(self):
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)


def as_architecture(a) -> Architecture:
    return a if isinstance(a, Architecture) else Architecture(tuple(a))


def hamming(a, b) -> int:
    a, b = np.asarray(tuple(a)), np.asarray(tuple(b))
    if a.shape != b.shape:
        raise ValidationError("genomes of different length")
    return int((a != b).sum())


def in_delta_space(a, baseline, budget: int) -> bool:
    """Whether ``a`` is reachable from ``baseline`` by editing at most ``budget`` tokens."""
    return hamming(a, baseline) <= budget


@dataclass(frozen=True)
class EliteSpec:
    tau: float

    def __post_init__(self):
        if not (0.0 < self.tau < 1.0):
            raise ValidationError(f"tau must lie in (0, 1), got {self.tau!r}")


@dataclass(frozen=True, eq=False)
class QualityFunction:
    """Deterministic quality landscape over genomes of ``len(target)`` tokens.

    ``match-ratio`` scores the fraction of positions agreeing with the hidden
    target. ``deceptive-trap`` keeps that score inside a basin of relative
    width ``basin`` around the target; outside the basin quality *rises* as
    the genome moves away from the target, ``penalty * (1 - h)``.
    """

    target: Architecture
    alphabet: int
    kind: str = MATCH
    basin: float = 0.25
    penalty: float = 0.6
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "target", as_architecture(self.target))
        if self.kind not in (MATCH, TRAP):
            raise ValidationError(f"unknown quality kind {self.kind!r}")
        if self.alphabet < 1:
            raise ValidationError("alphabet size must be positive")
        if max(self.target.tokens) >= self.alphabet:
            raise ValidationError("target uses tokens outside the alphabet")
        if not (0.0 <= self.basin <= 1.0 and 0.0 <= self.penalty <= 1.0):
            raise ValidationError("trap basin and penalty must lie in [0, 1]")

    @property
    def length(self) -> int:
        return self.target.length

    @cached_property
    def _target_arr(self) -> np.ndarray:
        return self.target.as_array()

    def check(self, a) -> Architecture:
        a = as_architecture(a)
        if a.length != self.length:
            raise ValidationError(f"genome length {a.length} != space length {self.length}")
        if max(a.tokens) >= self.alphabet:
            raise ValidationError(f"token outside alphabet of size {self.alphabet}")
        return a

    def batch(self, genomes: np.ndarray) -> np.ndarray:
        """Vectorised quality for an ``(n, L)`` integer array (no validation)."""
        genomes = np.atleast_2d(genomes)
        h = (genomes == self._target_arr).mean(axis=1)
        if self.kind == MATCH:
            return h
        # tolerance keeps basin edges like 1 - 0.375 exact for L = 8
        in_basin = h >= 1.0 - self.basin - 1e-12
        return np.where(in_basin, h, self.penalty * (1.0 - h))

    def __call__(self, a) -> float:
        a = self.check(a)
        return float(self.batch(a.as_array()[None, :])[0])


def evaluate_quality(q: QualityFunction, a) -> float:
    return q(a)


def is_elite(q: QualityFunction, spec: EliteSpec, a) -> bool:
    return q(a) >= spec.tau


def all_genomes(length: int, alphabet: int, cap: int = DEFAULT_ENUM_CAP) -> np.ndarray:
    """Every genome of the space as an ``(m**L, L)`` array, lexicographic order."""
    size = alphabet**length
    if size > cap:
        raise ValidationError(
            f"space of {alphabet}**{length} = {size} genomes exceeds enumeration cap {cap}"
        )
    grids = np.indices((alphabet,) * length, dtype=np.int8).reshape(length, -1).T
    return np.ascontiguousarray(grids, dtype=np.int64)


def elite_array(q: QualityFunction, tau: float, cap: int = DEFAULT_ENUM_CAP) -> np.ndarray:
    """Elite genomes as an array; cached on the quality function."""
    key = (float(tau), int(cap))
    if key not in q._cache:
        genomes = all_genomes(q.length, q.alphabet, cap)
        q._cache[key] = genomes[q.batch(genomes) >= tau]
    return q._cache[key]


def enumerate_elite(
    q: QualityFunction, spec: EliteSpec, L: int, m: int, cap: int = DEFAULT_ENUM_CAP
) -> set[Architecture]:
    """Brute-force elite set for spaces small enough to enumerate."""
    if (L, m) != (q.length, q.alphabet):
        raise ValidationError("(L, m) does not match the quality function's space")
    return {Architecture(tuple(row)) for row in elite_array(q, spec.tau, cap)}


def medium_corpus(
    q: QualityFunction, size: int = 8, match_fraction: float = 0.5, seed: int = 0
) -> np.ndarray:
    """Static warm-start corpus of genomes agreeing with the target on a fixed fraction of positions.

    Mismatching positions receive a uniformly chosen wrong token. Duplicates
    are avoided when the space allows it.
    """
    rng = np.random.default_rng(seed)
    L, m = q.length, q.alphabet
    n_match = int(round(match_fraction * L))
    out: list[tuple[int, ...]] = []
    seen: set[tuple[int, ...]] = set()
    target = q._target_arr
    for _ in range(size * 50):
        if len(out) == size:
            break
        g = target.copy()
        if m > 1:
            wrong = rng.choice(L, size=L - n_match, replace=False)
            g[wrong] = (g[wrong] + rng.integers(1, m, size=wrong.size)) % m
        key = tuple(int(t) for t in g)
        if key not in seen:
            seen.add(key)
            out.append(key)
    while len(out) < size:  # tiny spaces: allow repeats
        out.append(out[len(out) % max(1, len(seen))])
    return np.asarray(out, dtype=np.int64).reshape(size, L)


def cyclic_target(length: int, alphabet: int) -> Architecture:
    """Target ``(0, 1, ..., m-1, 0, 1, ...)``; uses every symbol as evenly as possible."""
    return Architecture(tuple(j % alphabet for j in range(length)))


def to_architectures(genomes: Iterable[Sequence[int]]) -> list[Architecture]:
    return [Architecture(tuple(g)) for g in genomes]


__all__ = [
    "Architecture",
    "EliteSpec",
    "QualityFunction",
    "ValidationError",
    "MATCH",
    "TRAP",
    "all_genomes",
    "as_architecture",
    "cyclic_target",
    "elite_array",
    "enumerate_elite",
    "evaluate_quality",
    "hamming",
    "in_delta_space",
    "is_elite",
    "medium_corpus",
    "to_architectures",
]
