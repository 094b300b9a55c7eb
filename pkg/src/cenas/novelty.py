"""MinHash-Jaccard novelty filtering and mode-collapse diagnostics."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse

DEFAULT_K = 128
DEFAULT_TAU_NOV = 0.90
DEFAULT_WINDOW = 3

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


def _mix64(z: np.ndarray) -> np.ndarray:
    """splitmix64 finaliser, elementwise on uint64 arrays (wrapping arithmetic)."""
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _window_hashes(genomes: np.ndarray, w: int) -> np.ndarray:
    """Hash every contiguous ``w``-token window; returns ``(n, n_windows)`` uint64."""
    genomes = np.atleast_2d(np.asarray(genomes, dtype=np.int64))
    n, L = genomes.shape
    w_eff = min(w, L)
    n_win = L - w_eff + 1
    h = np.full((n, n_win), np.uint64(w_eff), dtype=np.uint64)
    with np.errstate(over="ignore"):
        for i in range(w_eff):
            tok = genomes[:, i : i + n_win].astype(np.uint64)
            h = _mix64(h ^ (tok + _GOLDEN))
    return h


def shingles(tokens: Sequence[int], w: int = DEFAULT_WINDOW) -> frozenset[int]:
    """Set of hashed ``w``-token windows; a genome shorter than ``w`` is one shingle."""
    tokens = np.asarray(tuple(tokens), dtype=np.int64)
    if tokens.size == 0:
        raise ValueError("cannot shingle an empty token sequence")
    return frozenset(int(x) for x in _window_hashes(tokens[None, :], w)[0])


def permutation_seeds(seed: int, k: int) -> np.ndarray:
    return np.random.SeedSequence(seed).generate_state(k, dtype=np.uint64)


@dataclass(frozen=True, eq=False)
class MinHashSignature:
    values: np.ndarray
    seed: int

    @property
    def k(self) -> int:
        return int(self.values.size)


def _minhash_rows(hashes: np.ndarray, perm: np.ndarray) -> np.ndarray:
    # hashes: (n, s) -> (n, k)
    return _mix64(hashes[:, None, :] ^ perm[None, :, None]).min(axis=2)


def signature(shingle_set: Iterable[int], k: int = DEFAULT_K, seed: int = 0) -> MinHashSignature:
    arr = np.fromiter((int(s) for s in shingle_set), dtype=np.uint64)
    if arr.size == 0:
        raise ValueError("cannot sign an empty shingle set")
    perm = permutation_seeds(seed, k)
    return MinHashSignature(_minhash_rows(arr[None, :], perm)[0], seed)


def exact_jaccard(a: frozenset | set, b: frozenset | set) -> float:
    if not a or not b:
        raise ValueError("Jaccard similarity needs two nonempty sets")
    return len(a & b) / len(a | b)


def estimate_jaccard(sig_a: MinHashSignature, sig_b: MinHashSignature) -> float:
    """Fraction of coordinates on which two signatures agree."""
    if sig_a.k != sig_b.k or sig_a.seed != sig_b.seed:
        raise ValueError("signatures come from different permutation families")
    return float(np.mean(sig_a.values == sig_b.values))


@dataclass
class NoveltyFilter:
    """Admit a genome only if its estimated similarity to every stored member is at most ``tau_nov``.

    Signatures of admitted genomes (and of any pre-loaded static corpus) are
    kept, so admission order matters and the store only ever grows.
    """

    tau_nov: float = DEFAULT_TAU_NOV
    k: int = DEFAULT_K
    w: int = DEFAULT_WINDOW
    seed: int = 0
    _perm: np.ndarray = field(init=False, repr=False)
    _sigs: np.ndarray = field(init=False, repr=False)
    _size: int = field(default=0, init=False)
    _rejected: set = field(default_factory=set, init=False, repr=False)
    _stored: set = field(default_factory=set, init=False, repr=False)
    members: list = field(default_factory=list, init=False, repr=False)

    def __post_init__(self):
        if not (0.0 < self.tau_nov < 1.0):
            raise ValueError("tau_nov must lie in (0, 1)")
        if self.k < 1 or self.w < 1:
            raise ValueError("k and w must be positive")
        self._perm = permutation_seeds(self.seed, self.k)
        self._sigs = np.empty((64, self.k), dtype=np.uint64)

    def __len__(self):
        return self._size

    def signatures(self, genomes: np.ndarray) -> np.ndarray:
        return _minhash_rows(_window_hashes(genomes, self.w), self._perm)

    def signature(self, tokens: Sequence[int]) -> MinHashSignature:
        return MinHashSignature(self.signatures(np.asarray(tuple(tokens))[None, :])[0], self.seed)

    def _store(self, key: tuple, sig: np.ndarray) -> None:
        if self._size == self._sigs.shape[0]:
            self._sigs = np.concatenate([self._sigs, np.empty_like(self._sigs)])
        self._sigs[self._size] = sig
        self._size += 1
        self._stored.add(key)
        self.members.append(key)

    def max_similarity(self, sig: np.ndarray) -> float:
        if self._size == 0:
            return 0.0
        return float((self._sigs[: self._size] == sig).mean(axis=1).max())

    def preload(self, genomes) -> None:
        """Store genomes unconditionally (e.g. the static corpus)."""
        genomes = np.atleast_2d(np.asarray(genomes, dtype=np.int64))
        for key, sig in zip(map(tuple, genomes.tolist()), self.signatures(genomes)):
            if key not in self._stored:
                self._store(key, sig)

    def admit(self, tokens: Sequence[int]) -> bool:
        return bool(self.admit_many(np.asarray(tuple(tokens))[None, :])[0])

    def admit_many(self, genomes: np.ndarray) -> np.ndarray:
        """Sequentially offer each row; returns the admission mask."""
        genomes = np.atleast_2d(np.asarray(genomes, dtype=np.int64))
        keys = list(map(tuple, genomes.tolist()))
        out = np.zeros(len(keys), dtype=bool)
        fresh = [i for i, key in enumerate(keys) if key not in self._stored and key not in self._rejected]
        if not fresh:
            return out
        # the store only grows, so a rejection is final and an exact repeat is
        # always rejected (identical shingles give estimated similarity 1)
        uniq: dict[tuple, int] = {}
        for i in fresh:
            uniq.setdefault(keys[i], i)
        order = list(uniq.values())
        sigs = self.signatures(genomes[order])
        for i, sig in zip(order, sigs):
            key = keys[i]
            if self.max_similarity(sig) <= self.tau_nov:
                self._store(key, sig)
                out[i] = True
            else:
                self._rejected.add(key)
        return out


def admit(f: NoveltyFilter, a) -> bool:
    return f.admit(tuple(a))


@dataclass(frozen=True)
class SeparationReport:
    n_members: int
    n_pairs: int
    min_distance: float
    required: float
    slack: float
    violations: tuple[tuple[int, int, float], ...]

    @property
    def passed(self) -> bool:
        return not self.violations


def separation_check(
    corpus: Sequence[frozenset], tau_nov: float, slack: float | None = None, k: int = DEFAULT_K
) -> SeparationReport:
    """Pairwise exact Jaccard distance must be at least ``1 - tau_nov - slack``.

    ``slack`` defaults to ``3 / sqrt(k)``, the MinHash estimator allowance.
    """
    if slack is None:
        slack = 3.0 / math.sqrt(k)
    required = 1.0 - tau_nov
    n = len(corpus)
    if any(not c for c in corpus):
        raise ValueError("Jaccard similarity needs nonempty sets")
    if n < 2:
        return SeparationReport(n, 0, 1.0, required, slack, ())
    # members x shingles incidence; intersections come from blocked products
    vocab: dict[int, int] = {}
    rows, cols = [], []
    for i, c in enumerate(corpus):
        for x in c:
            rows.append(i)
            cols.append(vocab.setdefault(x, len(vocab)))
    M = sparse.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, len(vocab)))
    sizes = np.asarray(M.sum(axis=1)).ravel()
    worst, bad = 1.0, []
    for lo in range(0, n, 512):
        hi = min(n, lo + 512)
        inter = (M[lo:hi] @ M.T).toarray()
        dist = 1.0 - inter / (sizes[lo:hi, None] + sizes[None, :] - inter)
        upper = np.arange(n)[None, :] > np.arange(lo, hi)[:, None]
        if np.any(upper):
            worst = min(worst, float(dist[upper].min()))
        for i, j in zip(*np.nonzero(upper & (dist < required - slack))):
            bad.append((lo + int(i), int(j), float(dist[i, j])))
    return SeparationReport(n, n * (n - 1) // 2, worst, required, slack, tuple(bad))


def binary_entropy(delta: float) -> float:
    """``-d ln d - (1-d) ln(1-d)`` in nats, with ``0 ln 0 = 0``."""
    if not (0.0 <= delta <= 1.0):
        raise ValueError("delta must lie in [0, 1]")
    return max(0.0, -sum(x * math.log(x) for x in (delta, 1.0 - delta) if x > 0.0))


@dataclass(frozen=True)
class CollapseDiagnostics:
    corpus_size: int
    k_star: float
    delta: float
    entropy_bound: float
    max_prob: float
    entropy: float
    delta_rigorous: float

    @property
    def informative(self) -> bool:
        """``delta <= 1/2``; above that no distribution over two or more genomes can meet the bound."""
        return self.delta <= 0.5

    @property
    def collapsed(self) -> bool:
        """True when the measured maximum genome probability exceeds ``1 - delta``."""
        return self.max_prob > 1.0 - self.delta


def _distribution_summary(dist) -> tuple[float, float]:
    probs = getattr(dist, "probs", None)
    if probs is not None:
        # product of per-position categoricals: exact without enumeration
        probs = np.asarray(probs, dtype=float)
        max_prob = float(np.prod(probs.max(axis=1)))
        with np.errstate(divide="ignore", invalid="ignore"):
            ent = -np.where(probs > 0, probs * np.log(probs), 0.0).sum()
        return max_prob, float(ent)
    # empirical sample: rows are genomes
    arr = np.atleast_2d(np.asarray(dist))
    _, counts = np.unique(arr, axis=0, return_counts=True)
    p = counts / counts.sum()
    return float(p.max()), float(-(p * np.log(p)).sum())


def collapse_diagnostics(dist, corpus_size: int, k_star: float) -> CollapseDiagnostics:
    """Bound ``delta = exp(-K* |S|)`` on genome mass next to the measured distribution.

    ``dist`` is either a generation distribution (anything with per-position
    ``probs``) or an ``(n, L)`` sample array.

    ``delta`` drops the entropy of the uniform corpus distribution from the
    per-member argument, so it can exceed 1/2 when ``K* |S|`` is small.
    ``delta_rigorous = exp(-|S| (K* + ln |S|))`` keeps that term and is a
    valid lower bound on every member's probability.
    """
    if k_star < 0:
        raise ValueError("K* must be non-negative")
    if corpus_size < 2:
        raise ValueError("the bound needs a corpus of at least two members")
    delta = math.exp(-k_star * corpus_size)
    max_prob, ent = _distribution_summary(dist)
    rigorous = math.exp(-corpus_size * (k_star + math.log(corpus_size)))
    return CollapseDiagnostics(corpus_size, k_star, delta, binary_entropy(delta), max_prob, ent, rigorous)
