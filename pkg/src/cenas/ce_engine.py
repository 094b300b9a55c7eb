"""Generation families, the maximum-likelihood (CE) update and the per-cycle loop.

A generator is a product of per-position categoricals whose logits are
either free (``full``) or constrained to a rank-``r`` factorisation
``U @ V`` (``rank``), the latter standing in for a low-rank adapter.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np
from scipy.special import log_softmax, softmax

from .arch_space import DEFAULT_ENUM_CAP, EliteSpec, QualityFunction, ValidationError, elite_array
from .error_channel import MarkovErrorParams, simulate_validity
from .novelty import NoveltyFilter

FULL = "full"
RANK = "rank"
FIT_CORPUS = "corpus"
FIT_ELITE = "elite"


@dataclass(frozen=True, eq=False)
class GenDistribution:
    """Product-of-categoricals generator over genomes of ``L`` tokens.

    Parameters
    ----------
    logits : ndarray, shape (L, m)
        Per-position logits. For the ``rank`` family these equal ``U @ V``.
    family : {"full", "rank"}
    U, V : ndarray, optional
        Factors of the ``rank`` family, shapes ``(L, r)`` and ``(r, m)``.
    """

    logits: np.ndarray
    family: str = FULL
    U: np.ndarray | None = None
    V: np.ndarray | None = None

    def __post_init__(self):
        if self.family not in (FULL, RANK):
            raise ValueError(f"unknown family {self.family!r}")
        if self.family == RANK and (self.U is None or self.V is None):
            raise ValueError("rank family needs both factors")

    @classmethod
    def uniform(cls, length: int, alphabet: int, family: str = FULL, rank: int = 1) -> "GenDistribution":
        logits = np.zeros((length, alphabet))
        if family == RANK:
            return cls(logits, RANK, np.zeros((length, rank)), np.zeros((rank, alphabet)))
        return cls(logits, family)

    @classmethod
    def from_factors(cls, U: np.ndarray, V: np.ndarray) -> "GenDistribution":
        U, V = np.asarray(U, float), np.asarray(V, float)
        return cls(U @ V, RANK, U, V)

    @property
    def length(self) -> int:
        return self.logits.shape[0]

    @property
    def alphabet(self) -> int:
        return self.logits.shape[1]

    @property
    def rank(self) -> int | None:
        return None if self.U is None else self.U.shape[1]

    @property
    def probs(self) -> np.ndarray:
        return softmax(self.logits, axis=1)

    def log_prob(self, genomes: np.ndarray) -> np.ndarray:
        """Log-probability of each row of an ``(n, L)`` genome array."""
        genomes = np.atleast_2d(np.asarray(genomes, dtype=np.int64))
        logp = log_softmax(self.logits, axis=1)
        return logp[np.arange(self.length), genomes].sum(axis=1)

    def max_genome_prob(self) -> float:
        return float(np.prod(self.probs.max(axis=1)))

    def entropy(self) -> float:
        p = self.probs
        with np.errstate(divide="ignore", invalid="ignore"):
            return float(-np.where(p > 0, p * np.log(p), 0.0).sum())


def sample(d: GenDistribution, n: int, rng) -> np.ndarray:
    """Draw ``n`` i.i.d. genomes as an ``(n, L)`` integer array (inverse-CDF per position)."""
    if n < 1:
        raise ValueError("sample size must be at least 1")
    rng = np.random.default_rng(rng)
    cdf = np.cumsum(d.probs, axis=1)
    u = rng.random((n, d.length))
    tokens = (u[:, :, None] >= cdf[None, :, :]).sum(axis=2)
    return np.minimum(tokens, d.alphabet - 1)


def token_counts(genomes: np.ndarray, alphabet: int, weights: np.ndarray | None = None) -> np.ndarray:
    """``(L, m)`` matrix of (weighted) token occurrences per position."""
    genomes = np.atleast_2d(np.asarray(genomes, dtype=np.int64))
    L = genomes.shape[1]
    w = np.ones(genomes.shape[0]) if weights is None else np.asarray(weights, float)
    counts = np.zeros((L, alphabet))
    for j in range(L):
        counts[j] = np.bincount(genomes[:, j], weights=w, minlength=alphabet)
    return counts


def _fit_rank(counts: np.ndarray, rank: int, steps: int, lr: float, rng, init) -> tuple[np.ndarray, np.ndarray]:
    # gradient ascent on the mean per-position log-likelihood sum_jk c_jk log softmax(UV)_jk
    L, m = counts.shape
    total = counts.sum(axis=1, keepdims=True)
    scale = 1.0 / max(float(total.max()), 1e-300)
    if init is None or not (np.any(init[0]) and np.any(init[1])):
        U = np.zeros((L, rank)) if init is None else np.array(init[0], float)
        V = np.zeros((rank, m)) if init is None else np.array(init[1], float)
        # break the U = V = 0 saddle
        U = U + 0.01 * rng.standard_normal(U.shape)
        V = V + 0.01 * rng.standard_normal(V.shape)
    else:
        U, V = np.array(init[0], float), np.array(init[1], float)
    for _ in range(steps):
        G = (counts - total * softmax(U @ V, axis=1)) * scale
        U, V = U + lr * (G @ V.T), V + lr * (U.T @ G)
    return U, V


def mle_update(
    family: str,
    samples,
    smoothing: float = 1.0,
    static=None,
    *,
    alphabet: int,
    rank: int = 1,
    steps: int = 500,
    lr: float = 0.1,
    rng=None,
    init: tuple[np.ndarray, np.ndarray] | None = None,
) -> GenDistribution:
    """Maximum-likelihood projection of ``samples`` (plus ``static``) onto the family.

    The full family returns smoothed relative frequencies: per position,
    ``(count + smoothing / m) / (n + smoothing)``. With ``smoothing = 0``
    unseen tokens get probability zero (logit ``-inf``). The rank family
    maximises the same smoothed log-likelihood over ``(U, V)`` with a fixed
    budget of ``steps`` gradient steps.
    """
    samples = np.asarray([tuple(a) for a in samples], dtype=np.int64)
    if samples.size == 0:
        raise ValueError("mle_update needs at least one sample")
    if smoothing < 0:
        raise ValueError("smoothing mass must be non-negative")
    data = samples
    if static is not None and len(static):
        data = np.vstack([samples, np.asarray([tuple(a) for a in static], dtype=np.int64)])
    if data.max() >= alphabet:
        raise ValidationError("sample token outside the alphabet")
    counts = token_counts(data, alphabet) + smoothing / alphabet
    if family == FULL:
        probs = counts / counts.sum(axis=1, keepdims=True)
        with np.errstate(divide="ignore"):
            return GenDistribution(np.log(probs), FULL)
    if family == RANK:
        U, V = _fit_rank(counts, rank, steps, lr, np.random.default_rng(rng), init)
        return GenDistribution.from_factors(U, V)
    raise ValueError(f"unknown family {family!r}")


def _as_empirical(empirical) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(empirical, Mapping):
        genomes = np.asarray([tuple(k) for k in empirical], dtype=np.int64)
        p = np.asarray(list(empirical.values()), dtype=float)
    else:
        genomes, p = empirical
        genomes, p = np.atleast_2d(np.asarray(genomes, dtype=np.int64)), np.asarray(p, float)
    if np.any(p < 0) or not math.isclose(p.sum(), 1.0, abs_tol=1e-12):
        raise ValueError("empirical probabilities must be non-negative and sum to 1")
    keep = p > 0
    return genomes[keep], p[keep]


def kl_to_empirical(empirical, d: GenDistribution) -> float:
    """``KL(p_hat || p_theta)`` for an empirical distribution over genomes."""
    genomes, p = _as_empirical(empirical)
    return float(np.sum(p * (np.log(p) - d.log_prob(genomes))))


def kl_ce_objectives(empirical, grid: Sequence[GenDistribution]) -> tuple[np.ndarray, np.ndarray, float]:
    """Cross-entropy and KL of the empirical distribution against every grid member, plus its entropy."""
    genomes, p = _as_empirical(empirical)
    logq = np.array([d.log_prob(genomes) for d in grid])
    ce = -(logq * p).sum(axis=1)
    entropy = float(-(p * np.log(p)).sum())
    kl = (p * np.log(p)).sum() - (logq * p).sum(axis=1)
    return ce, kl, entropy


def _argmin_set(values: np.ndarray, tol: float) -> frozenset[int]:
    return frozenset(np.flatnonzero(values <= values.min() + tol).tolist())


def kl_ce_identity_check(empirical, grid: Sequence[GenDistribution], tol: float = 1e-10) -> bool:
    """Cross-entropy and KL share their minimisers; their gap is the empirical entropy."""
    if not grid:
        raise ValueError("empty parameter grid")
    ce, kl, entropy = kl_ce_objectives(empirical, grid)
    if not (np.all(np.isfinite(ce)) and np.all(np.isfinite(kl))):
        return False
    offset_ok = bool(np.all(np.abs((ce - kl) - entropy) <= tol))
    return offset_ok and _argmin_set(ce, tol) == _argmin_set(kl, tol)


@dataclass(frozen=True)
class CorpusState:
    """Static corpus plus the ordered, monotonically growing set of admitted elites."""

    static: tuple[tuple[int, ...], ...]
    members: tuple[tuple[int, ...], ...] = ()
    t: int = 0

    @classmethod
    def start(cls, static) -> "CorpusState":
        return cls(tuple(tuple(int(x) for x in a) for a in static))

    def __len__(self):
        return len(self.members)

    def admit(self, genomes) -> "CorpusState":
        return replace(self, members=self.members + tuple(tuple(int(x) for x in g) for g in genomes))

    def fit_set(self) -> np.ndarray:
        return np.asarray(self.members + self.static, dtype=np.int64)


@dataclass(frozen=True)
class FitConfig:
    """How each cycle's fine-tune is performed.

    ``fit_data="corpus"`` fits on the accumulated corpus plus the static
    corpus. ``fit_data="elite"`` fits on this cycle's valid elite samples
    (with multiplicity) plus the static corpus, the textbook CE update.
    """

    smoothing: float = 1.0
    steps: int = 500
    lr: float = 0.1
    fit_data: str = FIT_CORPUS

    def __post_init__(self):
        if self.fit_data not in (FIT_CORPUS, FIT_ELITE):
            raise ValueError(f"fit_data must be 'corpus' or 'elite', got {self.fit_data!r}")


@dataclass(frozen=True)
class CycleOutcome:
    """Statistics of one cycle, measured on its valid samples.

    ``C`` and ``Q`` are NaN when no sample was valid.
    """

    C: float
    C_se: float
    Q: float
    Q_se: float
    admitted: int
    valid: int
    n: int
    k_star: float = float("nan")
    fit_size: int = 0
    fitted: bool = False

    def __post_init__(self):
        if not (0 <= self.admitted <= self.valid <= self.n):
            raise ValueError("need 0 <= admitted <= valid <= n")

    @property
    def valid_rate(self) -> float:
        return self.valid / self.n


def _empirical_kl(data: np.ndarray, d: GenDistribution) -> float:
    uniq, counts = np.unique(data, axis=0, return_counts=True)
    return kl_to_empirical((uniq, counts / counts.sum()), d)


def run_cycle(
    state: CorpusState,
    d: GenDistribution,
    q: QualityFunction,
    spec: EliteSpec,
    novelty: NoveltyFilter | None,
    channel: tuple[MarkovErrorParams, str] | None,
    n: int,
    rng,
    fit: FitConfig = FitConfig(),
) -> tuple[CorpusState, GenDistribution, CycleOutcome]:
    """Generate, validate, evaluate, filter, update the corpus and fine-tune.

    ``channel`` is ``(params, mode)`` or ``None`` for an error-free channel;
    ``novelty=None`` admits every elite.
    """
    if n < 1:
        raise ValueError("population must be at least 1")
    rng = np.random.default_rng(rng)
    genomes = sample(d, n, rng)
    if channel is None:
        valid_mask = np.ones(n, dtype=bool)
    else:
        valid_mask = simulate_validity(channel[0], channel[1], n, rng)
    valid = genomes[valid_mask]
    n_valid = valid.shape[0]
    if n_valid == 0:
        nan = float("nan")
        return replace(state, t=state.t + 1), d, CycleOutcome(nan, nan, nan, nan, 0, 0, n)

    quality = q.batch(valid)
    elite_mask = quality >= spec.tau
    elites = valid[elite_mask]
    if novelty is None:
        # without a filter only exact repeats are blocked
        seen = set(state.members)
        new = []
        for g in map(tuple, elites.tolist()):
            if g not in seen:
                seen.add(g)
                new.append(g)
    else:
        new = [tuple(g) for g in elites[novelty.admit_many(elites)].tolist()]
    state = replace(state.admit(new), t=state.t + 1)

    C = float(elite_mask.mean())
    C_se = math.sqrt(C * (1.0 - C) / n_valid)
    Q = float(quality.mean())
    Q_se = float(quality.std(ddof=1) / math.sqrt(n_valid)) if n_valid > 1 else 0.0

    if fit.fit_data == FIT_CORPUS:
        fit_samples = np.asarray(state.members, dtype=np.int64).reshape(-1, d.length)
    else:
        fit_samples = elites
    static = np.asarray(state.static, dtype=np.int64).reshape(-1, d.length)
    data = np.vstack([fit_samples, static])
    new_d, k_star, fitted = d, float("nan"), False
    if data.shape[0]:
        new_d = mle_update(
            d.family,
            data,
            fit.smoothing,
            alphabet=d.alphabet,
            rank=d.rank or 1,
            steps=fit.steps,
            lr=fit.lr,
            rng=rng,
            init=(d.U, d.V) if d.family == RANK else None,
        )
        k_star, fitted = _empirical_kl(data, new_d), True
    outcome = CycleOutcome(C, C_se, Q, Q_se, len(new), n_valid, n, k_star, data.shape[0], fitted)
    return state, new_d, outcome


@dataclass(frozen=True)
class EliteMass:
    value: float
    se: float
    exact: bool


def elite_concentration(
    d: GenDistribution,
    q: QualityFunction,
    spec: EliteSpec,
    mode: str = "exact",
    *,
    n: int = 100_000,
    rng=None,
    cap: int = DEFAULT_ENUM_CAP,
) -> EliteMass:
    """Probability mass the generator puts on the elite set.

    ``mode="exact"`` sums over the enumerated elite set; ``mode="mc"``
    samples ``n`` genomes and reports the binomial standard error.
    """
    if mode == "exact":
        try:
            elites = elite_array(q, spec.tau, cap)
        except ValidationError as exc:
            raise ValidationError(f"{exc}; use mode='mc' for spaces this large") from None
        if elites.shape[0] == 0:
            return EliteMass(0.0, 0.0, True)
        return EliteMass(float(min(1.0, np.exp(d.log_prob(elites)).sum())), 0.0, True)
    if mode == "mc":
        hits = q.batch(sample(d, n, rng)) >= spec.tau
        c = float(hits.mean())
        return EliteMass(c, math.sqrt(c * (1.0 - c) / n), False)
    raise ValueError(f"unknown mode {mode!r}")


@dataclass(frozen=True)
class GeometricReport:
    rho0: float
    delta: float
    t_star: int | None
    bounds: tuple[float, ...] = ()
    flags: tuple[bool | None, ...] = ()
    applicable: bool = True
    note: str = ""

    @property
    def passed(self) -> bool:
        return self.applicable and all(f is not False for f in self.flags)

    @property
    def n_checked(self) -> int:
        return sum(f is not None for f in self.flags)


def t_star(rho0: float, delta: float) -> int:
    """Cycles needed for ``1 - (1 - rho0)**t >= 1 - delta``."""
    if not (0.0 < rho0 <= 1.0):
        raise ValueError("rho0 must lie in (0, 1]")
    if not (0.0 < delta < 1.0):
        raise ValueError("delta must lie in (0, 1)")
    if rho0 == 1.0:
        return 0
    # guard against log ratios like 2.0000000000000004 on exact powers
    return max(0, math.ceil(math.log(delta) / math.log(1.0 - rho0) - 1e-9))


def geometric_bound(rho0: float, t: int) -> float:
    return 1.0 - (1.0 - rho0) ** t


def geometric_rate_check(
    C: Sequence[float], se: Sequence[float] | None = None, rho0: float | None = None, delta: float = 0.05
) -> GeometricReport:
    """Flag every cycle against ``C_t >= 1 - (1 - rho0)**t - 3 SE(C_t)``.

    ``rho0`` defaults to the measured ``C_0``. Missing (NaN) cycles are not
    flagged either way.
    """
    C = np.asarray(C, dtype=float)
    se = np.zeros_like(C) if se is None else np.nan_to_num(np.asarray(se, dtype=float))
    if rho0 is None:
        if C.size == 0 or not np.isfinite(C[0]):
            return GeometricReport(float("nan"), delta, None, applicable=False, note="no measured C_0")
        rho0 = float(C[0])
    if rho0 <= 0.0:
        return GeometricReport(rho0, delta, None, applicable=False, note="rho0 = 0: bound inapplicable")
    bounds = tuple(geometric_bound(rho0, t) for t in range(C.size))
    flags = tuple(
        None if not np.isfinite(c) else bool(c >= b - 3.0 * s - 1e-12) for c, b, s in zip(C, bounds, se)
    )
    return GeometricReport(rho0, delta, t_star(rho0, delta), bounds, flags)


__all__ = [
    "CorpusState",
    "CycleOutcome",
    "EliteMass",
    "FitConfig",
    "GenDistribution",
    "GeometricReport",
    "elite_concentration",
    "geometric_bound",
    "geometric_rate_check",
    "kl_ce_identity_check",
    "kl_ce_objectives",
    "kl_to_empirical",
    "mle_update",
    "run_cycle",
    "sample",
    "t_star",
    "token_counts",
]
