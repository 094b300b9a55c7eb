"""Proxy reliability statistics: SNR, rank correlations and the bivariate-Normal closed form.

Full-training quality ``q`` and a one-epoch proxy ``q_hat = q + xi`` are
modelled as a bivariate Normal pair. Their Pearson correlation is
``(1 + 1/SNR)**-0.5`` and, for Normal pairs, the population Spearman
correlation is ``(6/pi) arcsin(rho_P / 2)``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats

BOUND_CONSTANT = math.sqrt(3.0) / math.pi
INF_SNR = math.inf


class DegenerateSampleError(ValueError):
    """Raised when a correlation is undefined (constant input or too few pairs)."""


@dataclass(frozen=True, eq=False)
class PairedSample:
    """Paired (full, proxy) qualities for one generator."""

    full: np.ndarray
    proxy: np.ndarray
    group: str = ""
    datasets: tuple[str, ...] | None = None

    def __post_init__(self):
        full = np.asarray(self.full, dtype=float).ravel()
        proxy = np.asarray(self.proxy, dtype=float).ravel()
        if full.shape != proxy.shape:
            raise ValueError("full and proxy arrays differ in length")
        if full.size < 3:
            raise DegenerateSampleError("at least 3 pairs are required")
        if not (np.all(np.isfinite(full)) and np.all(np.isfinite(proxy))):
            raise ValueError("qualities must be finite")
        object.__setattr__(self, "full", full)
        object.__setattr__(self, "proxy", proxy)

    @property
    def n(self) -> int:
        return self.full.size


@dataclass(frozen=True)
class SnrReport:
    sigma2_arch: float
    sigma2_noise: float
    snr: float
    n: int

    @property
    def infinite(self) -> bool:
        return math.isinf(self.snr)


@dataclass(frozen=True)
class CorrelationReport:
    pearson: float
    spearman: float
    p: float
    kendall: float
    p_bonf: float
    n: int


def snr(s: PairedSample) -> SnrReport:
    """Variance of full quality over the variance of the residual ``full - proxy`` (``ddof=1``)."""
    s2a = float(np.var(s.full, ddof=1))
    s2n = float(np.var(s.full - s.proxy, ddof=1))
    if s2n == 0.0:
        warnings.warn("zero residual variance: proxy is a perfect predictor", RuntimeWarning, stacklevel=2)
        ratio = INF_SNR if s2a > 0 else float("nan")
    else:
        ratio = s2a / s2n
    return SnrReport(s2a, s2n, ratio, s.n)


def _check_spread(s: PairedSample) -> None:
    if np.ptp(s.full) == 0.0 or np.ptp(s.proxy) == 0.0:
        raise DegenerateSampleError("correlation undefined for constant input")


def pearson(s: PairedSample) -> float:
    _check_spread(s)
    return float(np.clip(np.corrcoef(s.full, s.proxy)[0, 1], -1.0, 1.0))


def spearman_p(rho: float, n: int) -> float:
    """Two-tailed p-value of a Spearman ``rho`` via the t approximation with ``n - 2`` df."""
    if n < 3:
        raise DegenerateSampleError("need n >= 3")
    if abs(rho) >= 1.0:
        return 0.0
    t = rho * math.sqrt((n - 2) / (1.0 - rho * rho))
    return float(min(1.0, 2.0 * stats.t.sf(abs(t), n - 2)))


def spearman(s: PairedSample) -> tuple[float, float]:
    """Average-rank Spearman correlation and its two-tailed t-approximation p-value."""
    _check_spread(s)
    rx, ry = stats.rankdata(s.full), stats.rankdata(s.proxy)
    rho = float(np.clip(np.corrcoef(rx, ry)[0, 1], -1.0, 1.0))
    return rho, spearman_p(rho, s.n)


def kendall(s: PairedSample) -> float:
    """Kendall tau-b (tie-corrected)."""
    _check_spread(s)
    return float(stats.kendalltau(s.full, s.proxy, variant="b").statistic)


def spearman_permutation_p(s: PairedSample, shuffles: int = 100_000, rng=None) -> float:
    """Monte-Carlo permutation p-value for Spearman, two-tailed, with the +1 correction."""
    _check_spread(s)
    rng = np.random.default_rng(rng)
    rx = stats.rankdata(s.full)
    ry = stats.rankdata(s.proxy)
    rx, ry = rx - rx.mean(), ry - ry.mean()
    denom = math.sqrt((rx @ rx) * (ry @ ry))
    observed = abs(rx @ ry) / denom
    hits = 0
    for start in range(0, shuffles, 10_000):
        b = min(10_000, shuffles - start)
        perm = rng.permuted(np.broadcast_to(ry, (b, ry.size)), axis=1)
        hits += int((np.abs(perm @ rx) / denom >= observed - 1e-12).sum())
    return (hits + 1) / (shuffles + 1)


def bonferroni(pvals: Sequence[float], multiplier: int | None = None) -> list[float]:
    """Multiply each p by ``multiplier`` (default: the number of p-values), clamped at 1."""
    pvals = [float(p) for p in pvals]
    if any(not (0.0 <= p <= 1.0) for p in pvals):
        raise ValueError("p-values must lie in [0, 1]")
    mult = len(pvals) if multiplier is None else multiplier
    if mult < 1:
        raise ValueError("multiplier must be at least 1")
    return [min(1.0, p * mult) for p in pvals]


def correlation_report(s: PairedSample, multiplier: int = 1) -> CorrelationReport:
    rho, p = spearman(s)
    return CorrelationReport(pearson(s), rho, p, kendall(s), bonferroni([p], multiplier)[0], s.n)


def rho_p_from_snr(snr_value: float) -> float:
    if not snr_value > 0:
        raise ValueError("SNR must be positive")
    if math.isinf(snr_value):
        return 1.0
    return (1.0 + 1.0 / snr_value) ** -0.5


def rho_s_closed_form(snr_value: float) -> float:
    """Population Spearman correlation of a bivariate Normal pair at the given SNR."""
    return 6.0 / math.pi * math.asin(rho_p_from_snr(snr_value) / 2.0)


def rho_s_lower_bound(snr_value: float) -> float | None:
    """``1 - C/SNR`` with ``C = sqrt(3)/pi``; ``None`` where the bound is vacuous (SNR < C)."""
    if not snr_value >= BOUND_CONSTANT:
        return None
    return 1.0 - BOUND_CONSTANT / snr_value


def sample_bivariate(
    snr_value: float, n: int, rng, ceiling: float | None = None, sigma_arch: float = 1.0, group: str = ""
) -> PairedSample:
    """Draw ``n`` pairs ``q ~ N(0, s_a^2)``, ``q_hat = q + xi`` with ``Var(xi) = s_a^2 / snr``.

    With ``ceiling`` set both coordinates are clipped at it, creating ties at the ceiling.
    """
    if not snr_value > 0:
        raise ValueError("SNR must be positive")
    if n < 3:
        raise DegenerateSampleError("at least 3 pairs are required")
    rng = np.random.default_rng(rng)
    q = rng.normal(0.0, sigma_arch, n)
    q_hat = q + rng.normal(0.0, sigma_arch / math.sqrt(snr_value), n)
    if ceiling is not None:
        q, q_hat = np.minimum(q, ceiling), np.minimum(q_hat, ceiling)
    return PairedSample(q, q_hat, group)


def fast_spearman(x: np.ndarray, y: np.ndarray) -> float:
    """Spearman correlation of large continuous samples (assumes no ties)."""
    rx = np.empty(x.size)
    ry = np.empty(y.size)
    rx[np.argsort(x)] = np.arange(x.size)
    ry[np.argsort(y)] = np.arange(y.size)
    return float(np.corrcoef(rx, ry)[0, 1])


@dataclass(frozen=True)
class OrderingReport:
    snrs: tuple[float, ...]
    sizes: tuple[int, ...]
    replicates: int
    match_frequency: float
    top_frequency: float
    nonsignificant: tuple[float, ...]
    mean_spearman: tuple[float, ...]


def ordering_experiment(
    snrs: Sequence[float], sizes: Sequence[int] | int, replicates: int = 500, rng=None, alpha: float = 0.05
) -> OrderingReport:
    """Sample every group repeatedly and compare the Spearman ordering with the SNR ordering.

    ``match_frequency`` counts replicates whose Spearman ranking of the groups
    agrees with the SNR ranking on every pair of groups with distinct SNR (for
    equal SNRs it is the frequency that the first group wins).
    ``top_frequency`` is the frequency that a highest-SNR group has the largest
    Spearman; ``nonsignificant`` is the per-group frequency of ``p > alpha``.
    """
    snrs = tuple(float(s) for s in snrs)
    if len(snrs) < 2:
        raise ValueError("need at least two groups")
    sizes = (sizes,) * len(snrs) if isinstance(sizes, int) else tuple(int(n) for n in sizes)
    if len(sizes) != len(snrs):
        raise ValueError("one sample size per group")
    rng = np.random.default_rng(rng)
    top = max(snrs)
    pairs = [(i, j) for i in range(len(snrs)) for j in range(len(snrs)) if snrs[i] > snrs[j]]
    rhos = np.empty((replicates, len(snrs)))
    ns = np.zeros(len(snrs))
    for r in range(replicates):
        for g, (s, n) in enumerate(zip(snrs, sizes)):
            rho, p = spearman(sample_bivariate(s, n, rng))
            rhos[r, g] = rho
            ns[g] += p > alpha
    if pairs:
        match = np.all([rhos[:, i] > rhos[:, j] for i, j in pairs], axis=0)
    else:
        match = rhos[:, 0] > rhos[:, 1]
    best = rhos.argmax(axis=1)
    top_hit = np.array([snrs[b] == top for b in best])
    return OrderingReport(
        snrs,
        sizes,
        replicates,
        float(match.mean()),
        float(top_hit.mean()),
        tuple((ns / replicates).tolist()),
        tuple(rhos.mean(axis=0).tolist()),
    )


@dataclass(frozen=True)
class TruncationReport:
    snr: float
    quantile: float
    ceiling: float
    replicates: int
    mean_truncated: float
    mean_untruncated: float
    closed_form: float
    se_truncated: float

    @property
    def above_closed_form(self) -> bool:
        return self.mean_truncated > self.closed_form


def truncation_experiment(
    snr_value: float, n: int, replicates: int = 200, quantile: float = 0.40, rng=None
) -> TruncationReport:
    """Mean Spearman with and without a ceiling at the ``quantile`` of the full-quality law.

    Each replicate draws one sample and computes Spearman on the raw and on
    the clipped version, so the two means are paired.
    """
    if not (0.0 < quantile < 1.0):
        raise ValueError("quantile must lie in (0, 1)")
    rng = np.random.default_rng(rng)
    ceiling = float(stats.norm.ppf(quantile))
    raw, clipped = np.empty(replicates), np.empty(replicates)
    for r in range(replicates):
        s = sample_bivariate(snr_value, n, rng)
        raw[r] = spearman(s)[0]
        c = PairedSample(np.minimum(s.full, ceiling), np.minimum(s.proxy, ceiling))
        try:
            clipped[r] = spearman(c)[0]
        except DegenerateSampleError:
            # every full value hit the ceiling; no rank information left
            clipped[r] = np.nan
    clipped = clipped[np.isfinite(clipped)]
    return TruncationReport(
        snr_value,
        quantile,
        ceiling,
        clipped.size,
        float(clipped.mean()),
        float(raw.mean()),
        rho_s_closed_form(snr_value),
        float(clipped.std(ddof=1) / math.sqrt(clipped.size)),
    )


__all__ = [
    "BOUND_CONSTANT",
    "CorrelationReport",
    "DegenerateSampleError",
    "PairedSample",
    "SnrReport",
    "bonferroni",
    "correlation_report",
    "fast_spearman",
    "kendall",
    "ordering_experiment",
    "pearson",
    "rho_p_from_snr",
    "rho_s_closed_form",
    "rho_s_lower_bound",
    "sample_bivariate",
    "snr",
    "spearman",
    "spearman_p",
    "spearman_permutation_p",
    "truncation_experiment",
]
