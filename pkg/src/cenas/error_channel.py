"""Two-state Markov token-error channel.

Each generated token is either *correct* or an *error*. From a correct
token the next one errs with probability ``eps``; an error persists with
probability ``gamma``. A sequence is valid when it contains no error token
and, independently, passes a format check with probability ``pi_full`` or
``pi_delta`` depending on the generation mode.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

FULL = "full"
DELTA = "delta"


@dataclass(frozen=True)
class MarkovErrorParams:
    """Channel parameters.

    Parameters
    ----------
    eps : float
        P(error | previous correct), in ``[0, 1)``. ``eps = 0`` disables errors.
    gamma : float
        P(error | previous error), in ``[eps, 1)``. ``gamma == eps`` is the
        independent-token model.
    l_full : float
        Mean length of a full program, in tokens.
    alpha : float
        Delta length as a fraction of ``l_full``, in ``(0, 1)``.
    pi_full, pi_delta : float
        Format-validity probabilities given token-level correctness, in ``(0, 1]``.
    """

    eps: float = 0.005
    gamma: float = 0.3
    l_full: float = 200
    alpha: float = 0.20
    pi_full: float = 1.0
    pi_delta: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.eps < 1.0):
            raise ValueError(f"eps must lie in [0, 1), got {self.eps}")
        if not (self.eps <= self.gamma < 1.0):
            raise ValueError(f"gamma must lie in [eps, 1), got {self.gamma}")
        if not (0.0 < self.alpha < 1.0):
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.l_full < 1:
            raise ValueError("l_full must be at least one token")
        for name in ("pi_full", "pi_delta"):
            v = getattr(self, name)
            if not (0.0 < v <= 1.0):
                raise ValueError(f"{name} must lie in (0, 1], got {v}")

    @property
    def lam(self) -> float:
        """Per-token validity probability ``1 - eps``."""
        return 1.0 - self.eps

    @property
    def l_delta(self) -> int:
        return delta_length(self.l_full, self.alpha)

    def length(self, mode: str) -> int:
        if mode == FULL:
            return max(1, int(math.floor(self.l_full + 0.5)))
        if mode == DELTA:
            return self.l_delta
        raise ValueError(f"unknown generation mode {mode!r}")

    def format_prob(self, mode: str) -> float:
        if mode == FULL:
            return self.pi_full
        if mode == DELTA:
            return self.pi_delta
        raise ValueError(f"unknown generation mode {mode!r}")


def delta_length(l_full: float, alpha: float) -> int:
    # round half up, never below one token
    return max(1, int(math.floor(alpha * l_full + 0.5)))


def stationary_correct_prob(p: MarkovErrorParams) -> float:
    return (1.0 - p.gamma) / (1.0 - p.gamma + p.eps)


def no_error_probability(p: MarkovErrorParams, L: int) -> float:
    """P(a length-``L`` sequence started from stationarity has no error token)."""
    if L < 1:
        raise ValueError("sequence length must be at least 1")
    return stationary_correct_prob(p) * (1.0 - p.eps) ** (L - 1)


def markov_constant(p: MarkovErrorParams) -> float:
    """Length-independent prefactor: ``no_error_probability = C * (1 - eps)**L``."""
    return stationary_correct_prob(p) / (1.0 - p.eps)


def valid_rate(p: MarkovErrorParams, mode: str = FULL) -> float:
    return no_error_probability(p, p.length(mode)) * p.format_prob(mode)


def valid_rate_ratio(p: MarkovErrorParams) -> float:
    """Closed-form delta/full valid-rate ratio ``lam**((alpha-1) L_full) * pi_delta/pi_full``.

    Uses the real-valued delta length ``alpha * L_full``; :func:`valid_rate`
    rounds it to whole tokens, so the two agree exactly only when
    ``alpha * L_full`` is an integer.
    """
    return p.lam ** ((p.alpha - 1.0) * p.l_full) * (p.pi_delta / p.pi_full)


def ratio_lower_bound(lam_floor: float, alpha: float, l_full: float) -> float:
    """Direction-of-effect bound ``exp((1-alpha) L_full log(1/lam_floor))``."""
    return math.exp((1.0 - alpha) * l_full * math.log(1.0 / lam_floor))


def simulate_no_error(p: MarkovErrorParams, L: int, trials: int, rng) -> np.ndarray:
    """Run ``trials`` independent chains of ``L`` tokens; True where no token erred.

    The initial state is drawn from the stationary law and every transition,
    including error persistence and recovery, is simulated explicitly.
    """
    if L < 1:
        raise ValueError("sequence length must be at least 1")
    rng = np.random.default_rng(rng)
    pi_c = stationary_correct_prob(p)
    err = rng.random(trials) >= pi_c
    seen_error = err.copy()
    for _ in range(L - 1):
        u = rng.random(trials, dtype=np.float32)
        # error next iff (correct and u < eps) or (error and u < gamma)
        err = np.where(err, u < p.gamma, u < p.eps)
        seen_error |= err
    return ~seen_error


def simulate_validity(p: MarkovErrorParams, mode: str, trials: int, rng) -> np.ndarray:
    rng = np.random.default_rng(rng)
    ok = simulate_no_error(p, p.length(mode), trials, rng)
    fmt = p.format_prob(mode)
    if fmt < 1.0:
        ok &= rng.random(trials) < fmt
    return ok


def corrupt_and_validate(p: MarkovErrorParams, mode: str, rng) -> bool:
    """Generate one sequence through the channel and report whether it is valid."""
    return bool(simulate_validity(p, mode, 1, rng)[0])


@dataclass(frozen=True)
class ChannelCheck:
    closed_form: float
    estimate: float
    sigma: float
    z: float
    trials: int

    @property
    def passed(self) -> bool:
        return self.z <= 4.0


def check_against_simulation(p: MarkovErrorParams, L: int, trials: int, rng) -> ChannelCheck:
    """Closed-form no-error probability versus a Monte-Carlo estimate (binomial sigma)."""
    exact = no_error_probability(p, L)
    est = float(simulate_no_error(p, L, trials, rng).mean())
    sigma = math.sqrt(max(exact * (1.0 - exact), 1e-300) / trials)
    return ChannelCheck(exact, est, sigma, abs(est - exact) / sigma, trials)
