"""Monte-Carlo p-values and their binomial confidence intervals."""

from __future__ import annotations

import math
from statistics import NormalDist

import numpy as np

SIDES = ("two-sided", "upper", "lower")

# Slack, relative to the magnitude of the distribution, when comparing replicate
# statistics with the observed one: the observed split recomputed in another
# record order must still count as a tie.
_RTOL = 1e-10


def normalize_sided(sided: str) -> str:
    aliases = {"two": "two-sided", "two_sided": "two-sided", "two-sided": "two-sided",
               "upper": "upper", "greater": "upper", "lower": "lower", "less": "lower"}
    try:
        return aliases[sided]
    except KeyError:
        raise ValueError(f"sidedness must be one of {SIDES}, got {sided!r}") from None


def count_extreme(values: np.ndarray, observed: float, sided: str = "two-sided") -> int:
    """Number of replicate statistics at least as extreme as ``observed``."""
    sided = normalize_sided(sided)
    values = np.asarray(values, dtype=float)
    finite = np.abs(np.r_[values, observed])
    finite = finite[np.isfinite(finite)]
    gamma = _RTOL * (float(finite.max()) if finite.size else 0.0)
    if sided == "two-sided":
        return int(np.count_nonzero(np.abs(values) >= abs(observed) - gamma))
    if sided == "upper":
        return int(np.count_nonzero(values >= observed - gamma))
    return int(np.count_nonzero(values <= observed + gamma))


def pvalue_from_counts(extreme_count: int, n_p: int, sided: str = "two-sided") -> float:
    """(1 + extreme_count) / (1 + n_p).

    ``sided`` only documents how ``extreme_count`` was obtained; the estimator
    is the same for all three alternatives.
    """
    normalize_sided(sided)
    if not 0 <= extreme_count <= n_p:
        raise ValueError("extreme_count must lie in [0, n_p]")
    return (1 + extreme_count) / (1 + n_p)


def _z(level: float) -> float:
    if not 0.0 < level < 1.0:
        raise ValueError("confidence level must be in (0, 1)")
    return NormalDist().inv_cdf(0.5 + level / 2.0)


def wilson_interval(successes: int, trials: int, level: float = 0.95) -> tuple[float, float]:
    if trials <= 0:
        return (0.0, 1.0)
    z = _z(level)
    p = successes / trials
    denom = 1.0 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = (z / denom) * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials))
    lo = 0.0 if successes == 0 else max(0.0, center - half)
    hi = 1.0 if successes == trials else min(1.0, center + half)
    return (lo, hi)


def agresti_coull_interval(successes: int, trials: int, level: float = 0.95) -> tuple[float, float]:
    if trials <= 0:
        return (0.0, 1.0)
    z = _z(level)
    n_t = trials + z * z
    p_t = (successes + z * z / 2) / n_t
    half = z * math.sqrt(p_t * (1 - p_t) / n_t)
    return (max(0.0, p_t - half), min(1.0, p_t + half))


def pvalue_confidence_interval(
    extreme_count: int, n_p: int, level: float = 0.95, method: str = "wilson"
) -> tuple[float, float]:
    """Binomial CI for the Monte-Carlo p-value, treating extreme_count / n_p as a proportion."""
    if method == "wilson":
        return wilson_interval(extreme_count, n_p, level)
    if method in ("agresti-coull", "agresti_coull"):
        return agresti_coull_interval(extreme_count, n_p, level)
    raise ValueError(f"unknown interval method {method!r}")
