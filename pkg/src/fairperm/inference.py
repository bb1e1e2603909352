"""Permutation tests of a metric difference between two groups.

The driver draws permutation replicates, recomputes the difference statistic
on each, studentizes both the observed and the replicate statistics, and
turns the comparison into a Monte-Carlo p-value with a binomial confidence
interval.  Studentization strategies:

``none``
    compare raw differences (only valid when the statistic is pivotal).
``closed-form``
    divide every replicate by its own plug-in variance (mean, rates, DeLong
    AUC, moment-based correlation variance).
``bootstrap``
    divide every replicate by its own bootstrap variance (n_b resamples per trial).
``pooled``
    standardize replicates by the mean and sd of the permutation distribution,
    and the observed statistic by a bootstrap sd.  Costs O((n_b + n_p) n)
    instead of O(n_b n_p n).
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import (
    DegenerateData,
    DegenerateVariance,
    FairPermError,
    InsufficientTrials,
    InvalidConfiguration,
    InvalidScheme,
)
from .metrics import (
    BatchStatistic,
    GroupedSample,
    MetricKind,
    MetricSpec,
    PairedBatch,
    PairedSample,
    Studentization,
)
from .pvalues import (
    count_extreme,
    normalize_sided,
    pvalue_confidence_interval,
    pvalue_from_counts,
)
from .resampling import (
    DEFAULT_SPLIT_CAP,
    PermutationPlan,
    Scheme,
    all_split_masks,
    bootstrap_statistics,
    chunks,
    pairing_orders,
    run_with_redraws,
    split_masks,
    stream_key,
)
from .variance import DEFAULT_N_B, bootstrap_variance, make_statistic, observed_statistic

__all__ = [
    "Direction",
    "MetricSpec",
    "PermutationPlan",
    "SweepResult",
    "SweepRow",
    "TestReport",
    "directional_conclusion",
    "min_detectable_difference",
    "permutation_test",
    "pvalue_confidence_interval",
    "pvalue_from_counts",
    "sample_size_estimate",
]

DEFAULT_N_P = 1000
DEFAULT_ALPHA = 0.05
MIN_POOLED_TRIALS = 20


class Direction(enum.Enum):
    A_GREATER = "A_greater"
    B_GREATER = "B_greater"
    UNDETERMINED = "Undetermined"


@dataclass(frozen=True)
class TestReport:
    observed_T: float
    observed_S: float
    p_value: float
    p_ci: tuple[float, float]
    n_p_effective: int
    extreme_count: int
    direction: Direction
    alpha: float
    sided: str = "two-sided"
    ci_level: float = 0.95
    exhaustive: bool = False
    diagnostics: dict = field(default_factory=dict)
    # Studentized replicate statistics; kept for histograms, never serialized.
    distribution: np.ndarray | None = field(default=None, repr=False, compare=False)

    __test__ = False  # not a pytest class

    @property
    def rejected(self) -> bool:
        return self.p_value <= self.alpha

    def to_dict(self) -> dict:
        return {
            "observed_T": self.observed_T,
            "observed_S": self.observed_S,
            "p_value": self.p_value,
            "p_ci": list(self.p_ci),
            "ci_level": self.ci_level,
            "n_p_effective": self.n_p_effective,
            "extreme_count": self.extreme_count,
            "direction": self.direction.value,
            "alpha": self.alpha,
            "sided": self.sided,
            "rejected": self.rejected,
            "exhaustive": self.exhaustive,
            "diagnostics": dict(self.diagnostics),
        }


def directional_conclusion(
    p_value: float, observed_S: float, alpha: float, sided: str = "two-sided"
) -> Direction:
    """Which group the metric favours, declared only on rejection (p <= alpha)."""
    if p_value > alpha:
        return Direction.UNDETERMINED
    sided = normalize_sided(sided)
    if sided == "upper":
        return Direction.A_GREATER
    if sided == "lower":
        return Direction.B_GREATER
    if observed_S > 0:
        return Direction.A_GREATER
    if observed_S < 0:
        return Direction.B_GREATER
    return Direction.UNDETERMINED


# --------------------------------------------------------------------------
# Replicate evaluation
# --------------------------------------------------------------------------


@dataclass
class _Job:
    data: object
    stat: object
    metric: MetricSpec
    plan: PermutationPlan
    n_b: int
    redraw_cap: int

    @property
    def paired(self) -> bool:
        return isinstance(self.stat, PairedBatch)

    @property
    def needs_variance(self) -> bool:
        return self.metric.studentization in (Studentization.CLOSED_FORM, Studentization.BOOTSTRAP)

    def build(self, states):
        if self.paired:
            return pairing_orders(self.data.n, states)
        return split_masks(self.data, self.plan.scheme, states)

    def evaluate(self, replicates, trials=None):
        """(T,) or (T, V) per replicate row; NaN marks an undefined replicate."""
        s = self.metric.studentization
        if self.paired:
            if s is Studentization.CLOSED_FORM:
                return self.stat.from_orders_with_variance(replicates)
            T = self.stat.from_orders(replicates)
            if s is not Studentization.BOOTSTRAP:
                return (T,)
            V = np.array([self._paired_boot(order, t) for order, t in zip(replicates, T)])
            return T, V
        masks = replicates
        if s is Studentization.CLOSED_FORM:
            return self.stat.difference_and_variance(masks, ~masks)
        T = self.stat.difference(masks, ~masks)
        if s is not Studentization.BOOTSTRAP:
            return (T,)
        V = np.array([self._grouped_boot(m, t) for m, t in zip(masks, T)])
        return T, V

    def _trial_key(self, mask_or_order) -> int:
        # Keyed by the replicate content so redraws and enumeration stay consistent.
        digest = np.asarray(mask_or_order).tobytes()
        return stream_key(self.plan.master_seed, "bootstrap/trial/" + _short_hash(digest))

    def _grouped_boot(self, mask, t):
        if not np.isfinite(t):
            return np.nan
        try:
            t_star, _ = bootstrap_statistics(
                self.stat, self.data, self.n_b, self._trial_key(mask), in_a=mask
            )
        except DegenerateData:
            return np.nan
        return float(np.mean((t_star - t) ** 2))

    def _paired_boot(self, order, t):
        sample = PairedSample(self.data.x, self.data.e[order])
        stat = PairedBatch(sample, self.metric.scale)
        t_star, _ = bootstrap_statistics(stat, sample, self.n_b, self._trial_key(order))
        return float(np.mean((t_star - t) ** 2))


def _short_hash(raw: bytes) -> str:
    import hashlib

    return hashlib.blake2b(raw, digest_size=12).hexdigest()


def _monte_carlo(job: _Job, threads: int):
    key = stream_key(job.plan.master_seed, "permute")
    parts = chunks(job.plan.n_p)

    def work(trials):
        return run_with_redraws(key, trials, job.build, job.evaluate, job.redraw_cap)

    if threads > 1 and len(parts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, parts))
    else:
        results = [work(p) for p in parts]
    redraws = sum(r for _, r in results)
    if redraws > job.redraw_cap:
        raise DegenerateData(f"more than {job.redraw_cap} redraws")
    outs = tuple(np.concatenate([o[i] for o, _ in results]) for i in range(len(results[0][0])))
    return outs, redraws


def _exhaustive(job: _Job, split_cap: int, threads: int):
    if job.paired:
        raise InvalidScheme("exhaustive mode covers group permutations only")
    masks = all_split_masks(job.data, job.plan.scheme, split_cap)
    parts = chunks(masks.shape[0])

    def work(rows):
        return tuple(np.asarray(o, dtype=float) for o in job.evaluate(masks[rows]))

    if threads > 1 and len(parts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, parts))
    else:
        results = [work(p) for p in parts]
    outs = tuple(np.concatenate([o[i] for o in results]) for i in range(len(results[0])))
    valid = np.all([np.isfinite(o) for o in outs], axis=0)
    return tuple(o[valid] for o in outs), int((~valid).sum())


_ZERO_T = 1e-10


def _studentize(T, V):
    """T / sqrt(V); a zero variance sends a nonzero T to +-inf and keeps T = 0 at 0."""
    T = np.asarray(T, dtype=float)
    V = np.asarray(V, dtype=float)
    out = np.where(np.abs(T) > _ZERO_T, np.copysign(np.inf, T), 0.0)
    np.divide(T, np.sqrt(np.where(V > 0, V, 1.0)), out=out, where=V > 0)
    return out


def _threshold(values: np.ndarray, alpha: float, sided: str) -> float:
    """Critical value of the replicate distribution on the studentized scale."""
    if sided == "two-sided":
        return float(np.quantile(np.abs(values), 1 - alpha, method="higher"))
    if sided == "upper":
        return float(np.quantile(values, 1 - alpha, method="higher"))
    return float(np.quantile(values, alpha, method="lower"))


def permutation_test(
    data: GroupedSample | PairedSample,
    metric: MetricSpec,
    plan: PermutationPlan | None = None,
    n_b: int = DEFAULT_N_B,
    alpha: float = DEFAULT_ALPHA,
    *,
    sided: str = "two-sided",
    exhaustive: bool = False,
    ci_level: float = 0.95,
    ci_method: str = "wilson",
    threads: int = 1,
    redraw_cap: int | None = None,
    split_cap: int = DEFAULT_SPLIT_CAP,
    keep_distribution: bool = False,
) -> TestReport:
    """Permutation test of H0: metric_A == metric_B.

    Monte-Carlo mode returns (1 + #extreme) / (1 + n_p).  Exhaustive mode
    evaluates every distinct split once (the observed one included) and
    returns the exact proportion #extreme / #splits.  Replicates on which the
    metric is undefined are redrawn (Monte-Carlo) or skipped (exhaustive), so
    both modes condition on the same set of usable splits.
    """
    plan = plan or PermutationPlan()
    sided = normalize_sided(sided)
    if not 0 < alpha < 1:
        raise ValueError("alpha must be in (0, 1)")
    paired = isinstance(data, PairedSample)
    if paired != (plan.scheme is Scheme.PAIRING):
        raise InvalidScheme("the pairing scheme goes with paired data and only with it")
    if plan.scheme is Scheme.WITHIN_OUTCOME and (
        data.n_a_pos + data.n_b_pos == 0 or data.n_a_neg + data.n_b_neg == 0
    ):
        raise InvalidScheme("within-outcome permutation needs both label classes")
    stud = metric.studentization
    if stud is Studentization.PERMUTATION_POOLED and plan.n_p < MIN_POOLED_TRIALS:
        raise InvalidConfiguration(f"pooled studentization needs n_p >= {MIN_POOLED_TRIALS}")

    stat = make_statistic(data, metric)
    job = _Job(data, stat, metric, plan, n_b, 100 * plan.n_p if redraw_cap is None else redraw_cap)
    t_obs = observed_statistic(stat, data)
    diagnostics: dict = {"studentization": stud.value}

    # observed variance
    v_obs = None
    if stud is Studentization.CLOSED_FORM:
        if paired:
            v_obs = stat.observed_variance()
        else:
            v_obs = float(stat.difference_and_variance(data.in_a, ~data.in_a)[1][0])
        if not np.isfinite(v_obs):
            raise DegenerateVariance("closed-form variance undefined on the observed data")
        diagnostics["variance_method"] = f"closed-form-{metric.kind.value}"
    elif stud in (Studentization.BOOTSTRAP, Studentization.PERMUTATION_POOLED):
        est = bootstrap_variance(data, metric, n_b, plan.master_seed, purpose="bootstrap/observed")
        v_obs = est.value
        diagnostics["variance_method"] = "bootstrap"
        diagnostics["bootstrap_redraws"] = est.components.get("redraws", 0)
    else:
        diagnostics["variance_method"] = "none"
    diagnostics["observed_variance"] = v_obs

    # replicates
    if exhaustive:
        outs, skipped = _exhaustive(job, split_cap, threads)
        diagnostics["skipped_splits"] = skipped
        redraws = 0
    else:
        outs, redraws = _monte_carlo(job, threads)
    diagnostics["redraws"] = redraws
    T = outs[0]
    if T.size == 0:
        raise InsufficientTrials("no usable permutation replicate")
    diagnostics["permutation_mean"] = float(np.mean(T))
    diagnostics["permutation_variance"] = float(np.var(T, ddof=1)) if T.size > 1 else 0.0

    # studentize
    degenerate = bool(np.all(T == T[0]))
    diagnostics["degenerate_distribution"] = degenerate
    if stud is Studentization.NONE:
        S, s_obs = T, t_obs
    elif stud is Studentization.PERMUTATION_POOLED:
        sd = math.sqrt(diagnostics["permutation_variance"])
        S = (T - diagnostics["permutation_mean"]) / sd if sd > 0 else np.zeros_like(T)
        s_obs = float(_studentize([t_obs], [v_obs])[0])
    else:
        S = _studentize(T, outs[1])
        s_obs = float(_studentize([t_obs], [v_obs])[0])
    diagnostics["zero_observed_variance"] = v_obs == 0.0

    n_eff = int(T.size)
    if degenerate:
        extreme = n_eff
        p = 1.0
    else:
        extreme = count_extreme(S, s_obs, sided)
        if exhaustive:
            extreme = max(extreme, 1)
            p = extreme / n_eff
        else:
            p = pvalue_from_counts(extreme, n_eff, sided)
    if exhaustive:
        lo = hi = p
    else:
        lo, hi = pvalue_confidence_interval(extreme, n_eff, ci_level, ci_method)
    p_ci = (min(lo, p), max(hi, p))

    crit = _threshold(S, alpha, sided)
    if stud is Studentization.NONE:
        crit_t = crit
    elif v_obs:
        crit_t = crit * math.sqrt(v_obs)
    else:
        crit_t = float("nan")
    diagnostics["critical_value_S"] = crit
    diagnostics["rejection_threshold"] = crit_t / stat.factor if np.isfinite(crit_t) else None

    return TestReport(
        observed_T=float(t_obs),
        observed_S=float(s_obs),
        p_value=float(p),
        p_ci=(float(p_ci[0]), float(p_ci[1])),
        n_p_effective=n_eff,
        extreme_count=int(extreme),
        direction=directional_conclusion(p, s_obs, alpha, sided),
        alpha=alpha,
        sided=sided,
        ci_level=ci_level,
        exhaustive=exhaustive,
        diagnostics=diagnostics,
        distribution=S if keep_distribution else None,
    )


# --------------------------------------------------------------------------
# Threshold sweeps and sample size
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    tau: float
    difference: float | None
    threshold: float | None
    detected: bool
    p_value: float | None
    skipped: str | None = None

    def to_dict(self) -> dict:
        return {
            "tau": self.tau,
            "difference": self.difference,
            "threshold": self.threshold,
            "detected": self.detected,
            "p_value": self.p_value,
            "skipped": self.skipped,
        }


@dataclass(frozen=True)
class SweepResult:
    kind: MetricKind
    rows: list[SweepRow]

    @property
    def evaluated(self) -> list[SweepRow]:
        return [r for r in self.rows if r.skipped is None]

    @property
    def min_detected(self) -> float | None:
        """Smallest |difference| among grid points where the test rejected."""
        hits = [abs(r.difference) for r in self.evaluated if r.detected]
        return min(hits) if hits else None


def min_detectable_difference(
    data: GroupedSample,
    metric: MetricSpec,
    tau_grid: Sequence[float],
    plan: PermutationPlan | None = None,
    alpha: float = DEFAULT_ALPHA,
    *,
    n_b: int = DEFAULT_N_B,
    sided: str = "two-sided",
    threads: int = 1,
) -> SweepResult:
    """Run the test at every threshold and record the detected differences.

    Every grid point reuses the same plan (and therefore the same random
    splits), which keeps neighbouring thresholds comparable.
    """
    tau_grid = list(tau_grid)
    if not tau_grid:
        raise ValueError("tau grid is empty")
    rows = []
    for tau in tau_grid:
        m = replace(metric, tau=float(tau))
        try:
            rep = permutation_test(data, m, plan, n_b, alpha, sided=sided, threads=threads)
        except FairPermError as exc:
            rows.append(SweepRow(float(tau), None, None, False, None, type(exc).__name__))
            continue
        factor = make_statistic(data, m).factor
        rows.append(
            SweepRow(
                float(tau),
                rep.observed_T / factor,
                rep.diagnostics["rejection_threshold"],
                rep.rejected,
                rep.p_value,
            )
        )
    return SweepResult(metric.kind, rows)


def sample_size_estimate(target_difference: float, per_unit_variance: float) -> int:
    """Smallest equal group size n with 2 * sqrt(2 v / n) <= target.

    Normal approximation: the unscaled difference of two group means of n
    units each has variance 2 v / n, and twice its sd approximates the 95th
    percentile of the permutation distribution.
    """
    if target_difference <= 0:
        raise ValueError("target difference must be positive")
    if per_unit_variance <= 0:
        raise ValueError("per-unit variance must be positive")
    exact = 8.0 * per_unit_variance / target_difference**2
    n = math.ceil(exact)
    # absorb float error such as 8*0.25/0.1**2 = 199.99999999999997
    if n - 1 >= 1 and math.isclose(n - 1, exact, rel_tol=1e-12):
        n -= 1
    return max(n, 1)
