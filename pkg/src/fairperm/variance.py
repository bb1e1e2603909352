"""Variance estimators used to studentize difference statistics."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateVariance, EmptyConditioningClass, InsufficientData, InvalidConfiguration
from .metrics import (
    LABEL_CONDITIONAL,
    BatchStatistic,
    GroupedSample,
    MetricKind,
    MetricSpec,
    PairedBatch,
    PairedSample,
    ScaleConvention,
    TieRule,
    delong_components,
    group_metric,
)
from .resampling import bootstrap_statistics, stream_key

DEFAULT_N_B = 200


class VarianceMethod(enum.Enum):
    CLOSED_FORM_MEAN = "closed-form-mean"
    CLOSED_FORM_PROPORTION = "closed-form-proportion"
    DELONG_AUC = "delong-auc"
    CLOSED_FORM_CORRELATION = "closed-form-correlation"
    BOOTSTRAP = "bootstrap"


@dataclass(frozen=True)
class VarianceEstimate:
    """Estimated variance of a difference statistic under ``scale``."""

    value: float
    method: VarianceMethod
    scale: ScaleConvention
    n_b: int | None = None
    components: dict = field(default_factory=dict)

    def at_scale(self, scale: ScaleConvention, n_a: int, n_b: int) -> float:
        """The same estimate for the statistic scaled by ``scale`` instead."""
        src = self.scale.factor(n_a, n_b) ** 2
        dst = ScaleConvention(scale).factor(n_a, n_b) ** 2
        return self.value * dst / src


def mean_variance(data: GroupedSample) -> VarianceEstimate:
    """s_A^2 + (n_A / n_B) s_B^2: variance of sqrt(n_A) * (mean_A - mean_B)."""
    if data.score is None:
        raise InvalidConfiguration("mean metric needs scores")
    if data.n_a < 2 or data.n_b < 2:
        raise InsufficientData("each group needs at least 2 records")
    sa = float(np.var(data.group_a.score, ddof=1))
    sb = float(np.var(data.group_b.score, ddof=1))
    return VarianceEstimate(
        sa + data.ratio * sb,
        VarianceMethod.CLOSED_FORM_MEAN,
        ScaleConvention.SQRT_N_A,
        components={"s2_a": sa, "s2_b": sb},
    )


def proportion_variance(
    data: GroupedSample, kind: MetricKind, tau: float | None = None, *, pooled: bool = False
) -> VarianceEstimate:
    """Plug-in variance of sqrt(n) * (p_A - p_B) for a label-conditional rate.

    p(1-p) / (p_A * share of the conditioning class), summed over groups; the
    conditioning class is the positives for FNR/recall, negatives for FPR/TNR.
    ``pooled`` replaces both rates by the rate over the whole class, which
    is the form the closed-form permutation studentizer uses.
    """
    kind = MetricKind(kind)
    if kind not in LABEL_CONDITIONAL:
        raise InvalidConfiguration(f"{kind.value} is not a label-conditional rate")
    pa = group_metric(data.group_a, kind, tau)
    pb = group_metric(data.group_b, kind, tau)
    if kind.conditioning == "pos":
        da, db = data.n_a_pos, data.n_b_pos
    else:
        da, db = data.n_a_neg, data.n_b_neg
    if pooled:
        pa = pb = (pa * da + pb * db) / (da + db)
    if pa in (0.0, 1.0) and pb in (0.0, 1.0):
        raise DegenerateVariance("estimated rates are 0 or 1 in both groups")
    n = data.n
    # p_A * phat_{+,A} = n_A^+ / n, so each term is n * p(1-p) / n_A^+.
    va = pa * (1 - pa) / (data.p_a * (da / data.n_a))
    vb = pb * (1 - pb) / ((1 - data.p_a) * (db / data.n_b))
    return VarianceEstimate(
        va + vb,
        VarianceMethod.CLOSED_FORM_PROPORTION,
        ScaleConvention.SQRT_N,
        components={"rate_a": pa, "rate_b": pb, "term_a": va, "term_b": vb, "n": n},
    )


def delong_auc_variance(
    data: GroupedSample, tie_rule: TieRule = TieRule.STRICT
) -> VarianceEstimate:
    """DeLong variance of sqrt(n) * (AUC_A - AUC_B)."""
    groups = {}
    for name, g in (("group_a", data.group_a), ("group_b", data.group_b)):
        if g.n_pos < 2 or g.n_neg < 2:
            raise InsufficientData("DeLong needs at least 2 positives and 2 negatives per group")
        v10, v01 = delong_components(g, tie_rule)
        groups[name] = float(np.var(v10, ddof=1) / g.n_pos + np.var(v01, ddof=1) / g.n_neg)
    total = data.n * (groups["group_a"] + groups["group_b"])
    if total == 0.0:
        raise DegenerateVariance("every DeLong structural component is constant")
    return VarianceEstimate(
        total, VarianceMethod.DELONG_AUC, ScaleConvention.SQRT_N, components=groups
    )


def correlation_variance(pairs: PairedSample) -> VarianceEstimate:
    """Plug-in variance of sqrt(n) * r under zero correlation: mean(u^2 v^2).

    u and v are the coordinates standardized with divisor n.  Independence
    would give 1; heteroskedastic but uncorrelated pairs do not.
    """
    stat = PairedBatch(pairs, ScaleConvention.SQRT_N)
    value = stat.observed_variance()
    if value == 0.0:
        raise DegenerateVariance("correlation variance estimate is zero")
    return VarianceEstimate(value, VarianceMethod.CLOSED_FORM_CORRELATION, ScaleConvention.SQRT_N)


def closed_form_variance(data, metric: MetricSpec) -> VarianceEstimate:
    kind = metric.kind
    if isinstance(data, PairedSample):
        if kind is not MetricKind.PEARSON:
            raise InvalidConfiguration("paired data supports the pearson metric only")
        return correlation_variance(data)
    if kind is MetricKind.PEARSON:
        raise InvalidConfiguration("pearson needs paired data")
    if kind is MetricKind.MEAN:
        return mean_variance(data)
    if kind is MetricKind.AUC:
        return delong_auc_variance(data, metric.tie_rule)
    if kind in LABEL_CONDITIONAL:
        return proportion_variance(data, kind, metric.tau)
    raise InvalidConfiguration(f"{kind.value} has no closed-form variance")


def make_statistic(data, metric: MetricSpec):
    if isinstance(data, PairedSample):
        if metric.kind is not MetricKind.PEARSON:
            raise InvalidConfiguration("paired data supports the pearson metric only")
        return PairedBatch(data, metric.scale)
    return BatchStatistic(data, metric.kind, metric.tau, metric.scale, metric.tie_rule)


def observed_statistic(stat, data) -> float:
    if isinstance(stat, PairedBatch):
        return stat.observed()
    t = float(stat.difference(data.in_a, ~data.in_a)[0])
    if not np.isfinite(t):
        raise EmptyConditioningClass(f"{stat.kind.value} is undefined on the observed data")
    return t


def bootstrap_variance(
    data,
    metric: MetricSpec,
    n_b: int = DEFAULT_N_B,
    seed: int = 0,
    *,
    purpose: str = "bootstrap",
    redraw_cap: int | None = None,
) -> VarianceEstimate:
    """Bootstrap variance: mean over n_b resamples of (T* - T)^2, T on the original data.

    Groups are resampled independently at their own sizes (pairs jointly for
    paired data).  Resamples on which the metric is undefined are redrawn.
    """
    if n_b < 2:
        raise ValueError("n_b must be at least 2")
    stat = make_statistic(data, metric)
    t = observed_statistic(stat, data)
    t_star, redraws = bootstrap_statistics(stat, data, n_b, stream_key(seed, purpose), redraw_cap)
    value = float(np.mean((t_star - t) ** 2))
    scale = metric.scale
    if isinstance(stat, PairedBatch) and scale is ScaleConvention.SQRT_N_A:
        scale = ScaleConvention.SQRT_N  # one sample: both conventions coincide
    return VarianceEstimate(
        value,
        VarianceMethod.BOOTSTRAP,
        scale,
        n_b=n_b,
        components={"redraws": redraws},
    )
