"""Permutation tests for differences in group fairness metrics."""

from .errors import *  # noqa: F401,F403
from .inference import (
    Direction,
    SweepResult,
    SweepRow,
    TestReport,
    directional_conclusion,
    min_detectable_difference,
    permutation_test,
    sample_size_estimate,
)
from .metrics import (
    Group,
    GroupedSample,
    MetricKind,
    MetricSpec,
    PairedSample,
    ScaleConvention,
    ScoredRecord,
    Studentization,
    TieRule,
    auc,
    difference_statistic,
    equalized_odds_distances,
    group_metric,
    pearson_correlation,
)
from .pvalues import pvalue_confidence_interval, pvalue_from_counts, wilson_interval
from .resampling import PermutationPlan, Scheme, enumerate_all_splits, rng_stream
from .variance import VarianceEstimate, bootstrap_variance, closed_form_variance

__version__ = "0.1.0"
