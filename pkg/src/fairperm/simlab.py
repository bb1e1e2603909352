"""Monte-Carlo scenarios and studies of null rejection rates.

Dataset ``i`` of a study is generated from its own stream
``(seed, i, "simulate")`` and tested with the seed ``derive_seed(seed, i,
"test")``, so a study is reproducible and any single dataset can be rebuilt
on its own.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import FairPermError, InvalidConfiguration
from .inference import permutation_test
from .metrics import GroupedSample, MetricKind, MetricSpec, PairedSample, Studentization
from .pvalues import wilson_interval
from .resampling import PermutationPlan, Scheme, basic_bootstrap_distribution, derive_seed, rng_stream

CALIBRATION_LEVELS = (0.01, 0.05, 0.10)
HISTOGRAM_EDGES = tuple(np.round(np.linspace(0.0, 1.0, 11), 10).tolist())


class ScenarioId(enum.Enum):
    UNCORRELATED = "uncorrelated"
    DEPENDENT_EXP = "dependent-exp"
    FNR_IMBALANCED = "fnr-imbalanced"
    STRONG_NULL = "strong-null"

    @property
    def paired(self) -> bool:
        return self in (ScenarioId.UNCORRELATED, ScenarioId.DEPENDENT_EXP)


class Procedure(enum.Enum):
    STUDENTIZED = "studentized"
    UNSTUDENTIZED = "unstudentized"
    BASIC_BOOTSTRAP = "basic-bootstrap"


# --------------------------------------------------------------------------
# Generators
# --------------------------------------------------------------------------


def _heteroskedastic_error(x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    return rng.standard_normal(x.size) / x**2


def gen_uncorrelated(n: int, rng: np.random.Generator) -> PairedSample:
    """x ~ U(1e-5, 1), e = z / x^2: uncorrelated with x but not independent of it."""
    if n < 3:
        raise ValueError("n must be at least 3")
    x = rng.uniform(1e-5, 1.0, n)
    return PairedSample(x, _heteroskedastic_error(x, rng))


def gen_dependent_exp(n: int, rng: np.random.Generator) -> PairedSample:
    """x = 1 + Exp(1), e = z / x^2."""
    if n < 3:
        raise ValueError("n must be at least 3")
    x = 1.0 + rng.standard_exponential(n)
    return PairedSample(x, _heteroskedastic_error(x, rng))


def _check_prob(name: str, p: float, closed: bool = False) -> None:
    ok = 0.0 <= p <= 1.0 if closed else 0.0 < p < 1.0
    if not ok:
        raise ValueError(f"{name} must be in {'[0, 1]' if closed else '(0, 1)'}, got {p}")


def gen_fnr_scenario(
    n_a: int,
    n_b: int,
    p_plus_a: float,
    p_plus_b: float,
    tpr: float,
    tnr: float,
    rng: np.random.Generator,
) -> GroupedSample:
    """Bernoulli labels per group and a classifier with the same TPR/TNR in both."""
    _check_prob("p_plus_a", p_plus_a)
    _check_prob("p_plus_b", p_plus_b)
    _check_prob("tpr", tpr, closed=True)
    _check_prob("tnr", tnr, closed=True)
    n = n_a + n_b
    in_a = np.arange(n) < n_a
    positive = rng.random(n) < np.where(in_a, p_plus_a, p_plus_b)
    flip = rng.random(n) >= np.where(positive, tpr, tnr)
    return GroupedSample(in_a, positive, predicted=positive ^ flip)


def gen_strong_null(n_a: int, n_b: int, rng: np.random.Generator) -> GroupedSample:
    """Both groups drawn from one skewed scored population.

    Labels are Bernoulli(0.4); scores are Beta(2, 5) for negatives and
    Beta(5, 2) for positives, and predictions threshold the score at 0.5.
    """
    n = n_a + n_b
    in_a = np.arange(n) < n_a
    positive = rng.random(n) < 0.4
    score = np.where(positive, rng.beta(5, 2, n), rng.beta(2, 5, n))
    return GroupedSample(in_a, positive, score=score, predicted=score > 0.5)


def gen_scored_population(n: int, rng: np.random.Generator, gap: float = 0.6) -> GroupedSample:
    """Synthetic scored audit data with unequal base rates and a mildly unfair score.

    Group A (about 45% of records) has a 50% base rate, group B 35%.  The
    score is a logistic function of a latent signal whose separation differs
    between groups by ``gap``, so error-rate gaps vary smoothly with the
    threshold and vanish at thresholds 0 and 1.
    """
    in_a = rng.random(n) < 0.45
    positive = rng.random(n) < np.where(in_a, 0.5, 0.35)
    shift = np.where(in_a, 1.0 + gap / 2, 1.0 - gap / 2)
    latent = np.where(positive, shift, -shift) * 0.8 + rng.standard_normal(n)
    score = 1.0 / (1.0 + np.exp(-latent))
    return GroupedSample(in_a, positive, score=score, group_names=("A", "B"))


# --------------------------------------------------------------------------
# Scenarios and test configuration
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SimScenario:
    """A data-generating scenario.

    ``n`` is the number of pairs for the correlation scenarios and the size
    of group A otherwise; ``n_b`` defaults to ``n``.
    """

    scenario: ScenarioId
    n: int | None = None
    n_sims: int = 2000
    n_b: int | None = None
    p_plus_a: float = 0.8
    p_plus_b: float = 0.2
    tpr: float = 0.9
    tnr: float = 0.9

    def __post_init__(self):
        if not isinstance(self.scenario, ScenarioId):
            object.__setattr__(self, "scenario", ScenarioId(self.scenario))
        if self.n is None:
            object.__setattr__(self, "n", 2000 if self.scenario.paired else 200)
        if self.n_b is None:
            object.__setattr__(self, "n_b", self.n)
        if self.n < 10 or self.n_b < 10:
            raise ValueError("datasets need at least 10 records per group")
        if self.n_sims < 1:
            raise ValueError("n_sims must be positive")
        for name in ("p_plus_a", "p_plus_b", "tpr", "tnr"):
            _check_prob(name, getattr(self, name))

    def generate(self, rng: np.random.Generator):
        s = self.scenario
        if s is ScenarioId.UNCORRELATED:
            return gen_uncorrelated(self.n, rng)
        if s is ScenarioId.DEPENDENT_EXP:
            return gen_dependent_exp(self.n, rng)
        if s is ScenarioId.FNR_IMBALANCED:
            return gen_fnr_scenario(
                self.n, self.n_b, self.p_plus_a, self.p_plus_b, self.tpr, self.tnr, rng
            )
        return gen_strong_null(self.n, self.n_b, rng)

    def dataset(self, seed: int, index: int):
        return self.generate(rng_stream(seed, index, "simulate").generator())

    def to_dict(self) -> dict:
        out = {"scenario": self.scenario.value, "n": self.n, "n_sims": self.n_sims}
        if not self.scenario.paired:
            out["n_b"] = self.n_b
        if self.scenario is ScenarioId.FNR_IMBALANCED:
            out.update(p_plus_a=self.p_plus_a, p_plus_b=self.p_plus_b, tpr=self.tpr, tnr=self.tnr)
        return out


def default_metric(scenario: ScenarioId) -> MetricKind:
    if scenario.paired:
        return MetricKind.PEARSON
    if scenario is ScenarioId.FNR_IMBALANCED:
        return MetricKind.FNR
    return MetricKind.MEAN


def default_studentization(kind: MetricKind) -> Studentization:
    # Per-trial bootstrap costs n_b times more than any closed form.
    return Studentization.CLOSED_FORM if kind.has_closed_form else Studentization.PERMUTATION_POOLED


@dataclass(frozen=True)
class StudyConfig:
    procedure: Procedure = Procedure.STUDENTIZED
    metric: MetricKind | None = None
    studentization: Studentization | None = None
    scheme: Scheme | None = None
    n_p: int = 500
    n_b: int = 200
    alpha: float = 0.05
    tau: float | None = None

    def __post_init__(self):
        for name, typ in (("procedure", Procedure),):
            if not isinstance(getattr(self, name), typ):
                object.__setattr__(self, name, typ(getattr(self, name)))
        for name, typ in (("metric", MetricKind), ("studentization", Studentization), ("scheme", Scheme)):
            value = getattr(self, name)
            if value is not None and not isinstance(value, typ):
                object.__setattr__(self, name, typ(value))
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must be in (0, 1)")

    def resolve(self, scenario: ScenarioId) -> "StudyConfig":
        """Fill scenario-dependent defaults and reject incompatible combinations."""
        kind = self.metric or default_metric(scenario)
        if scenario.paired != (kind is MetricKind.PEARSON):
            raise InvalidConfiguration(
                f"metric {kind.value} does not fit the {scenario.value} scenario"
            )
        scheme = self.scheme or (Scheme.PAIRING if scenario.paired else Scheme.POOLED)
        if scenario.paired != (scheme is Scheme.PAIRING):
            raise InvalidConfiguration(f"scheme {scheme.value} does not fit {scenario.value}")
        if self.procedure is Procedure.STUDENTIZED:
            stud = self.studentization or default_studentization(kind)
            if stud is Studentization.NONE:
                raise InvalidConfiguration("the studentized procedure needs a variance estimate")
            if stud is Studentization.CLOSED_FORM and not kind.has_closed_form:
                raise InvalidConfiguration(f"{kind.value} has no closed-form variance")
        else:
            stud = Studentization.NONE
        return replace(self, metric=kind, scheme=scheme, studentization=stud)

    def metric_spec(self) -> MetricSpec:
        return MetricSpec(self.metric, tau=self.tau, studentization=self.studentization)

    def to_dict(self) -> dict:
        return {
            "procedure": self.procedure.value,
            "metric": None if self.metric is None else self.metric.value,
            "studentization": None if self.studentization is None else self.studentization.value,
            "scheme": None if self.scheme is None else self.scheme.value,
            "n_p": self.n_p,
            "n_b": self.n_b,
            "alpha": self.alpha,
            "tau": self.tau,
        }


# --------------------------------------------------------------------------
# Studies
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class StudyResult:
    procedure: Procedure
    alpha: float
    n_sims: int
    p_values: np.ndarray = field(repr=False)
    errors: dict = field(default_factory=dict)

    @property
    def n_valid(self) -> int:
        return int(self.p_values.size)

    @property
    def n_errors(self) -> int:
        return sum(self.errors.values())

    @property
    def rejections(self) -> int:
        return int(np.count_nonzero(self.p_values <= self.alpha))

    @property
    def rejection_probability(self) -> float:
        return self.rejections / self.n_valid if self.n_valid else float("nan")

    def rejection_ci(self, level: float = 0.95) -> tuple[float, float]:
        return wilson_interval(self.rejections, self.n_valid, level)

    @property
    def histogram(self) -> np.ndarray:
        """Mass of the p-values in each decile of [0, 1]."""
        counts, _ = np.histogram(self.p_values, bins=np.asarray(HISTOGRAM_EDGES))
        return counts / max(self.n_valid, 1)

    def calibration(self, levels=CALIBRATION_LEVELS) -> dict[float, float]:
        n = max(self.n_valid, 1)
        return {a: float(np.count_nonzero(self.p_values <= a)) / n for a in levels}

    def to_dict(self) -> dict:
        lo, hi = self.rejection_ci()
        return {
            "procedure": self.procedure.value,
            "alpha": self.alpha,
            "n_sims": self.n_sims,
            "n_valid": self.n_valid,
            "n_errors": self.n_errors,
            "errors": dict(sorted(self.errors.items())),
            "rejection_probability": self.rejection_probability,
            "rejection_ci": [lo, hi],
            "histogram_edges": list(HISTOGRAM_EDGES),
            "histogram": self.histogram.tolist(),
            "calibration": [
                {"alpha": a, "rejection_rate": r} for a, r in self.calibration().items()
            ],
        }


def _run_one(scenario: SimScenario, config: StudyConfig, seed: int, index: int) -> float:
    data = scenario.dataset(seed, index)
    test_seed = derive_seed(seed, index, "test")
    if config.procedure is Procedure.BASIC_BOOTSTRAP:
        return basic_bootstrap_distribution(data, config.metric_spec(), config.n_b, test_seed).p_value
    report = permutation_test(
        data,
        config.metric_spec(),
        PermutationPlan(config.scheme, config.n_p, test_seed),
        config.n_b,
        config.alpha,
    )
    return report.p_value


def study_p_values(
    scenario: SimScenario, config: StudyConfig, seed: int, threads: int = 1
) -> tuple[np.ndarray, dict]:
    """p-value of every simulated dataset (NaN where the test errored) and error counts."""
    config = config.resolve(scenario.scenario)

    def work(i):
        try:
            return _run_one(scenario, config, seed, i), None
        except FairPermError as exc:
            return math.nan, type(exc).__name__

    indices = range(scenario.n_sims)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, indices))
    else:
        results = [work(i) for i in indices]
    errors: dict[str, int] = {}
    for _, err in results:
        if err is not None:
            errors[err] = errors.get(err, 0) + 1
    return np.array([p for p, _ in results]), errors


def run_rejection_study(
    scenario: SimScenario, config: StudyConfig, seed: int, threads: int = 1
) -> StudyResult:
    """Run the configured test on ``n_sims`` simulated datasets.

    Datasets whose test raised a package error are counted in ``errors`` and
    excluded from the rejection rate.
    """
    p, errors = study_p_values(scenario, config, seed, threads)
    return StudyResult(config.procedure, config.alpha, scenario.n_sims, p[np.isfinite(p)], errors)


def run_calibration_study(
    scenario: SimScenario,
    seed: int,
    procedures=tuple(Procedure),
    config: StudyConfig | None = None,
    threads: int = 1,
) -> dict[Procedure, StudyResult]:
    """Each procedure on the same simulated datasets, for side-by-side comparison."""
    base = config or StudyConfig()
    return {
        Procedure(proc): run_rejection_study(
            scenario, replace(base, procedure=Procedure(proc)), seed, threads
        )
        for proc in procedures
    }


# --------------------------------------------------------------------------
# Detection versus sample size
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DetectionCurve:
    kind: MetricKind
    sizes: tuple[int, ...]
    min_detected: np.ndarray  # (len(sizes), reps); NaN where nothing was detected

    @property
    def mean_min_detected(self) -> np.ndarray:
        return np.nanmean(self.min_detected, axis=1)

    def to_dict(self) -> dict:
        return {
            "metric": self.kind.value,
            "sizes": list(self.sizes),
            "min_detected": [[None if math.isnan(v) else float(v) for v in row] for row in self.min_detected],
            "mean_min_detected": [float(v) for v in self.mean_min_detected],
        }


def nested_subsample(data: GroupedSample, size: int, rng_order: np.ndarray) -> GroupedSample:
    """First ``size`` records of a fixed random order, so smaller samples nest in larger ones."""
    idx = np.sort(rng_order[:size])
    return GroupedSample(
        data.in_a[idx],
        data.positive[idx],
        None if data.score is None else data.score[idx],
        None if data.predicted is None else data.predicted[idx],
        data.group_names,
    )


def detection_by_sample_size(
    population: GroupedSample,
    sizes,
    tau_grid,
    kinds=(MetricKind.FPR, MetricKind.RECALL),
    *,
    reps: int = 1,
    n_p: int = 1000,
    alpha: float = 0.05,
    seed: int = 0,
    studentization: Studentization = Studentization.CLOSED_FORM,
    threads: int = 1,
) -> dict[MetricKind, DetectionCurve]:
    """Minimum detected metric gap over a threshold sweep, per sample size.

    Replicate ``r`` draws one random record order and takes nested prefixes
    of it, and every threshold of every size reuses one permutation seed.
    """
    from .inference import min_detectable_difference

    sizes = tuple(int(s) for s in sizes)
    if max(sizes) > population.n:
        raise ValueError("sample size exceeds the population")
    out = {MetricKind(k): np.full((len(sizes), reps), np.nan) for k in kinds}
    for r in range(reps):
        order = rng_stream(seed, r, "subsample").generator().permutation(population.n)
        plan = PermutationPlan(Scheme.POOLED, n_p, derive_seed(seed, r, "sweep"))
        for j, size in enumerate(sizes):
            sub = nested_subsample(population, size, order)
            for kind in out:
                sweep = min_detectable_difference(
                    sub, MetricSpec(kind, studentization=studentization), tau_grid, plan, alpha,
                    threads=threads,
                )
                if sweep.min_detected is not None:
                    out[kind][j, r] = sweep.min_detected
    return {k: DetectionCurve(k, sizes, v) for k, v in out.items()}
