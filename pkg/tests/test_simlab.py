import numpy as np
import pytest

from fairperm.errors import InvalidConfiguration
from fairperm.simlab import (
    HISTOGRAM_EDGES,
    Procedure,
    ScenarioId,
    SimScenario,
    StudyConfig,
    StudyResult,
    detection_by_sample_size,
    gen_dependent_exp,
    gen_fnr_scenario,
    gen_scored_population,
    gen_strong_null,
    gen_uncorrelated,
    nested_subsample,
    run_calibration_study,
    run_rejection_study,
)


def ranks(a):
    return np.argsort(np.argsort(a))


class TestGenerators:
    def test_uncorrelated_population_correlation(self):
        p = gen_uncorrelated(10**6, np.random.default_rng(0))
        assert abs(np.corrcoef(p.x, p.e)[0, 1]) < 0.01
        assert p.x.min() > 1e-5 and p.x.max() < 1.0

    def test_uncorrelated_but_dependent(self):
        p = gen_uncorrelated(10**5, np.random.default_rng(1))
        # |e| has no finite variance here, so the dependence is measured on ranks
        assert np.corrcoef(ranks(p.x), ranks(np.abs(p.e)))[0, 1] < -0.1

    def test_dependent_exp(self):
        p = gen_dependent_exp(10**6, np.random.default_rng(2))
        assert p.x.min() >= 1.0
        assert abs(p.x.mean() - 2.0) < 0.01
        q = gen_dependent_exp(10**5, np.random.default_rng(3))
        assert np.corrcoef(q.x, np.abs(q.e))[0, 1] < -0.1

    def test_fnr_scenario_perfect_classifier(self):
        d = gen_fnr_scenario(300, 300, 0.8, 0.2, 1.0, 1.0, np.random.default_rng(3))
        assert np.array_equal(d.predicted, d.positive)

    def test_fnr_scenario_rates(self):
        d = gen_fnr_scenario(10**6, 10**6, 0.5, 0.5, 0.9, 0.7, np.random.default_rng(4))
        pos = d.positive
        assert abs((~d.predicted[pos]).mean() - 0.1) < 0.002
        assert abs(d.predicted[~pos].mean() - 0.3) < 0.002

    def test_fnr_scenario_group_proportions(self):
        d = gen_fnr_scenario(10**5, 10**5, 0.8, 0.2, 0.9, 0.9, np.random.default_rng(5))
        assert abs(d.positive[d.in_a].mean() - 0.8) < 0.005
        assert abs(d.positive[~d.in_a].mean() - 0.2) < 0.005

    def test_probabilities_validated(self):
        with pytest.raises(ValueError):
            gen_fnr_scenario(10, 10, 0.0, 0.2, 0.9, 0.9, np.random.default_rng(0))
        with pytest.raises(ValueError):
            SimScenario("fnr-imbalanced", p_plus_a=1.0)
        with pytest.raises(ValueError):
            SimScenario("strong-null", n=5)

    def test_strong_null_groups_identical_in_law(self):
        d = gen_strong_null(50_000, 50_000, np.random.default_rng(6))
        for arr in (d.positive, d.score, d.predicted):
            assert abs(arr[d.in_a].mean() - arr[~d.in_a].mean()) < 0.01

    def test_scored_population_gap_closes_at_ends(self):
        d = gen_scored_population(5000, np.random.default_rng(7))
        assert 0.0 < d.score.min() and d.score.max() < 1.0
        from fairperm import equalized_odds_distances

        assert equalized_odds_distances(d, 0.0) == (0.0, 0.0)
        assert equalized_odds_distances(d, 1.0) == (0.0, 0.0)
        assert max(map(abs, equalized_odds_distances(d, 0.5))) > 0.05


class TestStreams:
    @pytest.mark.parametrize("sid", list(ScenarioId))
    def test_dataset_deterministic_and_separated(self, sid):
        sc = SimScenario(sid, n=50)
        a, b, c = sc.dataset(1, 0), sc.dataset(1, 0), sc.dataset(1, 1)
        field = "e" if sid.paired else ("score" if sid is ScenarioId.STRONG_NULL else "predicted")
        assert np.array_equal(getattr(a, field), getattr(b, field))
        assert not np.array_equal(getattr(a, field), getattr(c, field))
        assert not np.array_equal(getattr(a, field), getattr(sc.dataset(2, 0), field))


class TestStudyResult:
    def test_wilson_width_shrinks(self):
        rng = np.random.default_rng(8)
        small = StudyResult(Procedure.STUDENTIZED, 0.05, 500, rng.random(500))
        large = StudyResult(Procedure.STUDENTIZED, 0.05, 2000, rng.random(2000))
        w = [r.rejection_ci()[1] - r.rejection_ci()[0] for r in (small, large)]
        assert w[1] < w[0]

    def test_summary_invariants(self):
        p = np.r_[np.linspace(0.001, 1.0, 99), 1.0]
        r = StudyResult(Procedure.UNSTUDENTIZED, 0.05, 102, p, {"DegenerateVariance": 2})
        assert r.histogram.sum() == pytest.approx(1.0)
        assert len(r.histogram) == len(HISTOGRAM_EDGES) - 1
        assert 0.0 <= r.rejection_probability <= 1.0
        lo, hi = r.rejection_ci()
        assert lo <= r.rejection_probability <= hi
        assert r.n_errors == 2 and r.n_valid == 100
        assert set(r.calibration()) == {0.01, 0.05, 0.10}


class TestStudies:
    def test_config_resolution(self):
        cfg = StudyConfig("studentized").resolve(ScenarioId.FNR_IMBALANCED)
        assert cfg.metric.value == "fnr" and cfg.studentization.value == "closed-form"
        assert StudyConfig("studentized").resolve(ScenarioId.UNCORRELATED).scheme.value == "pairing"
        assert StudyConfig("unstudentized").resolve(ScenarioId.STRONG_NULL).studentization.value == "none"
        with pytest.raises(InvalidConfiguration):
            StudyConfig("studentized", scheme="pairing").resolve(ScenarioId.FNR_IMBALANCED)
        with pytest.raises(InvalidConfiguration):
            StudyConfig("studentized", metric="precision", studentization="closed-form").resolve(
                ScenarioId.STRONG_NULL)

    def test_deterministic_and_thread_invariant(self):
        sc = SimScenario("fnr-imbalanced", n_sims=24)
        cfg = StudyConfig("studentized", n_p=99)
        a = run_rejection_study(sc, cfg, seed=3, threads=1)
        b = run_rejection_study(sc, cfg, seed=3, threads=3)
        assert np.array_equal(a.p_values, b.p_values)
        assert a.to_dict() == b.to_dict()

    def test_calibration_study_shares_datasets(self):
        sc = SimScenario("fnr-imbalanced", n_sims=10)
        out = run_calibration_study(sc, 4, config=StudyConfig(n_p=49, n_b=49))
        assert set(out) == set(Procedure)
        assert all(r.n_valid + r.n_errors == 10 for r in out.values())

    def test_balanced_base_rates_keep_both_tests_calibrated(self):
        # with equal base rates the pooled permutation law matches the sampling law
        sc = SimScenario("fnr-imbalanced", p_plus_a=0.5, p_plus_b=0.5, n_sims=1000)
        for proc in ("studentized", "unstudentized"):
            r = run_rejection_study(sc, StudyConfig(proc, n_p=199), seed=21)
            assert abs(r.rejection_probability - 0.05) <= 0.02, (proc, r.rejection_probability)


def test_nested_subsamples_nest():
    d = gen_scored_population(300, np.random.default_rng(9))
    order = np.random.default_rng(1).permutation(d.n)
    small, big = nested_subsample(d, 100, order), nested_subsample(d, 200, order)
    assert small.n == 100 and big.n == 200
    assert set(small.score.tolist()) <= set(big.score.tolist())


def test_detection_curve_shape():
    d = gen_scored_population(800, np.random.default_rng(10))
    curves = detection_by_sample_size(d, (200, 400), [0.3, 0.5, 0.7], reps=2, n_p=99, seed=1)
    for curve in curves.values():
        assert curve.min_detected.shape == (2, 2)
        assert len(curve.to_dict()["mean_min_detected"]) == 2
