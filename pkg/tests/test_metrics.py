import math

import numpy as np
import pytest

from fairperm import (
    Group,
    GroupedSample,
    MetricKind,
    PairedSample,
    ScaleConvention,
    TieRule,
    auc,
    difference_statistic,
    equalized_odds_distances,
    group_metric,
    pearson_correlation,
)
from fairperm.errors import DegenerateVariance, EmptyConditioningClass, InsufficientData, InvalidConfiguration
from fairperm.metrics import BatchStatistic, MetricSpec, PairedBatch, Studentization, normalize_labels

from oracles import auc_pairs, pearson, rate


def _group(labels, preds=None, scores=None):
    return Group(
        np.asarray(labels, dtype=bool),
        None if scores is None else np.asarray(scores, dtype=float),
        None if preds is None else np.asarray(preds, dtype=bool),
    )


def random_sample(rng, n_a=30, n_b=40, ties=False):
    n = n_a + n_b
    score = rng.integers(0, 5, n) / 4 if ties else rng.random(n)
    return GroupedSample(np.arange(n) < n_a, rng.random(n) < 0.5, score, rng.random(n) < 0.5)


class TestGroupMetric:
    def test_fnr_half(self):
        g = _group([1, 1, 1, 1], preds=[1, 0, 0, 1])
        assert group_metric(g, MetricKind.FNR) == 0.5

    def test_perfect_classifier(self):
        g = _group([1, 0, 1, 0, 1], preds=[1, 0, 1, 0, 1])
        assert group_metric(g, "fnr") == 0.0
        assert group_metric(g, "recall") == 1.0

    def test_threshold_endpoints(self):
        rng = np.random.default_rng(0)
        g = _group(rng.random(50) < 0.5, scores=rng.random(50))
        assert group_metric(g, "recall", tau=0.0) == 1.0
        assert group_metric(g, "recall", tau=1.0) == 0.0

    def test_threshold_overrides_predictions(self):
        g = _group([1, 1, 0, 0], preds=[0, 0, 0, 0], scores=[0.9, 0.2, 0.8, 0.1])
        assert group_metric(g, "recall") == 0.0
        assert group_metric(g, "recall", tau=0.5) == 0.5

    def test_empty_conditioning_class(self):
        g = _group([0, 0, 0], preds=[0, 1, 0])
        with pytest.raises(EmptyConditioningClass):
            group_metric(g, "fnr")

    def test_empty_group(self):
        with pytest.raises(EmptyConditioningClass):
            group_metric(_group([], preds=[]), "accuracy")

    @pytest.mark.parametrize("kind", ["fnr", "fpr", "recall", "tnr", "precision", "accuracy", "eo0", "eo1"])
    def test_rates_match_counting_oracle(self, kind):
        rng = np.random.default_rng(7)
        labels = rng.random(60) < 0.4
        preds = rng.random(60) < 0.5
        g = _group(labels, preds=preds)
        assert group_metric(g, kind) == pytest.approx(rate(labels.tolist(), preds.tolist(), kind), abs=0)

    def test_mean(self):
        g = _group([0, 1, 0], scores=[1.0, 2.0, 6.0])
        assert group_metric(g, "mean") == 3.0

    def test_pearson_is_not_a_group_metric(self):
        with pytest.raises(InvalidConfiguration):
            group_metric(_group([0, 1], scores=[0.1, 0.2]), "pearson")


class TestAuc:
    def test_separated(self):
        g = _group([1, 1, 0, 0], scores=[0.9, 0.8, 0.1, 0.2])
        assert auc(g) == 1.0

    def test_single_tie(self):
        g = _group([1, 0], scores=[0.5, 0.5])
        assert auc(g, TieRule.STRICT) == 0.0
        assert auc(g, TieRule.MIDRANK) == 0.5

    @pytest.mark.parametrize("ties", [False, True])
    def test_pair_count_oracle_20_records(self, ties):
        rng = np.random.default_rng(3)
        labels = np.array([1] * 9 + [0] * 11, dtype=bool)
        scores = rng.integers(0, 4, 20) / 3 if ties else rng.random(20)
        g = _group(labels, scores=scores)
        pos, neg = scores[labels].tolist(), scores[~labels].tolist()
        assert auc(g, TieRule.STRICT) == auc_pairs(pos, neg, midrank=False)
        assert auc(g, TieRule.MIDRANK) == auc_pairs(pos, neg, midrank=True)

    def test_needs_both_classes(self):
        with pytest.raises(EmptyConditioningClass):
            auc(_group([1, 1], scores=[0.1, 0.3]))


class TestDifferenceStatistic:
    def test_identical_groups_give_zero(self):
        rng = np.random.default_rng(1)
        labels = rng.random(25) < 0.5
        scores = rng.random(25)
        preds = rng.random(25) < 0.5
        data = GroupedSample(
            np.r_[np.ones(25, bool), np.zeros(25, bool)],
            np.r_[labels, labels],
            np.r_[scores, scores],
            np.r_[preds, preds],
        )
        for kind in ["mean", "fnr", "fpr", "recall", "tnr", "precision", "accuracy", "auc"]:
            assert difference_statistic(data, kind) == 0.0

    def test_fnr_arithmetic(self):
        # A: 4 positives, 2 missed; B: 4 positives, 1 missed; 16 records in all
        in_a = np.r_[np.ones(8, bool), np.zeros(8, bool)]
        labels = np.array([1, 1, 1, 1, 0, 0, 0, 0] * 2, dtype=bool)
        preds = np.array([0, 0, 1, 1, 0, 0, 0, 0, 0, 1, 1, 1, 0, 0, 0, 0], dtype=bool)
        data = GroupedSample(in_a, labels, predicted=preds)
        assert difference_statistic(data, "fnr") == pytest.approx(1.0, abs=1e-15)

    def test_auc_difference_matches_oracle(self):
        rng = np.random.default_rng(5)
        data = random_sample(rng, 20, 25)
        a, b = data.group_a, data.group_b
        want = (auc_pairs(a.score[a.positive].tolist(), a.score[~a.positive].tolist())
                - auc_pairs(b.score[b.positive].tolist(), b.score[~b.positive].tolist()))
        assert difference_statistic(data, "auc") == pytest.approx(want * math.sqrt(45), rel=1e-12)

    def test_scale_conventions(self):
        rng = np.random.default_rng(2)
        data = random_sample(rng, 30, 50)
        raw = difference_statistic(data, "mean", scale="unscaled")
        assert difference_statistic(data, "mean", scale="sqrt_n") == pytest.approx(raw * math.sqrt(80))
        assert difference_statistic(data, "mean", scale="sqrt_n_a") == pytest.approx(raw * math.sqrt(30))

    def test_swap_negates(self):
        rng = np.random.default_rng(4)
        data = random_sample(rng)
        for kind in ["mean", "fnr", "auc", "precision"]:
            assert difference_statistic(data.swapped(), kind) == -difference_statistic(data, kind)


class TestPearson:
    def test_perfect(self):
        assert pearson_correlation([(1, 1), (2, 2), (3, 3)]) == 1.0
        assert pearson_correlation([(1, 3), (2, 2), (3, 1)]) == -1.0

    def test_matches_textbook_formula(self):
        rng = np.random.default_rng(8)
        x, e = rng.normal(size=50), rng.normal(size=50)
        got = pearson_correlation(list(zip(x, e)))
        assert got == pytest.approx(pearson(x.tolist(), e.tolist()), abs=1e-14)

    def test_errors(self):
        with pytest.raises(InsufficientData):
            pearson_correlation([(1, 2), (2, 3)])
        with pytest.raises(DegenerateVariance):
            pearson_correlation([(1, 2), (2, 2), (3, 2)])


class TestEqualizedOdds:
    def test_endpoints(self):
        rng = np.random.default_rng(9)
        data = random_sample(rng, 40, 60)
        assert equalized_odds_distances(data, 0.0) == (0.0, 0.0)
        assert equalized_odds_distances(data, 1.0) == (0.0, 0.0)

    def test_by_definition(self):
        # A: recall 4/5, FPR 3/10; B: recall 3/5, FPR 3/10
        la = [1] * 5 + [0] * 10
        pa = [1, 1, 1, 1, 0] + [1, 1, 1] + [0] * 7
        pb = [1, 1, 1, 0, 0] + [1, 1, 1] + [0] * 7
        data = GroupedSample(np.r_[np.ones(15, bool), np.zeros(15, bool)],
                             np.array(la + la, bool), predicted=np.array(pa + pb, bool))
        d0, d1 = equalized_odds_distances(data)
        assert d0 == 0.0
        assert d1 == pytest.approx(0.2, abs=1e-15)


class TestSamples:
    def test_label_encodings(self):
        assert normalize_labels([-1, 1, 1]).tolist() == [False, True, True]
        assert normalize_labels([0, 1]).tolist() == [False, True]
        assert normalize_labels(np.array([True, False])).tolist() == [True, False]
        with pytest.raises(ValueError):
            normalize_labels([0, 2])

    def test_canonical_order_ignores_input_order(self):
        rng = np.random.default_rng(10)
        data = random_sample(rng)
        perm = rng.permutation(data.n)
        shuffled = GroupedSample(data.in_a[perm], data.positive[perm], data.score[perm], data.predicted[perm])
        for field in ("in_a", "positive", "score", "predicted"):
            assert np.array_equal(getattr(data, field), getattr(shuffled, field))

    def test_needs_two_groups(self):
        with pytest.raises(InsufficientData):
            GroupedSample(np.ones(3, bool), np.ones(3, bool), predicted=np.ones(3, bool))

    def test_from_arrays_first_seen_is_a(self):
        data = GroupedSample.from_arrays(["F", "M", "F"], [1, 0, 1], predicted=[1, 1, 0])
        assert data.group_names == ("F", "M")
        assert (data.n_a, data.n_b) == (2, 1)

    def test_closed_form_guard(self):
        with pytest.raises(InvalidConfiguration):
            MetricSpec("precision", studentization="closed-form")
        spec = MetricSpec("fnr", studentization="pooled")
        assert spec.studentization is Studentization.PERMUTATION_POOLED


class TestBatch:
    """Vectorized evaluation against scalar evaluation on explicit splits."""

    @pytest.mark.parametrize("kind", ["mean", "fnr", "fpr", "recall", "tnr", "precision", "accuracy", "auc"])
    @pytest.mark.parametrize("ties", [False, True])
    def test_masks_match_scalar(self, kind, ties):
        rng = np.random.default_rng(11)
        data = random_sample(rng, 15, 20, ties=ties)
        stat = BatchStatistic(data, MetricKind(kind), tie_rule=TieRule.MIDRANK)
        masks = np.array([rng.permutation(np.arange(35) < 15) for _ in range(12)])
        got = stat.difference(masks, ~masks)
        for mask, g in zip(masks, got):
            try:
                want = difference_statistic(data.resplit(mask), kind, tie_rule=TieRule.MIDRANK)
            except EmptyConditioningClass:
                assert math.isnan(g)
                continue
            assert g == pytest.approx(want, rel=1e-12, abs=1e-12)

    def test_auc_bootstrap_weights_match_expanded_data(self):
        rng = np.random.default_rng(12)
        data = random_sample(rng, 12, 14, ties=True)
        stat = BatchStatistic(data, MetricKind.AUC, tie_rule=TieRule.MIDRANK)
        idx = np.arange(data.n)
        for _ in range(5):
            wa = np.bincount(rng.choice(idx[data.in_a], 12), minlength=data.n)
            wb = np.bincount(rng.choice(idx[~data.in_a], 14), minlength=data.n)
            got = stat.group_values(wa[None, :].astype(float))[0]
            reps = np.repeat(idx, wa)
            g = Group(data.positive[reps], data.score[reps])
            try:
                want = auc(g, TieRule.MIDRANK)
            except EmptyConditioningClass:
                assert math.isnan(got)
                continue
            assert got == pytest.approx(want, rel=1e-12)

    def test_paired_orders_and_weights(self):
        rng = np.random.default_rng(13)
        pairs = PairedSample(rng.normal(size=30), rng.normal(size=30))
        batch = PairedBatch(pairs, ScaleConvention.UNSCALED)
        assert batch.observed() == pytest.approx(pearson(pairs.x.tolist(), pairs.e.tolist()), abs=1e-13)
        order = rng.permutation(30)
        got = batch.from_orders(order[None, :])[0]
        assert got == pytest.approx(pearson(pairs.x.tolist(), pairs.e[order].tolist()), abs=1e-13)
        w = np.bincount(rng.integers(0, 30, 30), minlength=30)
        reps = np.repeat(np.arange(30), w)
        got = batch.from_weights(w[None, :])[0]
        assert got == pytest.approx(pearson(pairs.x[reps].tolist(), pairs.e[reps].tolist()), abs=1e-12)
