import math
from collections import Counter

import numpy as np
import pytest

from fairperm import GroupedSample, MetricSpec, PairedSample
from fairperm.errors import DegenerateData, InvalidScheme, TooManySplits
from fairperm.resampling import (
    PermutationPlan,
    Scheme,
    all_split_masks,
    basic_bootstrap_distribution,
    chunks,
    count_splits,
    derive_seed,
    enumerate_all_splits,
    grouped_bootstrap_weights,
    permute_pairing,
    permute_pooled,
    permute_within_outcome,
    pooled_masks,
    rng_stream,
    run_with_redraws,
    stream_key,
    trial_states,
    within_outcome_masks,
)


def tiny(n_a, n_b, labels=None):
    n = n_a + n_b
    labels = np.ones(n, bool) if labels is None else np.asarray(labels, bool)
    return GroupedSample(np.arange(n) < n_a, labels, score=np.arange(n, dtype=float))


class TestStreams:
    def test_same_query_same_output(self):
        a = rng_stream(42, 0, "permute").uint64(1000)
        b = rng_stream(42, 0, "permute").uint64(1000)
        assert np.array_equal(a, b)

    def test_trial_separation(self):
        a = rng_stream(42, 0, "permute").uint64(1000)
        b = rng_stream(42, 1, "permute").uint64(1000)
        assert not np.any(a == b)

    def test_purpose_separation(self):
        a = rng_stream(42, 0, "permute").uint64(1000)
        b = rng_stream(42, 0, "bootstrap").uint64(1000)
        assert not np.any(a == b)

    def test_uniform_floats(self):
        u = rng_stream(1, 0, "x").random(100_000)
        assert u.min() >= 0.0 and u.max() < 1.0
        assert abs(u.mean() - 0.5) < 0.005

    def test_batched_states_match_single(self):
        key = stream_key(7, "permute")
        batch = trial_states(key, np.arange(10))
        single = [rng_stream(7, i, "permute").state for i in range(10)]
        assert batch.tolist() == [int(s) for s in single]

    def test_redraw_changes_stream(self):
        s = rng_stream(3, 5, "permute")
        assert s.redraw().state != s.state

    def test_derive_seed_range(self):
        seeds = {derive_seed(9, i, "test") for i in range(100)}
        assert len(seeds) == 100
        assert all(0 <= s < 2**63 for s in seeds)


def _freqs(masks):
    counts = Counter(tuple(np.flatnonzero(m)) for m in masks)
    total = sum(counts.values())
    return {k: v / total for k, v in counts.items()}


class TestPermutations:
    def test_two_records_two_splits(self):
        data = tiny(1, 1)
        masks = pooled_masks(data, trial_states(stream_key(1, "p"), np.arange(10_000)))
        freqs = _freqs(masks)
        assert len(freqs) == 2
        assert all(abs(f - 0.5) <= 0.02 for f in freqs.values())

    def test_four_records_six_splits(self):
        data = tiny(2, 2)
        masks = pooled_masks(data, trial_states(stream_key(2, "p"), np.arange(60_000)))
        freqs = _freqs(masks)
        assert len(freqs) == 6
        assert all(abs(f - 1 / 6) <= 0.02 for f in freqs.values())

    def test_within_outcome_four_splits(self):
        data = GroupedSample(np.array([1, 1, 0, 0], bool), np.array([1, 0, 1, 0], bool),
                             score=np.arange(4.0))
        states = trial_states(stream_key(3, "p"), np.arange(40_000))
        masks = within_outcome_masks(data, states)
        freqs = _freqs(masks)
        assert len(freqs) == 4
        assert all(abs(f - 0.25) <= 0.02 for f in freqs.values())

    def test_within_outcome_preserves_class_counts(self):
        rng = np.random.default_rng(0)
        data = GroupedSample(np.arange(30) < 12, rng.random(30) < 0.4, score=rng.random(30))
        masks = within_outcome_masks(data, trial_states(stream_key(4, "p"), np.arange(500)))
        pos = data.positive
        assert np.all((masks & pos).sum(1) == data.n_a_pos)
        assert np.all((masks & ~pos).sum(1) == data.n_a_neg)

    def test_within_outcome_all_positive_is_pooled(self):
        data = tiny(3, 4)
        states = trial_states(stream_key(5, "p"), np.arange(50))
        assert np.array_equal(within_outcome_masks(data, states), pooled_masks(data, states))

    def test_split_sizes_and_multiset(self):
        data = tiny(5, 8)
        split = permute_pooled(data, rng_stream(0, 0, "permute"))
        assert (split.n_a, split.n_b) == (5, 8)
        split = permute_within_outcome(data, rng_stream(0, 1, "permute"))
        assert (split.n_a, split.n_b) == (5, 8)

    def test_pairing_two_pairs(self):
        pairs = PairedSample(np.array([0.0, 1.0]), np.array([5.0, 7.0]))
        seen = Counter()
        for i in range(10_000):
            _, e = permute_pairing(pairs, rng_stream(6, i, "permute"))
            seen[tuple(e)] += 1
        assert set(seen) == {(5.0, 7.0), (7.0, 5.0)}
        assert all(abs(v / 10_000 - 0.5) <= 0.02 for v in seen.values())

    def test_pairing_preserves_multisets_and_constant_e(self):
        rng = np.random.default_rng(1)
        pairs = PairedSample(rng.random(20), rng.random(20))
        x, e = permute_pairing(pairs, rng_stream(7, 0, "permute"))
        assert np.array_equal(x, pairs.x)
        assert sorted(e) == sorted(pairs.e)
        constant = PairedSample(rng.random(10), np.full(10, 2.5))
        x, e = permute_pairing(constant, rng_stream(7, 1, "permute"))
        assert np.array_equal(x, constant.x) and np.array_equal(e, constant.e)


class TestEnumeration:
    def test_counts(self):
        assert len(list(enumerate_all_splits(tiny(2, 2)))) == 6
        data = GroupedSample(np.array([1, 1, 0, 0], bool), np.array([1, 0, 1, 0], bool), score=np.arange(4.0))
        assert len(list(enumerate_all_splits(data, Scheme.WITHIN_OUTCOME))) == 4

    def test_twenty_distinct(self):
        masks = all_split_masks(tiny(3, 3))
        assert masks.shape == (20, 6)
        assert len({tuple(m) for m in masks}) == 20
        assert np.all(masks.sum(1) == 3)

    def test_product_of_binomials(self):
        rng = np.random.default_rng(2)
        data = GroupedSample(np.arange(11) < 5, rng.random(11) < 0.5, score=rng.random(11))
        want = math.comb(int(data.positive.sum()), data.n_a_pos) * math.comb(int((~data.positive).sum()), data.n_a_neg)
        assert count_splits(data, "within-outcome") == want
        assert all_split_masks(data, "within-outcome").shape[0] == want

    def test_cap(self):
        with pytest.raises(TooManySplits):
            all_split_masks(tiny(10, 10), cap=1000)

    def test_pairing_not_enumerable(self):
        with pytest.raises(InvalidScheme):
            count_splits(tiny(2, 2), "pairing")


class TestBootstrapAndRedraws:
    def test_grouped_weights_respect_groups(self):
        idx_a, idx_b = np.arange(4), np.arange(4, 10)
        wa, wb = grouped_bootstrap_weights(idx_a, idx_b, 10, trial_states(1, np.arange(50)))
        assert np.all(wa.sum(1) == 4) and np.all(wb.sum(1) == 6)
        assert np.all(wa[:, 4:] == 0) and np.all(wb[:, :4] == 0)

    def test_redraws_only_touch_bad_trials(self):
        key = stream_key(0, "t")

        def build(states):
            return states

        def evaluate(states):
            # first attempt of even trials is "undefined"
            return (np.where(states % np.uint64(2) == 0, np.nan, 1.0),)

        (out,), redraws = run_with_redraws(key, np.arange(64), build, evaluate, cap=10_000)
        assert np.all(out == 1.0) and redraws > 0

    def test_redraw_cap(self):
        with pytest.raises(DegenerateData):
            run_with_redraws(0, np.arange(4), lambda s: s, lambda s: (np.full(s.size, np.nan),), cap=20)

    def test_chunks_cover(self):
        parts = chunks(1000, 256)
        assert np.array_equal(np.concatenate(parts), np.arange(1000))

    def test_basic_bootstrap_constant_metric(self):
        rng = np.random.default_rng(3)
        # everyone predicted positive: FNR is 0 on every resample
        data = GroupedSample(np.arange(40) < 20, rng.random(40) < 0.6, predicted=np.ones(40, bool))
        res = basic_bootstrap_distribution(data, MetricSpec("fnr"), 100, seed=1)
        assert np.all(res.deltas == 0.0)

    def test_basic_bootstrap_deterministic(self):
        rng = np.random.default_rng(4)
        data = GroupedSample(np.arange(60) < 30, rng.random(60) < 0.6, predicted=rng.random(60) < 0.5)
        a = basic_bootstrap_distribution(data, MetricSpec("fnr"), 200, seed=5)
        b = basic_bootstrap_distribution(data, MetricSpec("fnr"), 200, seed=5)
        assert np.array_equal(a.deltas, b.deltas) and a.p_value == b.p_value

    def test_plan_validation(self):
        with pytest.raises(ValueError):
            PermutationPlan(n_p=0)
        assert PermutationPlan("within-outcome").scheme is Scheme.WITHIN_OUTCOME


def test_basic_bootstrap_tail_modes():
    rng = np.random.default_rng(5)
    data = GroupedSample(np.arange(80) < 40, rng.random(80) < 0.6, predicted=rng.random(80) < 0.5)
    eq = basic_bootstrap_distribution(data, MetricSpec("fnr"), 300, seed=2)
    sym = basic_bootstrap_distribution(data, MetricSpec("fnr"), 300, seed=2, tails="symmetric")
    assert np.array_equal(eq.deltas, sym.deltas)
    d, t = eq.deltas, eq.observed_T
    lower = (1 + np.sum(d <= t + 1e-9)) / 301
    upper = (1 + np.sum(d >= t - 1e-9)) / 301
    assert eq.p_value == pytest.approx(min(1.0, 2 * min(lower, upper)))
    assert sym.p_value == pytest.approx((1 + np.sum(np.abs(d) >= abs(t) - 1e-9)) / 301)
    with pytest.raises(ValueError):
        basic_bootstrap_distribution(data, MetricSpec("fnr"), 10, seed=2, tails="left")
