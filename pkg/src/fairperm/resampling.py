"""Random streams, permutation splits, exhaustive enumeration and bootstrap draws.

Every trial owns a stream that is a pure function of
``(master_seed, purpose, trial_index, attempt)``.  The purpose tag is hashed
with BLAKE2b into a 64-bit key; the trial state is a SplitMix64 mix of that
key with the trial index and redraw attempt, and the stream itself is the
SplitMix64 sequence started from the state.  Because the state of trial ``i``
never depends on any other trial, batching and worker count cannot change the
draws.  Replicates are boolean membership masks or integer weight rows over
the pooled records; data is never copied per trial.
"""

from __future__ import annotations

import enum
import hashlib
import itertools
import math
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from .errors import DegenerateData, EmptyConditioningClass, InvalidScheme, TooManySplits
from .metrics import BatchStatistic, GroupedSample, MetricKind, PairedBatch, PairedSample
from .pvalues import count_extreme, pvalue_from_counts

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_ATTEMPT_SALT = np.uint64(0xD1B54A32D192ED03)

DEFAULT_SPLIT_CAP = 200_000
CHUNK = 256  # trials per batch; fixed so results never depend on worker count


class Scheme(enum.Enum):
    POOLED = "pooled"
    WITHIN_OUTCOME = "within-outcome"
    PAIRING = "pairing"


@dataclass(frozen=True)
class PermutationPlan:
    scheme: Scheme = Scheme.POOLED
    n_p: int = 1000
    master_seed: int = 0

    def __post_init__(self):
        if not isinstance(self.scheme, Scheme):
            object.__setattr__(self, "scheme", Scheme(self.scheme))
        if self.n_p < 1:
            raise ValueError("n_p must be at least 1")

    def to_dict(self) -> dict:
        return {"scheme": self.scheme.value, "n_p": self.n_p, "master_seed": self.master_seed}


@dataclass(frozen=True)
class ReplicateSplit:
    """Reassignment of the pooled records: ``in_a[i]`` puts record i in pseudo-group A."""

    in_a: np.ndarray

    @property
    def n_a(self) -> int:
        return int(self.in_a.sum())

    @property
    def n_b(self) -> int:
        return int(self.in_a.size - self.in_a.sum())


# --------------------------------------------------------------------------
# Streams
# --------------------------------------------------------------------------


def _mix64(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def stream_key(master_seed: int, purpose: str) -> int:
    digest = hashlib.blake2b(
        f"{int(master_seed)}\x1f{purpose}".encode(), digest_size=8, person=b"fairperm"
    ).digest()
    return int.from_bytes(digest, "little")


def derive_seed(master_seed: int, index: int, purpose: str) -> int:
    """A 63-bit integer seed for sub-tasks (e.g. the test run on simulated dataset i)."""
    state = trial_states(stream_key(master_seed, purpose), np.array([index]))[0]
    return int(state) >> 1


def trial_states(key: int, trials, attempts=0) -> np.ndarray:
    trials = np.atleast_1d(np.asarray(trials, dtype=np.uint64))
    attempts = np.broadcast_to(np.asarray(attempts, dtype=np.uint64), trials.shape)
    with np.errstate(over="ignore"):
        h = _mix64(np.uint64(key) + _GOLDEN * (trials + np.uint64(1)))
        return _mix64(h ^ _mix64(attempts * _ATTEMPT_SALT + _GOLDEN))


def draw_uint64(states: np.ndarray, size: int) -> np.ndarray:
    """(k, size) matrix: row i is the first ``size`` outputs of stream ``states[i]``."""
    steps = _GOLDEN * np.arange(1, size + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return _mix64(np.asarray(states, dtype=np.uint64)[:, None] + steps[None, :])


def _unit(u: np.ndarray) -> np.ndarray:
    return (u >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


@dataclass(frozen=True)
class TrialStream:
    """Reproducible random stream for one (master_seed, trial_index, purpose)."""

    master_seed: int
    trial_index: int
    purpose: str
    attempt: int = 0

    @property
    def state(self) -> np.uint64:
        key = stream_key(self.master_seed, self.purpose)
        return trial_states(key, [self.trial_index], self.attempt)[0]

    def uint64(self, size: int) -> np.ndarray:
        return draw_uint64(np.array([self.state]), size)[0]

    def random(self, size: int) -> np.ndarray:
        return _unit(self.uint64(size))

    def generator(self) -> np.random.Generator:
        """General-purpose numpy generator seeded from this stream's state."""
        return np.random.Generator(np.random.PCG64(int(self.state)))

    def redraw(self) -> "TrialStream":
        return TrialStream(self.master_seed, self.trial_index, self.purpose, self.attempt + 1)


def rng_stream(master_seed: int, trial_index: int, purpose: str) -> TrialStream:
    return TrialStream(int(master_seed), int(trial_index), str(purpose))


# --------------------------------------------------------------------------
# Permutation replicates
# --------------------------------------------------------------------------


def _smallest_mask(keys: np.ndarray, m: int) -> np.ndarray:
    k, n = keys.shape
    mask = np.zeros((k, n), dtype=bool)
    if m == 0:
        return mask
    if m >= n:
        mask[:] = True
        return mask
    idx = np.argpartition(keys, m - 1, axis=1)[:, :m]
    np.put_along_axis(mask, idx, True, axis=1)
    return mask


def pooled_masks(data: GroupedSample, states: np.ndarray) -> np.ndarray:
    """Uniform size-n_A subsets of the pooled records, one per stream state."""
    return _smallest_mask(draw_uint64(states, data.n), data.n_a)


def within_outcome_masks(data: GroupedSample, states: np.ndarray) -> np.ndarray:
    """Positives and negatives permuted separately, preserving per-group class counts."""
    pos_idx = np.flatnonzero(data.positive)
    neg_idx = np.flatnonzero(~data.positive)
    if data.n_a_pos > pos_idx.size or data.n_a_neg > neg_idx.size:
        raise InvalidScheme("group class counts exceed the pooled class counts")
    keys = draw_uint64(states, data.n)
    mask = np.zeros(keys.shape, dtype=bool)
    mask[:, pos_idx] = _smallest_mask(keys[:, pos_idx], data.n_a_pos)
    mask[:, neg_idx] = _smallest_mask(keys[:, neg_idx], data.n_a_neg)
    return mask


def split_masks(data: GroupedSample, scheme: Scheme, states: np.ndarray) -> np.ndarray:
    scheme = Scheme(scheme)
    if scheme is Scheme.POOLED:
        return pooled_masks(data, states)
    if scheme is Scheme.WITHIN_OUTCOME:
        return within_outcome_masks(data, states)
    raise InvalidScheme("pairing permutes paired data, not group membership")


def pairing_orders(n: int, states: np.ndarray) -> np.ndarray:
    """Uniform permutations of range(n), one row per stream state."""
    # 64-bit keys are distinct with overwhelming probability, so no stable sort needed
    return np.argsort(draw_uint64(states, n), axis=1)


def permute_pooled(data: GroupedSample, stream: TrialStream) -> ReplicateSplit:
    if data.n < 2:
        raise InvalidScheme("pooled permutation needs at least two records")
    return ReplicateSplit(pooled_masks(data, np.array([stream.state]))[0])


def permute_within_outcome(data: GroupedSample, stream: TrialStream) -> ReplicateSplit:
    return ReplicateSplit(within_outcome_masks(data, np.array([stream.state]))[0])


def permute_pairing(pairs: PairedSample, stream: TrialStream) -> tuple[np.ndarray, np.ndarray]:
    """(x, e permuted): x keeps its order, e is shuffled uniformly."""
    if pairs.n < 2:
        raise InvalidScheme("pairing permutation needs at least two pairs")
    order = pairing_orders(pairs.n, np.array([stream.state]))[0]
    return pairs.x.copy(), pairs.e[order]


# --------------------------------------------------------------------------
# Exhaustive enumeration
# --------------------------------------------------------------------------


def count_splits(data: GroupedSample, scheme: Scheme) -> int:
    scheme = Scheme(scheme)
    if scheme is Scheme.POOLED:
        return math.comb(data.n, data.n_a)
    if scheme is Scheme.WITHIN_OUTCOME:
        n_pos = data.n_a_pos + data.n_b_pos
        n_neg = data.n_a_neg + data.n_b_neg
        return math.comb(n_pos, data.n_a_pos) * math.comb(n_neg, data.n_a_neg)
    raise InvalidScheme("exhaustive enumeration covers pooled and within-outcome only")


def enumerate_all_splits(
    data: GroupedSample, scheme: Scheme = Scheme.POOLED, cap: int = DEFAULT_SPLIT_CAP
) -> Iterator[ReplicateSplit]:
    """Every distinct split exactly once."""
    total = count_splits(data, scheme)
    if total > cap:
        raise TooManySplits(f"{total} splits exceed the cap of {cap}")
    for mask in _iter_split_masks(data, Scheme(scheme)):
        yield ReplicateSplit(mask)


def _iter_split_masks(data: GroupedSample, scheme: Scheme) -> Iterator[np.ndarray]:
    if scheme is Scheme.POOLED:
        for combo in itertools.combinations(range(data.n), data.n_a):
            mask = np.zeros(data.n, dtype=bool)
            mask[list(combo)] = True
            yield mask
        return
    pos_idx = np.flatnonzero(data.positive)
    neg_idx = np.flatnonzero(~data.positive)
    for cp in itertools.combinations(pos_idx.tolist(), data.n_a_pos):
        for cn in itertools.combinations(neg_idx.tolist(), data.n_a_neg):
            mask = np.zeros(data.n, dtype=bool)
            mask[list(cp) + list(cn)] = True
            yield mask


def all_split_masks(
    data: GroupedSample, scheme: Scheme = Scheme.POOLED, cap: int = DEFAULT_SPLIT_CAP
) -> np.ndarray:
    """All splits stacked as a (count, n) boolean matrix."""
    total = count_splits(data, scheme)
    if total > cap:
        raise TooManySplits(f"{total} splits exceed the cap of {cap}")
    out = np.zeros((total, data.n), dtype=bool)
    for i, mask in enumerate(_iter_split_masks(data, Scheme(scheme))):
        out[i] = mask
    return out


# --------------------------------------------------------------------------
# Bootstrap replicates
# --------------------------------------------------------------------------


def _counts(picks: np.ndarray, n: int) -> np.ndarray:
    k = picks.shape[0]
    flat = (picks + n * np.arange(k)[:, None]).ravel()
    return np.bincount(flat, minlength=k * n).reshape(k, n).astype(float)


def grouped_bootstrap_weights(
    idx_a: np.ndarray, idx_b: np.ndarray, n: int, states: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Resample each group with replacement at its own size.

    ``idx_a``/``idx_b`` are the pooled positions of the (pseudo-)groups; the
    returned weight rows count how often each pooled record was drawn.
    """
    na, nb = idx_a.size, idx_b.size
    u = _unit(draw_uint64(states, na + nb))
    pa = idx_a[np.minimum((u[:, :na] * na).astype(np.int64), na - 1)]
    pb = idx_b[np.minimum((u[:, na:] * nb).astype(np.int64), nb - 1)]
    return _counts(pa, n), _counts(pb, n)


def paired_bootstrap_weights(n: int, states: np.ndarray) -> np.ndarray:
    u = _unit(draw_uint64(states, n))
    return _counts(np.minimum((u * n).astype(np.int64), n - 1), n)


def run_with_redraws(
    key: int,
    trials: np.ndarray,
    build: Callable[[np.ndarray], object],
    evaluate: Callable[[object], tuple],
    cap: int,
) -> tuple[tuple, int]:
    """Draw one replicate per trial, redrawing trials whose outputs are not finite.

    ``evaluate`` maps the built replicates to a tuple of 1-d output arrays; a
    trial is valid when all of them are finite.  A redrawn trial uses the next
    attempt of its own stream, so results do not depend on batching.
    Returns the outputs and the number of redraws.
    """
    trials = np.asarray(trials)
    attempts = np.zeros(trials.size, dtype=np.uint64)
    outs = [np.array(o, dtype=float) for o in evaluate(build(trial_states(key, trials, attempts)))]
    bad = ~np.all([np.isfinite(o) for o in outs], axis=0)
    redraws = 0
    while bad.any():
        redraws += int(bad.sum())
        if redraws > cap:
            raise DegenerateData(f"more than {cap} redraws; the metric is undefined on most replicates")
        rows = np.flatnonzero(bad)
        attempts[rows] += np.uint64(1)
        fresh = evaluate(build(trial_states(key, trials[rows], attempts[rows])))
        for o, f in zip(outs, fresh):
            o[rows] = f
        bad = ~np.all([np.isfinite(o) for o in outs], axis=0)
    return tuple(outs), redraws


def chunks(total: int, size: int = CHUNK) -> list[np.ndarray]:
    return [np.arange(s, min(s + size, total)) for s in range(0, total, size)]


# --------------------------------------------------------------------------
# Bootstrap distribution of a difference statistic
# --------------------------------------------------------------------------


def bootstrap_statistics(stat, data, n_b: int, key: int, cap: int | None = None, in_a=None):
    """T on n_b bootstrap resamples of ``data`` (groups resampled independently).

    ``in_a`` overrides group membership, so the pseudo-groups of a permutation
    replicate can be resampled without rebuilding the statistic.
    Returns (T_star array, redraw count).
    """
    cap = 100 * n_b if cap is None else cap
    results, total_redraws = [], 0
    if isinstance(stat, PairedBatch):
        def build(states):
            return paired_bootstrap_weights(data.n, states)

        def evaluate(W):
            return (stat.from_weights(W),)
    else:
        member = data.in_a if in_a is None else np.asarray(in_a, dtype=bool)
        idx_a = np.flatnonzero(member)
        idx_b = np.flatnonzero(~member)

        def build(states):
            return grouped_bootstrap_weights(idx_a, idx_b, data.n, states)

        def evaluate(w):
            return (stat.difference(*w),)

    for trials in chunks(n_b):
        (t,), r = run_with_redraws(key, trials, build, evaluate, cap - total_redraws)
        results.append(t)
        total_redraws += r
    return np.concatenate(results), total_redraws


@dataclass(frozen=True)
class BasicBootstrapResult:
    observed_T: float
    deltas: np.ndarray  # sorted T* - T
    p_value: float
    redraws: int
    tails: str = "equal"


def basic_bootstrap_distribution(
    data, metric, n_b: int, seed: int, tails: str = "equal"
) -> BasicBootstrapResult:
    """Distribution of T* - T, used to approximate the null law of T.

    With ``tails="equal"`` the two-sided p-value doubles the smaller of the
    add-one tail fractions of T within that distribution, so skew in T* - T
    is honoured.  ``tails="symmetric"`` instead counts |T* - T| >= |T|.
    """
    if n_b < 1:
        raise ValueError("n_b must be at least 1")
    if tails not in ("equal", "symmetric"):
        raise ValueError("tails must be 'equal' or 'symmetric'")
    if isinstance(data, PairedSample):
        stat = PairedBatch(data, metric.scale)
        observed = stat.observed()
    else:
        if metric.kind is MetricKind.PEARSON:
            raise InvalidScheme("pearson needs paired data")
        stat = BatchStatistic(data, metric.kind, metric.tau, metric.scale, metric.tie_rule)
        observed = float(stat.difference(data.in_a, ~data.in_a)[0])
        if not np.isfinite(observed):
            raise EmptyConditioningClass("metric undefined on the observed data")
    t_star, redraws = bootstrap_statistics(stat, data, n_b, stream_key(seed, "basic-bootstrap"))
    deltas = np.sort(t_star - observed)
    if tails == "symmetric":
        p = pvalue_from_counts(count_extreme(deltas, observed, "two-sided"), n_b)
    else:
        lower = pvalue_from_counts(count_extreme(deltas, observed, "lower"), n_b)
        upper = pvalue_from_counts(count_extreme(deltas, observed, "upper"), n_b)
        p = min(1.0, 2.0 * min(lower, upper))
    return BasicBootstrapResult(observed, deltas, p, redraws, tails)
