"""Data model for scored two-group samples and the metrics compared across groups.

Two evaluation paths live here.  The scalar functions (``group_metric``,
``auc``, ``difference_statistic`` ...) operate on one concrete sample and are
the public surface.  :class:`BatchStatistic` evaluates the same quantities for
many replicates at once, where a replicate is a row of non-negative weights
over the pooled records: a 0/1 row is a permutation split, an integer-count
row is a bootstrap resample.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DegenerateVariance,
    EmptyConditioningClass,
    InsufficientData,
    InvalidConfiguration,
)


class MetricKind(enum.Enum):
    MEAN = "mean"
    FNR = "fnr"
    FPR = "fpr"
    RECALL = "recall"
    TNR = "tnr"
    PRECISION = "precision"
    ACCURACY = "accuracy"
    AUC = "auc"
    PEARSON = "pearson"
    # Equalized-odds distances: P(pred=1 | y) differences for y = 0 and y = 1.
    EQ_ODDS_0 = "eo0"
    EQ_ODDS_1 = "eo1"

    @property
    def has_closed_form(self) -> bool:
        return self not in (MetricKind.PRECISION, MetricKind.ACCURACY)

    @property
    def is_proportion(self) -> bool:
        return self in _PROPORTIONS

    @property
    def uses_predictions(self) -> bool:
        return self in _PROPORTIONS

    @property
    def uses_scores(self) -> bool:
        return self in (MetricKind.MEAN, MetricKind.AUC)

    @property
    def conditioning(self) -> str | None:
        """Which label class the metric conditions on ('pos', 'neg', 'pred') or None."""
        return _PROPORTIONS.get(self, (None, None))[1]


# kind -> (numerator indicator, denominator indicator) over (positive, predicted)
_PROPORTIONS = {
    MetricKind.FNR: ("pos_predneg", "pos"),
    MetricKind.RECALL: ("pos_predpos", "pos"),
    MetricKind.EQ_ODDS_1: ("pos_predpos", "pos"),
    MetricKind.FPR: ("neg_predpos", "neg"),
    MetricKind.EQ_ODDS_0: ("neg_predpos", "neg"),
    MetricKind.TNR: ("neg_predneg", "neg"),
    MetricKind.PRECISION: ("pos_predpos", "pred"),
    MetricKind.ACCURACY: ("correct", "all"),
}

# Metrics whose closed-form studentization is the two-proportion plug-in.
LABEL_CONDITIONAL = frozenset(
    k for k, (_, den) in _PROPORTIONS.items() if den in ("pos", "neg")
)


class ScaleConvention(enum.Enum):
    UNSCALED = "unscaled"
    SQRT_N = "sqrt_n"
    SQRT_N_A = "sqrt_n_a"

    def factor(self, n_a: int, n_b: int) -> float:
        if self is ScaleConvention.UNSCALED:
            return 1.0
        if self is ScaleConvention.SQRT_N:
            return math.sqrt(n_a + n_b)
        return math.sqrt(n_a)


class TieRule(enum.Enum):
    STRICT = "strict"
    MIDRANK = "midrank"

    @property
    def tie_weight(self) -> float:
        return 0.5 if self is TieRule.MIDRANK else 0.0


class Studentization(enum.Enum):
    NONE = "none"
    CLOSED_FORM = "closed-form"
    BOOTSTRAP = "bootstrap"
    PERMUTATION_POOLED = "pooled"


@dataclass(frozen=True)
class ScoredRecord:
    group: str
    label: int
    score: float | None = None
    predicted: int | None = None


def normalize_labels(values: Iterable) -> np.ndarray:
    """Map labels in {0,1}, {-1,+1} or booleans to a boolean 'is positive' array."""
    arr = np.asarray(list(values) if not isinstance(values, np.ndarray) else values)
    if arr.dtype == bool:
        return arr.copy()
    arr = arr.astype(float)
    uniq = set(np.unique(arr).tolist())
    if not uniq <= {0.0, 1.0} and not uniq <= {-1.0, 1.0}:
        raise ValueError(f"labels must be in {{0,1}} or {{-1,+1}}, got {sorted(uniq)}")
    return arr == 1.0


@dataclass(frozen=True)
class Group:
    """One group's records as parallel arrays."""

    positive: np.ndarray
    score: np.ndarray | None = None
    predicted: np.ndarray | None = None

    @property
    def n(self) -> int:
        return int(self.positive.size)

    @property
    def n_pos(self) -> int:
        return int(self.positive.sum())

    @property
    def n_neg(self) -> int:
        return self.n - self.n_pos

    def predictions(self, tau: float | None = None) -> np.ndarray:
        return _predictions(self.score, self.predicted, tau)


def _predictions(score, predicted, tau):
    if tau is not None:
        if score is None:
            raise InvalidConfiguration("a threshold needs scores")
        return score > tau
    if predicted is None:
        raise InvalidConfiguration("no predicted classes; supply a threshold")
    return predicted


@dataclass(frozen=True)
class GroupedSample:
    """Pooled two-group data, stored in a canonical record order.

    Records are sorted by (group, label, score, predicted) on construction so
    every downstream result depends only on the multiset of records.
    """

    in_a: np.ndarray
    positive: np.ndarray
    score: np.ndarray | None = None
    predicted: np.ndarray | None = None
    group_names: tuple[str, str] = ("A", "B")

    def __post_init__(self):
        in_a = np.asarray(self.in_a, dtype=bool)
        pos = np.asarray(self.positive, dtype=bool)
        score = None if self.score is None else np.asarray(self.score, dtype=float)
        pred = None if self.predicted is None else np.asarray(self.predicted, dtype=bool)
        if in_a.ndim != 1 or pos.shape != in_a.shape:
            raise ValueError("group and label arrays must be 1-d and equally long")
        if score is not None:
            if score.shape != in_a.shape:
                raise ValueError("score array has the wrong length")
            if not np.all(np.isfinite(score)):
                raise ValueError("scores must be finite")
        if pred is not None and pred.shape != in_a.shape:
            raise ValueError("prediction array has the wrong length")
        n_a = int(in_a.sum())
        if n_a < 1 or n_a == in_a.size:
            raise InsufficientData("both groups need at least one record")
        keys = [] if pred is None else [pred]
        if score is not None:
            keys.append(score)
        keys += [pos, ~in_a]
        order = np.lexsort(keys)
        object.__setattr__(self, "in_a", in_a[order])
        object.__setattr__(self, "positive", pos[order])
        object.__setattr__(self, "score", None if score is None else score[order])
        object.__setattr__(self, "predicted", None if pred is None else pred[order])
        object.__setattr__(self, "group_names", tuple(self.group_names))

    @classmethod
    def from_arrays(cls, groups, labels, score=None, predicted=None, group_names=None):
        """Build from raw columns; ``groups`` holds two distinct values (first seen is A)."""
        groups = np.asarray(groups)
        if group_names is None:
            seen = list(dict.fromkeys(groups.tolist()))
            if len(seen) != 2:
                raise ValueError(f"expected exactly two groups, got {len(seen)}")
            group_names = (seen[0], seen[1])
        in_a = groups == group_names[0]
        if not np.all(in_a | (groups == group_names[1])):
            raise ValueError("records outside the two requested groups")
        return cls(
            in_a,
            normalize_labels(labels),
            score,
            None if predicted is None else normalize_labels(predicted),
            (str(group_names[0]), str(group_names[1])),
        )

    @classmethod
    def from_records(cls, records: Sequence[ScoredRecord], group_names=None):
        groups = [r.group for r in records]
        scores = [r.score for r in records]
        preds = [r.predicted for r in records]
        return cls.from_arrays(
            groups,
            [r.label for r in records],
            None if any(s is None for s in scores) else scores,
            None if any(p is None for p in preds) else preds,
            group_names,
        )

    @classmethod
    def from_groups(cls, a: Group, b: Group, group_names=("A", "B")):
        def cat(x, y):
            return None if x is None or y is None else np.concatenate([x, y])

        return cls(
            np.r_[np.ones(a.n, bool), np.zeros(b.n, bool)],
            np.concatenate([a.positive, b.positive]),
            cat(a.score, b.score),
            cat(a.predicted, b.predicted),
            group_names,
        )

    @property
    def n(self) -> int:
        return int(self.in_a.size)

    @property
    def n_a(self) -> int:
        return int(self.in_a.sum())

    @property
    def n_b(self) -> int:
        return self.n - self.n_a

    @property
    def n_a_pos(self) -> int:
        return int((self.in_a & self.positive).sum())

    @property
    def n_a_neg(self) -> int:
        return self.n_a - self.n_a_pos

    @property
    def n_b_pos(self) -> int:
        return int((~self.in_a & self.positive).sum())

    @property
    def n_b_neg(self) -> int:
        return self.n_b - self.n_b_pos

    @property
    def p_a(self) -> float:
        return self.n_a / self.n

    @property
    def ratio(self) -> float:
        """n_A / n_B."""
        return self.n_a / self.n_b

    def _group(self, mask) -> Group:
        return Group(
            self.positive[mask],
            None if self.score is None else self.score[mask],
            None if self.predicted is None else self.predicted[mask],
        )

    @property
    def group_a(self) -> Group:
        return self._group(self.in_a)

    @property
    def group_b(self) -> Group:
        return self._group(~self.in_a)

    def predictions(self, tau: float | None = None) -> np.ndarray:
        return _predictions(self.score, self.predicted, tau)

    def resplit(self, in_a: np.ndarray) -> "GroupedSample":
        """Same pooled records with a new group assignment."""
        return GroupedSample(in_a, self.positive, self.score, self.predicted, self.group_names)

    def swapped(self) -> "GroupedSample":
        return GroupedSample(
            ~self.in_a, self.positive, self.score, self.predicted, self.group_names[::-1]
        )

    def counts(self) -> dict:
        return {
            "n_a": self.n_a,
            "n_b": self.n_b,
            "n_a_pos": self.n_a_pos,
            "n_a_neg": self.n_a_neg,
            "n_b_pos": self.n_b_pos,
            "n_b_neg": self.n_b_neg,
        }


@dataclass(frozen=True)
class PairedSample:
    """Paired observations (attribute x, model error e) for association tests."""

    x: np.ndarray
    e: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        e = np.asarray(self.e, dtype=float)
        if x.ndim != 1 or x.shape != e.shape:
            raise ValueError("x and e must be 1-d and equally long")
        order = np.lexsort((e, x))
        object.__setattr__(self, "x", x[order])
        object.__setattr__(self, "e", e[order])

    @classmethod
    def from_pairs(cls, pairs) -> "PairedSample":
        arr = np.asarray(list(pairs), dtype=float).reshape(-1, 2)
        return cls(arr[:, 0], arr[:, 1])

    @property
    def n(self) -> int:
        return int(self.x.size)


@dataclass(frozen=True)
class MetricSpec:
    """Which statistic to compare and how to studentize it."""

    kind: MetricKind
    tau: float | None = None
    scale: ScaleConvention = ScaleConvention.SQRT_N
    studentization: Studentization = Studentization.NONE
    tie_rule: TieRule = TieRule.STRICT

    def __post_init__(self):
        for name, typ in (
            ("kind", MetricKind),
            ("scale", ScaleConvention),
            ("studentization", Studentization),
            ("tie_rule", TieRule),
        ):
            value = getattr(self, name)
            if not isinstance(value, typ):
                object.__setattr__(self, name, typ(value))
        if self.studentization is Studentization.CLOSED_FORM and not self.kind.has_closed_form:
            raise InvalidConfiguration(
                f"{self.kind.value} has no closed-form variance; use bootstrap or pooled"
            )

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "tau": self.tau,
            "scale": self.scale.value,
            "studentization": self.studentization.value,
            "tie_rule": self.tie_rule.value,
        }


# --------------------------------------------------------------------------
# Scalar metrics
# --------------------------------------------------------------------------


def _indicators(positive: np.ndarray, pred: np.ndarray, kind: MetricKind):
    num_name, den_name = _PROPORTIONS[kind]
    table = {
        "pos": positive,
        "neg": ~positive,
        "pred": pred,
        "all": np.ones_like(positive),
        "pos_predneg": positive & ~pred,
        "pos_predpos": positive & pred,
        "neg_predpos": ~positive & pred,
        "neg_predneg": ~positive & ~pred,
        "correct": positive == pred,
    }
    return table[num_name], table[den_name]


def group_metric(
    group: Group,
    kind: MetricKind,
    tau: float | None = None,
    tie_rule: TieRule = TieRule.STRICT,
) -> float:
    """Empirical metric of a single group."""
    kind = MetricKind(kind)
    if group.n == 0:
        raise EmptyConditioningClass("empty group")
    if kind is MetricKind.MEAN:
        if group.score is None:
            raise InvalidConfiguration("mean metric needs scores")
        return float(np.mean(group.score))
    if kind is MetricKind.AUC:
        return auc(group, tie_rule)
    if kind is MetricKind.PEARSON:
        raise InvalidConfiguration("pearson is defined on paired data, not on a group")
    num, den = _indicators(group.positive, group.predictions(tau), kind)
    d = int(den.sum())
    if d == 0:
        raise EmptyConditioningClass(f"{kind.value}: no records in the conditioning class")
    return int(num.sum()) / d


def _pair_counts(group: Group):
    """Per-positive counts of negatives scored strictly below and tied, and the converse."""
    if group.score is None:
        raise InvalidConfiguration("AUC needs scores")
    sp = group.score[group.positive]
    sn = group.score[~group.positive]
    if sp.size == 0 or sn.size == 0:
        raise EmptyConditioningClass("AUC needs both label classes")
    sn_sorted = np.sort(sn)
    sp_sorted = np.sort(sp)
    lt = np.searchsorted(sn_sorted, sp, side="left")
    eq_p = np.searchsorted(sn_sorted, sp, side="right") - lt
    gt = sp.size - np.searchsorted(sp_sorted, sn, side="right")
    eq_n = np.searchsorted(sp_sorted, sn, side="right") - np.searchsorted(sp_sorted, sn, side="left")
    return lt, eq_p, gt, eq_n


def auc(group: Group, tie_rule: TieRule = TieRule.STRICT) -> float:
    """Normalized Mann-Whitney count P(score+ > score-) for one group."""
    lt, eq, _, _ = _pair_counts(group)
    h = TieRule(tie_rule).tie_weight
    conc = float(lt.sum()) + h * float(eq.sum())
    return conc / (group.n_pos * group.n_neg)


def delong_components(group: Group, tie_rule: TieRule = TieRule.STRICT):
    """DeLong structural components (V10 over positives, V01 over negatives)."""
    lt, eq_p, gt, eq_n = _pair_counts(group)
    h = TieRule(tie_rule).tie_weight
    v10 = (lt + h * eq_p) / group.n_neg
    v01 = (gt + h * eq_n) / group.n_pos
    return v10, v01


def difference_statistic(
    data: GroupedSample,
    kind: MetricKind,
    tau: float | None = None,
    scale: ScaleConvention = ScaleConvention.SQRT_N,
    tie_rule: TieRule = TieRule.STRICT,
) -> float:
    """scale * (metric_A - metric_B)."""
    kind = MetricKind(kind)
    scale = ScaleConvention(scale)
    ma = group_metric(data.group_a, kind, tau, tie_rule)
    mb = group_metric(data.group_b, kind, tau, tie_rule)
    return scale.factor(data.n_a, data.n_b) * (ma - mb)


def pearson_correlation(pairs) -> float:
    """Sample correlation of paired observations."""
    if not isinstance(pairs, PairedSample):
        pairs = PairedSample.from_pairs(pairs)
    if pairs.n < 3:
        raise InsufficientData("correlation needs at least 3 pairs")
    xc = pairs.x - pairs.x.mean()
    ec = pairs.e - pairs.e.mean()
    sxx = float(xc @ xc)
    see = float(ec @ ec)
    if sxx == 0.0 or see == 0.0:
        raise DegenerateVariance("a coordinate is constant")
    r = float(xc @ ec) / math.sqrt(sxx * see)
    return min(1.0, max(-1.0, r))


def equalized_odds_distances(data: GroupedSample, tau: float | None = None) -> tuple[float, float]:
    """(delta_0, delta_1): unscaled FPR and recall differences A - B."""
    d0 = difference_statistic(data, MetricKind.FPR, tau, ScaleConvention.UNSCALED)
    d1 = difference_statistic(data, MetricKind.RECALL, tau, ScaleConvention.UNSCALED)
    return d0, d1


# --------------------------------------------------------------------------
# Batch evaluation over weight rows
# --------------------------------------------------------------------------


def _ratio(num, den):
    out = np.full(np.shape(num), np.nan)
    np.divide(num, den, out=out, where=den > 0)
    return out


@dataclass
class BatchStatistic:
    """Vectorised difference statistic and closed-form variance.

    ``WA`` and ``WB`` are (k, n) weight matrices over the pooled records of
    ``data`` (in its canonical order).  Undefined values come back as NaN.

    With ``null_restricted`` (the default) the variance of a label-conditional
    rate uses the rate pooled over both groups, p(1-p)(1/n_A^c + 1/n_B^c)
    with n_g^c the group's conditioning-class size; otherwise each group
    contributes its own p_g(1-p_g)/n_g^c.
    """

    data: GroupedSample
    kind: MetricKind
    tau: float | None = None
    scale: ScaleConvention = ScaleConvention.SQRT_N
    tie_rule: TieRule = TieRule.STRICT
    null_restricted: bool = True
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.kind = MetricKind(self.kind)
        self.scale = ScaleConvention(self.scale)
        self.tie_rule = TieRule(self.tie_rule)
        d = self.data
        self.n = d.n
        self.factor = self.scale.factor(d.n_a, d.n_b)
        if self.kind is MetricKind.PEARSON:
            raise InvalidConfiguration("pearson uses the paired-data path")
        if self.kind is MetricKind.MEAN:
            if d.score is None:
                raise InvalidConfiguration("mean metric needs scores")
            self._s = d.score
            self._s2 = d.score**2
        elif self.kind is MetricKind.AUC:
            if d.score is None:
                raise InvalidConfiguration("AUC needs scores")
            order = np.argsort(d.score, kind="stable")
            ss = d.score[order]
            new_block = np.r_[True, ss[1:] != ss[:-1]]
            block_id = np.cumsum(new_block) - 1
            starts = np.flatnonzero(new_block)
            ends = np.r_[starts[1:], ss.size]
            self._order = order
            self._pos_sorted = d.positive[order].astype(float)
            self._blk_start = starts[block_id]
            self._blk_end = ends[block_id]
        else:
            num, den = _indicators(d.positive, d.predictions(self.tau), self.kind)
            self._num = num.astype(float)
            self._den = den.astype(float)

    @property
    def has_closed_form(self) -> bool:
        return self.kind.has_closed_form

    # group-level pieces -------------------------------------------------

    def _mean_parts(self, W):
        N = W.sum(axis=1)
        s1 = W @ self._s
        s2 = W @ self._s2
        mean = _ratio(s1, N)
        var = _ratio(s2 - N * mean**2, N - 1)
        var = np.where(N >= 2, np.maximum(var, 0.0), np.nan)
        return mean, var, N

    def _prop_parts(self, W):
        num = W @ self._num
        den = W @ self._den
        return _ratio(num, den), den

    def _auc_parts(self, W):
        Ws = W[:, self._order]
        wp = Ws * self._pos_sorted
        wn = Ws - wp
        k, n = Ws.shape
        cn = np.zeros((k, n + 1))
        np.cumsum(wn, axis=1, out=cn[:, 1:])
        cp = np.zeros((k, n + 1))
        np.cumsum(wp, axis=1, out=cp[:, 1:])
        h = self.tie_rule.tie_weight
        below_n = cn[:, self._blk_start]
        eq_n = cn[:, self._blk_end] - below_n
        n_pos = cp[:, -1]
        n_neg = cn[:, -1]
        above_p = n_pos[:, None] - cp[:, self._blk_end]
        eq_p = cp[:, self._blk_end] - cp[:, self._blk_start]
        s10 = below_n + h * eq_n
        conc = np.einsum("ij,ij->i", wp, s10)
        value = _ratio(conc, n_pos * n_neg)
        return value, wp, wn, s10, above_p + h * eq_p, n_pos, n_neg

    def group_values(self, W) -> np.ndarray:
        W = np.atleast_2d(np.asarray(W, dtype=float))
        if self.kind is MetricKind.MEAN:
            return self._mean_parts(W)[0]
        if self.kind is MetricKind.AUC:
            return self._auc_parts(W)[0]
        return self._prop_parts(W)[0]

    def _group_variance(self, W):
        """Variance of the unscaled group metric, plus the metric itself."""
        if self.kind is MetricKind.MEAN:
            mean, var, N = self._mean_parts(W)
            return mean, _ratio(var, N)
        if self.kind is MetricKind.AUC:
            value, wp, wn, s10, s01, n_pos, n_neg = self._auc_parts(W)
            v10 = s10 / np.where(n_neg > 0, n_neg, 1)[:, None]
            v01 = s01 / np.where(n_pos > 0, n_pos, 1)[:, None]
            var10 = _ratio(np.einsum("ij,ij->i", wp, v10**2) - n_pos * value**2, n_pos - 1)
            var01 = _ratio(np.einsum("ij,ij->i", wn, v01**2) - n_neg * value**2, n_neg - 1)
            ok = (n_pos >= 2) & (n_neg >= 2)
            gv = np.maximum(var10, 0.0) / np.where(ok, n_pos, 1) + np.maximum(var01, 0.0) / np.where(
                ok, n_neg, 1
            )
            return value, np.where(ok, gv, np.nan)
        p, den = self._prop_parts(W)
        if self.kind not in LABEL_CONDITIONAL:
            return p, np.full_like(p, np.nan)
        return p, _ratio(p * (1.0 - p), den)

    def difference(self, WA, WB) -> np.ndarray:
        WA = np.atleast_2d(np.asarray(WA, dtype=float))
        WB = np.atleast_2d(np.asarray(WB, dtype=float))
        return self.factor * (self.group_values(WA) - self.group_values(WB))

    def difference_and_variance(self, WA, WB):
        """(T, closed-form variance of T at this statistic's scale)."""
        if not self.has_closed_form:
            raise InvalidConfiguration(f"{self.kind.value} has no closed-form variance")
        WA = np.atleast_2d(np.asarray(WA, dtype=float))
        WB = np.atleast_2d(np.asarray(WB, dtype=float))
        if self.null_restricted and self.kind in LABEL_CONDITIONAL:
            (ma, da), (mb, db) = self._prop_parts(WA), self._prop_parts(WB)
            pooled = _ratio(ma * da + mb * db, da + db)
            va = pooled * (1.0 - pooled) * (_ratio(np.ones_like(da), da) + _ratio(np.ones_like(db), db))
            vb = 0.0
        else:
            ma, va = self._group_variance(WA)
            mb, vb = self._group_variance(WB)
        T = self.factor * (ma - mb)
        V = self.factor**2 * (va + vb)
        V = np.where(np.isfinite(T), V, np.nan)
        return T, V


@dataclass
class PairedBatch:
    """Vectorised Pearson correlation for paired data under reordering or reweighting."""

    data: PairedSample
    scale: ScaleConvention = ScaleConvention.SQRT_N

    def __post_init__(self):
        self.scale = ScaleConvention(self.scale)
        d = self.data
        if d.n < 3:
            raise InsufficientData("correlation needs at least 3 pairs")
        self.n = d.n
        self.xc = d.x - d.x.mean()
        self.ec = d.e - d.e.mean()
        self.sxx = float(self.xc @ self.xc)
        self.see = float(self.ec @ self.ec)
        if self.sxx == 0.0 or self.see == 0.0:
            raise DegenerateVariance("a coordinate is constant")
        self.factor = math.sqrt(self.n) if self.scale is not ScaleConvention.UNSCALED else 1.0
        self._xe = self.xc * self.ec
        # squared standardized coordinates (divisor n); reordering e keeps them standardized
        self._u2 = self.xc**2 / (self.sxx / self.n)
        self._v2 = self.ec**2 / (self.see / self.n)

    def observed(self) -> float:
        return self.factor * float(self._xe.sum()) / math.sqrt(self.sxx * self.see)

    def from_orders(self, orders: np.ndarray) -> np.ndarray:
        """Statistic after pairing x_i with e_{order[i]} for every row of ``orders``."""
        orders = np.atleast_2d(orders)
        return self.factor * (self.ec[orders] @ self.xc) / math.sqrt(self.sxx * self.see)

    def observed_variance(self) -> float:
        return float(self.from_orders_with_variance(np.arange(self.n)[None, :])[1][0])

    def from_orders_with_variance(self, orders: np.ndarray):
        """Statistic and its null-restricted plug-in variance for every reordering.

        Under zero correlation sqrt(n) * r has asymptotic variance
        E[u^2 v^2] for the standardized coordinates u, v; the plug-in is
        mean(u_i^2 v_i^2) over the reordered pairs.
        """
        orders = np.atleast_2d(orders)
        T = self.from_orders(orders)
        tau2 = (self._v2[orders] @ self._u2) / self.n
        return T, tau2 * self.factor**2 / self.n

    def from_weights(self, W: np.ndarray) -> np.ndarray:
        W = np.atleast_2d(np.asarray(W, dtype=float))
        N = W.sum(axis=1)
        mx = (W @ self.xc) / N
        me = (W @ self.ec) / N
        sxx = W @ (self.xc**2) - N * mx**2
        see = W @ (self.ec**2) - N * me**2
        sxe = W @ self._xe - N * mx * me
        ok = (sxx > 0) & (see > 0)
        r = np.full(N.shape, np.nan)
        np.divide(sxe, np.sqrt(np.where(ok, sxx * see, 1.0)), out=r, where=ok)
        return self.factor * np.clip(r, -1.0, 1.0)
