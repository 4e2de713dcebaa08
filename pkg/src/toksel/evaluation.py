"""Subset scoring: repeated-split AUC with pluggable scorers, and Jaccard redundancy.

The default scorer is a smoothed probability table over the subset's
joint token patterns; with binary tokens and small subsets it is the
empirical Bayes-optimal scorer and keeps every reported number exactly
reproducible from the master seed. A from-scratch randomized-tree
ensemble is available for comparison.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Optional, Sequence

import numpy as np
from scipy.stats import rankdata

from .dataset import Dataset
from .errors import CapacityError, DataError, ParameterError, UndefinedStatisticError
from .infotheory import HARD_SUBSET_CAP

if TYPE_CHECKING:  # pragma: no cover
    from .selection import SelectionTrace


def auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Area under the ROC curve via the rank statistic, with midrank ties.

    Equals P(score+ > score-) + 0.5 * P(score+ == score-) exactly.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise ParameterError("scores and labels must be 1-d and equal length")
    pos = y == 1
    n1 = int(pos.sum())
    n0 = s.size - n1
    if n1 == 0 or n0 == 0:
        raise UndefinedStatisticError("AUC undefined: labels contain a single class")
    ranks = rankdata(s, method="average")
    return (float(ranks[pos].sum()) - n1 * (n1 + 1) / 2.0) / (n1 * n0)


def jaccard(a: Sequence[int], b: Sequence[int]) -> float:
    """Jaccard similarity of two binary columns; 0 when both are all-zero."""
    av = np.asarray(a).astype(bool)
    bv = np.asarray(b).astype(bool)
    if av.shape != bv.shape or av.ndim != 1:
        raise ParameterError("columns must be 1-d and equal length")
    union = int((av | bv).sum())
    if union == 0:
        return 0.0
    return int((av & bv).sum()) / union


def jaccard_set(dataset: Dataset, subset: Sequence[int]) -> float:
    """Mean pairwise Jaccard similarity over all token pairs in the subset."""
    ids = sorted(set(int(t) for t in subset))
    if len(ids) != len(list(subset)):
        raise ParameterError("subset ids must be distinct")
    for t in ids:
        if not 0 <= t < len(dataset.catalog):
            raise ParameterError(f"token id {t} outside catalog")
    if len(ids) <= 1:
        return 0.0
    cols = dataset.selections[:, ids].astype(np.int64)
    inter = cols.T @ cols
    counts = np.diag(inter)
    union = counts[:, None] + counts[None, :] - inter
    iu = np.triu_indices(len(ids), k=1)
    inters = inter[iu].astype(np.float64)
    unions = union[iu].astype(np.float64)
    ratios = np.divide(inters, unions, out=np.zeros_like(inters), where=unions > 0)
    return float(ratios.sum() / ratios.size)


# -- train/test split plan ---------------------------------------------


@dataclass(frozen=True)
class SplitPlan:
    """Repeated random holdout plan; all randomness derives from master_seed."""

    splits: int
    train_fraction: float = 0.7
    master_seed: int = 0

    def __post_init__(self):
        if self.splits < 1:
            raise ParameterError("splits must be >= 1")
        if not 0.0 < self.train_fraction < 1.0:
            raise ParameterError("train_fraction must be in (0, 1)")

    def partitions(self, n: int) -> list[tuple[np.ndarray, np.ndarray, np.random.SeedSequence]]:
        """Per-split (train_idx, test_idx, scorer_seed) over n records."""
        if n < 2:
            raise DataError("need at least 2 rated records to split")
        n_train = min(max(int(round(self.train_fraction * n)), 1), n - 1)
        out = []
        for child in np.random.SeedSequence(self.master_seed).spawn(self.splits):
            rng = np.random.default_rng(child)
            perm = rng.permutation(n)
            out.append((perm[:n_train], perm[n_train:], child.spawn(1)[0]))
        return out


# -- scorers -----------------------------------------------------------


def _check_subset(subset: Sequence[int]) -> tuple[int, ...]:
    ids = tuple(sorted(int(t) for t in subset))
    if len(set(ids)) != len(ids):
        raise ParameterError("subset ids must be distinct")
    if len(ids) > HARD_SUBSET_CAP:
        raise CapacityError(f"subset of {len(ids)} tokens exceeds the table cap of {HARD_SUBSET_CAP}")
    return ids


def _pack(selections: np.ndarray, ids: tuple[int, ...]) -> np.ndarray:
    if not ids:
        return np.zeros(selections.shape[0], dtype=np.int64)
    weights = np.left_shift(1, np.arange(len(ids), dtype=np.int64))
    return selections[:, list(ids)].astype(np.int64) @ weights


class TableScorer:
    """Smoothed empirical P(poor | token pattern) lookup.

    Fitted patterns score (n_poor + alpha) / (n + 2*alpha); patterns
    unseen in training back off to the smoothed training prior. Subset
    order is canonicalized so the scorer depends only on the token set.
    """

    def __init__(self, subset: Sequence[int], alpha: float = 1.0):
        if alpha < 0:
            raise ParameterError("alpha must be >= 0")
        self.subset = _check_subset(subset)
        self.alpha = alpha
        self._scores: Optional[np.ndarray] = None
        self.prior_: Optional[float] = None

    def fit(self, selections: np.ndarray, labels: np.ndarray) -> "TableScorer":
        y = np.asarray(labels, dtype=np.int64)
        n1_total = int(y.sum())
        if n1_total == 0 or n1_total == y.size:
            raise DataError("training data must contain both poor and non-poor calls")
        patterns = _pack(np.asarray(selections), self.subset)
        width = 1 << len(self.subset)
        n1 = np.bincount(patterns, weights=y, minlength=width)
        n = np.bincount(patterns, minlength=width).astype(np.float64)
        a = self.alpha
        self.prior_ = (n1_total + a) / (y.size + 2 * a)
        with np.errstate(invalid="ignore", divide="ignore"):
            cell = (n1 + a) / (n + 2 * a)
        self._scores = np.where(n > 0, cell, self.prior_)
        return self

    def predict(self, selections: np.ndarray) -> np.ndarray:
        if self._scores is None:
            raise ParameterError("scorer is not fitted")
        return self._scores[_pack(np.asarray(selections), self.subset)]

    def score_dataset(self, dataset: Dataset) -> np.ndarray:
        """Scores for the dataset's rated records."""
        return self.predict(dataset.rated_selections)


class ForestScorer:
    """Bootstrap ensemble of randomized binary-split trees voting a probability.

    Each tree greedily splits on the best of sqrt(k) candidate features
    by Gini reduction (each binary feature used at most once per path)
    and predicts its leaf's poor-call frequency; the ensemble averages
    tree outputs. Deterministic for a given seed.
    """

    def __init__(self, subset: Sequence[int], trees: int = 100, seed=None):
        if trees < 1:
            raise ParameterError("trees must be >= 1")
        self.subset = _check_subset(subset)
        self.trees = trees
        self.seed = seed
        self._roots: Optional[list] = None

    # tree nodes are (feature, left, right) tuples; leaves are floats

    def _grow(self, X: np.ndarray, y: np.ndarray, idx: np.ndarray, remaining: list[int], rng) -> object:
        y_node = y[idx]
        n = y_node.size
        n1 = int(y_node.sum())
        if n1 == 0 or n1 == n or not remaining:
            return n1 / n
        m = max(1, int(round(math.sqrt(len(self.subset)))))
        if len(remaining) <= m:
            cand = list(remaining)
        else:
            cand = sorted(rng.choice(remaining, size=m, replace=False).tolist())

        best = self._best_split(X, y, idx, cand, n, n1)
        if best is None:
            # sampled candidates were constant here; fall back to all remaining
            best = self._best_split(X, y, idx, remaining, n, n1)
        if best is None:
            return n1 / n
        feat, left_idx, right_idx = best
        rest = [f for f in remaining if f != feat]
        return (
            feat,
            self._grow(X, y, left_idx, rest, rng),
            self._grow(X, y, right_idx, rest, rng),
        )

    @staticmethod
    def _best_split(X, y, idx, candidates, n, n1):
        best_gain = -1.0
        best = None
        parent = 2.0 * (n1 / n) * (1.0 - n1 / n)
        for feat in candidates:
            mask = X[idx, feat] == 1
            nr = int(mask.sum())
            if nr == 0 or nr == n:
                continue
            right = idx[mask]
            left = idx[~mask]
            r1 = int(y[right].sum())
            l1 = n1 - r1
            gini = (
                left.size * 2.0 * (l1 / left.size) * (1.0 - l1 / left.size)
                + right.size * 2.0 * (r1 / right.size) * (1.0 - r1 / right.size)
            ) / n
            gain = parent - gini
            if gain > best_gain:
                best_gain = gain
                best = (feat, left, right)
        return best

    def fit(self, selections: np.ndarray, labels: np.ndarray) -> "ForestScorer":
        y = np.asarray(labels, dtype=np.int64)
        n1 = int(y.sum())
        if n1 == 0 or n1 == y.size:
            raise DataError("training data must contain both poor and non-poor calls")
        X = np.asarray(selections)[:, list(self.subset)].astype(np.int8)
        rng = np.random.default_rng(self.seed)
        n = y.size
        features = list(range(len(self.subset)))
        self._roots = []
        for _ in range(self.trees):
            boot = rng.integers(0, n, size=n)
            self._roots.append(self._grow(X, y, boot, features, rng))
        return self

    @staticmethod
    def _predict_tree(node, X, idx, out):
        if isinstance(node, float):
            out[idx] = node
            return
        feat, left, right = node
        mask = X[idx, feat] == 1
        ForestScorer._predict_tree(left, X, idx[~mask], out)
        ForestScorer._predict_tree(right, X, idx[mask], out)

    def predict(self, selections: np.ndarray) -> np.ndarray:
        if self._roots is None:
            raise ParameterError("scorer is not fitted")
        X = np.asarray(selections)[:, list(self.subset)].astype(np.int8)
        total = np.zeros(X.shape[0], dtype=np.float64)
        scratch = np.empty(X.shape[0], dtype=np.float64)
        idx = np.arange(X.shape[0])
        for root in self._roots:
            self._predict_tree(root, X, idx, scratch)
            total += scratch
        return total / len(self._roots)

    def score_dataset(self, dataset: Dataset) -> np.ndarray:
        return self.predict(dataset.rated_selections)


def table_scorer_fit(train: Dataset, subset: Sequence[int], alpha: float = 1.0) -> TableScorer:
    """Fit the probability-table scorer on a dataset's rated records."""
    return TableScorer(subset, alpha=alpha).fit(train.rated_selections, train.rated_pc)


def forest_scorer_fit(train: Dataset, subset: Sequence[int], trees: int = 100, seed=None) -> ForestScorer:
    """Fit the randomized-tree ensemble scorer on a dataset's rated records."""
    return ForestScorer(subset, trees=trees, seed=seed).fit(train.rated_selections, train.rated_pc)


# -- repeated-split evaluation ------------------------------------------


@dataclass(frozen=True)
class KEval:
    k: int
    auc_mean: float
    auc_std: float
    js_mean: float
    js_std: float


@dataclass(frozen=True)
class EvalReport:
    strategy: str
    per_k: tuple[KEval, ...] = field(default_factory=tuple)

    def to_json(self) -> dict:
        return {
            "strategy": self.strategy,
            "per_k": [
                {
                    "k": e.k,
                    "auc_mean": e.auc_mean,
                    "auc_std": e.auc_std,
                    "js_mean": e.js_mean,
                    "js_std": e.js_std,
                }
                for e in self.per_k
            ],
        }

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        buf.write("strategy,k,auc_mean,auc_std,js_mean,js_std\n")
        for e in self.per_k:
            buf.write(
                f"{self.strategy},{e.k},{e.auc_mean!r},{e.auc_std!r},{e.js_mean!r},{e.js_std!r}\n"
            )
        return buf.getvalue()


def report_to_json_text(report: EvalReport) -> str:
    return json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n"


def _split_aucs(
    X: np.ndarray,
    y: np.ndarray,
    subset: tuple[int, ...],
    partitions,
    scorer_kind: str,
    alpha: float,
    trees: int,
) -> np.ndarray:
    vals = np.empty(len(partitions))
    for i, (train_idx, test_idx, scorer_seed) in enumerate(partitions):
        if scorer_kind == "table":
            scorer = TableScorer(subset, alpha=alpha).fit(X[train_idx], y[train_idx])
        elif scorer_kind == "forest":
            scorer = ForestScorer(subset, trees=trees, seed=scorer_seed).fit(X[train_idx], y[train_idx])
        else:
            raise ParameterError(f"unknown scorer kind {scorer_kind!r}")
        vals[i] = auc(scorer.predict(X[test_idx]), y[test_idx])
    return vals


def evaluate_subsets(
    dataset: Dataset,
    traces: Sequence["SelectionTrace"],
    plan: SplitPlan,
    scorer_kind: str = "table",
    alpha: float = 1.0,
    trees: int = 100,
) -> list[EvalReport]:
    """AUC (mean/std over splits) and Jaccard for every prefix of every trace.

    Splits are shared across strategies and prefix sizes, so at a common
    feature set (e.g. the full catalog) all strategies report the same
    AUC. Jaccard is computed once on the full dataset: it does not
    depend on the split.
    """
    if not traces:
        raise ParameterError("traces must be non-empty")
    X = dataset.rated_selections
    y = dataset.rated_pc
    partitions = plan.partitions(X.shape[0])

    cache: dict[tuple[int, ...], np.ndarray] = {}
    reports = []
    for trace in traces:
        entries = []
        ids = [step.token_id for step in trace.steps]
        for k in range(1, len(ids) + 1):
            subset = tuple(sorted(ids[:k]))
            if subset not in cache:
                cache[subset] = _split_aucs(X, y, subset, partitions, scorer_kind, alpha, trees)
            vals = cache[subset]
            std = float(np.std(vals, ddof=1)) if vals.size > 1 else 0.0
            entries.append(
                KEval(
                    k=k,
                    auc_mean=float(np.mean(vals)),
                    auc_std=std,
                    js_mean=jaccard_set(dataset, subset),
                    js_std=0.0,
                )
            )
        reports.append(EvalReport(strategy=trace.strategy, per_k=tuple(entries)))
    return reports


def univariate_aucs(dataset: Dataset, plan: SplitPlan, alpha: float = 1.0) -> np.ndarray:
    """Mean single-token AUC per catalog token over the plan's splits."""
    X = dataset.rated_selections
    y = dataset.rated_pc
    partitions = plan.partitions(X.shape[0])
    n_tokens = len(dataset.catalog)
    means = np.empty(n_tokens)
    for t in range(n_tokens):
        means[t] = _split_aucs(X, y, (t,), partitions, "table", alpha, 0).mean()
    return means
