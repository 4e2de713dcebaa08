"""Token-subset selection strategies.

The flagship strategy greedily adds the token with the largest marginal
information gain about the poor-call label. A lazy variant reuses stale
marginal gains as upper bounds (valid under diminishing returns) and
falls back to eager re-evaluation if it ever observes a gain increase.
Baselines: univariate-AUC ranking, uniform random, and an exhaustive
oracle for small catalogs.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .dataset import Dataset, TokenCatalog
from .errors import CapacityError, ParameterError
from .evaluation import SplitPlan, univariate_aucs
from .infotheory import _cond_term_sum, _marginal_term

STRATEGIES = ("rits", "rits_lazy", "auc_greedy", "random", "exhaustive")

# tolerance used only to distinguish a genuine diminishing-returns
# violation from float roundoff when a stale gain is re-evaluated
_LAZY_VIOLATION_EPS = 1e-12

EXHAUSTIVE_SUBSET_CAP = 200_000


@dataclass(frozen=True)
class SelectionStep:
    token_id: int
    marginal_gain_bits: float
    cumulative_ig_bits: float


@dataclass(frozen=True)
class SelectionTrace:
    """Ordered token choices with per-step gains.

    gain_metric is "bits" for information-gain strategies, "auc" when
    the marginal column carries a univariate AUC instead (the
    cumulative column stays in bits), and "none" for the random
    baseline, which records no gains.
    """

    strategy: str
    steps: tuple[SelectionStep, ...]
    budget_k: int
    seed: Optional[int] = None
    gain_metric: str = "bits"

    def __post_init__(self):
        ids = [s.token_id for s in self.steps]
        if len(set(ids)) != len(ids):
            raise ParameterError("trace token ids must be distinct")

    @property
    def token_ids(self) -> list[int]:
        return [s.token_id for s in self.steps]

    def to_json(self, catalog: Optional[TokenCatalog] = None) -> dict:
        labels = catalog.labels if catalog is not None else None
        return {
            "strategy": self.strategy,
            "k": self.budget_k,
            "seed": self.seed,
            "gain_metric": self.gain_metric,
            "steps": [
                {
                    "token_id": s.token_id,
                    "label": labels[s.token_id] if labels else None,
                    "marginal": s.marginal_gain_bits,
                    "cumulative": s.cumulative_ig_bits,
                }
                for s in self.steps
            ],
        }


class _IgEvaluator:
    """Memoized information-gain evaluation against one dataset."""

    def __init__(self, dataset: Dataset):
        self._dataset = dataset
        self._base_term, self._total = _marginal_term(dataset)
        self._memo: dict[tuple[int, ...], float] = {}

    def ig(self, subset: Sequence[int]) -> float:
        key = tuple(sorted(subset))
        cond = self._memo.get(key)
        if cond is None:
            cond = _cond_term_sum(self._dataset, key)
            self._memo[key] = cond
        return max(0.0, (self._base_term - cond) / self._total)

    def full_ig(self) -> float:
        return self.ig(range(len(self._dataset.catalog)))


def _check_k(k: int, n_tokens: int) -> None:
    if not 1 <= k <= n_tokens:
        raise ParameterError(f"k must be in 1..{n_tokens}, got {k}")


def _eager_steps(
    ev: _IgEvaluator,
    n_tokens: int,
    k: int,
    chosen: list[int],
    steps: list[SelectionStep],
    cur_ig: float,
) -> None:
    remaining = [t for t in range(n_tokens) if t not in chosen]
    while len(steps) < k:
        best_id = -1
        best_cum = -1.0
        for t in remaining:
            cum = ev.ig(chosen + [t])
            if cum > best_cum:
                best_cum = cum
                best_id = t
        steps.append(SelectionStep(best_id, best_cum - cur_ig, best_cum))
        chosen.append(best_id)
        remaining.remove(best_id)
        cur_ig = best_cum


def select_rits(dataset: Dataset, k: int) -> SelectionTrace:
    """Greedy maximization of joint information gain, one token per step.

    Step i adds the token maximizing IG(chosen + token); ties break to
    the lowest token id. Deterministic.
    """
    n_tokens = len(dataset.catalog)
    _check_k(k, n_tokens)
    ev = _IgEvaluator(dataset)
    steps: list[SelectionStep] = []
    _eager_steps(ev, n_tokens, k, [], steps, 0.0)
    return SelectionTrace("rits", tuple(steps), budget_k=k)


def select_rits_lazy(dataset: Dataset, k: int) -> SelectionTrace:
    """Lazy-evaluation variant of select_rits.

    Stale marginal gains are kept in a max-heap and only re-evaluated
    when they reach the top; under diminishing returns they are upper
    bounds, so the produced trace is identical to the eager one. If a
    re-evaluated gain ever comes back larger than its stale bound the
    data violates diminishing returns, and the remaining steps are
    evaluated eagerly instead.
    """
    n_tokens = len(dataset.catalog)
    _check_k(k, n_tokens)
    ev = _IgEvaluator(dataset)

    chosen: list[int] = []
    steps: list[SelectionStep] = []
    cur_ig = 0.0

    gains = {}
    cums = {}
    for t in range(n_tokens):
        cums[t] = ev.ig([t])
        gains[t] = cums[t] - 0.0
    fresh_at = {t: 0 for t in range(n_tokens)}
    heap = [(-gains[t], t) for t in range(n_tokens)]
    heapq.heapify(heap)

    for step in range(k):
        while True:
            neg_gain, t = heapq.heappop(heap)
            if fresh_at[t] == step:
                steps.append(SelectionStep(t, gains[t], cums[t]))
                chosen.append(t)
                cur_ig = cums[t]
                break
            stale = gains[t]
            cum = ev.ig(chosen + [t])
            gain = cum - cur_ig
            if gain > stale + _LAZY_VIOLATION_EPS:
                # diminishing returns broken: finish eagerly, correctness over speed
                _eager_steps(ev, n_tokens, k, chosen, steps, cur_ig)
                return SelectionTrace("rits_lazy", tuple(steps), budget_k=k)
            gains[t] = gain
            cums[t] = cum
            fresh_at[t] = step
            heapq.heappush(heap, (-gain, t))
    return SelectionTrace("rits_lazy", tuple(steps), budget_k=k)


def select_auc_greedy(
    dataset: Dataset,
    k: int,
    splits: int = 100,
    seed: Optional[int] = 0,
    train_fraction: float = 0.7,
) -> SelectionTrace:
    """Rank tokens by mean univariate AUC over repeated splits; take the top k.

    The marginal column carries each token's univariate AUC; the
    cumulative column records the joint information gain of the prefix
    so traces stay comparable across strategies.
    """
    n_tokens = len(dataset.catalog)
    _check_k(k, n_tokens)
    if splits < 1:
        raise ParameterError("splits must be >= 1")
    plan = SplitPlan(splits=splits, train_fraction=train_fraction, master_seed=seed)
    means = univariate_aucs(dataset, plan)
    order = np.lexsort((np.arange(n_tokens), -means))[:k]

    ev = _IgEvaluator(dataset)
    steps = []
    prefix: list[int] = []
    for t in order:
        prefix.append(int(t))
        steps.append(
            SelectionStep(int(t), float(means[t]), ev.ig(prefix))
        )
    return SelectionTrace("auc_greedy", tuple(steps), budget_k=k, seed=seed, gain_metric="auc")


def select_random(catalog_size: int, k: int, seed: int) -> SelectionTrace:
    """Uniform random subset of k tokens, deterministic for a given seed."""
    if catalog_size < 1:
        raise ParameterError("catalog size must be >= 1")
    _check_k(k, catalog_size)
    rng = np.random.default_rng(seed)
    ids = rng.permutation(catalog_size)[:k]
    steps = tuple(SelectionStep(int(t), 0.0, 0.0) for t in ids)
    return SelectionTrace("random", steps, budget_k=k, seed=seed, gain_metric="none")


def select_exhaustive(
    dataset: Dataset, k: int, max_subsets: int = EXHAUSTIVE_SUBSET_CAP
) -> SelectionTrace:
    """Best size-k subset by joint information gain, by full enumeration.

    Ties resolve to the lexicographically smallest id list. Steps replay
    the winning subset greedily so the trace carries marginal gains.
    """
    n_tokens = len(dataset.catalog)
    _check_k(k, n_tokens)
    n_subsets = math.comb(n_tokens, k)
    if n_subsets > max_subsets:
        raise CapacityError(
            f"{n_subsets} subsets of size {k} exceed the enumeration cap of {max_subsets}"
        )
    ev = _IgEvaluator(dataset)

    from itertools import combinations

    best_subset = None
    best_ig = -1.0
    for combo in combinations(range(n_tokens), k):
        ig = ev.ig(combo)
        if ig > best_ig:
            best_ig = ig
            best_subset = combo

    # greedy replay within the winning subset, tie-break lowest id
    steps = []
    chosen: list[int] = []
    remaining = list(best_subset)
    cur_ig = 0.0
    while remaining:
        best_t = -1
        best_cum = -1.0
        for t in remaining:
            cum = ev.ig(chosen + [t])
            if cum > best_cum:
                best_cum = cum
                best_t = t
        steps.append(SelectionStep(best_t, best_cum - cur_ig, best_cum))
        chosen.append(best_t)
        remaining.remove(best_t)
        cur_ig = best_cum
    return SelectionTrace("exhaustive", tuple(steps), budget_k=k)
