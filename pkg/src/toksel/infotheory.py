"""Plug-in entropy and information gain over binary token subsets.

All quantities are in bits. The estimator is the maximum-likelihood
plug-in over empirical cell counts of rated records, with optional
add-alpha smoothing (off by default: smoothing trades the exact
monotonicity of the plug-in estimate for variance reduction).

Numerical note: conditional entropies are assembled from one term per
occupied cell, n*log2(n) - n1*log2(n1) - n0*log2(n0), combined with
math.fsum. fsum returns the correctly rounded sum of the term multiset,
so subsets inducing the same cell populations (duplicate or constant
tokens) produce bit-identical values regardless of cell order, and the
monotonicity audit can use a zero tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .dataset import Dataset
from .errors import CapacityError, DataError, ParameterError

# Exact joint tables are dense in 2^k patterns; 2^20 cells is the memory cap.
HARD_SUBSET_CAP = 20


def entropy(p: float) -> float:
    """Binary entropy in bits, with 0*log2(0) taken as 0."""
    if not 0.0 <= p <= 1.0:
        raise ParameterError(f"probability must be in [0, 1], got {p}")
    if p == 0.0 or p == 1.0:
        return 0.0
    q = 1.0 - p
    return -p * math.log2(p) - q * math.log2(q)


@dataclass(frozen=True)
class JointTable:
    """Empirical joint counts of (poor-call label, token subset pattern).

    Patterns encode the subset's token values as bits: subset[j] maps to
    bit j. Cells with zero count are omitted.
    """

    subset: tuple[int, ...]
    cells: dict[int, tuple[int, int]]  # pattern -> (n_pc0, n_pc1)
    total: int

    def pc_marginal(self) -> tuple[int, int]:
        n0 = sum(c[0] for c in self.cells.values())
        n1 = sum(c[1] for c in self.cells.values())
        return n0, n1


def _validate_subset(dataset: Dataset, subset: Sequence[int]) -> tuple[int, ...]:
    ids = tuple(int(t) for t in subset)
    if len(set(ids)) != len(ids):
        raise ParameterError(f"subset ids must be distinct, got {list(subset)}")
    n_tokens = len(dataset.catalog)
    for t in ids:
        if not 0 <= t < n_tokens:
            raise ParameterError(f"token id {t} outside catalog (size {n_tokens})")
    if len(ids) > HARD_SUBSET_CAP:
        raise CapacityError(
            f"subset of {len(ids)} tokens exceeds the exact-table cap of {HARD_SUBSET_CAP}"
        )
    return ids


def _pattern_class_counts(dataset: Dataset, subset: tuple[int, ...]) -> np.ndarray:
    """Return counts[pattern, pc] over rated records; shape (2^k, 2)."""
    pc = dataset.rated_pc
    if pc.size == 0:
        raise DataError("dataset has no rated records")
    k = len(subset)
    if k == 0:
        patterns = np.zeros(pc.size, dtype=np.int64)
    else:
        weights = np.left_shift(1, np.arange(k, dtype=np.int64))
        patterns = dataset.rated_selections[:, list(subset)] @ weights
    combined = (patterns << 1) | pc
    counts = np.bincount(combined, minlength=2 << k)
    return counts.reshape(-1, 2)


def build_joint(dataset: Dataset, subset: Sequence[int]) -> JointTable:
    """Joint table of (poor-call, subset pattern) counts over rated records."""
    ids = _validate_subset(dataset, subset)
    counts = _pattern_class_counts(dataset, ids)
    occupied = np.flatnonzero(counts.sum(axis=1))
    cells = {int(p): (int(counts[p, 0]), int(counts[p, 1])) for p in occupied}
    return JointTable(subset=ids, cells=cells, total=int(counts.sum()))


def _xlog2(n: np.ndarray) -> np.ndarray:
    # n * log2(n) with n == 0 contributing 0
    return np.where(n > 0, n * np.log2(np.maximum(n, 1)), 0.0)


def _cell_terms(n0: np.ndarray, n1: np.ndarray) -> np.ndarray:
    n = n0 + n1
    return _xlog2(n) - _xlog2(n0) - _xlog2(n1)


def _cond_term_sum(dataset: Dataset, subset: tuple[int, ...]) -> float:
    """Sum over cells of n*H(pc within cell), scaled by n (i.e. N * H[pc|subset])."""
    counts = _pattern_class_counts(dataset, subset)
    terms = _cell_terms(counts[:, 0].astype(np.float64), counts[:, 1].astype(np.float64))
    return math.fsum(terms[terms != 0.0])


def _marginal_term(dataset: Dataset) -> tuple[float, int]:
    pc = dataset.rated_pc
    if pc.size == 0:
        raise DataError("dataset has no rated records")
    n1 = int(pc.sum())
    n0 = pc.size - n1
    term = float(_cell_terms(np.array([float(n0)]), np.array([float(n1)]))[0])
    return term, pc.size


def pc_entropy(dataset: Dataset) -> float:
    """Entropy of the poor-call label over rated records, in bits."""
    term, total = _marginal_term(dataset)
    return term / total


def information_gain(dataset: Dataset, subset: Sequence[int], alpha: float = 0.0) -> float:
    """Information gain of the poor-call label from a token subset, in bits.

    Plug-in estimate H[pc] - H[pc | subset] over rated records. With
    alpha > 0, every one of the 2^k * 2 cells receives an add-alpha
    pseudocount (which breaks exact monotonicity).
    """
    ids = _validate_subset(dataset, subset)
    if alpha < 0:
        raise ParameterError("alpha must be >= 0")
    if alpha > 0:
        return _smoothed_ig(dataset, ids, alpha)
    base_term, total = _marginal_term(dataset)
    ig = (base_term - _cond_term_sum(dataset, ids)) / total
    return max(0.0, ig)


def ig_from_table(table: JointTable) -> float:
    """Information gain recomputed from an explicit joint table."""
    if not table.cells:
        raise DataError("joint table is empty")
    n0 = np.array([c[0] for c in table.cells.values()], dtype=np.float64)
    n1 = np.array([c[1] for c in table.cells.values()], dtype=np.float64)
    base = float(_cell_terms(np.array([n0.sum()]), np.array([n1.sum()]))[0])
    cond = math.fsum(t for t in _cell_terms(n0, n1) if t != 0.0)
    return max(0.0, (base - cond) / table.total)


def _smoothed_ig(dataset: Dataset, subset: tuple[int, ...], alpha: float) -> float:
    counts = _pattern_class_counts(dataset, subset).astype(np.float64) + alpha
    total = counts.sum()
    n0 = counts[:, 0]
    n1 = counts[:, 1]
    cond = float(np.sum(_cell_terms(n0, n1)))
    base = float(_cell_terms(np.array([n0.sum()]), np.array([n1.sum()]))[0])
    return (base - cond) / total


@dataclass(frozen=True)
class AuditReport:
    """Outcome of a sampled property audit over random token subsets."""

    kind: str
    trials: int
    violations: int
    max_violation: float
    tolerance: float
    seed: Optional[int]

    @property
    def violation_fraction(self) -> float:
        return self.violations / self.trials

    def to_json(self) -> dict:
        return {
            "trials": self.trials,
            "violations": self.violations,
            "max_violation": self.max_violation,
            "tolerance": self.tolerance,
            "seed": self.seed,
        }


def _audit_sizes(dataset: Dataset, max_subset_size: Optional[int]) -> int:
    """Largest subset size the audits sample; defaults to min(catalog, 10)
    to keep thousands of trials affordable on wide catalogs."""
    n_tokens = len(dataset.catalog)
    cap = min(n_tokens, HARD_SUBSET_CAP if max_subset_size is None else max_subset_size)
    if max_subset_size is None:
        cap = min(cap, 10)
    return max(1, cap)


def audit_monotonicity(
    dataset: Dataset,
    trials: int,
    seed: Optional[int] = None,
    max_subset_size: Optional[int] = None,
) -> AuditReport:
    """Check IG(T1) <= IG(T2) on random chains T1 within T2, at zero tolerance.

    The plug-in estimate satisfies this exactly: conditioning on a finer
    empirical partition can never increase plug-in conditional entropy.
    Violations are counted whenever the finer chain's conditional term
    sum exceeds the coarser one's at all.
    """
    if trials < 1:
        raise ParameterError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    n_tokens = len(dataset.catalog)
    cap = _audit_sizes(dataset, max_subset_size)
    _, total = _marginal_term(dataset)

    violations = 0
    max_violation = 0.0
    for _ in range(trials):
        size2 = int(rng.integers(1, cap + 1))
        t2 = rng.permutation(n_tokens)[:size2]
        size1 = int(rng.integers(0, size2 + 1))
        t1 = t2[rng.permutation(size2)[:size1]]
        sum1 = _cond_term_sum(dataset, tuple(int(x) for x in t1))
        sum2 = _cond_term_sum(dataset, tuple(int(x) for x in t2))
        # IG(T1) > IG(T2) exactly when the T2 term sum exceeds the T1 term sum
        gap = (sum2 - sum1) / total
        if gap > 0.0:
            violations += 1
            max_violation = max(max_violation, gap)
    return AuditReport("monotonicity", trials, violations, max_violation, 0.0, seed)


def audit_submodularity(
    dataset: Dataset,
    trials: int,
    seed: Optional[int] = None,
    tolerance: float = 1e-9,
    max_subset_size: Optional[int] = None,
) -> AuditReport:
    """Check the diminishing-returns inequality on random triples (T1 ⊆ T2, e ∉ T2).

    The marginal gain of a token added to the smaller set must be at
    least its gain on the superset, up to `tolerance`. Interaction
    effects between tokens (e.g. an exclusive-or relationship with the
    label) can produce genuine violations.
    """
    if trials < 1:
        raise ParameterError("trials must be >= 1")
    if tolerance < 0:
        raise ParameterError("tolerance must be >= 0")
    rng = np.random.default_rng(seed)
    n_tokens = len(dataset.catalog)
    if n_tokens < 2:
        raise DataError("submodularity audit needs at least 2 tokens")
    cap = min(_audit_sizes(dataset, max_subset_size), n_tokens - 1)
    _, total = _marginal_term(dataset)

    violations = 0
    max_violation = 0.0
    for _ in range(trials):
        size2 = int(rng.integers(0, cap + 1))
        perm = rng.permutation(n_tokens)
        t2 = perm[:size2]
        e = int(perm[size2])
        size1 = int(rng.integers(0, size2 + 1))
        t1 = t2[rng.permutation(size2)[:size1]]

        t1 = tuple(int(x) for x in t1)
        t2 = tuple(int(x) for x in t2)
        gain_small = _cond_term_sum(dataset, t1) - _cond_term_sum(dataset, t1 + (e,))
        gain_large = _cond_term_sum(dataset, t2) - _cond_term_sum(dataset, t2 + (e,))
        gap = (gain_large - gain_small) / total
        if gap > tolerance:
            violations += 1
            max_violation = max(max_violation, gap)
    return AuditReport("submodularity", trials, violations, max_violation, tolerance, seed)
