import numpy as np
import pytest

from toksel.dataset import Dataset, TokenCatalog


def make_dataset(selections, ratings, catalog=None, arms=None, platforms=None):
    """Build a Dataset from a selection matrix and a rating list (None = unrated)."""
    sel = np.asarray(selections, dtype=np.uint8)
    n, n_tokens = sel.shape
    if catalog is None:
        catalog = TokenCatalog.numbered(n_tokens)
    return Dataset(
        catalog,
        [f"c{i:04d}" for i in range(n)],
        arms or ["none"] * n,
        platforms or ["desktop"] * n,
        np.array([0 if r is None else r for r in ratings], dtype=np.int16),
        sel,
    )


def pc_to_rating(pc):
    """Map a poor-call bit to a representative star rating."""
    return [1 if v else 5 for v in pc]


@pytest.fixture
def xor_dataset():
    """Poor call = token0 XOR token1; token2 constant. Breaks diminishing returns."""
    rows = []
    ratings = []
    for t0 in (0, 1):
        for t1 in (0, 1):
            for _ in range(2):
                rows.append([t0, t1, 0])
                ratings.append(1 if t0 ^ t1 else 5)
    return make_dataset(rows, ratings)


@pytest.fixture
def duplicate_dataset():
    """Tokens 0 and 1 are identical columns; token 2 adds independent signal."""
    rng = np.random.default_rng(99)
    n = 400
    pc = rng.random(n) < 0.4
    a = np.where(pc, rng.random(n) < 0.8, rng.random(n) < 0.1)
    c = np.where(pc, rng.random(n) < 0.6, rng.random(n) < 0.3)
    sel = np.column_stack([a, a, c]).astype(np.uint8)
    return make_dataset(sel, pc_to_rating(pc))
