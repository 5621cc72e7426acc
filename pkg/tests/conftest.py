import numpy as np
import pytest

from treescreen import ConditioningVar, Dataset, ItemBank, ItemDef


def make_bank(p=5, levels=(1, 2, 3, 4), cond=(), outcome_items=()):
    items = tuple(
        ItemDef(f"Q{j}", f"Question {j}", tuple((c, f"level {c}") for c in levels))
        for j in range(p)
    )
    return ItemBank(
        items=items,
        outcome_items=outcome_items,
        conditioning_vars=tuple(ConditioningVar(n) for n in cond),
    )


def make_dataset(bank, n=300, seed=0, signal_item=0, base=0.15, bump=0.5):
    """Responses off a one-factor lattice; outcome leans on one item."""
    rng = np.random.default_rng(seed)
    split_items = bank.splitting_items
    p = len(split_items)
    f = rng.standard_normal(n)
    resp = np.empty((n, p), dtype=np.int16)
    for j, it in enumerate(split_items):
        z = 0.8 * f + rng.standard_normal(n)
        u = (z - z.min()) / (z.max() - z.min() + 1e-12)
        idx = np.minimum((u * len(it.codes)).astype(int), len(it.codes) - 1)
        resp[:, j] = np.asarray(it.codes)[idx]
    codes = np.asarray(split_items[signal_item].codes)
    hi = resp[:, signal_item] >= codes[len(codes) // 2]
    prob = np.where(hi, base + bump, base)
    y = (rng.random(n) < prob).astype(np.uint8)
    cond = rng.integers(10, 20, size=(n, len(bank.conditioning_vars))).astype(np.int32)
    return Dataset(bank=bank, responses=resp, outcomes=y, conditioning=cond)


@pytest.fixture
def bank():
    return make_bank()


@pytest.fixture
def dataset(bank):
    return make_dataset(bank)
