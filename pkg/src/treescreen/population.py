"""Posterior-predictive synthetic populations.

For each paired posterior draw j of the item model and the risk model:
draw N synthetic response rows, score them with the j-th risk draw to get
p-tilde, and sample the class label Bernoulli(p-tilde). The pooled data of
M = N*D rows also carries the posterior-mean probability E-bar (average of
the per-draw probabilities over all D risk draws at each row), which is the
regression target for tree calibration. A separate pooled-only reservoir
supports the pruning step.

Storage is columnar (one-byte level indices); blocks are views into the
pooled arrays. Per-block RNG streams are spawned from the master seed so
any block can be regenerated independently.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .copula import CopulaPosterior, sample_conditional, sample_predictive
from .errors import InvalidConfig, InvalidCount
from .items import ItemBank
from .risk import RiskPosterior, predict_prob


@dataclass
class SyntheticBlock:
    """The j-th draw's sample {x_ij, p_ij, y_ij | theta_j}."""

    draw_index: int
    x: np.ndarray  # (N, p) int8 level indices, view into pooled storage
    p: np.ndarray  # (N,) per-draw at-risk probabilities
    y: np.ndarray  # (N,) uint8 labels


@dataclass
class PooledRows:
    """Pooled synthetic rows with posterior-mean probabilities attached."""

    x: np.ndarray  # (M, p) int8 level indices
    p: np.ndarray  # (M,) generating-draw probabilities
    y: np.ndarray  # (M,) uint8
    e_bar: np.ndarray  # (M,) posterior-mean at-risk probability

    @property
    def M(self):
        return self.x.shape[0]


@dataclass
class SyntheticPopulation:
    N: int
    D: int
    pooled: PooledRows
    item_names: tuple
    seed: int
    predicate_text: str | None = None
    pruning_reservoir: PooledRows | None = None
    meta: dict = field(default_factory=dict)

    @property
    def M(self):
        return self.N * self.D

    def blocks(self):
        for j in range(self.D):
            sl = slice(j * self.N, (j + 1) * self.N)
            yield SyntheticBlock(j, self.pooled.x[sl], self.pooled.p[sl], self.pooled.y[sl])

    def block(self, j):
        sl = slice(j * self.N, (j + 1) * self.N)
        return SyntheticBlock(j, self.pooled.x[sl], self.pooled.p[sl], self.pooled.y[sl])


def _encode_items(raw_rows, bank: ItemBank):
    """Raw sampled values -> 0-based level indices for the splitting items."""
    split_items = bank.splitting_items
    out = np.empty((raw_rows.shape[0], len(split_items)), dtype=np.int8)
    for j, it in enumerate(split_items):
        codes = np.asarray(it.codes)
        out[:, j] = np.searchsorted(codes, raw_rows[:, j])
    return out


def _draw_blocks(copula, risk, bank, per_block, D, seed, predicate):
    n_items = len(bank.splitting_items)
    total = int(np.sum(per_block))
    X = np.empty((total, n_items), dtype=np.int8)
    P = np.empty(total, dtype=np.float64)
    Y = np.empty(total, dtype=np.uint8)
    streams = np.random.SeedSequence(seed).spawn(D)
    pos = 0
    for j in range(D):
        nj = int(per_block[j])
        if nj == 0:
            continue
        block_seed = streams[j].generate_state(1)[0]
        theta_x = copula.draws[j]
        if predicate is None:
            raw = sample_predictive(theta_x, nj, int(block_seed))
        else:
            raw = sample_conditional(theta_x, predicate, nj, int(block_seed))
        x = _encode_items(raw, bank)
        p = predict_prob(risk.draws[j], x)
        rng = np.random.default_rng(streams[j].spawn(1)[0])
        y = (rng.random(nj) < p).astype(np.uint8)
        X[pos : pos + nj] = x
        P[pos : pos + nj] = p
        Y[pos : pos + nj] = y
        pos += nj
    return X, P, Y


def generate_population(
    copula: CopulaPosterior,
    risk: RiskPosterior,
    bank: ItemBank,
    N: int,
    D: int,
    seed: int,
    predicate=None,
) -> SyntheticPopulation:
    """Appendix-style pipeline: D blocks of N rows plus pooled E-bar."""
    if N < 1:
        raise InvalidCount(f"N must be >= 1, got {N}")
    if D < 1:
        raise InvalidCount(f"D must be >= 1, got {D}")
    if copula.D < D or risk.D < D:
        raise InvalidConfig(
            f"posteriors have {copula.D} (copula) / {risk.D} (risk) draws; need >= D={D}"
        )
    per_block = np.full(D, N, dtype=np.int64)
    X, P, Y = _draw_blocks(copula, risk, bank, per_block, D, seed, predicate)
    e_bar = risk.prob_matrix(X)[:D].mean(axis=0)
    pooled = PooledRows(x=X, p=P, y=Y, e_bar=e_bar)
    pred_text = None if predicate is None else str(predicate)
    return SyntheticPopulation(
        N=N, D=D, pooled=pooled, item_names=tuple(it.id for it in bank.splitting_items),
        seed=seed, predicate_text=pred_text,
    )


def generate_pruning_reservoir(
    copula: CopulaPosterior,
    risk: RiskPosterior,
    bank: ItemBank,
    count: int = 100_000,
    seed: int = 1,
    predicate=None,
) -> PooledRows:
    """Pooled-only rows for the pruning holdout, spread across the draws."""
    if count < 1:
        raise InvalidCount(f"count must be >= 1, got {count}")
    D = min(copula.D, risk.D)
    per_block = np.full(D, count // D, dtype=np.int64)
    per_block[: count % D] += 1
    X, P, Y = _draw_blocks(copula, risk, bank, per_block, D, seed, predicate)
    e_bar = risk.prob_matrix(X)[:D].mean(axis=0)
    return PooledRows(x=X, p=P, y=Y, e_bar=e_bar)
