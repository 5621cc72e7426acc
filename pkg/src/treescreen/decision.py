"""Utility-based evaluation and threshold design for screening tests.

The target quantity is the weighted accuracy w*sensitivity + (1-w)*specificity
over a target population, estimated on pooled synthetic rows. Thresholds are
chosen by exhaustive scan over the achievable operating points; utility-loss
distributions compare a short tree test against the full-bank scorer draw by
draw.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateTruths,
    EmptyGrid,
    EmptyPopulation,
    InvalidConfig,
)
from .population import SyntheticPopulation
from .tree import Constraint, RegressionTree, default_prune_threshold
from .tree import grow as grow_tree
from .tree import predict as tree_predict
from .tree import prune as prune_tree


@dataclass(frozen=True)
class UtilityWeights:
    """Weight w on sensitivity, with population-level utilities per class."""

    w: float
    base_rate: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.w < 1.0:
            raise InvalidConfig(f"w must be in (0, 1), got {self.w}")
        if not 0.0 < self.base_rate < 1.0:
            raise InvalidConfig(f"base rate must be in (0, 1), got {self.base_rate}")

    @property
    def u0(self):
        return (1.0 - self.w) / (1.0 - self.base_rate)

    @property
    def u1(self):
        return self.w / self.base_rate

    @property
    def pointwise_threshold(self):
        """Probability above which labeling 1 maximizes expected utility."""
        return self.u0 / (self.u0 + self.u1)


@dataclass
class AdaptiveTest:
    """A scorer plus a classification threshold; classify 1 iff score >= C."""

    tree: RegressionTree | None
    threshold: float
    name: str = ""
    achieved_utility: float = float("nan")
    _scorer: object = None

    def __post_init__(self):
        if not 0.0 <= self.threshold <= 1.0:
            raise InvalidConfig(f"threshold must be in [0, 1], got {self.threshold}")

    def score(self, X):
        if self.tree is not None:
            return tree_predict(self.tree, X)
        return np.asarray(self._scorer(X), dtype=np.float64)

    def classify(self, X):
        return (self.score(X) >= self.threshold).astype(np.uint8)


@dataclass
class UtilityDiffSample:
    """Per-posterior-draw utility differences for a test of length m."""

    m: int
    draws: np.ndarray
    skipped_blocks: tuple = ()

    def boxplot_summary(self):
        q1, med, q3 = np.quantile(self.draws, [0.25, 0.5, 0.75])
        iqr = q3 - q1
        lo_f, hi_f = q1 - 1.5 * iqr, q3 + 1.5 * iqr
        inside = self.draws[(self.draws >= lo_f) & (self.draws <= hi_f)]
        return {
            "m": self.m,
            "q1": float(q1),
            "median": float(med),
            "q3": float(q3),
            "whisker_lo": float(inside.min()) if inside.size else float(q1),
            "whisker_hi": float(inside.max()) if inside.size else float(q3),
            "n": int(len(self.draws)),
        }


def expected_utility(sens: float, spec: float, w: float) -> float:
    if not (0.0 <= sens <= 1.0 and 0.0 <= spec <= 1.0 and 0.0 < w < 1.0):
        raise InvalidConfig(f"out-of-range inputs ({sens}, {spec}, {w})")
    return w * sens + (1.0 - w) * spec


def empirical_sens_spec(predictions, truths):
    """(TP/(TP+FN), TN/(TN+FP)); both classes must appear in truths."""
    pred = np.asarray(predictions).astype(np.uint8)
    y = np.asarray(truths).astype(np.uint8)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateTruths(f"truths contain {n_pos} positives of {len(y)}")
    sens = float((pred & y).sum() / n_pos)
    spec = float(((1 - pred) & (1 - y)).sum() / n_neg)
    return sens, spec


def _operating_points(scores, labels):
    """Candidate thresholds {0} u {unique scores} u {1} with (sens, spec)."""
    scores = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(np.uint8)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateTruths(f"labels contain {n_pos} positives of {len(y)}")
    order = np.argsort(scores, kind="stable")
    s_sorted = scores[order]
    y_sorted = y[order]
    uniq, first_idx = np.unique(s_sorted, return_index=True)
    cands = np.concatenate(([0.0], uniq, [1.0]))
    cands = np.unique(cands)
    # suffix counts: positives / negatives with score >= candidate
    pos_suffix = np.concatenate((np.cumsum(y_sorted[::-1])[::-1], [0]))
    neg_suffix = np.concatenate((np.cumsum((1 - y_sorted)[::-1])[::-1], [0]))
    start = np.searchsorted(s_sorted, cands, side="left")
    tp = pos_suffix[start]
    fp = neg_suffix[start]
    sens = tp / n_pos
    spec = (n_neg - fp) / n_neg
    return cands, sens, spec


def optimize_threshold(scores, labels, w: float):
    """Maximize the weighted average over all achievable thresholds.

    Ties break to the largest maximizing threshold.
    """
    cands, sens, spec = _operating_points(scores, labels)
    util = w * sens + (1.0 - w) * spec
    best = util.max()
    idx = np.nonzero(util >= best - 1e-15)[0][-1]
    return float(cands[idx]), float(util[idx])


def roc_points(scores, labels):
    """(specificity, sensitivity) pairs, one per candidate threshold."""
    cands, sens, spec = _operating_points(scores, labels)
    return np.column_stack((spec, sens))


def utility_class_labels(e_bar, w: float, base_rate: float):
    """Point-wise optimal labels: 1 iff E-bar >= U0/(U0+U1)."""
    uw = UtilityWeights(w, base_rate)
    return (np.asarray(e_bar, dtype=np.float64) >= uw.pointwise_threshold).astype(np.uint8)


def build_full_test(population: SyntheticPopulation, w: float) -> AdaptiveTest:
    """Full-bank test: score by pooled posterior-mean probability."""
    pooled = population.pooled
    if pooled.M == 0:
        raise EmptyPopulation("population has no pooled rows")
    C, util = optimize_threshold(pooled.e_bar, pooled.y, w)
    test = AdaptiveTest(tree=None, threshold=C, name="full", achieved_utility=util)
    e_lookup = {"x": pooled.x, "e": pooled.e_bar}

    def scorer(X, _lk=e_lookup):
        X = np.atleast_2d(np.asarray(X))
        if X.shape == _lk["x"].shape and np.array_equal(X, _lk["x"]):
            return _lk["e"]
        raise InvalidConfig(
            "the full test scores pooled training rows only; use a risk "
            "posterior mean for held-out rows"
        )

    test._scorer = scorer
    return test


def build_short_test(population: SyntheticPopulation, tree: RegressionTree, w: float) -> AdaptiveTest:
    """Tree test: threshold optimized on the pooled rows with tree scores."""
    pooled = population.pooled
    if pooled.M == 0:
        raise EmptyPopulation("population has no pooled rows")
    scores = tree_predict(tree, pooled.x)
    C, util = optimize_threshold(scores, pooled.y, w)
    m = tree.constraint.value if tree.constraint.kind == "maxipp" else 0
    return AdaptiveTest(tree=tree, threshold=C, name=f"maxipp-{m}", achieved_utility=util)


def design_tree(
    population: SyntheticPopulation,
    m: int,
    reservoir=None,
    constraint_kind: str = "maxipp",
    min_node: int = 25,
    prune_threshold: float | None = None,
    patience: int = 10,
) -> RegressionTree:
    """Grow on pooled (x, E-bar) under the constraint, prune on the reservoir."""
    pooled = population.pooled
    seq = grow_tree(
        pooled.x,
        pooled.e_bar,
        Constraint(constraint_kind, m),
        min_node=min_node,
        seed=population.seed,
        item_names=population.item_names,
    )
    if reservoir is None:
        return seq.tree_at(seq.S)
    if prune_threshold is None:
        prune_threshold = default_prune_threshold(m)
    return prune_tree(seq, reservoir.x, reservoir.e_bar, prune_threshold, patience)


def _block_utilities(population, test, w):
    """Per-block Eq.-style utilities; None where a block has one class."""
    scores = test.score(population.pooled.x)
    preds = (scores >= test.threshold).astype(np.uint8)
    out = []
    N = population.N
    for j in range(population.D):
        y = population.pooled.y[j * N : (j + 1) * N]
        p = preds[j * N : (j + 1) * N]
        n_pos = int(y.sum())
        if n_pos == 0 or n_pos == len(y):
            out.append(None)
            continue
        sens, spec = empirical_sens_spec(p, y)
        out.append(expected_utility(sens, spec, w))
    return out


def delta_distribution(
    population: SyntheticPopulation,
    short_test: AdaptiveTest,
    full_test: AdaptiveTest,
    w: float,
    m: int | None = None,
) -> UtilityDiffSample:
    """Per-draw utility of the short test minus the full test.

    Blocks where the label vector is single-class are skipped with a warning;
    the per-block ratios are undefined there.
    """
    u_short = _block_utilities(population, short_test, w)
    u_full = _block_utilities(population, full_test, w)
    draws = []
    skipped = []
    for j, (a, b) in enumerate(zip(u_short, u_full)):
        if a is None or b is None:
            skipped.append(j)
            continue
        draws.append(a - b)
    if skipped:
        warnings.warn(f"skipped {len(skipped)} single-class blocks: {skipped[:5]}...")
    if m is None:
        tr = short_test.tree
        m = tr.constraint.value if tr is not None and tr.constraint.kind == "maxipp" else 0
    return UtilityDiffSample(m=m, draws=np.asarray(draws), skipped_blocks=tuple(skipped))


# ---------------------------------------------------------------------------
# method comparison grid

_CRITERIA = ("regression+cutoff", "classification-on-y", "classification-on-utility-labels")


def _classification_tree(population, target, m, constraint_kind, min_node, reservoir):
    """Binary-target tree via the SSE machinery (equivalent split ordering
    to Gini for 0/1 targets); classify by leaf mean >= 0.5."""
    seq = grow_tree(
        population.pooled.x,
        target.astype(np.float64),
        Constraint(constraint_kind, m),
        min_node=min_node,
        seed=population.seed,
        item_names=population.item_names,
    )
    if reservoir is None:
        return seq.tree_at(seq.S)
    thr = default_prune_threshold(m)
    return prune_tree(seq, reservoir.x, reservoir.e_bar, thr, 10)


def compare_methods(
    population: SyntheticPopulation,
    m_values,
    constraint_kinds=("maxipp",),
    criteria=_CRITERIA,
    w_values=(0.5,),
    reservoir=None,
    min_node: int = 25,
) -> list:
    """Grid of tree-calibration recipes; one result row per cell.

    Criteria: "regression+cutoff" fits E-bar and optimizes the cutoff;
    "classification-on-y" fits the sampled labels directly and classifies by
    majority leaf; "classification-on-utility-labels" fits the point-wise
    optimal utility labels and classifies by majority leaf.
    """
    m_values = list(m_values)
    kinds = list(constraint_kinds)
    criteria = list(criteria)
    w_values = list(w_values)
    if not m_values or not kinds or not criteria or not w_values:
        raise EmptyGrid("comparison grid has an empty axis")
    for c in criteria:
        if c not in _CRITERIA:
            raise InvalidConfig(f"unknown criterion {c!r}; expected one of {_CRITERIA}")
    pooled = population.pooled
    base_rate = float(pooled.y.mean())
    rows = []
    for kind in kinds:
        for m in m_values:
            for w in w_values:
                for crit in criteria:
                    if crit == "regression+cutoff":
                        tree = design_tree(
                            population, m, reservoir, kind, min_node=min_node
                        )
                        test = build_short_test(population, tree, w)
                    else:
                        if crit == "classification-on-y":
                            target = pooled.y
                        else:
                            target = utility_class_labels(pooled.e_bar, w, base_rate)
                        tree = _classification_tree(
                            population, target, m, kind, min_node, reservoir
                        )
                        test = AdaptiveTest(tree=tree, threshold=0.5, name=crit)
                    preds = test.classify(pooled.x)
                    sens, spec = empirical_sens_spec(preds, pooled.y)
                    rows.append(
                        {
                            "n_items": m,
                            "tree_type": kind,
                            "criterion": crit,
                            "w": w,
                            "sensitivity": sens,
                            "specificity": spec,
                            "utility": expected_utility(sens, spec, w),
                            "threshold": test.threshold,
                        }
                    )
    return rows


def evaluate_on_holdout(test: AdaptiveTest, X, y, w: float, scores=None):
    """Sens/spec/utility of a test on held-out encoded rows.

    Full-bank tests need explicit scores (posterior-mean probabilities)."""
    if scores is None:
        scores = test.score(X)
    preds = (np.asarray(scores) >= test.threshold).astype(np.uint8)
    sens, spec = empirical_sens_spec(preds, y)
    return {"sensitivity": sens, "specificity": spec, "utility": expected_utility(sens, spec, w)}
