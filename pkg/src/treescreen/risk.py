"""Bayesian sum-of-trees risk model for f(y | x).

Two-class classifier: a latent Gaussian variable w = offset + sum_l g_l(x) + e,
e ~ N(0,1), with y = 1 iff w > 0, fit by backfitting MCMC (grow/prune
Metropolis moves per tree, conjugate normal leaf updates, truncated-normal
latent refresh). Each retained draw exposes Pr(Y=1 | x) = Phi(offset + sum g);
the posterior-mean probability averages that over draws.

Depth-penalizing split prior alpha*(1+d)^-beta and leaf prior
N(0, (3/(2*sqrt(L)))^2) follow common BART practice.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import InsufficientData, InvalidConfig, SingleClassOutcome
from .kernels import forest_eval, truncnorm_fill


@dataclass(frozen=True)
class RiskConfig:
    num_trees: int = 50
    burn_in: int = 300
    draws: int = 200
    thin: int = 1
    seed: int = 0
    split_alpha: float = 0.95
    split_beta: float = 2.0
    leaf_scale: float | None = None  # default 3 / (2 sqrt(L))

    def resolved_leaf_scale(self):
        if self.leaf_scale is not None:
            return self.leaf_scale
        return 3.0 / (2.0 * math.sqrt(self.num_trees))


@dataclass
class TreeEnsembleDraw:
    """One posterior draw: L trees flattened into parallel node arrays.

    ``feat[n] == -1`` marks a leaf whose value is ``value[n]``; internal
    nodes route left iff x[feat] <= thresh. ``roots`` indexes the L roots.
    """

    feat: np.ndarray
    thresh: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    roots: np.ndarray
    item_names: tuple
    offset: float = 0.0

    @property
    def num_trees(self):
        return len(self.roots)

    def raw_score(self, X):
        X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.int8)
        sums = forest_eval(
            self.feat, self.thresh, self.left, self.right, self.value,
            self.roots, self.num_trees, X,
        )
        return self.offset + sums[0]


def predict_prob(draw: TreeEnsembleDraw, x) -> np.ndarray:
    """Pr(Y=1 | x, draw) = Phi(offset + summed tree output); in (0, 1)."""
    p = ndtr(draw.raw_score(x))
    return np.clip(p, 1e-12, 1.0 - 1e-12)


@dataclass
class RiskPosterior:
    draws: list  # of TreeEnsembleDraw
    training_summary: dict = field(default_factory=dict)
    _stacked: tuple | None = None

    def __post_init__(self):
        if not self.draws:
            raise InvalidConfig("posterior needs >= 1 draw")

    @property
    def D(self):
        return len(self.draws)

    def stacked(self):
        """All draws' node arrays concatenated for batch evaluation."""
        if self._stacked is None:
            feats, threshs, lefts, rights, values, roots, offsets = [], [], [], [], [], [], []
            base = 0
            for d in self.draws:
                feats.append(d.feat)
                threshs.append(d.thresh)
                lefts.append(d.left + base)
                rights.append(d.right + base)
                values.append(d.value)
                roots.append(d.roots + base)
                offsets.append(d.offset)
                base += len(d.feat)
            self._stacked = (
                np.concatenate(feats),
                np.concatenate(threshs),
                np.concatenate(lefts),
                np.concatenate(rights),
                np.concatenate(values),
                np.concatenate(roots),
                self.draws[0].num_trees,
                np.asarray(offsets),
            )
        return self._stacked

    def prob_matrix(self, X):
        """(D, n) matrix of per-draw probabilities Pr(Y=1 | x, draw j)."""
        feat, thresh, left, right, value, roots, L, offsets = self.stacked()
        X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.int8)
        sums = forest_eval(feat, thresh, left, right, value, roots, L, X)
        return np.clip(ndtr(sums + offsets[:, None]), 1e-12, 1.0 - 1e-12)


def posterior_mean_prob(posterior: RiskPosterior, x) -> np.ndarray:
    """E-bar(Y | x): arithmetic mean of predict_prob over all retained draws."""
    return posterior.prob_matrix(x).mean(axis=0)


# ---------------------------------------------------------------------------
# backfitting sampler internals

class _Node:
    __slots__ = ("feat", "cut", "left", "right", "rows", "mu", "depth", "parent")

    def __init__(self, rows, depth, parent=None):
        self.feat = -1
        self.cut = -1
        self.left = None
        self.right = None
        self.rows = rows
        self.mu = 0.0
        self.depth = depth
        self.parent = parent

    @property
    def is_leaf(self):
        return self.left is None


class _Tree:
    def __init__(self, n):
        self.root = _Node(np.arange(n), 0)

    def leaves(self):
        out = []
        stack = [self.root]
        while stack:
            nd = stack.pop()
            if nd.is_leaf:
                out.append(nd)
            else:
                stack.append(nd.right)
                stack.append(nd.left)
        return out

    def prunable(self):
        out = []
        stack = [self.root]
        while stack:
            nd = stack.pop()
            if not nd.is_leaf:
                if nd.left.is_leaf and nd.right.is_leaf:
                    out.append(nd)
                else:
                    stack.append(nd.right)
                    stack.append(nd.left)
        return out

    def fits(self, n):
        out = np.empty(n)
        for leaf in self.leaves():
            out[leaf.rows] = leaf.mu
        return out

    def flatten(self, item_names, offset):
        feat, thresh, left, right, value = [], [], [], [], []

        def rec(nd):
            idx = len(feat)
            feat.append(nd.feat if not nd.is_leaf else -1)
            thresh.append(float(nd.cut))
            left.append(-1)
            right.append(-1)
            value.append(nd.mu if nd.is_leaf else 0.0)
            if not nd.is_leaf:
                left[idx] = rec(nd.left)
                right[idx] = rec(nd.right)
            return idx

        rec(self.root)
        return (
            np.asarray(feat, dtype=np.int64),
            np.asarray(thresh, dtype=np.float64),
            np.asarray(left, dtype=np.int64),
            np.asarray(right, dtype=np.int64),
            np.asarray(value, dtype=np.float64),
        )


def _log_node_ml(n, s, tau2):
    # Gaussian marginal likelihood terms that differ between split/unsplit
    return 0.5 * tau2 * s * s / (1.0 + n * tau2) - 0.5 * math.log(1.0 + n * tau2)


def fit_risk_model(data, config: RiskConfig = RiskConfig()) -> RiskPosterior:
    """Fit the classifier to a Dataset (or an (X_encoded, y) pair)."""
    if config.num_trees < 1:
        raise InvalidConfig(f"num_trees must be >= 1, got {config.num_trees}")
    if config.draws < 1:
        raise InvalidConfig(f"draws must be >= 1, got {config.draws}")
    if hasattr(data, "encoded"):
        X = data.encoded
        y = np.asarray(data.outcomes, dtype=np.int8)
        item_names = data.item_ids
    else:
        X, y = data
        X = np.asarray(X, dtype=np.int8)
        y = np.asarray(y, dtype=np.int8)
        item_names = tuple(f"x{j}" for j in range(X.shape[1]))
    n, p = X.shape
    if n < 50:
        raise InsufficientData(f"need n >= 50, got {n}")
    if len(np.unique(y)) < 2:
        raise SingleClassOutcome("outcome has a single class; cannot fit a classifier")

    L = config.num_trees
    tau = config.resolved_leaf_scale()
    tau2 = tau * tau
    alpha, beta = config.split_alpha, config.split_beta
    offset = float(ndtri(np.clip(y.mean(), 1e-6, 1 - 1e-6)))
    rng = np.random.default_rng(config.seed)

    # valid cut codes per item (split "code <= c" with both sides observed)
    cuts = []
    for j in range(p):
        uniq = np.unique(X[:, j])
        cuts.append(uniq[:-1].astype(np.int64))
    splittable = [j for j in range(p) if len(cuts[j]) > 0]
    if not splittable:
        raise InsufficientData("no item has more than one observed response code")

    def p_split(depth):
        return alpha * (1.0 + depth) ** (-beta)

    trees = [_Tree(n) for _ in range(L)]
    fits = np.zeros((L, n))
    total = fits.sum(axis=0)

    lo = np.where(y == 1, 0.0, -np.inf)
    hi = np.where(y == 1, np.inf, 0.0)
    w = truncnorm_fill(np.full(n, offset), lo, hi, rng.random(n))

    n_iter = config.burn_in + config.thin * config.draws
    draws = []
    accept = 0
    proposals = 0
    for it in range(n_iter):
        for l in range(L):
            tree = trees[l]
            resid = w - offset - (total - fits[l])
            leaves = tree.leaves()
            prunable = tree.prunable()
            is_stump = tree.root.is_leaf
            do_grow = is_stump or rng.random() < 0.5
            proposals += 1
            if do_grow:
                leaf = leaves[rng.integers(len(leaves))]
                j = splittable[rng.integers(len(splittable))]
                c = cuts[j][rng.integers(len(cuts[j]))]
                mask = X[leaf.rows, j] <= c
                rows_l = leaf.rows[mask]
                rows_r = leaf.rows[~mask]
                if len(rows_l) and len(rows_r):
                    s_l = float(resid[rows_l].sum())
                    s_r = float(resid[rows_r].sum())
                    s_p = s_l + s_r
                    log_lik = (
                        _log_node_ml(len(rows_l), s_l, tau2)
                        + _log_node_ml(len(rows_r), s_r, tau2)
                        - _log_node_ml(len(leaf.rows), s_p, tau2)
                    )
                    d = leaf.depth
                    log_prior = (
                        math.log(p_split(d))
                        + 2.0 * math.log(1.0 - p_split(d + 1))
                        - math.log(1.0 - p_split(d))
                    )
                    # forward: pick leaf, item, cut; reverse: pick the new prunable pair
                    p_grow_fwd = 1.0 if is_stump else 0.5
                    # growing removes the parent from the prunable set (it no
                    # longer has two leaf children) and adds the grown node
                    lost_parent = 1 if leaf.parent is not None and any(
                        nd is leaf.parent for nd in prunable
                    ) else 0
                    n_prunable_new = len(prunable) + 1 - lost_parent
                    # the 1/(p * n_cuts) split-rule probability appears in both
                    # the tree prior and the proposal and cancels exactly
                    log_trans = (
                        math.log(0.5)
                        - math.log(max(n_prunable_new, 1))
                        - (math.log(p_grow_fwd) - math.log(len(leaves)))
                    )
                    if math.log(rng.random() + 1e-300) < log_lik + log_prior + log_trans:
                        leaf.feat = j
                        leaf.cut = int(c)
                        leaf.left = _Node(rows_l, d + 1, leaf)
                        leaf.right = _Node(rows_r, d + 1, leaf)
                        accept += 1
            elif prunable:
                nd = prunable[rng.integers(len(prunable))]
                rows_l, rows_r = nd.left.rows, nd.right.rows
                s_l = float(resid[rows_l].sum())
                s_r = float(resid[rows_r].sum())
                s_p = s_l + s_r
                log_lik = _log_node_ml(len(nd.rows), s_p, tau2) - (
                    _log_node_ml(len(rows_l), s_l, tau2)
                    + _log_node_ml(len(rows_r), s_r, tau2)
                )
                d = nd.depth
                log_prior = (
                    math.log(1.0 - p_split(d))
                    - math.log(p_split(d))
                    - 2.0 * math.log(1.0 - p_split(d + 1))
                )
                n_leaves_after = len(leaves) - 1
                becomes_stump = nd is tree.root
                p_grow_back = 1.0 if becomes_stump else 0.5
                log_trans = (
                    math.log(p_grow_back)
                    - math.log(n_leaves_after)
                    - (math.log(0.5) - math.log(len(prunable)))
                )
                if math.log(rng.random() + 1e-300) < log_lik + log_prior + log_trans:
                    nd.feat = -1
                    nd.cut = -1
                    nd.left = None
                    nd.right = None
                    accept += 1

            # conjugate leaf means
            for leaf in tree.leaves():
                nl = len(leaf.rows)
                v = 1.0 / (nl + 1.0 / tau2)
                m = v * float(resid[leaf.rows].sum())
                leaf.mu = m + math.sqrt(v) * rng.standard_normal()
                if not np.isfinite(leaf.mu):
                    raise InvalidConfig("non-finite leaf update; check inputs/config")
            new_fit = tree.fits(n)
            total += new_fit - fits[l]
            fits[l] = new_fit

        # latent refresh
        w = truncnorm_fill(offset + total, lo, hi, rng.random(n))

        if it >= config.burn_in and (it - config.burn_in) % config.thin == 0:
            packed = []
            for tree in trees:
                packed.append(tree.flatten(item_names, offset))
            feat = np.concatenate([pk[0] for pk in packed])
            thresh = np.concatenate([pk[1] for pk in packed])
            sizes = [len(pk[0]) for pk in packed]
            offs = np.concatenate(([0], np.cumsum(sizes)[:-1]))
            left = np.concatenate(
                [np.where(pk[2] >= 0, pk[2] + o, -1) for pk, o in zip(packed, offs)]
            )
            right = np.concatenate(
                [np.where(pk[3] >= 0, pk[3] + o, -1) for pk, o in zip(packed, offs)]
            )
            value = np.concatenate([pk[4] for pk in packed])
            draws.append(
                TreeEnsembleDraw(
                    feat=feat, thresh=thresh, left=left, right=right, value=value,
                    roots=offs.astype(np.int64), item_names=tuple(item_names),
                    offset=offset,
                )
            )

    summary = {
        "n": n,
        "p": p,
        "num_trees": L,
        "accept_rate": accept / max(proposals, 1),
        "offset": offset,
        "base_rate": float(y.mean()),
    }
    return RiskPosterior(draws=draws, training_summary=summary)
