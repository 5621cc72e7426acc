"""Regression trees with a path-unique-item (maxIPP) growth constraint.

Growth is greedy sum-of-squared-error minimization over (item, cutpoint)
candidates; once m distinct items appear on a path, only those items remain
candidates further down that path. The grower emits a nested subtree
sequence via weakest-link complexity ordering, and pruning walks that
sequence with an RMSE-plateau stopping rule on a holdout sample.

Responses are handled as 0-based level indices internally; exported
deployment files translate cutpoints back to raw code midpoints.
"""

from __future__ import annotations

import hashlib
import heapq
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientData, InvalidConfig, SchemaError, UnknownItem
from .items import ItemBank
from .kernels import split_scan, tree_predict


@dataclass(frozen=True)
class Constraint:
    kind: str  # "maxipp" | "maxdepth" | "none"
    value: int = 0

    def __post_init__(self):
        if self.kind not in ("maxipp", "maxdepth", "none"):
            raise InvalidConfig(f"unknown constraint kind {self.kind!r}")
        if self.kind != "none" and self.value < 1:
            raise InvalidConfig(f"constraint value must be >= 1, got {self.value}")


@dataclass
class RegressionTree:
    """Flattened binary regression tree; node 0 is the root.

    Internal nodes route left iff the level index of ``feat`` is <= ``cut``;
    ``cut_hi`` is the smallest observed level index above the cut (used for
    raw-code midpoints on export). Leaves carry values in [0, 1].
    """

    feat: np.ndarray  # -1 for leaves
    cut: np.ndarray
    cut_hi: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    item_names: tuple
    constraint: Constraint = Constraint("none")
    metadata: dict = field(default_factory=dict)

    @property
    def n_nodes(self):
        return len(self.feat)

    @property
    def n_leaves(self):
        return int(np.sum(self.feat < 0))

    @property
    def n_internal(self):
        return self.n_nodes - self.n_leaves

    def depth(self):
        def rec(i, d):
            if self.feat[i] < 0:
                return d
            return max(rec(self.left[i], d + 1), rec(self.right[i], d + 1))

        return rec(0, 0)

    def split_item_names(self):
        used = sorted({int(f) for f in self.feat if f >= 0})
        return tuple(self.item_names[j] for j in used)

    def signature(self):
        """Canonical structural form, for node-for-node comparisons."""

        def rec(i):
            if self.feat[i] < 0:
                return ("leaf", round(float(self.value[i]), 12))
            return (
                self.item_names[self.feat[i]],
                int(self.cut[i]),
                rec(self.left[i]),
                rec(self.right[i]),
            )

        return rec(0)


def predict(tree: RegressionTree, X) -> np.ndarray:
    """Leaf value of the unique leaf containing each row (level-index codes)."""
    X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.int8)
    return tree_predict(tree.feat, tree.cut.astype(np.float64), tree.left, tree.right,
                        tree.value, X)


def predict_one(tree: RegressionTree, responses: dict) -> float:
    """Predict from an {item id: level index} mapping; fails on missing items."""
    i = 0
    while tree.feat[i] >= 0:
        name = tree.item_names[tree.feat[i]]
        if name not in responses:
            raise UnknownItem(f"response for split item {name!r} missing")
        i = tree.left[i] if responses[name] <= tree.cut[i] else tree.right[i]
    return float(tree.value[i])


def unique_items_per_path(tree: RegressionTree) -> int:
    """maxIPP statistic: max distinct split items over root-to-leaf paths."""

    def rec(i, items):
        if tree.feat[i] < 0:
            return len(items)
        nxt = items | {int(tree.feat[i])}
        return max(rec(tree.left[i], nxt), rec(tree.right[i], nxt))

    return rec(0, frozenset())


# ---------------------------------------------------------------------------
# growth

class _GNode:
    __slots__ = ("nid", "feat", "cut", "cut_hi", "left", "right",
                 "value", "n", "R", "depth")

    def __init__(self, nid, value, n, R, depth):
        self.nid = nid
        self.feat = -1
        self.cut = -1
        self.cut_hi = -1
        self.left = None
        self.right = None
        self.value = value
        self.n = n
        self.R = R
        self.depth = depth

    @property
    def is_leaf(self):
        return self.left is None


@dataclass
class SubtreeSequence:
    """Nested subtrees T_0 (root only) .. T_S (full), weakest-link ordered.

    Stored compactly as the full grown tree plus a collapse rank per
    internal node: node t is internal in subtree i iff rank[t] > S - i.
    """

    root: _GNode
    nodes: list  # all _GNode in preorder
    collapse_rank: dict  # nid -> rank in 1..S (1 = first collapsed)
    item_names: tuple
    constraint: Constraint
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.collapse_rank) + 1

    @property
    def S(self):
        return len(self.collapse_rank)

    def _is_internal_at(self, node, i):
        return (not node.is_leaf) and self.collapse_rank[node.nid] > self.S - i

    def tree_at(self, i) -> RegressionTree:
        if not 0 <= i <= self.S:
            raise IndexError(i)
        feat, cut, cut_hi, left, right, value = [], [], [], [], [], []

        def rec(node):
            idx = len(feat)
            internal = self._is_internal_at(node, i)
            feat.append(node.feat if internal else -1)
            cut.append(node.cut if internal else -1)
            cut_hi.append(node.cut_hi if internal else -1)
            left.append(-1)
            right.append(-1)
            value.append(float(node.value))
            if internal:
                left[idx] = rec(node.left)
                right[idx] = rec(node.right)
            return idx

        rec(self.root)
        return RegressionTree(
            feat=np.asarray(feat, dtype=np.int64),
            cut=np.asarray(cut, dtype=np.int64),
            cut_hi=np.asarray(cut_hi, dtype=np.int64),
            left=np.asarray(left, dtype=np.int64),
            right=np.asarray(right, dtype=np.int64),
            value=np.asarray(value, dtype=np.float64),
            item_names=self.item_names,
            constraint=self.constraint,
            metadata=dict(self.metadata, subtree_index=i),
        )

    def holdout_rmse_path(self, X, targets):
        """Holdout RMSE of every subtree in one pass over routed paths."""
        X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.int8)
        y = np.asarray(targets, dtype=np.float64)
        n = X.shape[0]
        S = self.S
        # route each row through the full tree; prediction under subtree i is
        # the value at the first path node with rank <= S - i
        sse = np.zeros(S + 1)
        for row in range(n):
            node = self.root
            path = []
            while not node.is_leaf:
                path.append(node)
                node = node.left if X[row, node.feat] <= node.cut else node.right
            # subtree index ranges where each path node is the prediction
            prev_i = 0
            t = y[row]
            for nd in path:
                # nd is a leaf for subtree i while rank <= S - i, i.e.
                # i <= S - rank; it is the predictor for i in [prev_i, S-rank]
                hi = S - self.collapse_rank[nd.nid]
                if hi >= prev_i:
                    err = (nd.value - t) ** 2
                    sse[prev_i : hi + 1] += err
                    prev_i = hi + 1
            if prev_i <= S:
                err = (node.value - t) ** 2
                sse[prev_i:] += err
        return np.sqrt(sse / n)


def grow(
    X,
    targets,
    constraint: Constraint,
    min_node: int = 25,
    seed: int = 0,
    item_names=None,
) -> SubtreeSequence:
    """Grow greedily under the constraint and return the nested sequence."""
    X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.int8)
    y = np.asarray(targets, dtype=np.float64)
    n, p = X.shape
    if n < max(2, 2 * min_node) or n != len(y):
        raise InsufficientData(f"need >= {max(2, 2 * min_node)} rows, got {n}")
    if y.min() < 0.0 or y.max() > 1.0:
        raise InvalidConfig("targets must lie in [0, 1]")
    if item_names is None:
        item_names = tuple(f"x{j}" for j in range(p))
    n_codes = int(X.max()) + 1
    # safety cap against pathological re-splitting under maxipp
    if constraint.kind == "maxipp":
        depth_cap = 2 * constraint.value * n_codes
    elif constraint.kind == "maxdepth":
        depth_cap = constraint.value
    else:
        depth_cap = 2 * p * n_codes

    nodes = []
    counter = [0]

    def make_node(rows, depth):
        s = y[rows].sum()
        ss = (y[rows] ** 2).sum()
        node = _GNode(counter[0], s / len(rows), len(rows),
                      max(ss - s * s / len(rows), 0.0), depth)
        counter[0] += 1
        nodes.append(node)
        return node

    root = make_node(np.arange(n), 0)
    stack = [(root, np.arange(n), frozenset())]
    while stack:
        node, rows, path_items = stack.pop()
        if node.depth >= depth_cap or len(rows) < 2 * min_node:
            continue
        if constraint.kind == "maxipp" and len(path_items) >= constraint.value:
            allowed = np.zeros(p, dtype=np.bool_)
            for j in path_items:
                allowed[j] = True
        else:
            allowed = np.ones(p, dtype=np.bool_)
        j, c, red = split_scan(X, y, rows.astype(np.int64), allowed, n_codes, min_node)
        # zero-reduction splits stop growth; the epsilon absorbs the rounding
        # noise of the sum-of-squares identity on constant nodes
        if j < 0 or red <= 1e-12 * len(rows):
            continue
        codes = X[rows, j]
        mask = codes <= c
        above = codes[~mask]
        node.feat = int(j)
        node.cut = int(c)
        node.cut_hi = int(above.min())
        rows_l, rows_r = rows[mask], rows[~mask]
        node.left = make_node(rows_l, node.depth + 1)
        node.right = make_node(rows_r, node.depth + 1)
        nxt = path_items | {int(j)}
        stack.append((node.right, rows_r, nxt))
        stack.append((node.left, rows_l, nxt))

    collapse_rank = _weakest_link_ranks(root)
    meta = {
        "seed": seed,
        "min_node": min_node,
        "n": n,
        "training_hash": hashlib.sha256(X.tobytes() + y.tobytes()).hexdigest()[:16],
    }
    return SubtreeSequence(
        root=root, nodes=nodes, collapse_rank=collapse_rank,
        item_names=tuple(item_names), constraint=constraint, metadata=meta,
    )


def _weakest_link_ranks(root):
    """Collapse order of internal nodes, weakest link (min g) first.

    g(t) = (R(t) - R(subtree under t)) / (leaves(t) - 1), recomputed for
    ancestors after each collapse. Ties break to the lowest node id.
    """
    # per-node current subtree aggregates
    parent = {}
    sub_R = {}
    sub_leaves = {}
    collapsed = set()

    def init(nd, par):
        parent[nd.nid] = par
        if nd.is_leaf:
            sub_R[nd.nid] = nd.R
            sub_leaves[nd.nid] = 1
            return
        init(nd.left, nd)
        init(nd.right, nd)
        sub_R[nd.nid] = sub_R[nd.left.nid] + sub_R[nd.right.nid]
        sub_leaves[nd.nid] = sub_leaves[nd.left.nid] + sub_leaves[nd.right.nid]

    init(root, None)

    def g_of(nd):
        denom = sub_leaves[nd.nid] - 1
        return (nd.R - sub_R[nd.nid]) / denom if denom > 0 else np.inf

    def live_internal(nd):
        return (not nd.is_leaf) and nd.nid not in collapsed

    heap = []
    version = {}

    def push(nd):
        version[nd.nid] = version.get(nd.nid, 0) + 1
        heapq.heappush(heap, (g_of(nd), nd.nid, version[nd.nid], nd))

    def walk(nd):
        if live_internal(nd):
            push(nd)
            walk(nd.left)
            walk(nd.right)

    walk(root)

    ranks = {}
    rank = 0
    while heap:
        g, nid, ver, nd = heapq.heappop(heap)
        if nid in collapsed or ver != version.get(nid):
            continue
        # only collapse nodes whose children are currently collapsed/leaves
        if (not nd.left.is_leaf and nd.left.nid not in collapsed) or (
            not nd.right.is_leaf and nd.right.nid not in collapsed
        ):
            # g for a node with live internal children is still valid for
            # weakest-link (collapsing an internal node removes its whole
            # subtree); mark the subtree collapsed bottom-up for ranking.
            stackn = [nd]
            order = []
            while stackn:
                cur = stackn.pop()
                if cur.is_leaf or cur.nid in collapsed:
                    continue
                order.append(cur)
                stackn.append(cur.left)
                stackn.append(cur.right)
            for cur in reversed(order):
                rank += 1
                ranks[cur.nid] = rank
                collapsed.add(cur.nid)
        else:
            rank += 1
            ranks[nid] = rank
            collapsed.add(nid)
        # update aggregates and g along ancestors
        sub_R[nid] = nd.R
        sub_leaves[nid] = 1
        par = parent[nid]
        while par is not None:
            sub_R[par.nid] = sub_R[par.left.nid] + sub_R[par.right.nid]
            sub_leaves[par.nid] = sub_leaves[par.left.nid] + sub_leaves[par.right.nid]
            if par.nid not in collapsed:
                push(par)
            par = parent[par.nid]
    return ranks


# ---------------------------------------------------------------------------
# pruning

def default_prune_threshold(m: int) -> float:
    """Holdout RMSE-reduction floor: 1e-4 below maxIPP 5, 1e-5 from 5 up."""
    return 1e-4 if m < 5 else 1e-5


def select_by_plateau(rmses, threshold: float, patience: int = 10) -> int:
    """Index of the last subtree whose RMSE reduction met the threshold.

    Walks the sequence root-outward; a step "meets" when the reduction over
    its predecessor exceeds the threshold. After ``patience`` consecutive
    misses the walk stops and the last meeting index is returned.
    """
    last_met = 0
    misses = 0
    for i in range(1, len(rmses)):
        if rmses[i - 1] - rmses[i] > threshold:
            last_met = i
            misses = 0
        else:
            misses += 1
            if misses >= patience:
                break
    return last_met


def prune(
    seq: SubtreeSequence,
    holdout_X,
    holdout_targets,
    threshold: float,
    patience: int = 10,
) -> RegressionTree:
    """Select the plateau-rule subtree against the pruning reservoir."""
    holdout_X = np.atleast_2d(np.asarray(holdout_X))
    if holdout_X.shape[0] == 0 or len(np.asarray(holdout_targets)) == 0:
        raise InsufficientData("empty pruning holdout")
    rmses = seq.holdout_rmse_path(holdout_X, holdout_targets)
    idx = select_by_plateau(rmses, threshold, patience)
    tree = seq.tree_at(idx)
    tree.metadata["holdout_rmse"] = float(rmses[idx])
    tree.metadata["sequence_length"] = len(seq)
    return tree


# ---------------------------------------------------------------------------
# deployment files (schema adaptive-test/v1)

def _raw_cutpoint(item_def, cut, cut_hi):
    codes = item_def.codes
    hi = cut_hi if 0 <= cut_hi < len(codes) else cut + 1
    return (codes[cut] + codes[hi]) / 2.0


def tree_document(tree: RegressionTree, bank: ItemBank, threshold: float) -> dict:
    used = tree.split_item_names()
    defs = {}
    for name in used:
        try:
            defs[name] = bank.item(name)
        except KeyError:
            raise UnknownItem(f"split item {name!r} not present in the item bank")
    nodes = []
    for i in range(tree.n_nodes):
        if tree.feat[i] < 0:
            nodes.append({"id": int(i), "leaf_prob": float(tree.value[i])})
        else:
            name = tree.item_names[tree.feat[i]]
            nodes.append(
                {
                    "id": int(i),
                    "item": name,
                    "cutpoint": _raw_cutpoint(defs[name], int(tree.cut[i]), int(tree.cut_hi[i])),
                    "left": int(tree.left[i]),
                    "right": int(tree.right[i]),
                }
            )
    if tree.constraint.kind == "maxipp":
        maxipp = int(tree.constraint.value)
    else:
        maxipp = unique_items_per_path(tree)
    doc = {
        "schema": "adaptive-test/v1",
        "maxipp": maxipp,
        "threshold": float(threshold),
        "items": [
            {
                "id": it.id,
                "text": it.text,
                "levels": [{"code": c, "label": l} for c, l in it.levels],
            }
            for it in (defs[name] for name in used)
        ],
        "nodes": nodes,
        "provenance": {
            "training_hash": tree.metadata.get("training_hash", ""),
            "seed": tree.metadata.get("seed", 0),
        },
    }
    doc["provenance"]["content_hash"] = hashlib.sha256(
        json.dumps({k: v for k, v in doc.items() if k != "provenance"}, sort_keys=True).encode()
    ).hexdigest()[:16]
    return doc


def export_tree(tree: RegressionTree, bank: ItemBank, threshold: float, path) -> dict:
    doc = tree_document(tree, bank, threshold)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
    return doc


def import_tree(path, bank: ItemBank):
    """Load a deployment file back into (RegressionTree, threshold)."""
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("schema") != "adaptive-test/v1":
        raise SchemaError(f"unsupported schema {doc.get('schema')!r}")
    item_names = tuple(it.id for it in bank.splitting_items)
    col = {name: j for j, name in enumerate(item_names)}
    by_id = {nd["id"]: nd for nd in doc["nodes"]}
    ids = sorted(by_id)
    remap = {nid: i for i, nid in enumerate(ids)}
    n = len(ids)
    feat = np.full(n, -1, dtype=np.int64)
    cut = np.full(n, -1, dtype=np.int64)
    cut_hi = np.full(n, -1, dtype=np.int64)
    left = np.full(n, -1, dtype=np.int64)
    right = np.full(n, -1, dtype=np.int64)
    value = np.zeros(n, dtype=np.float64)
    for nid in ids:
        nd = by_id[nid]
        i = remap[nid]
        if "leaf_prob" in nd:
            value[i] = float(nd["leaf_prob"])
            continue
        name = nd["item"]
        if name not in col:
            raise UnknownItem(f"deployment file references unknown item {name!r}")
        codes = bank.item(name).codes
        b = float(nd["cutpoint"])
        idx_le = [k for k, c in enumerate(codes) if c <= b]
        if not idx_le or len(idx_le) == len(codes):
            raise SchemaError(f"cutpoint {b} outside the level range of {name!r}")
        feat[i] = col[name]
        cut[i] = idx_le[-1]
        cut_hi[i] = idx_le[-1] + 1
        left[i] = remap[nd["left"]]
        right[i] = remap[nd["right"]]
    tree = RegressionTree(
        feat=feat, cut=cut, cut_hi=cut_hi, left=left, right=right, value=value,
        item_names=item_names,
        constraint=Constraint("maxipp", int(doc["maxipp"])) if doc.get("maxipp") else Constraint("none"),
        metadata={"provenance": doc.get("provenance", {})},
    )
    return tree, float(doc["threshold"])
