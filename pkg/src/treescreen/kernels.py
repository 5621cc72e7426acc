"""Numerical inner loops shared by the samplers and the tree grower.

Every kernel exists in two functionally identical versions: a numba
``@njit`` build and a pure-numpy fallback. The fallback is selected by
setting the environment variable ``TREESCREEN_NO_NUMBA=1`` before import
(or automatically when numba is not importable). ``benchmarks/bench_kernels.py``
compares the two paths.
"""

import math
import os

import numpy as np
from scipy.special import ndtr as _np_ndtr
from scipy.special import ndtri as _np_ndtri

USE_NUMBA = os.environ.get("TREESCREEN_NO_NUMBA", "0") not in ("1", "true", "yes")

if USE_NUMBA:
    try:
        from numba import njit, prange
    except ImportError:  # pragma: no cover
        USE_NUMBA = False

_EPS = 1e-300


# ---------------------------------------------------------------------------
# pure-numpy implementations

def _truncnorm_fill_numpy(mean, lo, hi, u):
    """Elementwise truncated-normal draws via inverse-CDF.

    mean, lo, hi, u are same-shape float arrays; lo/hi may be +-inf.
    Each output entry is a N(mean, 1) draw conditioned on (lo, hi],
    generated from the uniform u.
    """
    a = _np_ndtr(lo - mean)
    b = _np_ndtr(hi - mean)
    t = a + u * (b - a)
    t = np.clip(t, 1e-15, 1.0 - 1e-15)
    return mean + _np_ndtri(t)


def _forest_eval_numpy(feat, thresh, left, right, value, roots, trees_per_draw, X):
    """Sum-of-trees output for every (draw, row) pair.

    The forest is flattened across draws: node arrays are global, ``roots``
    lists every tree root in draw order, ``trees_per_draw`` trees per draw.
    Returns an (n_draws, n_rows) float array of summed leaf values.
    """
    n_draws = roots.shape[0] // trees_per_draw
    n = X.shape[0]
    out = np.zeros((n_draws, n), dtype=np.float64)
    for d in range(n_draws):
        for t in range(trees_per_draw):
            root = roots[d * trees_per_draw + t]
            idx = np.full(n, root, dtype=np.int64)
            active = feat[idx] >= 0
            while active.any():
                cur = idx[active]
                go_left = X[active, feat[cur]] <= thresh[cur]
                nxt = np.where(go_left, left[cur], right[cur])
                idx[active] = nxt
                active = feat[idx] >= 0
            out[d] += value[idx]
    return out


def _split_scan_numpy(X, y, rows, allowed, n_codes, min_node):
    """Best SSE-reducing split over (item, cutpoint) for one node.

    X is the full (n, p) int8 code matrix, y the float targets, rows the
    node's row indices. Cutpoints are taken between adjacent codes; the
    returned cut code c means "go left iff code <= c". Ties resolve to the
    lowest item index, then the lowest cut code (strict-improvement scan).
    Returns (best_item, best_cut_code, best_reduction); best_item is -1
    when no admissible split improves the SSE.
    """
    ysub = y[rows]
    n = rows.shape[0]
    tot_sum = ysub.sum()
    best_item = -1
    best_cut = -1
    best_red = 0.0
    base = tot_sum * tot_sum / n
    for j in range(X.shape[1]):
        if not allowed[j]:
            continue
        codes = X[rows, j].astype(np.int64)
        cnt = np.bincount(codes, minlength=n_codes).astype(np.float64)
        s = np.bincount(codes, weights=ysub, minlength=n_codes)
        ccnt = np.cumsum(cnt)
        csum = np.cumsum(s)
        for c in range(n_codes - 1):
            nl = ccnt[c]
            if nl < min_node or n - nl < min_node:
                continue
            sl = csum[c]
            red = sl * sl / nl + (tot_sum - sl) ** 2 / (n - nl) - base
            if red > best_red:
                best_red = red
                best_item = j
                best_cut = c
    return best_item, best_cut, best_red


def _tree_predict_numpy(feat, thresh, left, right, value, X):
    """Leaf value of a single flattened tree for every row of X."""
    n = X.shape[0]
    idx = np.zeros(n, dtype=np.int64)
    active = feat[idx] >= 0
    while active.any():
        cur = idx[active]
        go_left = X[active, feat[cur]] <= thresh[cur]
        idx[active] = np.where(go_left, left[cur], right[cur])
        active = feat[idx] >= 0
    return value[idx]


# ---------------------------------------------------------------------------
# numba implementations

if USE_NUMBA:

    @njit(cache=True)
    def _ndtr(x):
        return 0.5 * math.erfc(-x / math.sqrt(2.0))

    @njit(cache=True)
    def _ndtri(p):
        # Acklam's rational approximation with one Halley refinement.
        if p <= 0.0:
            return -np.inf
        if p >= 1.0:
            return np.inf
        a = (-3.969683028665376e+01, 2.209460984245205e+02,
             -2.759285104469687e+02, 1.383577518672690e+02,
             -3.066479806614716e+01, 2.506628277459239e+00)
        b = (-5.447609879822406e+01, 1.615858368580409e+02,
             -1.556989798598866e+02, 6.680131188771972e+01,
             -1.328068155288572e+01)
        c = (-7.784894002430293e-03, -3.223964580411365e-01,
             -2.400758277161838e+00, -2.549732539343734e+00,
             4.374664141464968e+00, 2.938163982698783e+00)
        d = (7.784695709041462e-03, 3.224671290700398e-01,
             2.445134137142996e+00, 3.754408661907416e+00)
        plow = 0.02425
        if p < plow:
            q = math.sqrt(-2.0 * math.log(p))
            x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / \
                ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
        elif p <= 1.0 - plow:
            q = p - 0.5
            r = q * q
            x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q / \
                (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0)
        else:
            q = math.sqrt(-2.0 * math.log(1.0 - p))
            x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / \
                ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
        e = _ndtr(x) - p
        u = e * math.sqrt(2.0 * math.pi) * math.exp(0.5 * x * x)
        return x - u / (1.0 + 0.5 * x * u)

    @njit(cache=True)
    def _truncnorm_fill_numba(mean, lo, hi, u):
        out = np.empty_like(mean)
        flat_m = mean.ravel()
        flat_lo = lo.ravel()
        flat_hi = hi.ravel()
        flat_u = u.ravel()
        flat_o = out.ravel()
        for i in range(flat_m.shape[0]):
            a = _ndtr(flat_lo[i] - flat_m[i])
            b = _ndtr(flat_hi[i] - flat_m[i])
            t = a + flat_u[i] * (b - a)
            if t < 1e-15:
                t = 1e-15
            elif t > 1.0 - 1e-15:
                t = 1.0 - 1e-15
            flat_o[i] = flat_m[i] + _ndtri(t)
        return out

    @njit(cache=True, parallel=True)
    def _forest_eval_numba(feat, thresh, left, right, value, roots, trees_per_draw, X):
        n_draws = roots.shape[0] // trees_per_draw
        n = X.shape[0]
        out = np.zeros((n_draws, n), dtype=np.float64)
        for d in prange(n_draws):
            for t in range(trees_per_draw):
                root = roots[d * trees_per_draw + t]
                for i in range(n):
                    node = root
                    while feat[node] >= 0:
                        if X[i, feat[node]] <= thresh[node]:
                            node = left[node]
                        else:
                            node = right[node]
                    out[d, i] += value[node]
        return out

    @njit(cache=True)
    def _split_scan_numba(X, y, rows, allowed, n_codes, min_node):
        n = rows.shape[0]
        tot_sum = 0.0
        for i in range(n):
            tot_sum += y[rows[i]]
        base = tot_sum * tot_sum / n
        best_item = -1
        best_cut = -1
        best_red = 0.0
        cnt = np.empty(n_codes, dtype=np.float64)
        s = np.empty(n_codes, dtype=np.float64)
        for j in range(X.shape[1]):
            if not allowed[j]:
                continue
            for c in range(n_codes):
                cnt[c] = 0.0
                s[c] = 0.0
            for i in range(n):
                code = X[rows[i], j]
                cnt[code] += 1.0
                s[code] += y[rows[i]]
            nl = 0.0
            sl = 0.0
            for c in range(n_codes - 1):
                nl += cnt[c]
                sl += s[c]
                if nl < min_node or n - nl < min_node:
                    continue
                red = sl * sl / nl + (tot_sum - sl) ** 2 / (n - nl) - base
                if red > best_red:
                    best_red = red
                    best_item = j
                    best_cut = c
        return best_item, best_cut, best_red

    @njit(cache=True)
    def _tree_predict_numba(feat, thresh, left, right, value, X):
        n = X.shape[0]
        out = np.empty(n, dtype=np.float64)
        for i in range(n):
            node = 0
            while feat[node] >= 0:
                if X[i, feat[node]] <= thresh[node]:
                    node = left[node]
                else:
                    node = right[node]
            out[i] = value[node]
        return out

    truncnorm_fill = _truncnorm_fill_numba
    forest_eval = _forest_eval_numba
    split_scan = _split_scan_numba
    tree_predict = _tree_predict_numba
else:
    truncnorm_fill = _truncnorm_fill_numpy
    forest_eval = _forest_eval_numpy
    split_scan = _split_scan_numpy
    tree_predict = _tree_predict_numpy
