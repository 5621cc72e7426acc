"""Acceptance gate: one test (and one printed pass/fail line) per criterion.

Exact-arithmetic criteria check printed reference values; statistical ones
run simulations at fixed seeds with stated tolerances.
"""

import warnings

import numpy as np
import pytest
from scipy.special import ndtr

import treescreen as ts
from treescreen.decision import (
    build_full_test,
    build_short_test,
    compare_methods,
    delta_distribution,
    design_tree,
    empirical_sens_spec,
    evaluate_on_holdout,
    expected_utility,
    optimize_threshold,
)
from treescreen.population import PooledRows, SyntheticPopulation
from treescreen.risk import posterior_mean_prob
from treescreen.tree import Constraint, grow, select_by_plateau, unique_items_per_path


def _report(name, ok):
    print(f"{'PASS' if ok else 'FAIL'} [{name}]")
    assert ok, name


def _bank(p, n_levels=4):
    items = tuple(
        ts.ItemDef(f"Q{j}", f"q{j}", tuple((c, str(c)) for c in range(1, n_levels + 1)))
        for j in range(p)
    )
    return ts.ItemBank(items=items)


def _dataset(bank, X, y):
    return ts.Dataset(
        bank=bank,
        responses=X.astype(np.int16),
        outcomes=y.astype(np.uint8),
        conditioning=np.zeros((len(y), 0), dtype=np.int32),
    )


def test_utility_arithmetic():
    # the reference values are printed at three decimals (0.7202 -> 0.720)
    u = expected_utility(0.957, 0.365, 0.6)
    ok = abs(u - 0.7202) < 1e-12 and abs(round(u, 3) - 0.720) < 1e-12
    ok &= abs(expected_utility(1.0, 0.0, 0.6) - 0.600) < 1e-12
    _report("utility arithmetic", ok)


def test_sens_spec_oracle():
    rng = np.random.default_rng(0)
    ok = True
    for _ in range(200):
        n = int(rng.integers(10, 200))
        y = rng.integers(0, 2, n).astype(np.uint8)
        if y.min() == y.max():
            y[0] = 1 - y[0]
        pred = rng.integers(0, 2, n).astype(np.uint8)
        sens, spec = empirical_sens_spec(pred, y)
        # independent brute force over the indicator ratios
        tp = sum(1 for a, b in zip(pred, y) if a == 1 and b == 1)
        tn = sum(1 for a, b in zip(pred, y) if a == 0 and b == 0)
        ok &= abs(sens - tp / y.sum()) < 1e-12
        ok &= abs(spec - tn / (n - y.sum())) < 1e-12
    _report("confusion-table oracle (200 random tables)", ok)


def test_threshold_optimizer_oracle():
    rng = np.random.default_rng(1)
    ok = True
    for _ in range(100):
        M = int(rng.integers(20, 500))
        scores = np.round(rng.random(M), 3)
        labels = (rng.random(M) < scores).astype(np.uint8)
        if labels.min() == labels.max():
            labels[0] = 1 - labels[0]
        w = float(rng.uniform(0.05, 0.95))
        _, util = optimize_threshold(scores, labels, w)
        best = 0.0
        for c in np.arange(0.0, 1.0 + 1e-9, 1e-4):
            pred = (scores >= c).astype(np.uint8)
            s, p = empirical_sens_spec(pred, labels)
            best = max(best, w * s + (1 - w) * p)
        ok &= abs(util - best) < 1e-9
    # algebraic identity: at w = 1/2 the point-wise label cutoff is the base rate
    for rate in (0.05, 0.2, 0.5, 0.8):
        uw = ts.UtilityWeights(0.5, rate)
        ok &= abs(uw.pointwise_threshold - rate) < 1e-12
    _report("threshold optimizer vs dense-grid oracle (100 instances)", ok)


def test_maxipp_constraint_property():
    rng = np.random.default_rng(2)
    ok = True
    for trial in range(100):
        n = int(rng.integers(80, 2000))
        p = int(rng.integers(2, 31))
        n_codes = int(rng.integers(2, 5))
        X = rng.integers(0, n_codes, size=(n, p)).astype(np.int8)
        beta = rng.normal(0, 1, p) * (rng.random(p) < 0.3)
        yv = X @ beta + 0.5 * rng.standard_normal(n)
        yv = (yv - yv.min()) / (yv.max() - yv.min() + 1e-12)
        m = int(rng.integers(1, 7))
        seq = grow(X, yv, Constraint("maxipp", m), min_node=10)
        ok &= unique_items_per_path(seq.tree_at(seq.S)) <= m
        if not ok:
            break
    # vacuous constraint reproduces unconstrained growth node for node
    for seed in range(5):
        r2 = np.random.default_rng(100 + seed)
        X = r2.integers(0, 4, size=(500, 6)).astype(np.int8)
        yv = r2.random(500)
        a = grow(X, yv, Constraint("maxipp", 6), min_node=15)
        b = grow(X, yv, Constraint("none"), min_node=15)
        ok &= a.tree_at(a.S).signature() == b.tree_at(b.S).signature()
    _report("maxIPP constraint (100 random datasets) and CART equivalence", ok)


def test_pruning_rule_oracle():
    def literal_rule(rmses, threshold, patience=10):
        last_met, misses, i = 0, 0, 1
        while i < len(rmses):
            if rmses[i - 1] - rmses[i] > threshold:
                last_met, misses = i, 0
            else:
                misses += 1
                if misses >= patience:
                    return last_met
            i += 1
        return last_met

    rng = np.random.default_rng(3)
    ok = True
    for _ in range(500):
        length = int(rng.integers(1, 40))
        rmses = np.abs(rng.normal(0.3, 0.1, length))
        rmses = np.maximum.accumulate(rmses[::-1])[::-1] - rng.random(length) * 0.01
        thr = float(rng.choice([1e-5, 1e-4, 1e-3, 5e-3]))
        ok &= select_by_plateau(rmses, thr) == literal_rule(rmses, thr)
    ok &= ts.default_prune_threshold(4) == 1e-4
    ok &= ts.default_prune_threshold(5) == 1e-5
    ok &= ts.default_prune_threshold(15) == 1e-5
    _report("pruning plateau rule vs literal simulation", ok)


def test_copula_recovery():
    rng = np.random.default_rng(42)
    p, k, n = 10, 2, 2000
    lam = np.zeros((p, k))
    lam[:, 0] = rng.uniform(0.4, 1.2, p)
    lam[1:, 1] = rng.uniform(-0.8, 0.8, p - 1)
    f = rng.standard_normal((n, k))
    z = f @ lam.T + rng.standard_normal((n, p))
    s = np.sqrt(1 + (lam**2).sum(1))
    u = ndtr(z / s)
    X = np.searchsorted([0.15, 0.4, 0.65, 0.85], u) + 1
    bank = _bank(p, n_levels=5)
    ds = _dataset(bank, X, (rng.random(n) < 0.3).astype(np.uint8))
    post = ts.fit_gcfm(ds, k=2, mcmc=ts.McmcConfig(burn_in=300, draws=200, seed=0))
    true_corr = (lam @ lam.T + np.eye(p)) / np.outer(s, s)
    corr_err = float(np.abs(post.mean_implied_correlation() - true_corr).max())
    ok = corr_err < 0.10
    # marginal KS at N = 10000 for every variable
    samp = ts.sample_predictive(post.draws[100], 10000, seed=7)
    ks_max = 0.0
    for j in range(p):
        for c in range(1, 6):
            d = abs(np.mean(ds.responses[:, j] <= c) - np.mean(samp[:, j] <= c))
            ks_max = max(ks_max, d)
    ok &= ks_max < 0.05
    print(f"  corr err {corr_err:.4f} (<0.10), KS {ks_max:.4f} (<0.05)")
    _report("copula recovery (p=10, k=2, n=2000)", ok)


def test_risk_model_recovery():
    rng = np.random.default_rng(7)
    n, p = 2000, 8
    X = rng.integers(1, 5, size=(n, p))
    truth = ((X[:, 0] >= 3) & (X[:, 1] >= 3)).astype(np.float64)
    bank = _bank(p)
    ds = _dataset(bank, X, truth)  # noiseless labels
    post = ts.fit_risk_model(ds, ts.RiskConfig(num_trees=50, burn_in=300, draws=200, seed=0))
    pm = posterior_mean_prob(post, ds.encoded)
    mae = float(np.abs(pm - truth).mean())
    print(f"  MAE {mae:.4f} (<=0.10)")
    _report("risk model recovery (step-function truth)", mae <= 0.10)


@pytest.mark.slow
def test_end_to_end_study():
    p = 30

    def simulate(n, seed):
        r = np.random.default_rng(seed)
        lam = np.zeros((p, 2))
        lam[:, 0] = r.uniform(0.3, 1.0, p)
        lam[1:, 1] = r.uniform(-0.6, 0.6, p - 1)
        f = r.standard_normal((n, 2))
        z = f @ lam.T + r.standard_normal((n, p))
        s = np.sqrt(1 + (lam**2).sum(1))
        u = ndtr(z / s)
        X = np.searchsorted([0.3, 0.6, 0.85], u) + 1
        prob = 0.08 + 0.28 * (X[:, 0] >= 3) + 0.28 * (X[:, 1] >= 3) + 0.28 * (X[:, 2] >= 3)
        y = (r.random(n) < prob).astype(np.uint8)
        return X, y

    Xtr, ytr = simulate(3000, 1)
    Xte, yte = simulate(2000, 2)
    bank = _bank(p)
    train = _dataset(bank, Xtr, ytr)
    hold = _dataset(bank, Xte, yte)

    copula = ts.fit_gcfm(train, k=2, mcmc=ts.McmcConfig(burn_in=200, draws=200, seed=0))
    risk = ts.fit_risk_model(train, ts.RiskConfig(num_trees=50, burn_in=300, draws=200, seed=1))
    pop = ts.generate_population(copula, risk, bank, N=200, D=200, seed=3)
    reservoir = ts.generate_pruning_reservoir(copula, risk, bank, 20000, seed=4)

    w = 0.5
    full = build_full_test(pop, w)
    hold_full = evaluate_on_holdout(
        full, hold.encoded, yte, w, scores=posterior_mean_prob(risk, hold.encoded)
    )
    medians = {}
    ok = True
    for m in (1, 2, 3, 6):
        tree = design_tree(pop, m, reservoir)
        assert unique_items_per_path(tree) <= m
        short = build_short_test(pop, tree, w)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            sample = delta_distribution(pop, short, full, w, m=m)
        hold_delta = (
            evaluate_on_holdout(short, hold.encoded, yte, w)["utility"]
            - hold_full["utility"]
        )
        q1, med, q3 = np.quantile(sample.draws, [0.25, 0.5, 0.75])
        medians[m] = med
        inside = q1 <= hold_delta <= q3
        ok &= inside
        print(
            f"  m={m}: median {med:+.4f} IQR [{q1:+.4f}, {q3:+.4f}] "
            f"holdout {hold_delta:+.4f} inside={inside}"
        )
    ok_a = abs(medians[3]) < 0.05
    ok_b = medians[1] < medians[3]
    print(f"  (a) |median m=3| = {abs(medians[3]):.4f} (<0.05): {ok_a}")
    print(f"  (b) median m=1 < median m=3: {ok_b}")
    _report("end-to-end simulated study", ok and ok_a and ok_b)


def test_imbalance_failure_mode():
    rng = np.random.default_rng(21)
    N, D, p = 200, 100, 10
    M = N * D
    x = rng.integers(0, 4, size=(M, p)).astype(np.int8)
    prob = np.where(x[:, 0] >= 3, 0.18, 0.006)
    y = (rng.random(M) < prob).astype(np.uint8)
    pop = SyntheticPopulation(
        N=N, D=D,
        pooled=PooledRows(x=x, p=prob.copy(), y=y, e_bar=prob.copy()),
        item_names=tuple(f"Q{j}" for j in range(p)), seed=0,
    )
    base = float(y.mean())
    assert abs(base - 0.05) < 0.01
    rows = {r["criterion"]: r for r in compare_methods(pop, [6], w_values=[0.5])}
    sens_cls = rows["classification-on-y"]["sensitivity"]
    sens_reg = rows["regression+cutoff"]["sensitivity"]
    sens_util = rows["classification-on-utility-labels"]["sensitivity"]
    print(
        f"  base rate {base:.3f}; sens: classification-on-y {sens_cls:.3f} (<=0.2), "
        f"regression+cutoff {sens_reg:.3f} (>=0.5), utility-labels {sens_util:.3f} (>=0.5)"
    )
    ok = sens_cls <= 0.2 and sens_reg >= 0.5 and sens_util >= 0.5
    _report("imbalance failure mode of label-classification trees", ok)
