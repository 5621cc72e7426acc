import numpy as np
import pytest

from treescreen import (
    McmcConfig,
    RiskConfig,
    fit_gcfm,
    fit_risk_model,
    generate_population,
    generate_pruning_reservoir,
    posterior_mean_prob,
    sample_predictive,
)
from treescreen.archive import (
    load_copula,
    load_population,
    load_risk,
    save_copula,
    save_population,
    save_risk,
)
from treescreen.errors import SchemaError
from .conftest import make_bank, make_dataset


@pytest.fixture(scope="module")
def fitted():
    bank = make_bank(p=3, cond=("Age",))
    ds = make_dataset(bank, n=200, seed=1)
    copula = fit_gcfm(ds, k=1, mcmc=McmcConfig(burn_in=40, draws=15, seed=0))
    risk = fit_risk_model(ds, RiskConfig(num_trees=8, burn_in=40, draws=15, seed=1))
    return bank, ds, copula, risk


def test_copula_roundtrip(tmp_path, fitted):
    bank, ds, copula, _ = fitted
    path = tmp_path / "c.npz"
    h = save_copula(copula, path)
    loaded = load_copula(path)
    assert loaded.D == copula.D
    assert loaded.draws[0].variable_names == copula.draws[0].variable_names
    assert np.array_equal(loaded.draws[5].loadings, copula.draws[5].loadings)
    a = sample_predictive(copula.draws[3], 50, seed=2)
    b = sample_predictive(loaded.draws[3], 50, seed=2)
    assert np.array_equal(a, b)
    assert len(h) == 16


def test_risk_roundtrip(tmp_path, fitted):
    bank, ds, _, risk = fitted
    path = tmp_path / "r.npz"
    save_risk(risk, path)
    loaded = load_risk(path)
    assert loaded.D == risk.D
    X = ds.encoded[:30]
    assert np.allclose(posterior_mean_prob(loaded, X), posterior_mean_prob(risk, X))
    assert np.allclose(loaded.prob_matrix(X), risk.prob_matrix(X))


def test_population_roundtrip(tmp_path, fitted):
    bank, ds, copula, risk = fitted
    pop = generate_population(copula, risk, bank, N=20, D=10, seed=4)
    pop.pruning_reservoir = generate_pruning_reservoir(copula, risk, bank, 150, seed=5)
    path = tmp_path / "p.npz"
    save_population(pop, path)
    loaded = load_population(path)
    assert (loaded.N, loaded.D, loaded.seed) == (20, 10, 4)
    assert np.array_equal(loaded.pooled.x, pop.pooled.x)
    assert np.allclose(loaded.pooled.e_bar, pop.pooled.e_bar)
    assert np.array_equal(loaded.pruning_reservoir.x, pop.pruning_reservoir.x)
    assert loaded.item_names == pop.item_names


def test_content_hash_stable_across_saves(tmp_path, fitted):
    _, _, copula, _ = fitted
    h1 = save_copula(copula, tmp_path / "a.npz")
    h2 = save_copula(copula, tmp_path / "b.npz")
    assert h1 == h2


def test_kind_mismatch_rejected(tmp_path, fitted):
    _, _, copula, _ = fitted
    path = tmp_path / "c.npz"
    save_copula(copula, path)
    with pytest.raises(SchemaError):
        load_risk(path)
