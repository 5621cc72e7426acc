import numpy as np
import pytest
from scipy.special import ndtr

from treescreen import (
    RiskConfig,
    RiskPosterior,
    TreeEnsembleDraw,
    fit_risk_model,
    posterior_mean_prob,
    predict_prob,
)
from treescreen.errors import InsufficientData, InvalidConfig, SingleClassOutcome
from .conftest import make_bank, make_dataset

FAST = RiskConfig(num_trees=20, burn_in=80, draws=40, seed=0)


def _stump_draw(value=0.0, offset=0.0):
    return TreeEnsembleDraw(
        feat=np.array([-1], dtype=np.int64),
        thresh=np.array([0.0]),
        left=np.array([-1], dtype=np.int64),
        right=np.array([-1], dtype=np.int64),
        value=np.array([value]),
        roots=np.array([0], dtype=np.int64),
        item_names=("Q0",),
        offset=offset,
    )


class TestHandBuiltDraws:
    def test_zero_leaves_score_half(self):
        draw = _stump_draw(0.0)
        x = np.zeros((3, 1), dtype=np.int8)
        assert np.allclose(predict_prob(draw, x), 0.5)

    def test_offset_shifts_probability(self):
        x = np.zeros((1, 1), dtype=np.int8)
        assert predict_prob(_stump_draw(0.0, offset=-1.0), x)[0] == pytest.approx(
            float(ndtr(-1.0))
        )

    def test_probabilities_clipped_inside_unit_interval(self):
        x = np.zeros((1, 1), dtype=np.int8)
        p = predict_prob(_stump_draw(-50.0), x)[0]
        assert 0.0 < p < 1.0

    def test_split_routing(self):
        draw = TreeEnsembleDraw(
            feat=np.array([0, -1, -1], dtype=np.int64),
            thresh=np.array([1.0, 0.0, 0.0]),
            left=np.array([1, -1, -1], dtype=np.int64),
            right=np.array([2, -1, -1], dtype=np.int64),
            value=np.array([0.0, -1.0, 1.0]),
            roots=np.array([0], dtype=np.int64),
            item_names=("Q0",),
        )
        x = np.array([[0], [1], [2]], dtype=np.int8)
        p = predict_prob(draw, x)
        assert p[0] == p[1] == pytest.approx(float(ndtr(-1.0)))
        assert p[2] == pytest.approx(float(ndtr(1.0)))


class TestFitValidation:
    def test_rejects_bad_config(self, dataset):
        with pytest.raises(InvalidConfig):
            fit_risk_model(dataset, RiskConfig(num_trees=0))
        with pytest.raises(InvalidConfig):
            fit_risk_model(dataset, RiskConfig(draws=0))

    def test_rejects_tiny_data(self, bank):
        ds = make_dataset(bank, n=30)
        with pytest.raises(InsufficientData):
            fit_risk_model(ds, FAST)

    def test_rejects_single_class(self, bank):
        ds = make_dataset(bank, n=100)
        ds.outcomes[:] = 0
        with pytest.raises(SingleClassOutcome):
            fit_risk_model(ds, FAST)


@pytest.fixture(scope="module")
def fitted():
    bank = make_bank(p=4)
    ds = make_dataset(bank, n=500, seed=2, base=0.1, bump=0.6)
    return fit_risk_model(ds, FAST), ds


class TestFit:
    def test_draw_count_and_names(self, fitted):
        post, ds = fitted
        assert post.D == 40
        assert post.draws[0].item_names == ds.item_ids

    def test_posterior_mean_tracks_signal(self, fitted):
        post, ds = fitted
        pm = posterior_mean_prob(post, ds.encoded)
        codes = np.asarray(ds.bank.splitting_items[0].codes)
        hi = ds.responses[:, 0] >= codes[len(codes) // 2]
        assert pm[hi].mean() - pm[~hi].mean() > 0.3

    def test_prob_matrix_matches_per_draw_predictions(self, fitted):
        post, ds = fitted
        X = ds.encoded[:20]
        mat = post.prob_matrix(X)
        assert mat.shape == (post.D, 20)
        for j in (0, 17, 39):
            assert np.allclose(mat[j], predict_prob(post.draws[j], X))
        assert np.allclose(posterior_mean_prob(post, X), mat.mean(axis=0))

    def test_deterministic_given_seed(self, fitted):
        _, ds = fitted
        cfg = RiskConfig(num_trees=5, burn_in=20, draws=5, seed=4)
        a = fit_risk_model(ds, cfg)
        b = fit_risk_model(ds, cfg)
        assert np.allclose(
            posterior_mean_prob(a, ds.encoded[:10]),
            posterior_mean_prob(b, ds.encoded[:10]),
        )

    def test_shrinks_to_base_rate_without_signal(self):
        bank = make_bank(p=3)
        rng = np.random.default_rng(6)
        ds = make_dataset(bank, n=400, seed=6, base=0.3, bump=0.0)
        ds.outcomes[:] = (rng.random(400) < 0.3).astype(np.uint8)
        post = fit_risk_model(ds, FAST)
        pm = posterior_mean_prob(post, ds.encoded)
        assert abs(pm.mean() - ds.outcomes.mean()) < 0.05
        assert pm.std() < 0.1

    def test_accepts_array_pair(self):
        rng = np.random.default_rng(0)
        X = rng.integers(0, 3, size=(200, 3)).astype(np.int8)
        y = (X[:, 0] > 0).astype(np.uint8)
        post = fit_risk_model((X, y), RiskConfig(num_trees=10, burn_in=40, draws=10, seed=1))
        assert isinstance(post, RiskPosterior)
        pm = posterior_mean_prob(post, X)
        assert pm[X[:, 0] > 0].mean() > pm[X[:, 0] == 0].mean()
