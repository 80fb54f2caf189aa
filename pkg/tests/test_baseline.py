import warnings

import numpy as np
import pytest
from scipy import optimize
from sklearn.base import clone

from polyads.baseline import PINNED_FE, PPMLRegressor
from polyads.exceptions import InvalidParameterError, ResourceGuardError
from polyads.graph import SparseCountGraph
from polyads.simulate import ThreeWayDesign, generate_three_way


def test_row_effects_recover_row_means():
    y = np.array([[1, 2, 3, 6], [4, 4, 0, 0], [1, 0, 0, 0]])
    X = np.zeros(y.shape + (0,))
    m = PPMLRegressor(structure=[{0}]).fit(X, y)
    assert m.converged_
    np.testing.assert_allclose(m.predict(X)[:, 0], y.mean(axis=1), rtol=1e-10)
    np.testing.assert_allclose(m.intercept_ + m.fe_values_[frozenset({0})], np.log(y.mean(axis=1)), rtol=1e-10)


def test_beta_only_matches_scalar_root(rng):
    X = rng.normal(size=(6, 7, 1))
    y = rng.poisson(np.exp(0.2 + 0.6 * X[..., 0]))
    m = PPMLRegressor(structure=[]).fit(X, y)
    x, yy = X.ravel(), y.ravel().astype(float)

    def profile_score(b):
        lam = np.exp(b * x) * yy.sum() / np.exp(b * x).sum()
        return np.sum((yy - lam) * x)

    assert m.coef_[0] == pytest.approx(optimize.brentq(profile_score, -5, 5, xtol=1e-14), abs=1e-9)


def test_binary_covariate_gives_log_rate_ratio(rng):
    x = (rng.random((8, 9)) < 0.4).astype(float)
    y = rng.poisson(np.where(x > 0, 3.0, 1.2))
    m = PPMLRegressor(structure=[]).fit(x[..., None], y)
    ratio = y[x > 0].mean() / y[x == 0].mean()
    assert m.coef_[0] == pytest.approx(np.log(ratio), abs=1e-9)


@pytest.fixture(scope="module")
def three_way():
    d = ThreeWayDesign(15, 12, 4, intercept_c=-0.5, seed=3)
    data = generate_three_way(d)
    y = data.graph.to_dense()
    X = data.covariates.array
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        m = PPMLRegressor().fit(X, y)
    return m, X, y


def test_score_equations_at_convergence(three_way):
    m, X, y = three_way
    assert m.converged_
    lam = m.predict(X)
    resid = y - lam
    assert abs(np.sum(resid * X[..., 0])) < 1e-5 * lam.sum()
    for g in [(0, 1), (0, 2), (1, 2)]:
        other = tuple(set(range(3)) - set(g))
        cell_y = y.sum(axis=other)
        cell = resid.sum(axis=other)[cell_y > 0]
        assert np.max(np.abs(cell)) < 1e-6 * max(1.0, lam.sum())


def test_deviance_is_non_increasing(three_way):
    m, _, _ = three_way
    tr = np.array(m.deviance_trace_)
    assert np.all(np.diff(tr) <= 1e-8 * tr[0])
    assert m.deviance_ == tr[-1]


def test_fitted_means_positive_and_score(three_way):
    m, X, y = three_way
    assert np.all(m.predict(X) > 0)
    assert m.score(X, y) <= 0


def test_zero_cells_are_pinned_with_warning(rng):
    y = rng.poisson(2.0, size=(5, 6, 3))
    y[2, :, :] = 0
    X = rng.normal(size=y.shape + (1,))
    with pytest.warns(RuntimeWarning, match="pinned"):
        m = PPMLRegressor().fit(X, y)
    assert np.all(m.fe_values_[frozenset({0, 1})].reshape(5, 6)[2] == PINNED_FE)
    assert np.all(m.predict(X)[2] < 1e-10)


def test_non_convergence_is_reported(three_way):
    _, X, y = three_way
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        m = PPMLRegressor(max_iter=1).fit(X, y)
    assert not m.converged_ and m.n_iter_ == 1


def test_parameter_checks():
    with pytest.raises(InvalidParameterError):
        PPMLRegressor(max_iter=0).fit(np.zeros((2, 2, 1)), np.ones((2, 2)))
    huge = SparseCountGraph.from_dict((4000, 4000), {(0, 0): 1})
    with pytest.raises(ResourceGuardError):
        PPMLRegressor().fit(np.zeros((1, 1, 1)), huge)


def test_sklearn_protocol():
    m = PPMLRegressor(max_iter=5, tol=1e-6)
    assert m.get_params() == {"structure": None, "max_iter": 5, "tol": 1e-6}
    c = clone(m)
    assert c.get_params() == m.get_params() and c is not m
