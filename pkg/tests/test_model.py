import numpy as np
import pytest
from sklearn.base import clone

from conftest import random_instance
from polyads import oracle
from polyads.exceptions import (
    CollinearityError,
    DimensionMismatchError,
    InvalidParameterError,
    MissingCovariateError,
    NegativeCountError,
)
from polyads.covariates import TableCovariates
from polyads.model import PolyadPoissonRegressor
from polyads.simulate import ThreeWayDesign, calibrated_design, generate_three_way


@pytest.fixture(scope="module")
def simulated():
    d = calibrated_design(ThreeWayDesign(20, 20, 5, seed=11), 0.15)
    return generate_three_way(d)


@pytest.fixture(scope="module")
def fitted(simulated):
    return PolyadPoissonRegressor().fit(simulated.covariates, simulated.graph)


def test_fit_attributes(fitted):
    m = fitted
    assert m.converged_ and m.n_iter_ >= 1
    assert m.coef_.shape == (1,)
    assert m.n_canonical_ == len(m.records_)
    assert m.n_active_ == 2**3 * m.n_canonical_
    assert set(m.timings_) == {"enumeration", "newton", "variance"}
    for key in ("inner_loop", "n_edges", "score_entries", "pair_entries"):
        assert key in m.stats_
    assert m.covariance_.shape == m.covariance_edge_.shape == (1, 1)


def test_estimate_is_close_to_truth(fitted):
    se = fitted.standard_errors()[0]
    assert abs(fitted.coef_[0] - 1.0) < 4 * se


def test_conf_int_kinds(fitted):
    pair = fitted.conf_int()
    edge = fitted.conf_int(kind="edge")
    for ci, kind in ((pair, "pair"), (edge, "edge")):
        se = fitted.standard_errors(kind)[0]
        np.testing.assert_allclose(ci[0], fitted.coef_[0] + np.array([-1.96, 1.96]) * se)
    assert fitted.conf_int(level=0.5)[0, 1] - fitted.conf_int(level=0.5)[0, 0] < pair[0, 1] - pair[0, 0]
    with pytest.raises(InvalidParameterError):
        fitted.conf_int(kind="robust")


def test_dense_array_input_matches_provider(simulated, fitted):
    y = simulated.graph.to_dense()
    X = simulated.covariates.array[..., 0]
    m = PolyadPoissonRegressor(compute_variance=False).fit(X, y)
    np.testing.assert_allclose(m.coef_, fitted.coef_, rtol=1e-12)
    assert m.covariance_ is None


def test_decision_function(simulated, fitted):
    out = fitted.decision_function(simulated.covariates)
    np.testing.assert_allclose(out, simulated.covariates.array[..., 0] * fitted.coef_[0])


def test_small_instance_loss_matches_oracle(rng):
    while True:
        g, cov = random_instance(rng, D=2, max_dim=3, p=1)
        m = PolyadPoissonRegressor(compute_variance=False)
        try:
            m.fit(cov, g)
        except (InvalidParameterError, CollinearityError):
            continue
        break
    y = g.to_dict()
    ref = sum(oracle.brute_loss(y, xi.top, xi.bottom, cov, m.coef_) for xi in m.records_.polyads())
    assert m.loss_ == pytest.approx(2**g.D * ref, rel=1e-10)


def test_sklearn_protocol():
    m = PolyadPoissonRegressor(max_iter=7, truncation_L=40)
    params = m.get_params()
    assert params["max_iter"] == 7 and params["truncation_L"] == 40
    c = clone(m)
    assert c.get_params() == params
    with pytest.raises(Exception):
        m.conf_int()


def test_input_errors():
    m = PolyadPoissonRegressor()
    with pytest.raises(NegativeCountError):
        m.fit(np.zeros((2, 2, 1)), np.array([[1, -1], [0, 2]]))
    with pytest.raises(DimensionMismatchError):
        m.fit(np.zeros((3, 2, 1)), np.ones((2, 2)))
    with pytest.raises(InvalidParameterError):
        m.fit(np.zeros((2, 2, 1)), {(0, 0): 1})
    with pytest.raises(InvalidParameterError):
        m.fit(np.zeros((2, 2, 1)), np.array([[1, 0], [0, 0]]))
    with pytest.raises(InvalidParameterError):
        m.fit(np.full((2, 2, 1), np.nan), np.ones((2, 2)))


def test_constant_feature_is_collinear():
    y = np.array([[3, 1, 2], [1, 4, 1], [2, 2, 5]])
    with pytest.raises(CollinearityError):
        PolyadPoissonRegressor().fit(np.ones((3, 3, 1)), y)


def test_missing_covariates_reported():
    y = np.array([[3, 1], [1, 4]])
    cov = TableCovariates((2, 2), np.array([[0, 0], [1, 1]]), np.array([[0.1], [0.2]]))
    with pytest.raises(MissingCovariateError) as err:
        PolyadPoissonRegressor().fit(cov, y)
    assert sorted(map(tuple, np.asarray(err.value.missing).tolist())) == [(0, 1), (1, 0)]
