import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import optimize

from polyads.exceptions import InvalidParameterError
from polyads.meta import dersimonian_laird_tau2, meta_analysis, paule_mandel_tau2


def _q(tau2, beta, var):
    w = 1.0 / (var + tau2)
    mean = np.sum(w * beta) / np.sum(w)
    return np.sum(w * (beta - mean) ** 2)


def _fixed_point_tau2(beta, var, iters=100_000):
    # multiplicative iteration tau2 <- tau2 * Q(tau2) / (k - 1), started above the root
    k = beta.size
    tau2 = np.var(beta) * 10 + 1.0
    for _ in range(iters):
        new = tau2 * _q(tau2, beta, var) / (k - 1)
        if abs(new - tau2) < 1e-15 * max(1.0, tau2):
            break
        tau2 = new
    return tau2


def _pooled(beta, var, tau2):
    w = 1.0 / (var + tau2)
    return np.sum(w * beta) / np.sum(w)


HETERO = [
    (np.array([0.1, 0.9, 1.7]), np.array([0.04, 0.09, 0.05])),
    (np.array([1.2, 0.8, 1.1, 0.3, 2.0]), np.array([0.1, 0.2, 0.05, 0.3, 0.15])),
    (np.array([-0.5, 0.4, 0.45, 1.8, 0.9, 1.1]), np.array([0.02, 0.5, 0.1, 0.07, 0.03, 0.2])),
]


@pytest.mark.parametrize("beta,var", HETERO)
def test_paule_mandel_matches_independent_fixed_point(beta, var):
    res = meta_analysis(list(zip(beta, var)))
    tau_fp = _fixed_point_tau2(beta, var)
    tau_root = optimize.brentq(lambda t: _q(t, beta, var) - (beta.size - 1), 0.0, 100.0, xtol=1e-15)
    assert res.converged and res.method == "paule-mandel"
    assert res.tau2 == pytest.approx(tau_fp, rel=1e-8)
    assert res.tau2 == pytest.approx(tau_root, rel=1e-8)
    assert res.pooled == pytest.approx(_pooled(beta, var, tau_fp), rel=1e-8, abs=1e-8)


@pytest.mark.parametrize("beta,var", HETERO)
def test_agrees_with_statsmodels(beta, var):
    from statsmodels.stats.meta_analysis import combine_effects
    ref = combine_effects(beta, var, method_re="pm")
    res = meta_analysis(list(zip(beta, var)))
    assert res.tau2 == pytest.approx(ref.tau2, rel=1e-6)
    assert res.pooled == pytest.approx(ref.mean_effect_re, rel=1e-6)


def test_identical_studies_have_exactly_zero_heterogeneity():
    res = meta_analysis([(0.7, 0.2)] * 5)
    assert res.tau2 == 0.0
    assert res.pooled == pytest.approx(0.7, rel=1e-15)
    assert res.se == pytest.approx(np.sqrt(0.2 / 5))


def test_symmetric_pair():
    res = meta_analysis([(0.0, 1.0), (2.0, 1.0)])
    assert res.pooled == pytest.approx(1.0, abs=1e-14)
    assert res.ci_95 == pytest.approx((1.0 - 1.96 * res.se, 1.0 + 1.96 * res.se))


def test_homogeneous_studies_clamp_to_zero():
    beta = np.array([1.0, 1.01, 0.99, 1.0])
    tau2, ok = paule_mandel_tau2(beta, np.full(4, 1.0))
    assert ok and tau2 == 0.0


def test_fallback_to_dersimonian_laird():
    beta, var = HETERO[1]
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = meta_analysis(list(zip(beta, var)), max_iter=1)
    assert not res.converged and res.method == "dersimonian-laird"
    assert res.tau2 == pytest.approx(dersimonian_laird_tau2(beta, var))
    assert any("DerSimonian" in str(w.message) for w in caught)


@pytest.mark.parametrize("bad", [[(1.0, 0.5)], [(1.0, 0.5), (2.0, 0.0)], [(1.0, np.nan), (2.0, 1.0)], [1, 2, 3]])
def test_invalid_inputs(bad):
    with pytest.raises(InvalidParameterError):
        meta_analysis(bad)


@given(st.lists(st.tuples(st.floats(-5, 5), st.floats(0.01, 3)), min_size=2, max_size=8))
def test_estimating_equation_holds(studies):
    beta, var = np.array(studies).T
    res = meta_analysis(studies)
    q = _q(res.tau2, beta, var)
    if res.tau2 > 0:
        assert q == pytest.approx(beta.size - 1, rel=1e-6)
    else:
        assert q <= beta.size - 1 + 1e-9
    assert min(beta) - 1e-12 <= res.pooled <= max(beta) + 1e-12
