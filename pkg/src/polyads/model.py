"""Scikit-learn style front end for the polyad estimator."""

from __future__ import annotations

import time

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_count_graph, check_covariates
from .enumeration import DEFAULT_MAX_RECORDS, build_incidence, enumerate_active
from .estimator import FitConfig, newton_fit
from .exceptions import InvalidParameterError
from .variance import DEFAULT_MAX_PAIR_ENTRIES, ci, compute_covariance

__all__ = ["PolyadPoissonRegressor"]


class PolyadPoissonRegressor(BaseEstimator):
    """Conditional estimator of ``beta`` in a multi-way Poisson model with maximal fixed effects.

    ``fit`` takes covariates ``X`` (a :class:`CovariateProvider`, or a dense
    array of shape ``dims`` or ``dims + (p,)``) and counts ``y`` (a
    :class:`SparseCountGraph`, dense array, or ``{index: count}`` mapping
    together with ``dims``).  Fixed effects never enter: the loss only
    depends on active polyads.

    Attributes
    ----------
    coef_ : ndarray (p,)
    covariance_ : pair-sum sandwich (``None`` if its cost guard tripped)
    covariance_edge_ : edge-score sandwich
    hessian_, omega_, omega_prime_ : ingredients of the sandwiches
    n_active_ : number of active polyads counting permutations
    n_canonical_ : number of canonical records
    n_iter_, converged_, iterations_ : Newton trace
    stats_ : loop counters, timings_ : seconds per phase
    """

    def __init__(self, max_iter=50, tol=1e-8, truncation_L=100, ridge=0.0, damped=False,
                 enumeration="sorted", n_jobs=1, compute_variance=True,
                 max_records=DEFAULT_MAX_RECORDS, max_pair_entries=DEFAULT_MAX_PAIR_ENTRIES):
        self.max_iter = max_iter
        self.tol = tol
        self.truncation_L = truncation_L
        self.ridge = ridge
        self.damped = damped
        self.enumeration = enumeration
        self.n_jobs = n_jobs
        self.compute_variance = compute_variance
        self.max_records = max_records
        self.max_pair_entries = max_pair_entries

    def _config(self):
        return FitConfig(max_iterations=self.max_iter, gradient_tolerance=self.tol,
                         truncation_L=self.truncation_L, ridge_epsilon=self.ridge, damped=self.damped)

    def fit(self, X, y, dims=None, beta0=None):
        config = self._config()
        graph = check_count_graph(y, dims)
        cov = check_covariates(X, graph.dims)
        timings = {}
        t0 = time.perf_counter()
        records = enumerate_active(graph, cov, method=self.enumeration, max_records=self.max_records,
                                   n_jobs=self.n_jobs)
        timings["enumeration"] = time.perf_counter() - t0
        if len(records) == 0:
            raise InvalidParameterError("no active polyads: beta is not identified from these counts")

        t0 = time.perf_counter()
        res = newton_fit(records, config, beta0)
        timings["newton"] = time.perf_counter() - t0

        self.records_ = records
        self.coef_ = res.beta_hat
        self.n_features_in_ = cov.n_features
        self.hessian_ = res.hessian
        self.loss_ = res.loss
        self.gradient_norm_ = res.gradient_norm
        self.iterations_ = res.iterations
        self.n_iter_ = res.n_iter
        self.converged_ = res.converged
        self.n_active_ = records.n_active
        self.n_canonical_ = len(records)
        self.dims_ = graph.dims
        self.stats_ = dict(records.stats)

        self.omega_ = self.omega_prime_ = None
        self.covariance_ = self.covariance_edge_ = None
        if self.compute_variance:
            t0 = time.perf_counter()
            inc = build_incidence(records, graph.dims)
            cv = compute_covariance(records, res.beta_hat, config.truncation_L, incidence=inc,
                                    max_pair_entries=self.max_pair_entries)
            timings["variance"] = time.perf_counter() - t0
            self.hessian_ = cv.gamma_hat
            self.omega_ = cv.omega_hat
            self.omega_prime_ = cv.omega_prime_hat
            self.covariance_edge_ = cv.sigma_hat
            self.covariance_ = cv.sigma_prime_hat
            self.stats_.update(cv.counters)
        self.timings_ = timings
        return self

    def conf_int(self, level=0.95, kind="pair"):
        """Normal confidence intervals, shape ``(p, 2)``.

        ``kind="pair"`` uses the pair-sum covariance, ``kind="edge"`` the
        edge-score one.
        """
        check_is_fitted(self, "coef_")
        if kind not in ("pair", "edge"):
            raise InvalidParameterError("kind must be 'pair' or 'edge'")
        sigma = self.covariance_ if kind == "pair" else self.covariance_edge_
        if sigma is None:
            raise InvalidParameterError(f"{kind} covariance was not computed")
        return ci(sigma, self.coef_, level)

    def standard_errors(self, kind="pair"):
        check_is_fitted(self, "coef_")
        sigma = self.covariance_ if kind == "pair" else self.covariance_edge_
        return np.sqrt(np.clip(np.diag(sigma), 0.0, None))

    def decision_function(self, X):
        """Linear index ``X beta`` (fixed effects are not estimated)."""
        check_is_fitted(self, "coef_")
        cov = check_covariates(X, self.dims_)
        if hasattr(cov, "array"):
            return cov.array @ self.coef_
        grid = np.indices(self.dims_).reshape(len(self.dims_), -1).T
        return (cov.values(grid) @ self.coef_).reshape(self.dims_)
