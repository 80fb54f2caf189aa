"""Plain PPML with high-dimensional fixed effects, used as the biased comparator.

The Poisson likelihood over the full index set (zeros included) is maximized
by alternating closed-form fixed-effect sweeps with Newton steps on beta.
"""

from __future__ import annotations

import warnings

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from ._validation import as_dense_counts, as_dense_features
from .exceptions import InvalidParameterError, ResourceGuardError
from .graph import FixedEffectStructure

__all__ = ["PPMLRegressor", "PINNED_FE"]

PINNED_FE = -30.0
MAX_DENSE_CELLS = 10**7


def _poisson_deviance(y, lam):
    with np.errstate(divide="ignore", invalid="ignore"):
        term = np.where(y > 0, y * np.log(y / lam), 0.0)
    return 2.0 * float(np.sum(term - (y - lam)))


class PPMLRegressor(RegressorMixin, BaseEstimator):
    """Poisson pseudo-maximum likelihood with fixed effects on every level of ``structure``.

    Parameters
    ----------
    structure : FixedEffectStructure or iterable of axis sets, optional
        Fixed-effect levels.  Defaults to all ``D - 1`` element subsets.
    max_iter : int
        Maximum outer iterations (one sweep over all levels plus a beta step).
    tol : float
        Stop when the largest parameter change falls below ``tol``.

    Attributes
    ----------
    coef_ : ndarray (p,)
    intercept_ : float
    fe_values_ : dict mapping each level to an array over its projected cells
    n_iter_, converged_, deviance_, deviance_trace_
    """

    def __init__(self, structure=None, max_iter=200, tol=1e-8):
        self.structure = structure
        self.max_iter = max_iter
        self.tol = tol

    def _levels(self, D):
        if self.structure is None:
            return FixedEffectStructure.max_structure(D)
        s = self.structure if isinstance(self.structure, FixedEffectStructure) else FixedEffectStructure(
            self.structure)
        s.validate(D)
        return s

    def fit(self, X, y):
        """Fit on dense features ``X`` of shape ``dims + (p,)`` and counts ``y`` of shape ``dims``.

        ``y`` may also be a :class:`SparseCountGraph`; ``X`` may be a
        :class:`DenseCovariates`.
        """
        if self.max_iter < 1 or not self.tol > 0:
            raise InvalidParameterError("max_iter must be >= 1 and tol > 0")
        y = as_dense_counts(y, max_cells=MAX_DENSE_CELLS)
        dims = y.shape
        X = as_dense_features(X, dims)
        n, p = y.size, X.shape[-1]
        if n > MAX_DENSE_CELLS:
            raise ResourceGuardError(f"{n} cells exceed the dense PPML limit of {MAX_DENSE_CELLS}")
        yv = y.reshape(-1).astype(float)
        Xv = X.reshape(n, p)
        levels = list(self._levels(len(dims)))
        if frozenset() not in levels:
            levels.append(frozenset())  # global intercept, so the beta step is absorbed even with no levels

        cells = {}
        for g in levels:
            axes = sorted(g)
            sub = tuple(dims[a] for a in axes)
            grid = np.indices(dims).reshape(len(dims), -1)[axes]
            cells[g] = (np.ravel_multi_index(grid, sub) if axes else np.zeros(n, np.int64), int(np.prod(sub)))

        pinned = {}
        for g, (idx, k) in cells.items():
            sy = np.bincount(idx, weights=yv, minlength=k)
            pinned[g] = sy == 0
        n_pinned = int(sum(v.sum() for v in pinned.values()))
        if n_pinned:
            warnings.warn(f"{n_pinned} fixed-effect cell(s) have only zero counts; pinned at {PINNED_FE}",
                          RuntimeWarning, stacklevel=2)

        theta = {g: np.where(pinned[g], PINNED_FE, 0.0) for g in levels}
        beta = np.zeros(p)
        alpha = float(np.log(max(yv.mean(), 1e-300)))

        def fe_sum():
            out = np.zeros(n)
            for g in levels:
                out += theta[g][cells[g][0]]
            return out

        offset = fe_sum()
        lin = Xv @ beta
        trace = [_poisson_deviance(yv, np.exp(alpha + offset + lin))]
        converged = False
        it = 0
        for it in range(1, self.max_iter + 1):
            change = 0.0
            for g in levels:
                idx, k = cells[g]
                lam = np.exp(alpha + offset + lin)
                sy = np.bincount(idx, weights=yv, minlength=k)
                sl = np.bincount(idx, weights=lam, minlength=k)
                free = ~pinned[g]
                step = np.zeros(k)
                step[free] = np.log(sy[free] / sl[free])
                theta[g] += step
                change = max(change, float(np.max(np.abs(step))) if k else 0.0)
                offset += step[idx]
            # normalization: fold each level's mean over free cells into the intercept
            for g in levels:
                free = ~pinned[g]
                if free.any():
                    mean = float(theta[g][free].mean())
                    theta[g][free] -= mean
                    alpha += mean
            offset = fe_sum()
            if p:
                lam = np.exp(alpha + offset + lin)
                xt, comps = self._partial_out(Xv, lam, levels, cells, pinned)
                score = xt.T @ (yv - lam)
                H = (xt * lam[:, None]).T @ xt
                delta = np.linalg.solve(H, score)
                beta = beta + delta
                for g in levels:
                    theta[g] -= comps[g] @ delta
                offset = fe_sum()
                lin = Xv @ beta
                change = max(change, float(np.max(np.abs(delta))))
            trace.append(_poisson_deviance(yv, np.exp(alpha + offset + lin)))
            if change < self.tol:
                converged = True
                break

        self.coef_ = beta
        self.intercept_ = alpha
        self.fe_values_ = {g: v for g, v in theta.items() if g}
        self.n_iter_ = it
        self.converged_ = converged
        self.deviance_trace_ = trace
        self.deviance_ = trace[-1]
        self.n_features_in_ = p
        self.dims_ = dims
        self._cells = cells
        return self

    @staticmethod
    def _partial_out(Xv, lam, levels, cells, pinned, sweeps=100, tol=1e-10):
        """Residual of ``X`` after lambda-weighted projection on the fixed-effect span.

        Returns the residual and, per level, the per-cell coefficients of the
        projection, so that a beta step can be absorbed by the fixed effects.
        """
        r = Xv.copy()
        comps = {g: np.zeros((cells[g][1], Xv.shape[1])) for g in levels}
        for _ in range(sweeps):
            moved = 0.0
            for g in levels:
                idx, k = cells[g]
                sw = np.bincount(idx, weights=lam, minlength=k)
                free = ~pinned[g] & (sw > 0)
                m = np.zeros((k, Xv.shape[1]))
                for j in range(Xv.shape[1]):
                    m[free, j] = np.bincount(idx, weights=lam * r[:, j], minlength=k)[free] / sw[free]
                comps[g] += m
                r -= m[idx]
                moved = max(moved, float(np.max(np.abs(m))) if m.size else 0.0)
            if moved < tol:
                break
        return r, comps

    def _linear(self, X):
        X = as_dense_features(X, self.dims_)
        lin = self.intercept_ + X.reshape(int(np.prod(self.dims_)), -1) @ self.coef_
        for g, theta in self.fe_values_.items():
            lin = lin + theta[self._cells[g][0]]
        return lin.reshape(self.dims_)

    def predict(self, X):
        """Fitted means ``lambda_hat`` on the full index set."""
        return np.exp(self._linear(X))

    def score(self, X, y, sample_weight=None):
        """Negative mean Poisson deviance (higher is better)."""
        y = as_dense_counts(y, max_cells=MAX_DENSE_CELLS).reshape(-1).astype(float)
        return -_poisson_deviance(y, self.predict(X).reshape(-1)) / y.size
