"""Random-effects pooling of per-subsample estimates."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidParameterError

__all__ = ["MetaResult", "meta_analysis", "dersimonian_laird_tau2", "paule_mandel_tau2"]


@dataclass(frozen=True)
class MetaResult:
    pooled: float
    se: float
    ci_95: tuple
    tau2: float
    converged: bool
    method: str
    n_studies: int


def _check(estimates):
    arr = np.asarray(estimates, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise InvalidParameterError("estimates must be a sequence of (beta, variance) pairs")
    if arr.shape[0] < 2:
        raise InvalidParameterError(f"need at least 2 studies, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise InvalidParameterError("estimates contain non-finite values")
    if np.any(arr[:, 1] <= 0):
        raise InvalidParameterError("all variances must be positive")
    return arr[:, 0], arr[:, 1]


def dersimonian_laird_tau2(beta, var):
    w = 1.0 / var
    mean = np.sum(w * beta) / np.sum(w)
    q = np.sum(w * (beta - mean) ** 2)
    denom = np.sum(w) - np.sum(w**2) / np.sum(w)
    return max(0.0, (q - (beta.size - 1)) / denom) if denom > 0 else 0.0


def paule_mandel_tau2(beta, var, tol=1e-10, max_iter=100):
    """Solve ``Q(tau2) = k - 1`` by the DerSimonian-Kacker update.

    Returns ``(tau2, converged)``.  ``tau2`` is exactly zero when the
    estimating equation is already non-positive at zero.
    """
    k = beta.size
    tau2 = 0.0
    for _ in range(max_iter):
        w = 1.0 / (var + tau2)
        mean = np.sum(w * beta) / np.sum(w)
        resid2 = (beta - mean) ** 2
        ee = np.sum(w * resid2) - (k - 1)
        if ee < 0 and tau2 == 0.0:
            return 0.0, True
        step = ee / np.sum(w**2 * resid2)
        tau2 = max(0.0, tau2 + step)
        if abs(step) < tol:
            return tau2, True
    return tau2, False


def meta_analysis(estimates, level_z=1.96, tol=1e-10, max_iter=100):
    """Pool ``(beta_k, var_k)`` with inverse-variance weights ``1/(var_k + tau2)``.

    ``tau2`` is the Paule-Mandel between-study variance; if the iteration
    does not converge, the DerSimonian-Laird moment estimate is used and a
    warning issued.
    """
    beta, var = _check(estimates)
    tau2, ok = paule_mandel_tau2(beta, var, tol, max_iter)
    method = "paule-mandel"
    if not ok:
        warnings.warn("Paule-Mandel iteration did not converge; using DerSimonian-Laird", RuntimeWarning,
                      stacklevel=2)
        tau2 = dersimonian_laird_tau2(beta, var)
        method = "dersimonian-laird"
    w = 1.0 / (var + tau2)
    pooled = float(np.sum(w * beta) / np.sum(w))
    se = float(np.sqrt(1.0 / np.sum(w)))
    return MetaResult(pooled, se, (pooled - level_z * se, pooled + level_z * se), float(tau2), ok, method,
                      int(beta.size))
