"""Input checks shared by the estimators."""

from __future__ import annotations

import numpy as np

from .covariates import CovariateProvider, DenseCovariates
from .exceptions import DimensionMismatchError, InvalidParameterError, NegativeCountError
from .graph import SparseCountGraph


def check_count_graph(y, dims=None):
    """Return a :class:`SparseCountGraph` from a graph, dense array or ``{index: count}`` mapping."""
    if isinstance(y, SparseCountGraph):
        g = y
    elif isinstance(y, dict):
        if dims is None:
            raise InvalidParameterError("dims are required for a mapping of counts")
        g = SparseCountGraph.from_dict(dims, y)
    else:
        arr = np.asarray(y)
        if arr.ndim < 2:
            raise DimensionMismatchError(f"counts need at least 2 dimensions, got shape {arr.shape}")
        if not np.issubdtype(arr.dtype, np.number):
            raise InvalidParameterError("counts must be numeric")
        if np.any(arr < 0):
            raise NegativeCountError("counts must be nonnegative")
        g = SparseCountGraph.from_dense(arr)
    if dims is not None and tuple(dims) != g.dims:
        raise DimensionMismatchError(f"counts have dims {g.dims}, expected {tuple(dims)}")
    if g.D < 2:
        raise DimensionMismatchError("need D >= 2 dimensions")
    return g


def check_covariates(X, dims):
    """Return a :class:`CovariateProvider`; dense arrays must have shape ``dims`` or ``dims + (p,)``."""
    if isinstance(X, CovariateProvider):
        provider = X
    else:
        arr = np.asarray(X, dtype=float)
        if arr.shape == tuple(dims):
            arr = arr[..., None]
        if arr.shape[:-1] != tuple(dims):
            raise DimensionMismatchError(f"covariates have shape {arr.shape}, expected {tuple(dims)} + (p,)")
        if not np.all(np.isfinite(arr)):
            raise InvalidParameterError("covariates contain non-finite values")
        provider = DenseCovariates(arr)
    if provider.n_features < 1:
        raise InvalidParameterError("need at least one covariate")
    return provider


def as_dense_counts(y, max_cells=10**7):
    if isinstance(y, SparseCountGraph):
        return y.to_dense(max_cells=max_cells)
    arr = np.asarray(y)
    if np.any(arr < 0):
        raise NegativeCountError("counts must be nonnegative")
    return arr


def as_dense_features(X, dims):
    if isinstance(X, DenseCovariates):
        arr = X.array
    else:
        arr = np.asarray(X, dtype=float)
    if arr.shape == tuple(dims):
        arr = arr[..., None]
    if arr.shape[:-1] != tuple(dims):
        raise DimensionMismatchError(f"features have shape {arr.shape}, expected {tuple(dims)} + (p,)")
    return arr
