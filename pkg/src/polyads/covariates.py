"""Covariate providers: maps from edge indices to feature vectors.

The estimator never needs the full covariate tensor, only the features on
the ``2**D`` edges of each active polyad, so providers are queried lazily in
batches of edge indices.
"""

from __future__ import annotations

from abc import ABC, abstractmethod

import numpy as np

from .exceptions import DimensionMismatchError, MissingCovariateError

__all__ = [
    "CovariateProvider",
    "DenseCovariates",
    "TableCovariates",
    "FunctionCovariates",
    "RelabeledCovariates",
]


class CovariateProvider(ABC):
    """Abstract map ``i -> X_i`` in ``R^p``."""

    n_features: int

    @abstractmethod
    def values(self, coords):
        """Features for an integer array of edge indices of shape ``(k, D)``.

        Returns a float array of shape ``(k, p)``.  Must raise
        :class:`MissingCovariateError` listing every index it cannot serve.
        """

    def __call__(self, index):
        return self.values(np.asarray([index], dtype=np.int64))[0]


class DenseCovariates(CovariateProvider):
    """Covariates stored as a dense array of shape ``dims + (p,)``.

    A plain ``dims``-shaped array is treated as a single feature.
    """

    def __init__(self, array, dims=None):
        array = np.asarray(array, dtype=float)
        if dims is not None and array.shape == tuple(dims):
            array = array[..., None]
        self.array = array
        self.dims = array.shape[:-1]
        self.n_features = array.shape[-1]

    def values(self, coords):
        coords = np.asarray(coords, dtype=np.int64).reshape(-1, len(self.dims))
        if coords.size and (np.any(coords < 0) or np.any(coords >= np.array(self.dims))):
            bad = coords[np.any((coords < 0) | (coords >= np.array(self.dims)), axis=1)]
            raise MissingCovariateError(bad)
        return self.array[tuple(coords.T)].reshape(-1, self.n_features)


class TableCovariates(CovariateProvider):
    """Covariates given for an explicit list of edge indices (e.g. read from a file)."""

    def __init__(self, dims, coords, values):
        self.dims = tuple(int(n) for n in dims)
        coords = np.asarray(coords, dtype=np.int64).reshape(-1, len(self.dims))
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.shape[0] != coords.shape[0]:
            raise DimensionMismatchError("coords and values have different lengths")
        keys = np.ravel_multi_index(coords.T, self.dims) if coords.size else np.empty(0, np.int64)
        keys, first = np.unique(keys, return_index=True)
        self._keys = keys
        self._values = values[first]
        self.n_features = values.shape[1]

    def __len__(self):
        return self._keys.size

    def values(self, coords):
        coords = np.asarray(coords, dtype=np.int64).reshape(-1, len(self.dims))
        if coords.shape[0] == 0:
            return np.empty((0, self.n_features))
        inside = np.all((coords >= 0) & (coords < np.array(self.dims)), axis=1)
        q = np.full(coords.shape[0], -1, dtype=np.int64)
        if inside.any():
            q[inside] = np.ravel_multi_index(coords[inside].T, self.dims)
        pos = np.minimum(np.searchsorted(self._keys, q), max(self._keys.size - 1, 0))
        found = inside & (self._keys.size > 0)
        if self._keys.size:
            found &= self._keys[pos] == q
        if not found.all():
            missing = np.unique(coords[~found], axis=0)
            raise MissingCovariateError(missing)
        return self._values[pos]


class FunctionCovariates(CovariateProvider):
    """Wraps a vectorized function ``f(coords) -> (k, p)`` array."""

    def __init__(self, func, n_features):
        self.func = func
        self.n_features = int(n_features)

    def values(self, coords):
        coords = np.asarray(coords, dtype=np.int64)
        out = np.asarray(self.func(coords), dtype=float)
        return out.reshape(coords.shape[0], self.n_features)


class RelabeledCovariates(CovariateProvider):
    """View of a provider through per-dimension id maps ``new id -> old id``."""

    def __init__(self, base, node_maps):
        self.base = base
        self.node_maps = [np.asarray(m, dtype=np.int64) for m in node_maps]
        self.n_features = base.n_features

    def values(self, coords):
        coords = np.asarray(coords, dtype=np.int64).reshape(-1, len(self.node_maps))
        old = np.stack([m[coords[:, d]] for d, m in enumerate(self.node_maps)], axis=1)
        return self.base.values(old)
