"""Sparse D-partite count graphs, generalized degrees and polyad primitives.

Node ids are dense, 0-based integers per dimension: node ``j`` of dimension
``d`` satisfies ``0 <= j < dims[d]``.  Edge indices are plain tuples of ints.
Only strictly positive counts are stored; every other edge has count zero.
"""

from __future__ import annotations

import bisect
from collections import defaultdict
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations

import numpy as np

from .exceptions import DimensionMismatchError, NegativeCountError

__all__ = [
    "SparseCountGraph",
    "FixedEffectStructure",
    "Polyad",
    "degrees",
    "sign",
    "orbit_bounds",
    "apply_transform",
    "did_feature",
    "selector_bits",
    "selector_signs",
]


@lru_cache(maxsize=None)
def selector_bits(D):
    """Boolean table of shape ``(2**D, D)``.

    Row ``s`` describes the polyad edge picked by selector ``s``: bit ``d`` set
    means "take the bottom row in column d".  This is the fixed order used for
    cached edge counts everywhere in the package.
    """
    s = np.arange(2**D)[:, None]
    bits = ((s >> np.arange(D)[None, :]) & 1).astype(bool)
    bits.setflags(write=False)
    return bits


@lru_cache(maxsize=None)
def selector_signs(D):
    """Sign of each selector slot, ``(-1) ** popcount(s)``."""
    signs = np.where(selector_bits(D).sum(axis=1) % 2 == 0, 1, -1).astype(np.int64)
    signs.setflags(write=False)
    return signs


def _as_dims(dims):
    dims = tuple(int(n) for n in dims)
    if len(dims) < 2:
        raise DimensionMismatchError(f"need at least 2 dimensions, got {len(dims)}")
    if any(n < 1 for n in dims):
        raise DimensionMismatchError(f"dimension sizes must be positive, got {dims}")
    return dims


class SparseCountGraph:
    """Immutable sparse representation of a count tensor ``y`` on ``[n_1] x ... x [n_D]``.

    Parameters
    ----------
    dims : sequence of int
        Number of nodes in each dimension.
    coords : array-like of shape (n_edges, D)
        Edge indices with a positive count.  Duplicates are summed.
    counts : array-like of shape (n_edges,)
        Nonnegative integer counts.  Zero entries are dropped.
    adjacency : {"hash", "sorted"}
        Representation of the per-first-coordinate sets ``E_{i1}`` used by
        :meth:`row_contains`.  Hash sets give O(1) membership, sorted lists
        use binary search.
    """

    def __init__(self, dims, coords=None, counts=None, adjacency="hash"):
        self.dims = _as_dims(dims)
        D = len(self.dims)
        if adjacency not in ("hash", "sorted"):
            raise ValueError(f"adjacency must be 'hash' or 'sorted', got {adjacency!r}")
        self.adjacency_mode = adjacency
        if coords is None:
            coords = np.empty((0, D), dtype=np.int64)
            counts = np.empty(0, dtype=np.int64)
        coords = np.asarray(coords, dtype=np.int64).reshape(-1, D)
        counts = np.asarray(counts)
        if counts.shape != (coords.shape[0],):
            raise DimensionMismatchError(
                f"{coords.shape[0]} edge indices but counts has shape {counts.shape}"
            )
        if counts.size and not np.all(np.equal(np.mod(counts, 1), 0)):
            raise ValueError("counts must be integers")
        counts = counts.astype(np.int64)
        if np.any(counts < 0):
            raise NegativeCountError("counts must be nonnegative")
        if coords.size and (np.any(coords < 0) or np.any(coords >= np.array(self.dims))):
            raise DimensionMismatchError(f"edge index outside dims {self.dims}")

        keys = np.ravel_multi_index(coords.T, self.dims) if coords.size else np.empty(0, np.int64)
        keys = np.asarray(keys, dtype=np.int64)
        order = np.argsort(keys, kind="stable")
        keys, counts = keys[order], counts[order]
        uniq, start = np.unique(keys, return_index=True)
        counts = np.add.reduceat(counts, start) if keys.size else counts
        keep = counts > 0
        self._keys = uniq[keep]
        self._counts = counts[keep]
        self._coords = np.stack(np.unravel_index(self._keys, self.dims), axis=1).astype(np.int64)
        for a in (self._keys, self._counts, self._coords):
            a.setflags(write=False)
        self._row_ptr = np.searchsorted(self._coords[:, 0], np.arange(self.dims[0] + 1))
        self._row_ptr.setflags(write=False)
        self._index = None
        self._rows = None

    @classmethod
    def from_dict(cls, dims, mapping, adjacency="hash"):
        if not mapping:
            return cls(dims, adjacency=adjacency)
        coords = np.array(list(mapping.keys()), dtype=np.int64)
        counts = np.array(list(mapping.values()))
        return cls(dims, coords, counts, adjacency=adjacency)

    @classmethod
    def from_dense(cls, y, adjacency="hash"):
        y = np.asarray(y)
        nz = np.nonzero(y)
        coords = np.stack(nz, axis=1) if y.ndim else np.empty((0, 0))
        return cls(y.shape, coords, y[nz], adjacency=adjacency)

    # -- basic accessors -------------------------------------------------
    @property
    def D(self):
        return len(self.dims)

    @property
    def n_cells(self):
        return int(np.prod(self.dims, dtype=np.float64))

    @property
    def n_edges(self):
        return int(self._keys.size)

    @property
    def coords(self):
        return self._coords

    @property
    def counts(self):
        return self._counts

    @property
    def keys(self):
        return self._keys

    @property
    def density(self):
        return self.n_edges / self.n_cells

    def __len__(self):
        return self.n_edges

    def __repr__(self):
        return f"SparseCountGraph(dims={self.dims}, n_edges={self.n_edges})"

    def __eq__(self, other):
        if not isinstance(other, SparseCountGraph):
            return NotImplemented
        return (
            self.dims == other.dims
            and np.array_equal(self._keys, other._keys)
            and np.array_equal(self._counts, other._counts)
        )

    __hash__ = None

    def __getitem__(self, index):
        index = tuple(int(v) for v in index)
        if len(index) != self.D:
            raise DimensionMismatchError(f"edge index {index} has length {len(index)}, expected {self.D}")
        if self._index is None:
            self._index = dict(zip(map(tuple, self._coords.tolist()), self._counts.tolist()))
        return self._index.get(index, 0)

    def items(self):
        return zip(map(tuple, self._coords.tolist()), self._counts.tolist())

    def to_dict(self):
        return dict(self.items())

    def to_dense(self, max_cells=10**7):
        if self.n_cells > max_cells:
            from .exceptions import ResourceGuardError

            raise ResourceGuardError(f"dense view of {self.n_cells} cells exceeds max_cells={max_cells}")
        y = np.zeros(self.dims, dtype=np.int64)
        y[tuple(self._coords.T)] = self._counts
        return y

    def lookup(self, coords):
        """Vectorized count lookup for an integer array of shape ``(..., D)``.

        Uses binary search on the sorted linear keys.
        """
        coords = np.asarray(coords, dtype=np.int64)
        flat = coords.reshape(-1, self.D)
        if self._keys.size == 0:
            return np.zeros(flat.shape[0], dtype=np.int64).reshape(coords.shape[:-1])
        q = np.ravel_multi_index(flat.T, self.dims)
        pos = np.searchsorted(self._keys, q)
        pos_c = np.minimum(pos, self._keys.size - 1)
        found = self._keys[pos_c] == q
        out = np.where(found, self._counts[pos_c], 0)
        return out.reshape(coords.shape[:-1])

    # -- adjacency sets E_{i1} --------------------------------------------
    def row_slice(self, i1):
        return slice(int(self._row_ptr[i1]), int(self._row_ptr[i1 + 1]))

    def row_sizes(self):
        return np.diff(self._row_ptr)

    def row(self, i1):
        """The set ``E_{i1}`` of tail tuples ``(i_2..i_D)`` with a positive count."""
        self._build_rows()
        return self._rows[i1]

    def row_contains(self, i1, tail):
        rows = self._build_rows()
        r = rows[i1]
        if self.adjacency_mode == "hash":
            return tail in r
        k = bisect.bisect_left(r, tail)
        return k < len(r) and r[k] == tail

    def _build_rows(self):
        if self._rows is None:
            rows = []
            tails = [tuple(t) for t in self._coords[:, 1:].tolist()]
            for i1 in range(self.dims[0]):
                sl = self.row_slice(i1)
                block = tails[sl]
                rows.append(frozenset(block) if self.adjacency_mode == "hash" else list(block))
            self._rows = rows
        return self._rows

    def with_counts(self, coords, counts):
        """New graph on the same dims (helper for transforms and subsetting)."""
        return SparseCountGraph(self.dims, coords, counts, adjacency=self.adjacency_mode)


@dataclass(frozen=True)
class FixedEffectStructure:
    """A collection of fixed-effect levels, each a nonempty proper subset of dimensions.

    Dimensions are 0-based: ``{0, 1}`` is the level of the first two axes.
    """

    levels: tuple

    def __post_init__(self):
        levels = tuple(frozenset(int(d) for d in g) for g in self.levels)
        if len(set(levels)) != len(levels):
            raise ValueError(f"duplicate fixed-effect levels in {levels}")
        if any(len(g) == 0 for g in levels):
            raise ValueError("fixed-effect levels must be nonempty")
        object.__setattr__(self, "levels", levels)

    @classmethod
    def max_structure(cls, D):
        """The D levels of cardinality D-1 (one per omitted axis)."""
        full = range(D)
        return cls(tuple(frozenset(c) for c in combinations(full, D - 1)))

    def validate(self, D):
        for g in self.levels:
            if not g < frozenset(range(D)):
                raise DimensionMismatchError(f"level {sorted(g)} is not a proper subset of range({D})")
        return self

    def __iter__(self):
        return iter(self.levels)

    def __len__(self):
        return len(self.levels)


def degrees(graph, structure):
    """Generalized degrees ``delta^g_rho(y)`` for each level ``g`` of ``structure``.

    Returns a dict keyed by level (a frozenset) whose values map the projected
    index ``rho`` (tuple in increasing dimension order) to its degree.  Absent
    keys have degree zero.
    """
    structure.validate(graph.D)
    out = {}
    for g in structure.levels:
        axes = sorted(g)
        acc = defaultdict(int)
        proj = graph.coords[:, axes].tolist()
        for rho, y in zip(proj, graph.counts.tolist()):
            acc[tuple(rho)] += y
        out[g] = dict(acc)
    return out


@dataclass(frozen=True)
class Polyad:
    """A pair of edge indices ``(top, bottom)`` that differ in every coordinate."""

    top: tuple
    bottom: tuple

    def __post_init__(self):
        top = tuple(int(v) for v in self.top)
        bottom = tuple(int(v) for v in self.bottom)
        if len(top) != len(bottom):
            raise DimensionMismatchError("polyad rows have different lengths")
        if len(top) < 2:
            raise DimensionMismatchError("polyads need D >= 2")
        for d, (a, b) in enumerate(zip(top, bottom)):
            if a == b:
                raise ValueError(f"polyad rows coincide in column {d}: {a}")
        object.__setattr__(self, "top", top)
        object.__setattr__(self, "bottom", bottom)

    @property
    def D(self):
        return len(self.top)

    def as_array(self):
        return np.array([self.top, self.bottom], dtype=np.int64)

    def edge(self, selector):
        return tuple(b if (selector >> d) & 1 else t for d, (t, b) in enumerate(zip(self.top, self.bottom)))

    def edges(self):
        """All ``2**D`` edges, in selector order."""
        return [self.edge(s) for s in range(2**self.D)]

    def sign(self, index):
        return sign(self, index)

    def permutations(self):
        """All ``2**D`` column-flip permutations as ``(polyad, parity)`` pairs.

        Parity is 0 for an even number of flipped columns, 1 otherwise.  The
        identity comes first; the order follows the flip mask as a selector.
        """
        out = []
        for mask in range(2**self.D):
            top = self.edge(mask)
            bottom = self.edge(mask ^ (2**self.D - 1))
            out.append((Polyad(top, bottom), bin(mask).count("1") % 2))
        return out

    def containing(self, index):
        """The unique permutation whose top row is ``index`` (an edge of this polyad)."""
        index = tuple(index)
        flip = 0
        for d, (t, b) in enumerate(zip(self.top, self.bottom)):
            if index[d] == b:
                flip |= 1 << d
            elif index[d] != t:
                raise ValueError(f"{index} is not an edge of {self}")
        return Polyad(self.edge(flip), self.edge(flip ^ (2**self.D - 1)))


def sign(xi, index):
    """Sign of edge ``index`` relative to polyad ``xi``: +1, -1 or 0."""
    if len(index) != xi.D:
        raise DimensionMismatchError(f"edge index has length {len(index)}, polyad has D={xi.D}")
    s = 1
    for i, j, jp in zip(index, xi.top, xi.bottom):
        if i == j:
            continue
        if i == jp:
            s = -s
        else:
            return 0
    return s


def _check_polyad_fits(graph, xi):
    if xi.D != graph.D:
        raise DimensionMismatchError(f"polyad has D={xi.D}, graph has D={graph.D}")
    if any(max(a, b) >= n for a, b, n in zip(xi.top, xi.bottom, graph.dims)):
        raise DimensionMismatchError(f"polyad {xi} outside graph dims {graph.dims}")


def orbit_bounds(graph, xi):
    """``(m, M)``: minimum count over the +1 edges and over the -1 edges of ``xi``."""
    _check_polyad_fits(graph, xi)
    y = graph.lookup(np.array(xi.edges()))
    signs = selector_signs(xi.D)
    return int(y[signs > 0].min()), int(y[signs < 0].min())


def apply_transform(graph, xi, r):
    """Return ``y + r * s_xi`` as a new graph; ``r`` must lie in ``[-m, M]``."""
    m, M = orbit_bounds(graph, xi)
    r = int(r)
    if not -m <= r <= M:
        raise NegativeCountError(f"r={r} outside admissible range [{-m}, {M}] for {xi}")
    if r == 0:
        return graph
    delta = dict(zip(xi.edges(), (r * s for s in selector_signs(xi.D).tolist())))
    y = graph.to_dict()
    for e, dv in delta.items():
        y[e] = y.get(e, 0) + dv
    y = {e: v for e, v in y.items() if v != 0}
    return SparseCountGraph.from_dict(graph.dims, y, adjacency=graph.adjacency_mode)


def did_feature(xi, cov):
    """Signed sum of covariates over the polyad's edges (generalized DiD contrast)."""
    X = cov.values(np.array(xi.edges(), dtype=np.int64))
    return selector_signs(xi.D).astype(float) @ X
