"""Enumeration of canonical active polyads and the edge -> polyad incidence index.

Each active polyad has ``2**D`` column-flip permutations, all with the same
loss.  Enumeration keeps exactly one of them, the canonical one: bottom row
strictly larger than the top row in every column but the first, ``m > 0``,
and ``top[0] < bottom[0]`` whenever ``M > 0``.  Candidates are generated by
pairing positive edges through the per-first-coordinate sets ``E_{i1}``, so
the cost scales with ``|E|**2`` rather than with the number of cells.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed

from .exceptions import DimensionMismatchError, ResourceGuardError
from .graph import Polyad, selector_bits, selector_signs

__all__ = [
    "ActivePolyadRecord",
    "ActivePolyads",
    "PolyadIncidence",
    "enumerate_active",
    "build_incidence",
    "permutations",
    "polyad_edges",
]

DEFAULT_MAX_RECORDS = 10**8
_BATCH = 1 << 18


def permutations(xi):
    """All ``2**D`` permutations of ``xi`` with their parity (0 even, 1 odd)."""
    return xi.permutations()


def polyad_edges(top, bottom):
    """Edge coordinates of many polyads at once: ``(N, 2**D, D)`` in selector order."""
    bits = selector_bits(top.shape[1])
    return np.where(bits[None, :, :], bottom[:, None, :], top[:, None, :])


@dataclass(frozen=True)
class ActivePolyadRecord:
    polyad: Polyad
    m: int
    M: int
    edge_counts: np.ndarray
    did: np.ndarray

    @property
    def orbit_size(self):
        return self.m + self.M + 1


class ActivePolyads:
    """Struct-of-arrays container of polyad records.

    Attributes
    ----------
    top, bottom : ndarray of shape (N, D)
    edge_counts : ndarray of shape (N, 2**D)
        Counts on the polyad edges in selector order.
    m, M : ndarray of shape (N,)
    did : ndarray of shape (N, p)
        DiD features ``sum_i s(i) X_i``.
    stats : dict
        Counters filled in by :func:`enumerate_active`.
    """

    def __init__(self, top, bottom, edge_counts, did):
        self.top = np.asarray(top, dtype=np.int64)
        self.bottom = np.asarray(bottom, dtype=np.int64)
        self.edge_counts = np.asarray(edge_counts, dtype=np.int64)
        self.did = np.asarray(did, dtype=float)
        D = self.top.shape[1]
        signs = selector_signs(D)
        if len(self.top):
            self.m = self.edge_counts[:, signs > 0].min(axis=1)
            self.M = self.edge_counts[:, signs < 0].min(axis=1)
        else:
            self.m = np.empty(0, np.int64)
            self.M = np.empty(0, np.int64)
        self.stats = {}

    @classmethod
    def from_polyads(cls, graph, cov, polyads):
        """Build records for arbitrary (not necessarily canonical or active) polyads."""
        polyads = list(polyads)
        if not polyads:
            return cls(np.empty((0, graph.D)), np.empty((0, graph.D)),
                       np.empty((0, 2**graph.D)), np.empty((0, cov.n_features)))
        top = np.array([xi.top for xi in polyads], dtype=np.int64)
        bottom = np.array([xi.bottom for xi in polyads], dtype=np.int64)
        return _build_records(graph, cov, top, bottom)

    @property
    def D(self):
        return self.top.shape[1]

    @property
    def n_features(self):
        return self.did.shape[1]

    @property
    def orbit_size(self):
        return self.m + self.M + 1

    @property
    def n_active(self):
        """Number of active polyads counting all permutations (``2**D`` per record)."""
        return (2**self.D) * len(self)

    def __len__(self):
        return self.top.shape[0]

    def __getitem__(self, k):
        if isinstance(k, (slice, np.ndarray, list)):
            return self.subset(k)
        return ActivePolyadRecord(
            Polyad(tuple(self.top[k]), tuple(self.bottom[k])),
            int(self.m[k]),
            int(self.M[k]),
            self.edge_counts[k].copy(),
            self.did[k].copy(),
        )

    def __iter__(self):
        for k in range(len(self)):
            yield self[k]

    def polyads(self):
        return [Polyad(tuple(t), tuple(b)) for t, b in zip(self.top.tolist(), self.bottom.tolist())]

    def edges(self):
        return polyad_edges(self.top, self.bottom)

    def subset(self, idx):
        out = ActivePolyads(self.top[idx], self.bottom[idx], self.edge_counts[idx], self.did[idx])
        return out

    def concat(self, other):
        return ActivePolyads(
            np.concatenate([self.top, other.top]),
            np.concatenate([self.bottom, other.bottom]),
            np.concatenate([self.edge_counts, other.edge_counts]),
            np.concatenate([self.did, other.did]),
        )

    def __repr__(self):
        return f"ActivePolyads(n={len(self)}, D={self.D}, p={self.n_features})"


def _build_records(graph, cov, top, bottom):
    edges = polyad_edges(top, bottom)
    counts = graph.lookup(edges)
    flat = edges.reshape(-1, graph.D)
    keys = np.ravel_multi_index(flat.T, graph.dims)
    ukeys, inverse = np.unique(keys, return_inverse=True)
    ucoords = np.stack(np.unravel_index(ukeys, graph.dims), axis=1)
    # one batched query: a provider that cannot serve some edge reports all of them
    X = np.asarray(cov.values(ucoords), dtype=float)
    if X.shape != (ukeys.size, cov.n_features):
        raise DimensionMismatchError(f"covariate provider returned shape {X.shape}")
    Xe = X[inverse.reshape(edges.shape[:2])]
    did = np.einsum("s,nsp->np", selector_signs(graph.D).astype(float), Xe)
    return ActivePolyads(top, bottom, counts, did)


def _filter_candidates(graph, top, bottom):
    """Keep candidates in canonical active form; assumes ``top[:, 1:] < bottom[:, 1:]``."""
    keep_top, keep_bottom = [], []
    signs = selector_signs(graph.D)
    plus, minus = np.flatnonzero(signs > 0), np.flatnonzero(signs < 0)
    for s in range(0, top.shape[0], _BATCH):
        t, b = top[s:s + _BATCH], bottom[s:s + _BATCH]
        edges = polyad_edges(t, b)
        # +1 edges first: most candidates die there
        yp = graph.lookup(edges[:, plus])
        alive = yp.min(axis=1) > 0
        if not alive.any():
            continue
        t, b, edges = t[alive], b[alive], edges[alive]
        ym = graph.lookup(edges[:, minus])
        ok = (ym.min(axis=1) == 0) | (t[:, 0] < b[:, 0])
        keep_top.append(t[ok])
        keep_bottom.append(b[ok])
    D = graph.D
    if not keep_top:
        return np.empty((0, D), np.int64), np.empty((0, D), np.int64)
    return np.concatenate(keep_top), np.concatenate(keep_bottom)


def _candidates_for_row(graph, i1, nonempty_rows):
    """Vectorized candidate pairs for one first coordinate ``i1``."""
    D = graph.D
    coords = graph.coords
    A = coords[graph.row_slice(i1), 1:]
    if A.shape[0] == 0:
        return np.empty((0, D), np.int64), np.empty((0, D), np.int64)
    if D % 2:
        # both tails come from E_{i1}; i1' only enters the bottom row
        lt = np.all(A[:, None, :] < A[None, :, :], axis=2)
        ia, ib = np.nonzero(lt)
        partners = nonempty_rows[nonempty_rows != i1]
        if ia.size == 0 or partners.size == 0:
            return np.empty((0, D), np.int64), np.empty((0, D), np.int64)
        P, R = ia.size, partners.size
        top = np.empty((P * R, D), np.int64)
        bottom = np.empty((P * R, D), np.int64)
        top[:, 0] = i1
        top[:, 1:] = np.tile(A[ia], (R, 1))
        bottom[:, 0] = np.repeat(partners, P)
        bottom[:, 1:] = np.tile(A[ib], (R, 1))
    else:
        other = coords[coords[:, 0] != i1]
        lt = np.all(A[:, None, :] < other[None, :, 1:], axis=2)
        ia, ib = np.nonzero(lt)
        top = np.empty((ia.size, D), np.int64)
        top[:, 0] = i1
        top[:, 1:] = A[ia]
        bottom = other[ib]
    return _filter_candidates(graph, top, bottom)


def _enumerate_rows(graph, rows, nonempty_rows):
    tops, bottoms = [], []
    for i1 in rows:
        t, b = _candidates_for_row(graph, int(i1), nonempty_rows)
        if t.size:
            tops.append(t)
            bottoms.append(b)
    D = graph.D
    if not tops:
        return np.empty((0, D), np.int64), np.empty((0, D), np.int64)
    return np.concatenate(tops), np.concatenate(bottoms)


def _enumerate_hash(graph):
    """Algorithm 1 as written: nested loops over E_{i1} with hash/sorted membership tests."""
    D = graph.D
    n1 = graph.dims[0]
    signs = selector_signs(D).tolist()
    bits = selector_bits(D).tolist()
    tops, bottoms = [], []
    inner = 0
    for i1 in range(n1):
        rows_i1 = sorted(graph.row(i1))
        for i1p in range(n1):
            if i1p == i1:
                continue
            E_prime = rows_i1 if D % 2 else sorted(graph.row(i1p))
            for a in rows_i1:
                for b in E_prime:
                    inner += 1
                    if any(x >= y for x, y in zip(a, b)):
                        continue
                    top = (i1,) + a
                    bottom = (i1p,) + b
                    m_pos = True
                    M_zero = False
                    for s, sel in zip(signs, bits):
                        e = tuple(bb if f else tt for tt, bb, f in zip(top, bottom, sel))
                        present = graph.row_contains(e[0], e[1:])
                        if s > 0 and not present:
                            m_pos = False
                            break
                        if s < 0 and not present:
                            M_zero = True
                    if m_pos and (M_zero or i1 < i1p):
                        tops.append(top)
                        bottoms.append(bottom)
    top = np.array(tops, dtype=np.int64).reshape(-1, D)
    bottom = np.array(bottoms, dtype=np.int64).reshape(-1, D)
    return top, bottom, inner


def inner_loop_count(graph):
    """Number of innermost-loop executions of Algorithm 1 on ``graph``."""
    sizes = graph.row_sizes().astype(np.int64)
    n1 = graph.dims[0]
    if graph.D % 2:
        return int((n1 - 1) * np.sum(sizes**2))
    return int(sizes.sum() ** 2 - np.sum(sizes**2))


def enumerate_active(graph, cov, method="sorted", max_records=DEFAULT_MAX_RECORDS, n_jobs=1):
    """Canonical active polyads of ``graph`` with cached counts and DiD features.

    Parameters
    ----------
    graph : SparseCountGraph
    cov : CovariateProvider
        Must cover every edge of every active polyad, including zero-count edges.
    method : {"sorted", "hash"}
        ``"sorted"`` runs a vectorized version of the enumeration using binary
        search on sorted edge keys; ``"hash"`` executes the nested loops of the
        reference algorithm with set membership tests.  Both return the same
        records.
    max_records : int
        Abort with :class:`ResourceGuardError` above this many records.
    n_jobs : int
        Workers for the ``"sorted"`` path (parallel over first coordinates).

    Returns
    -------
    ActivePolyads
        Sorted lexicographically by ``(top, bottom)``.  ``stats`` holds
        ``inner_loop`` (innermost-loop executions of the reference algorithm),
        ``n_edges`` and ``n_records``.
    """
    if graph.D < 2:
        raise DimensionMismatchError("enumeration needs D >= 2")
    if method == "hash":
        top, bottom, inner = _enumerate_hash(graph)
    elif method == "sorted":
        sizes = graph.row_sizes()
        nonempty = np.flatnonzero(sizes > 0)
        if n_jobs == 1 or nonempty.size < 2:
            top, bottom = _enumerate_rows(graph, nonempty, nonempty)
        else:
            chunks = [c for c in np.array_split(nonempty, min(len(nonempty), 4 * abs(n_jobs))) if c.size]
            parts = Parallel(n_jobs=n_jobs)(delayed(_enumerate_rows)(graph, c, nonempty) for c in chunks)
            top = np.concatenate([p[0] for p in parts])
            bottom = np.concatenate([p[1] for p in parts])
        inner = inner_loop_count(graph)
    else:
        raise ValueError(f"unknown enumeration method {method!r}")

    if top.shape[0] > max_records:
        raise ResourceGuardError(
            f"{top.shape[0]} active polyads exceed max_records={max_records}; the graph is too dense"
        )
    order = np.lexsort(np.concatenate([top, bottom], axis=1).T[::-1])
    records = _build_records(graph, cov, top[order], bottom[order])
    records.stats = {
        "inner_loop": inner,
        "n_edges": graph.n_edges,
        "n_records": len(records),
        "method": method,
    }
    return records


class PolyadIncidence:
    """Index from each edge of an active polyad to its partners.

    For every record and every permutation ``(i, i')`` of it, the entry
    ``(key=i, partner=i', owner=record index)`` is stored.  Entries are sorted
    by key so each key's partners form a contiguous block.
    """

    def __init__(self, keys, partners, owners, dims):
        self.dims = tuple(dims)
        order = np.lexsort(np.concatenate([keys, partners], axis=1).T[::-1])
        self.keys = keys[order]
        self.partners = partners[order]
        self.owners = owners[order]
        lin = np.ravel_multi_index(self.keys.T, self.dims) if len(self.keys) else np.empty(0, np.int64)
        self._lin, self._start = np.unique(lin, return_index=True)
        self._stop = np.append(self._start[1:], len(lin)).astype(np.int64)

    @property
    def n_entries(self):
        return len(self.owners)

    @property
    def n_keys(self):
        return self._lin.size

    def key_coords(self):
        return np.stack(np.unravel_index(self._lin, self.dims), axis=1)

    def group_sizes(self):
        return self._stop - self._start

    def group_index(self):
        """Group id of every entry (entries are sorted by key)."""
        return np.repeat(np.arange(self.n_keys), self.group_sizes())

    def partners_of(self, index):
        """List of ``(partner, owner)`` for edge ``index`` (empty if not in any active polyad)."""
        index = tuple(int(v) for v in index)
        if len(index) != len(self.dims) or any(not 0 <= v < n for v, n in zip(index, self.dims)):
            return []
        q = np.ravel_multi_index(index, self.dims)
        k = np.searchsorted(self._lin, q)
        if k >= self._lin.size or self._lin[k] != q:
            return []
        sl = slice(self._start[k], self._stop[k])
        return [(tuple(p), int(o)) for p, o in zip(self.partners[sl].tolist(), self.owners[sl])]

    def __contains__(self, index):
        return bool(self.partners_of(index))

    def __len__(self):
        return self.n_keys


def build_incidence(records, dims=None):
    """Incidence index over all ``2**D`` permutations of every record."""
    D = records.D
    if dims is None:
        dims = tuple(int(v) + 1 for v in np.maximum(records.top, records.bottom).max(axis=0)) if len(records) else (1,) * D
    full = 2**D - 1
    edges = records.edges()                       # (N, 2^D, D)
    partners = edges[:, full - np.arange(2**D)]   # complement selector
    owners = np.repeat(np.arange(len(records)), 2**D)
    return PolyadIncidence(edges.reshape(-1, D), partners.reshape(-1, D), owners, dims)
