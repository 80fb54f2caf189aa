"""Brute-force reference implementations for tests.

Nothing here reuses the production code paths: signs, orbit bounds, edge
sets and weights are recomputed from definitions with plain Python loops and
``math.lgamma``.  Only the graph's edge dictionary and the covariate
provider's scalar lookups are read.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .exceptions import ResourceGuardError

__all__ = [
    "OrbitEnumeration",
    "brute_sign",
    "brute_degrees",
    "brute_orbit",
    "brute_conditional_distribution",
    "brute_moments",
    "brute_loss",
    "brute_active_polyads",
    "brute_canonical",
    "brute_pair_covariance",
    "brute_edge_scores",
    "brute_omega",
]


def brute_sign(top, bottom, index):
    s = 1
    for i, j, jp in zip(index, top, bottom):
        s *= int(i == j) - int(i == jp)
    return s


def _edges(top, bottom):
    return list(itertools.product(*[(a, b) for a, b in zip(top, bottom)]))


def brute_degrees(y, dims, levels):
    """Degrees by summing over every cell of the full index set."""
    out = {}
    for g in levels:
        axes = sorted(g)
        acc = {}
        for cell in itertools.product(*[range(n) for n in dims]):
            rho = tuple(cell[d] for d in axes)
            acc[rho] = acc.get(rho, 0) + y.get(cell, 0)
        out[frozenset(g)] = {k: v for k, v in acc.items() if v}
    return out


@dataclass
class OrbitEnumeration:
    """Orbit states ``r = -m..M`` with the polyad-restricted graph and log weight."""

    r: list
    subgraphs: list
    log_weights: list


def _xvec(cov, index):
    return np.asarray(cov.values(np.asarray([index], dtype=np.int64))[0], dtype=float)


def brute_orbit(y, top, bottom, cov, beta):
    """Enumerate the orbit of ``y`` under the polyad ``(top, bottom)``.

    The log weight of state ``y'`` is ``sum_i y'_i beta'X_i - log y'_i!`` over
    the polyad's edges, i.e. the Poisson log-likelihood up to terms constant
    on the orbit.
    """
    beta = np.asarray(beta, dtype=float)
    edges = _edges(top, bottom)
    signs = [brute_sign(top, bottom, e) for e in edges]
    vals = [y.get(e, 0) for e in edges]
    m = min(v for v, s in zip(vals, signs) if s == 1)
    M = min(v for v, s in zip(vals, signs) if s == -1)
    lin = [float(_xvec(cov, e) @ beta) for e in edges]
    rs, subs, lws = [], [], []
    for r in range(-m, M + 1):
        new = [v + r * s for v, s in zip(vals, signs)]
        lw = sum(c * a - math.lgamma(c + 1) for c, a in zip(new, lin))
        rs.append(r)
        subs.append(dict(zip(edges, new)))
        lws.append(lw)
    return OrbitEnumeration(rs, subs, lws)


def brute_conditional_distribution(y, top, bottom, cov, beta):
    """Probabilities over orbit states ``r = -m..M`` (``r = 0`` is the observed graph)."""
    orb = brute_orbit(y, top, bottom, cov, beta)
    lw = np.array(orb.log_weights)
    w = np.exp(lw - lw.max())
    return np.array(orb.r), w / w.sum()


def brute_moments(y, top, bottom, cov, beta):
    """``(mu, sigma2, loss)`` of the observed minimum over +1 edges.

    State ``r`` has +1-minimum ``m + r``.
    """
    orb = brute_orbit(y, top, bottom, cov, beta)
    r = np.array(orb.r, dtype=float)
    lw = np.array(orb.log_weights)
    k = int(np.argmax(lw))
    w = np.exp(lw - lw[k])
    p = w / w.sum()
    m = -r[0]
    t = r + m
    mu = float(np.sum(p * t))
    sigma2 = float(np.sum(p * (t - mu) ** 2))
    others = math.fsum(np.delete(w, k))
    i0 = int(np.flatnonzero(r == 0)[0])
    loss = (lw[k] - lw[i0]) + math.log1p(others)
    return mu, sigma2, loss


def brute_loss(y, top, bottom, cov, beta):
    return brute_moments(y, top, bottom, cov, beta)[2]


def _all_polyads(dims):
    per_dim = [[(a, b) for a in range(n) for b in range(n) if a != b] for n in dims]
    for combo in itertools.product(*per_dim):
        yield tuple(c[0] for c in combo), tuple(c[1] for c in combo)


def _bounds(y, top, bottom):
    edges = _edges(top, bottom)
    pos = [y.get(e, 0) for e in edges if brute_sign(top, bottom, e) == 1]
    neg = [y.get(e, 0) for e in edges if brute_sign(top, bottom, e) == -1]
    return min(pos), min(neg)


def brute_canonical(y, top, bottom):
    """The canonical permutation of an active polyad, found by trying all flips."""
    D = len(top)
    found = []
    for mask in range(2**D):
        t = tuple(bottom[d] if mask >> d & 1 else top[d] for d in range(D))
        b = tuple(top[d] if mask >> d & 1 else bottom[d] for d in range(D))
        m, M = _bounds(y, t, b)
        if all(t[d] < b[d] for d in range(1, D)) and m > 0 and (M == 0 or t[0] < b[0]):
            found.append((t, b))
    if len(found) != 1:
        raise AssertionError(f"{len(found)} canonical forms for {(top, bottom)}")
    return found[0]


def brute_active_polyads(y, dims, max_polyads=10**7):
    """Set of canonical active polyads, by scanning every polyad of the index set."""
    total = 1
    for n in dims:
        total *= n * (n - 1)
    if total > max_polyads:
        raise ResourceGuardError(f"{total} polyads exceed max_polyads={max_polyads}")
    out = set()
    for top, bottom in _all_polyads(dims):
        m, M = _bounds(y, top, bottom)
        if m + M >= 1:
            out.add(brute_canonical(y, top, bottom))
    return out


def _all_permutations(top, bottom):
    D = len(top)
    for mask in range(2**D):
        t = tuple(bottom[d] if mask >> d & 1 else top[d] for d in range(D))
        b = tuple(top[d] if mask >> d & 1 else bottom[d] for d in range(D))
        yield t, b


def _polyad_gradients(y, polyads, cov, beta):
    out = []
    for top, bottom in polyads:
        mu, _, _ = brute_moments(y, top, bottom, cov, beta)
        m, _ = _bounds(y, top, bottom)
        xt = sum(brute_sign(top, bottom, e) * _xvec(cov, e) for e in _edges(top, bottom))
        out.append((mu - m) * xt)
    return out


def _expand(polyads):
    full = []
    for top, bottom in polyads:
        full.extend(_all_permutations(top, bottom))
    return full


def brute_pair_covariance(y, polyads, cov, beta, max_pairs=10**7):
    """Sum of ``grad_xi grad_xi'^T`` over ordered pairs of active polyads sharing an edge.

    ``polyads`` lists one representative per active polyad; all permutations
    are expanded here, so the pairs range over every active polyad.
    """
    full = _expand(polyads)
    if len(full) ** 2 > max_pairs:
        raise ResourceGuardError(f"{len(full) ** 2} polyad pairs exceed max_pairs={max_pairs}")
    grads = _polyad_gradients(y, full, cov, beta)
    edge_sets = [set(_edges(t, b)) for t, b in full]
    p = len(np.atleast_1d(grads[0])) if grads else 1
    out = np.zeros((p, p))
    for a in range(len(full)):
        for b in range(len(full)):
            if edge_sets[a] & edge_sets[b]:
                out += np.outer(grads[a], grads[b])
    return out


def brute_edge_scores(y, polyads, cov, beta):
    """For every edge, the sum of gradients of all active polyads (all permutations) containing it."""
    full = _expand(polyads)
    grads = _polyad_gradients(y, full, cov, beta)
    scores = {}
    for (t, b), g in zip(full, grads):
        for e in _edges(t, b):
            scores[e] = scores.get(e, 0) + g
    return scores


def brute_omega(y, polyads, cov, beta):
    scores = brute_edge_scores(y, polyads, cov, beta)
    vals = list(scores.values())
    p = len(np.atleast_1d(vals[0])) if vals else 1
    out = np.zeros((p, p))
    for s in vals:
        out += np.outer(s, s)
    return out
