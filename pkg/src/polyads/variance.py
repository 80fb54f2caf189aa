"""Sandwich covariance estimators built from edge-keyed polyad gradients.

Both middle matrices are sums over edges ``i`` that lie in some active
polyad.  For each such edge the incidence index lists the partners ``i'``
with ``(i, i')`` active; each entry carries the gradient of its canonical
record, which is the same for every permutation of the polyad.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .enumeration import build_incidence
from .estimator import batch_moments, loss_gradient_hessian
from .exceptions import CollinearityError, ResourceGuardError

__all__ = [
    "CovarianceResult",
    "polyad_gradients",
    "edge_scores",
    "omega_hat",
    "omega_prime_hat",
    "sandwich",
    "ci",
    "compute_covariance",
]

DEFAULT_MAX_PAIR_ENTRIES = 10**8
_BLOCK_ENTRIES = 1 << 20


@dataclass
class CovarianceResult:
    gamma_hat: np.ndarray
    omega_hat: np.ndarray
    omega_prime_hat: np.ndarray | None
    sigma_hat: np.ndarray
    sigma_prime_hat: np.ndarray | None
    ci_95: np.ndarray
    ci_95_edge: np.ndarray
    counters: dict = field(default_factory=dict)


def polyad_gradients(records, beta, L=100):
    """Unscaled gradient ``(mu - m) X~`` of every canonical record at ``beta``."""
    beta = np.asarray(beta, dtype=float).ravel()
    mu, _, _ = batch_moments(records.edge_counts, records.m, records.M, records.did @ beta, L)
    return (mu - records.m)[:, None] * records.did


def edge_scores(incidence, gradients, D):
    """Per-edge scores ``S_i = 2**D * sum of gradients of polyads (i, i')``.

    Returns ``(coords, scores)`` with ``coords`` of shape ``(n_keys, D)``
    sorted by linear key and ``scores`` of shape ``(n_keys, p)``.
    """
    gradients = np.asarray(gradients, dtype=float)
    p = gradients.shape[1]
    if incidence.n_entries == 0:
        return np.empty((0, D), dtype=np.int64), np.empty((0, p))
    g = gradients[incidence.owners]
    starts = np.concatenate([[0], np.cumsum(incidence.group_sizes())[:-1]])
    S = np.add.reduceat(g, starts, axis=0) * float(2**D)
    return incidence.key_coords(), S


def omega_hat(scores):
    """``sum_i S_i S_i'``."""
    scores = np.asarray(scores, dtype=float)
    if scores.ndim == 1:
        scores = scores[:, None]
    out = np.zeros((scores.shape[1], scores.shape[1]))
    for s in range(0, scores.shape[0], _BLOCK_ENTRIES):
        blk = scores[s:s + _BLOCK_ENTRIES]
        out += blk.T @ blk
    return 0.5 * (out + out.T)


def pair_entry_count(incidence):
    """Number of ``(i', i'')`` pairs visited by :func:`omega_prime_hat`."""
    k = incidence.group_sizes().astype(np.int64)
    return int(np.sum(k * k))


def omega_prime_hat(incidence, gradients, D, max_pair_entries=DEFAULT_MAX_PAIR_ENTRIES):
    """Pair sum weighted by the number of permutations each representation stands for.

    For every edge ``i`` and every two partners ``i', i''`` the term
    ``g' g''^T`` gets weight ``2**(D + #{d : i'_d != i''_d})``.
    """
    gradients = np.asarray(gradients, dtype=float)
    p = gradients.shape[1]
    out = np.zeros((p, p))
    total = pair_entry_count(incidence)
    if total > max_pair_entries:
        raise ResourceGuardError(f"{total} partner pairs exceed max_pair_entries={max_pair_entries}")
    if incidence.n_entries == 0:
        return out
    sizes = incidence.group_sizes()
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    g_all = gradients[incidence.owners]
    for k in np.unique(sizes):
        first = starts[sizes == k]
        per_block = max(1, _BLOCK_ENTRIES // int(k * k))
        for s in range(0, first.size, per_block):
            rows = first[s:s + per_block, None] + np.arange(k)[None, :]
            G = g_all[rows]                              # (n, k, p)
            P = incidence.partners[rows]                 # (n, k, D)
            ham = (P[:, :, None, :] != P[:, None, :, :]).sum(axis=3)
            W = np.ldexp(1.0, D + ham)                   # (n, k, k)
            out += np.einsum("nap,nab,nbq->pq", G, W, G)
    return 0.5 * (out + out.T)


def sandwich(gamma, omega):
    """``Gamma^{-1} Omega Gamma^{-1}``; raises on a singular ``Gamma``."""
    gamma = np.atleast_2d(np.asarray(gamma, dtype=float))
    omega = np.atleast_2d(np.asarray(omega, dtype=float))
    w, V = np.linalg.eigh(0.5 * (gamma + gamma.T))
    scale = max(float(np.max(np.abs(w))), np.finfo(float).tiny)
    if w[0] <= 1e-12 * scale:
        raise CollinearityError(
            "Hessian is singular at the estimate; features are collinear on the active polyads",
            null_direction=V[:, 0],
        )
    inv = np.linalg.inv(gamma)
    out = inv @ omega @ inv
    return 0.5 * (out + out.T)


def ci(sigma, beta, level=0.95):
    """Normal intervals ``beta_k -/+ z * sqrt(sigma_kk)`` as an array of shape ``(p, 2)``."""
    beta = np.asarray(beta, dtype=float).ravel()
    z = 1.96 if level == 0.95 else float(stats.norm.ppf(0.5 + level / 2))
    se = np.sqrt(np.clip(np.diag(np.atleast_2d(sigma)), 0.0, None))
    return np.column_stack([beta - z * se, beta + z * se])


def compute_covariance(records, beta, L=100, incidence=None, dims=None,
                       max_pair_entries=DEFAULT_MAX_PAIR_ENTRIES, level=0.95):
    """Hessian, both middle matrices and both sandwiches at ``beta``.

    If the pair count of the second middle matrix exceeds ``max_pair_entries``
    only the edge-score version is returned and a warning is issued.
    """
    D = records.D
    if incidence is None:
        incidence = build_incidence(records, dims)
    _, _, gamma = loss_gradient_hessian(records, beta, L)
    grads = polyad_gradients(records, beta, L)
    _, S = edge_scores(incidence, grads, D)
    omega = omega_hat(S)
    counters = {"score_entries": incidence.n_entries, "n_keys": incidence.n_keys,
                "pair_entries": pair_entry_count(incidence)}
    sigma = sandwich(gamma, omega)
    try:
        omega_p = omega_prime_hat(incidence, grads, D, max_pair_entries)
        sigma_p = sandwich(gamma, omega_p)
    except ResourceGuardError as exc:
        warnings.warn(f"skipping pair-sum covariance: {exc}", RuntimeWarning, stacklevel=2)
        omega_p = sigma_p = None
    ci_edge = ci(sigma, beta, level)
    ci_main = ci(sigma_p, beta, level) if sigma_p is not None else ci_edge
    return CovarianceResult(gamma, omega, omega_p, sigma, sigma_p, ci_main, ci_edge, counters)
