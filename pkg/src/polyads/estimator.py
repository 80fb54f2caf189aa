"""Conditional-logit loss on polyad orbits and its Newton minimization.

Given an active polyad with orbit bounds ``(m, M)``, the observed minimum
``m`` is conditionally distributed over ``0..m+M`` with log-weights

    v(t) = t * beta'X~ - sum_i log(ybar_i^t !)

where ``ybar^t`` is the orbit element whose +1 edges have minimum ``t``.  The
increments ``v(t) - v(t-1)`` only need ``log`` of counts, so weights are
accumulated by a cumulative sum instead of log-factorials.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .exceptions import CollinearityError, InvalidParameterError
from .graph import selector_signs

__all__ = [
    "MomentPair",
    "FitConfig",
    "FitResult",
    "orbit_window",
    "evaluate_moments",
    "batch_moments",
    "polyad_loss",
    "loss_gradient_hessian",
    "check_identification",
    "newton_fit",
]

_CHUNK = 1 << 14


@dataclass(frozen=True)
class MomentPair:
    mu: float
    sigma2: float


@dataclass
class FitConfig:
    """Settings for :func:`newton_fit`.

    ``truncation_L`` caps the number of orbit states summed per polyad,
    ``ridge_epsilon`` is added to the Hessian diagonal, ``damped`` enables step
    halving until the loss decreases.  ``scale_by_permutations`` multiplies
    the loss by ``2**D`` so it equals the sum over all active polyads.
    """

    max_iterations: int = 50
    gradient_tolerance: float = 1e-8
    truncation_L: int = 100
    ridge_epsilon: float = 0.0
    deterministic_reduction: bool = True
    damped: bool = False
    scale_by_permutations: bool = True

    def __post_init__(self):
        if self.max_iterations < 1:
            raise InvalidParameterError("max_iterations must be >= 1")
        if self.truncation_L < 2:
            raise InvalidParameterError("truncation_L must be >= 2")
        if not self.gradient_tolerance > 0:
            raise InvalidParameterError("gradient_tolerance must be > 0")
        if self.ridge_epsilon < 0:
            raise InvalidParameterError("ridge_epsilon must be >= 0")


@dataclass
class FitResult:
    beta_hat: np.ndarray
    gradient_norm: float
    hessian: np.ndarray
    n_active: int
    iterations: list = field(default_factory=list)
    converged: bool = False
    loss: float = float("nan")

    @property
    def n_iter(self):
        return len(self.iterations) - 1


def orbit_window(m, M, L):
    """First and last orbit state summed over: the full orbit unless it exceeds ``L`` states."""
    m = np.asarray(m, dtype=np.int64)
    M = np.asarray(M, dtype=np.int64)
    half = L // 2
    big = (m + M + 1) > L
    lo = np.where(big, m - np.minimum(half, m), 0)
    hi = np.where(big, m + np.minimum(half, M), m + M)
    return lo, hi


def _check_beta(beta):
    beta = np.asarray(beta, dtype=float).ravel()
    if not np.all(np.isfinite(beta)):
        raise InvalidParameterError(f"beta has non-finite entries: {beta}")
    return beta


def batch_moments(edge_counts, m, M, eta, L=100):
    """Conditional mean, variance and loss of ``m(Y)`` for many polyads.

    Parameters
    ----------
    edge_counts : int array (N, 2**D), counts in selector order
    m, M : int arrays (N,)
    eta : float array (N,), the linear index ``beta'X~`` of each polyad
    L : int, truncation threshold on the orbit size

    Returns
    -------
    mu, sigma2, loss : float arrays (N,)
    """
    edge_counts = np.asarray(edge_counts, dtype=np.int64)
    N, S = edge_counts.shape
    D = S.bit_length() - 1
    signs = selector_signs(D)
    y_pos = edge_counts[:, signs > 0].astype(float)
    y_neg = edge_counts[:, signs < 0].astype(float)
    m = np.asarray(m, dtype=np.int64)
    eta = np.asarray(eta, dtype=float)
    lo, hi = orbit_window(m, M, L)
    width = hi - lo + 1

    mu = np.zeros(N)
    sigma2 = np.zeros(N)
    loss = np.zeros(N)
    for w in np.unique(width):
        idx = np.flatnonzero(width == w)
        if w == 1:
            mu[idx] = m[idx]
            continue
        j = np.arange(1, w)
        # r = t - m for the states t = lo + j
        r = (lo[idx] - m[idx])[:, None] + j[None, :]
        inc = (
            eta[idx, None]
            + np.log(y_neg[idx, :, None] - (r - 1)[:, None, :]).sum(axis=1)
            - np.log(y_pos[idx, :, None] + r[:, None, :]).sum(axis=1)
        )
        v = np.zeros((idx.size, w))
        np.cumsum(inc, axis=1, out=v[:, 1:])
        jmax = np.argmax(v, axis=1)
        vmax = v[np.arange(idx.size), jmax]
        e = np.exp(v - vmax[:, None])
        Z = e.sum(axis=1)
        p = e / Z[:, None]
        t = lo[idx, None] + np.arange(w)[None, :]
        mu_g = (p * t).sum(axis=1)
        mu[idx] = mu_g
        sigma2[idx] = (p * (t - mu_g[:, None]) ** 2).sum(axis=1)
        e[np.arange(idx.size), jmax] = 0.0
        j_obs = m[idx] - lo[idx]
        v_obs = v[np.arange(idx.size), j_obs]
        loss[idx] = (vmax - v_obs) + np.log1p(e.sum(axis=1))
    return mu, sigma2, loss


def _record_fields(rec):
    return (
        np.asarray(rec.edge_counts, dtype=np.int64)[None, :],
        np.array([rec.m]),
        np.array([rec.M]),
        np.asarray(rec.did, dtype=float),
    )


def evaluate_moments(rec, beta, L=100):
    """Conditional mean and variance of ``m(Y)`` on the orbit of one record."""
    beta = _check_beta(beta)
    counts, m, M, did = _record_fields(rec)
    if m[0] + M[0] < 1:
        raise InvalidParameterError("moments are only defined for active polyads")
    mu, s2, _ = batch_moments(counts, m, M, np.array([did @ beta]), L)
    return MomentPair(float(mu[0]), float(s2[0]))


def polyad_loss(rec, beta, L=100):
    """Negative log conditional probability of the observed orbit state."""
    beta = _check_beta(beta)
    counts, m, M, did = _record_fields(rec)
    _, _, loss = batch_moments(counts, m, M, np.array([did @ beta]), L)
    return float(loss[0])


def _reduce(did, loss, resid, sigma2, deterministic):
    """``(sum loss, sum resid x, sum sigma2 x x')``, in fixed chunks when deterministic."""
    if not deterministic or did.shape[0] <= _CHUNK:
        return loss.sum(), did.T @ resid, (did * sigma2[:, None]).T @ did
    parts_l, parts_g, parts_h = [], [], []
    for s in range(0, did.shape[0], _CHUNK):
        x = did[s:s + _CHUNK]
        parts_l.append(loss[s:s + _CHUNK].sum())
        parts_g.append(x.T @ resid[s:s + _CHUNK])
        parts_h.append((x * sigma2[s:s + _CHUNK, None]).T @ x)
    # partial sums combined left to right, independent of how chunks were computed
    return (
        np.add.reduce(np.array(parts_l)),
        np.add.reduce(np.array(parts_g), axis=0),
        np.add.reduce(np.array(parts_h), axis=0),
    )


def loss_gradient_hessian(records, beta, L=100, deterministic=True, scale_by_permutations=True):
    """Total loss, gradient and Hessian over the canonical records.

    With ``scale_by_permutations`` the sums are multiplied by ``2**D``, the
    number of permutations represented by each canonical record, which gives
    the loss summed over all active polyads.
    """
    beta = _check_beta(beta)
    did = records.did
    if did.shape[1] != beta.size:
        raise InvalidParameterError(f"beta has {beta.size} entries, records have p={did.shape[1]}")
    mu, sigma2, loss = batch_moments(records.edge_counts, records.m, records.M, did @ beta, L)
    total, grad, hess = _reduce(did, loss, mu - records.m, sigma2, deterministic)
    scale = float(2**records.D) if scale_by_permutations else 1.0
    hess = 0.5 * (hess + hess.T)
    return scale * float(total), scale * grad, scale * hess


def check_identification(records, rtol=1e-12):
    """Raise :class:`CollinearityError` unless ``sum X~ X~'`` is positive definite."""
    did = records.did
    G = did.T @ did
    w, V = np.linalg.eigh(G)
    tr = float(np.trace(G))
    if tr <= 0 or w[0] <= rtol * tr:
        direction = V[:, 0]
        raise CollinearityError(
            "DiD features are collinear; the loss is flat along direction "
            f"{np.array2string(direction, precision=4)}",
            null_direction=direction,
        )


def _newton_step(H, g):
    w = np.linalg.eigvalsh(H)
    tr = float(np.trace(H))
    if tr <= 0 or w[0] < 1e-12 * tr:
        warnings.warn("near-singular Hessian; using a pseudo-inverse Newton step", RuntimeWarning, stacklevel=3)
        return np.linalg.pinv(H, hermitian=True) @ g
    return linalg.cho_solve(linalg.cho_factor(H), g)


def newton_fit(records, config=None, beta0=None):
    """Minimize the polyad loss by Newton's method from ``beta0`` (zeros by default).

    Non-convergence is reported through ``FitResult.converged``, not raised.
    """
    config = config or FitConfig()
    p = records.n_features
    if len(records) == 0:
        raise ValueError("no active polyads: the loss is identically zero")
    if config.ridge_epsilon == 0:
        check_identification(records)
    beta = np.zeros(p) if beta0 is None else _check_beta(beta0).copy()
    if beta.size != p:
        raise InvalidParameterError(f"beta0 has {beta.size} entries, expected {p}")

    def evaluate(b):
        return loss_gradient_hessian(
            records, b, config.truncation_L, config.deterministic_reduction, config.scale_by_permutations
        )

    ridge = config.ridge_epsilon * np.eye(p)
    trace = []
    converged = False
    loss, g, H = evaluate(beta)
    for it in range(config.max_iterations + 1):
        gnorm = float(np.max(np.abs(g)))
        trace.append((beta.copy(), loss, gnorm))
        if gnorm <= config.gradient_tolerance:
            converged = True
            break
        if it == config.max_iterations:
            break
        step = _newton_step(H + ridge, g)
        new = beta - step
        new_loss, new_g, new_H = evaluate(new)
        if config.damped:
            halvings = 0
            while not new_loss <= loss and halvings < 40:
                step = 0.5 * step
                new = beta - step
                new_loss, new_g, new_H = evaluate(new)
                halvings += 1
        beta, loss, g, H = new, new_loss, new_g, new_H

    return FitResult(
        beta_hat=beta,
        gradient_norm=trace[-1][2],
        hessian=H,
        n_active=records.n_active if config.scale_by_permutations else len(records),
        iterations=trace,
        converged=converged,
        loss=loss,
    )
