"""Synthetic three-way gravity data and node subsampling.

The three-way design has dimensions (exporter i, importer j, period t) with
fixed effects ``u_ij``, ``w_it``, ``v_jt`` and a single covariate that
follows an AR(1) recursion in ``t`` driven by the time-varying effects:

    X_ij1 = w_i1 + v_j1 + s * eps_ij1
    X_ijt = a * X_ij(t-1) + w_it + v_jt + s * eps_ijt        (t > 1)
    lambda_ijt = exp(c + beta * X_ijt + u_ij + w_it + v_jt)

Counts are Poisson(lambda) or a Gamma-Poisson mixture with a unit-mean
Gamma multiplier.  Every random stream is a Philox generator seeded by
``(seed, replication)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import optimize

from .covariates import DenseCovariates, RelabeledCovariates
from .exceptions import CalibrationError, InvalidParameterError, SubsampleError
from .graph import SparseCountGraph
from .meta import MetaResult, meta_analysis

__all__ = [
    "ThreeWayDesign",
    "SimulatedDataset",
    "SubsampleView",
    "make_rng",
    "negbin_draw",
    "generate_three_way",
    "calibrate_intercept",
    "sparse_target_density",
    "subsample_nodes",
    "random_count_graph",
    "random_dense_covariates",
    "meta_analysis",
    "MetaResult",
]

_CALIBRATION_STREAM = 2**31 - 1
_CALIBRATION_CELL_BUDGET = 4_000_000


def make_rng(seed, replication=0):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(replication)])))


@dataclass(frozen=True)
class ThreeWayDesign:
    n1: int
    n2: int
    n3: int = 5
    beta_star: float = 1.0
    fe_std: float = 0.25
    ar_coef: float = 0.5
    noise_scale: float = 0.25
    intercept_c: float = 0.0
    noise: str = "poisson"
    rate: float | None = None
    seed: int = 0

    def __post_init__(self):
        for name in ("n1", "n2", "n3"):
            if int(getattr(self, name)) < 2:
                raise InvalidParameterError(f"{name} must be >= 2")
        if self.fe_std < 0:
            raise InvalidParameterError("fe_std must be >= 0")
        if self.noise not in ("poisson", "negbin"):
            raise InvalidParameterError(f"noise must be 'poisson' or 'negbin', got {self.noise!r}")
        if self.noise == "negbin" and not (self.rate is not None and self.rate > 0):
            raise InvalidParameterError("negbin noise needs rate > 0")

    @property
    def dims(self):
        return (int(self.n1), int(self.n2), int(self.n3))

    @property
    def n_cells(self):
        return int(self.n1) * int(self.n2) * int(self.n3)


@dataclass
class SimulatedDataset:
    graph: SparseCountGraph
    covariates: DenseCovariates
    true_beta: np.ndarray
    realized_density: float
    intercept_c: float
    latent: dict = field(default_factory=dict, repr=False)


def negbin_draw(lam, rate, rng):
    """Gamma-Poisson draws with mean ``lam`` and variance ``lam + lam**2 / rate``."""
    lam = np.asarray(lam, dtype=float)
    if not np.all(lam > 0):
        raise InvalidParameterError("lambda must be > 0")
    if not rate > 0:
        raise InvalidParameterError("rate must be > 0")
    g = rng.gamma(shape=rate, scale=1.0 / rate, size=lam.shape)
    return rng.poisson(lam * g)


def _latent(design, rng):
    n1, n2, n3 = design.dims
    s = design.fe_std
    u = rng.normal(0.0, 1.0, size=(n1, n2)) * s
    w = rng.normal(0.0, 1.0, size=(n1, n3)) * s
    v = rng.normal(0.0, 1.0, size=(n2, n3)) * s
    eps = rng.normal(0.0, 1.0, size=(n1, n2, n3))
    wv = w[:, None, :] + v[None, :, :]
    X = np.empty((n1, n2, n3))
    X[..., 0] = wv[..., 0] + design.noise_scale * eps[..., 0]
    for t in range(1, n3):
        X[..., t] = design.ar_coef * X[..., t - 1] + wv[..., t] + design.noise_scale * eps[..., t]
    eta = design.beta_star * X + u[:, :, None] + wv
    return {"u": u, "w": w, "v": v, "eps": eps, "X": X, "eta": eta}


def generate_three_way(design, replication=0):
    """One draw of the three-way design."""
    rng = make_rng(design.seed, replication)
    lat = _latent(design, rng)
    lam = np.exp(design.intercept_c + lat["eta"])
    if design.noise == "poisson":
        y = rng.poisson(lam)
    else:
        y = negbin_draw(lam, design.rate, rng)
    graph = SparseCountGraph.from_dense(y)
    return SimulatedDataset(
        graph=graph,
        covariates=DenseCovariates(lat["X"][..., None]),
        true_beta=np.array([float(design.beta_star)]),
        realized_density=graph.n_edges / design.n_cells,
        intercept_c=float(design.intercept_c),
        latent=lat,
    )


def _hit_probability(lam, design):
    if design.noise == "poisson":
        return -np.expm1(-lam)
    r = design.rate
    return -np.expm1(-r * np.log1p(lam / r))


def sparse_target_density(n_cells, k=4.0):
    """Density giving ``|E| ~ k * sqrt(n)``."""
    return k * np.sqrt(n_cells) / n_cells


def calibrate_intercept(design, target_density, n_draws=64, seed=None, bracket=(-30.0, 30.0)):
    """Intercept ``c`` whose expected density matches ``target_density``.

    The expectation of ``1{Y > 0}`` is averaged over ``n_draws`` independent
    fixed-effect/covariate draws using the exact hit probability given
    ``lambda``, then inverted by root finding on ``c``.  For large designs
    the number of draws is reduced to keep the work under a fixed cell
    budget.
    """
    if not 0 < target_density < 1:
        raise InvalidParameterError("target_density must lie in (0, 1)")
    n_draws = max(1, min(int(n_draws), _CALIBRATION_CELL_BUDGET // design.n_cells))
    seed = design.seed if seed is None else seed
    etas = []
    for k in range(n_draws):
        rng = make_rng(seed, _CALIBRATION_STREAM - k)
        etas.append(_latent(design, rng)["eta"].ravel())
    base = np.exp(np.concatenate(etas))

    def gap(c):
        return float(np.mean(_hit_probability(np.exp(c) * base, design))) - target_density

    lo, hi = bracket
    g_lo, g_hi = gap(lo), gap(hi)
    if g_lo > 0 or g_hi < 0:
        raise CalibrationError(
            f"target density {target_density} unreachable for c in [{lo}, {hi}] "
            f"(densities {g_lo + target_density:.3g} .. {g_hi + target_density:.3g})"
        )
    return float(optimize.brentq(gap, lo, hi, xtol=1e-12, rtol=1e-12))


def calibrated_design(design, target_density, **kwargs):
    return replace(design, intercept_c=calibrate_intercept(design, target_density, **kwargs))


@dataclass
class SubsampleView:
    graph: SparseCountGraph
    covariates: RelabeledCovariates
    node_maps: list


def subsample_nodes(graph, cov, proportions, rng):
    """Keep ``round(p_d * n_d)`` random nodes per dimension and the edges among them.

    Nodes are relabeled densely in increasing order of their original ids;
    ``node_maps[d][new] = old``.  Dimensions with proportion 1 are kept whole.
    """
    if len(proportions) != graph.D:
        raise InvalidParameterError(f"need {graph.D} proportions, got {len(proportions)}")
    maps = []
    for d, (p, n) in enumerate(zip(proportions, graph.dims)):
        if not 0 < p <= 1:
            raise InvalidParameterError(f"proportion {p} for dimension {d} not in (0, 1]")
        if p == 1:
            maps.append(np.arange(n, dtype=np.int64))
            continue
        k = int(round(p * n))
        if k < 2:
            raise SubsampleError(f"dimension {d}: only {k} of {n} nodes would survive, need at least 2")
        maps.append(np.sort(rng.choice(n, size=k, replace=False)).astype(np.int64))
    new_dims = tuple(m.size for m in maps)
    coords = graph.coords
    keep = np.ones(coords.shape[0], dtype=bool)
    new = np.empty_like(coords)
    for d, m in enumerate(maps):
        pos = np.searchsorted(m, coords[:, d])
        hit = (pos < m.size) & (m[np.minimum(pos, m.size - 1)] == coords[:, d])
        keep &= hit
        new[:, d] = pos
    sub = SparseCountGraph(new_dims, new[keep], graph.counts[keep], adjacency=graph.adjacency_mode)
    return SubsampleView(sub, RelabeledCovariates(cov, maps), maps)


def random_count_graph(dims, rng, density=0.5, max_count=3):
    """Random graph with i.i.d. cells: positive with probability ``density``, uniform on ``1..max_count``."""
    dims = tuple(int(n) for n in dims)
    mask = rng.random(dims) < density
    y = rng.integers(1, max_count + 1, size=dims) * mask
    return SparseCountGraph.from_dense(y)


def random_dense_covariates(dims, p, rng, scale=1.0):
    return DenseCovariates(rng.normal(0.0, scale, size=tuple(dims) + (p,)))
