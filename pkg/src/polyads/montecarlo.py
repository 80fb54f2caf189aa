"""Replicated simulation runs comparing the polyad estimator with PPML."""

from __future__ import annotations

import io
import time
import warnings
from dataclasses import asdict, dataclass, replace

import numpy as np
from joblib import Parallel, delayed

from .baseline import PPMLRegressor
from .exceptions import PolyadsError
from .model import PolyadPoissonRegressor
from .simulate import ThreeWayDesign, calibrate_intercept, generate_three_way, sparse_target_density

__all__ = ["BenchConfig", "run_replication", "run_bench", "summarize", "format_table", "format_long"]

ESTIMATORS = ("polyads", "ppml")


@dataclass(frozen=True)
class BenchConfig:
    """One cell of a benchmark grid.  ``density=None`` selects the sparse regime ``|E| ~ 4 sqrt(n)``."""

    n1: int = 30
    n2: int = 30
    n3: int = 5
    density: float | None = 0.10
    noise: str = "poisson"
    rate: float | None = None
    beta_star: float = 1.0

    @property
    def label(self):
        dens = "sparse" if self.density is None else f"{self.density:g}"
        noise = self.noise if self.noise == "poisson" else f"negbin{self.rate:g}"
        return f"{self.n1}x{self.n2}x{self.n3}_{dens}_{noise}"

    def design(self, seed):
        d = ThreeWayDesign(self.n1, self.n2, self.n3, beta_star=self.beta_star, noise=self.noise,
                           rate=self.rate, seed=seed)
        target = sparse_target_density(d.n_cells) if self.density is None else self.density
        return replace(d, intercept_c=calibrate_intercept(d, target))


def run_replication(design, rep, estimators=ESTIMATORS):
    """Fit every estimator on replication ``rep``; failures become rows with ``ok=False``."""
    data = generate_three_way(design, rep)
    beta_star = float(design.beta_star)
    rows = []
    for name in estimators:
        row = {"rep": rep, "estimator": name, "n_edges": data.graph.n_edges, "ok": False,
               "beta_hat": np.nan, "se": np.nan, "covered": np.nan, "converged": False, "n_iter": -1,
               "seconds": np.nan, "error": ""}
        t0 = time.perf_counter()
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                if name == "polyads":
                    m = PolyadPoissonRegressor().fit(data.covariates, data.graph)
                    lo, hi = m.conf_int()[0]
                    row.update(beta_hat=float(m.coef_[0]), se=float(m.standard_errors()[0]),
                               covered=float(lo <= beta_star <= hi), converged=bool(m.converged_),
                               n_iter=int(m.n_iter_))
                elif name == "ppml":
                    m = PPMLRegressor().fit(data.covariates, data.graph)
                    row.update(beta_hat=float(m.coef_[0]), converged=bool(m.converged_), n_iter=int(m.n_iter_))
                else:
                    raise ValueError(f"unknown estimator {name!r}")
            row["ok"] = True
        except (PolyadsError, ValueError, np.linalg.LinAlgError) as exc:
            row["error"] = type(exc).__name__
        row["seconds"] = time.perf_counter() - t0
        rows.append(row)
    return rows


def run_bench(configs, replications, seed=0, estimators=ESTIMATORS, n_jobs=1):
    """Per-replication rows for every config; replications are spread over ``n_jobs`` workers.

    Each replication draws from its own stream ``(seed, rep)``, so results do
    not depend on the number of workers.
    """
    out = []
    for cfg in configs:
        design = cfg.design(seed)
        chunks = Parallel(n_jobs=n_jobs)(
            delayed(run_replication)(design, r, estimators) for r in range(replications)
        )
        for rows in chunks:
            for row in rows:
                row["config"] = cfg.label
                row["beta_star"] = cfg.beta_star
                out.append(row)
    return out


def summarize(rows):
    """Aggregate rows into one record per (config, estimator)."""
    keys = sorted({(r["config"], r["estimator"]) for r in rows})
    table = []
    for cfg, est in keys:
        sel = [r for r in rows if r["config"] == cfg and r["estimator"] == est]
        ok = [r for r in sel if r["ok"]]
        err = np.array([r["beta_hat"] - r["beta_star"] for r in ok])
        cov = np.array([r["covered"] for r in ok if not np.isnan(r["covered"])])
        table.append({
            "config": cfg,
            "estimator": est,
            "replications": len(sel),
            "failures": len(sel) - len(ok),
            "mean_error": float(err.mean()) if err.size else np.nan,
            "median_error": float(np.median(err)) if err.size else np.nan,
            "sd": float(err.std(ddof=1)) if err.size > 1 else np.nan,
            "coverage": float(cov.mean()) if cov.size else np.nan,
            "convergence_rate": float(np.mean([r["converged"] for r in sel])) if sel else np.nan,
            "median_iterations": float(np.median([r["n_iter"] for r in ok if r["converged"]]))
            if any(r["converged"] for r in ok) else np.nan,
            "mean_seconds": float(np.mean([r["seconds"] for r in sel])) if sel else np.nan,
        })
    return table


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "nan" if np.isnan(v) else repr(float(v))
    return str(v)


def _csv(records, columns):
    buf = io.StringIO()
    buf.write(",".join(columns) + "\n")
    for r in records:
        buf.write(",".join(_fmt(r[c]) for c in columns) + "\n")
    return buf.getvalue()


SUMMARY_COLUMNS = ["config", "estimator", "replications", "failures", "mean_error", "median_error", "sd",
                   "coverage", "convergence_rate", "median_iterations", "mean_seconds"]
LONG_COLUMNS = ["config", "estimator", "rep", "beta_star", "beta_hat", "se", "covered", "converged", "n_iter",
                "n_edges", "ok", "error", "seconds"]


def format_table(table, timings=True):
    cols = SUMMARY_COLUMNS if timings else [c for c in SUMMARY_COLUMNS if c != "mean_seconds"]
    return _csv(table, cols)


def format_long(rows, timings=True):
    cols = LONG_COLUMNS if timings else [c for c in LONG_COLUMNS if c != "seconds"]
    order = sorted(rows, key=lambda r: (r["config"], r["estimator"], r["rep"]))
    return _csv(order, cols)


def config_dict(cfg):
    return asdict(cfg)
