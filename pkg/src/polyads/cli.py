"""Command-line interface: ``polyads {fit,simulate,bench,meta}``.

Every command prints structured ``key=value`` lines, starting with the
library version and the effective configuration.  Settings come from
built-in defaults, then an optional ``--config`` file of ``key=value``
lines, then explicit flags.

Exit codes: 0 success, 2 input error, 3 non-convergence, 4 resource guard.
"""

from __future__ import annotations

import argparse
import os
import sys
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .exceptions import (
    CalibrationError,
    CollinearityError,
    MissingCovariateError,
    PolyadsError,
    ResourceGuardError,
)

EXIT_OK, EXIT_INPUT, EXIT_NONCONVERGED, EXIT_RESOURCE = 0, 2, 3, 4
WORKERS_ENV = "POLYADS_WORKERS"
MAX_LISTED_MISSING = 100


def _bool(v):
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _opt_float(v):
    return None if v is None or str(v).lower() in ("", "none") else float(v)


def _default_workers():
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


# name -> (type, default); defaults may be callables evaluated lazily
SETTINGS = {
    "fit": {
        "edges": (str, None), "covariates": (str, None), "output": (str, None),
        "max_iter": (int, 50), "tol": (float, 1e-8), "truncation_L": (int, 100), "ridge": (float, 0.0),
        "damped": (_bool, False), "enumeration": (str, "sorted"), "workers": (int, _default_workers),
        "deterministic": (_bool, False), "max_records": (int, 10**8), "max_pair_entries": (int, 10**8),
    },
    "simulate": {
        "n1": (int, 30), "n2": (int, 30), "n3": (int, 5), "beta_star": (float, 1.0), "fe_std": (float, 0.25),
        "noise": (str, "poisson"), "rate": (_opt_float, None), "density": (_opt_float, 0.1),
        "sparse_regime": (_bool, False), "intercept": (_opt_float, None), "seed": (int, 0),
        "replication": (int, 0), "out_dir": (str, "."),
    },
    "bench": {
        "grid": (str, "30x30x5:0.1:poisson"), "replications": (int, 200), "seed": (int, 0),
        "estimators": (str, "polyads,ppml"), "workers": (int, _default_workers),
        "deterministic": (_bool, False), "output": (str, None), "long_output": (str, None),
    },
    "meta": {"results": (str, None), "output": (str, None)},
}

REQUIRED = {"fit": ("edges", "covariates"), "meta": ("results",)}


class InputError(Exception):
    pass


def read_config_file(path):
    out = {}
    for n, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, eq, value = line.partition("=")
        if not eq:
            raise InputError(f"{path}:{n}: expected key=value")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def resolve(command, args):
    """Merge defaults, config file and flags into a typed settings dict."""
    spec = SETTINGS[command]
    file_values = read_config_file(args.config) if args.config else {}
    unknown = sorted(set(file_values) - set(spec))
    if unknown:
        raise InputError(f"unknown config keys for {command}: {', '.join(unknown)}")
    out = {}
    for key, (typ, default) in spec.items():
        flag = getattr(args, key, None)
        if flag is not None:
            raw = flag
        elif key in file_values:
            raw = file_values[key]
        else:
            raw = default() if callable(default) else default
        try:
            out[key] = None if raw is None else typ(raw)
        except (TypeError, ValueError) as exc:
            raise InputError(f"bad value for {key}: {exc}") from None
    for key in REQUIRED.get(command, ()):
        if out[key] is None:
            raise InputError(f"--{key.replace('_', '-')} is required")
    return out


def build_parser():
    parser = argparse.ArgumentParser(prog="polyads", description="Polyad estimator for multi-way Poisson gravity models")
    parser.add_argument("--version", action="version", version=f"polyads {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {"fit": "fit beta on an edge file", "simulate": "draw a synthetic three-way dataset",
             "bench": "Monte Carlo comparison with PPML", "meta": "random-effects pooling of estimates"}
    for command, spec in SETTINGS.items():
        p = sub.add_parser(command, help=helps[command])
        p.add_argument("--config", default=None, help="file of key=value settings; flags override it")
        for key, (typ, default) in spec.items():
            flag = "--" + key.replace("_", "-")
            if typ is _bool:
                p.add_argument(flag, dest=key, action="store_const", const=True, default=None)
            else:
                shown = "env/1" if callable(default) else default
                p.add_argument(flag, dest=key, default=None, help=f"default: {shown}")
    return parser


class Report:
    def __init__(self, command, settings):
        self.lines = [f"polyads.version={__version__}", f"command={command}"]
        # deterministic reports must not depend on the worker count
        hidden = {"workers"} if settings.get("deterministic") else set()
        for k in sorted(set(settings) - hidden):
            self.lines.append(f"config.{k}={settings[k]}")

    def add(self, key, value):
        if isinstance(value, (float, np.floating)):
            value = repr(float(value))
        elif isinstance(value, (list, tuple, np.ndarray)):
            value = ",".join(repr(float(v)) for v in np.ravel(value))
        self.lines.append(f"{key}={value}")

    def text(self):
        return "\n".join(self.lines) + "\n"

    def emit(self, path=None):
        text = self.text()
        if path:
            Path(path).write_text(text, encoding="utf-8")
        sys.stdout.write(text)


def cmd_fit(s):
    from .io import load_problem
    from .model import PolyadPoissonRegressor

    rep = Report("fit", s)
    data = load_problem(s["edges"], s["covariates"])
    model = PolyadPoissonRegressor(max_iter=s["max_iter"], tol=s["tol"], truncation_L=s["truncation_L"],
                                   ridge=s["ridge"], damped=s["damped"], enumeration=s["enumeration"],
                                   n_jobs=s["workers"], max_records=s["max_records"],
                                   max_pair_entries=s["max_pair_entries"])
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            model.fit(data.covariates, data.graph)
    except MissingCovariateError as exc:
        missing = exc.missing
        rep.add("error", "missing_covariates")
        rep.add("missing.total", len(missing))
        for k, idx in enumerate(missing[:MAX_LISTED_MISSING]):
            orig = tuple(int(data.node_ids[d][v]) for d, v in enumerate(idx))
            rep.add(f"missing[{k}]", ",".join(map(str, orig)))
        rep.emit(s["output"])
        return EXIT_INPUT
    for w in caught:
        rep.add("warning", str(w.message))
    rep.add("dims", ",".join(map(str, data.graph.dims)))
    rep.add("n_edges", data.graph.n_edges)
    rep.add("features", ",".join(data.feature_names))
    rep.add("status", "converged" if model.converged_ else "not_converged")
    rep.add("beta", model.coef_)
    for kind in ("pair", "edge"):
        try:
            ci = model.conf_int(kind=kind)
            rep.add(f"se_{kind}", model.standard_errors(kind))
            rep.add(f"ci95_{kind}.lower", ci[:, 0])
            rep.add(f"ci95_{kind}.upper", ci[:, 1])
        except PolyadsError:
            rep.add(f"ci95_{kind}", "unavailable")
    rep.add("n_active", model.n_active_)
    rep.add("n_canonical", model.n_canonical_)
    rep.add("n_iter", model.n_iter_)
    for k, (b, loss, g) in enumerate(model.iterations_):
        rep.add(f"trace[{k}]", f"beta={','.join(repr(float(v)) for v in b)};loss={float(loss)!r};grad_inf={g!r}")
    for k in sorted(model.stats_):
        if k != "method":
            rep.add(f"counter.{k}", model.stats_[k])
    if not s["deterministic"]:
        for k, v in model.timings_.items():
            rep.add(f"timing.{k}", v)
    rep.emit(s["output"])
    return EXIT_OK if model.converged_ else EXIT_NONCONVERGED


def cmd_simulate(s):
    from .io import write_covariates, write_edges
    from .simulate import ThreeWayDesign, calibrate_intercept, generate_three_way, sparse_target_density

    rep = Report("simulate", s)
    design = ThreeWayDesign(s["n1"], s["n2"], s["n3"], beta_star=s["beta_star"], fe_std=s["fe_std"],
                            noise=s["noise"], rate=s["rate"], seed=s["seed"])
    if s["intercept"] is not None:
        c = s["intercept"]
        target = None
    else:
        target = sparse_target_density(design.n_cells) if s["sparse_regime"] else s["density"]
        c = calibrate_intercept(design, target)
    data = generate_three_way(replace(design, intercept_c=c), s["replication"])
    out = Path(s["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    write_edges(out / "edges.csv", data.graph)
    write_covariates(out / "covariates.csv", design.dims, data.covariates.array)
    rep.add("target_density", "none" if target is None else repr(float(target)))
    rep.add("intercept_c", c)
    rep.add("true_beta", data.true_beta)
    rep.add("realized_density", data.realized_density)
    rep.add("n_edges", data.graph.n_edges)
    rep.add("edges_file", out / "edges.csv")
    rep.add("covariates_file", out / "covariates.csv")
    (out / "simulate.txt").write_text(rep.text(), encoding="utf-8")
    rep.emit()
    return EXIT_OK


def parse_grid(text):
    from .montecarlo import BenchConfig

    configs = []
    for item in [t.strip() for t in text.split(",") if t.strip()]:
        parts = item.split(":")
        try:
            n1, n2, n3 = (int(v) for v in parts[0].split("x"))
            density = None if parts[1] == "sparse" else float(parts[1])
            noise = parts[2] if len(parts) > 2 else "poisson"
            rate = float(parts[3]) if len(parts) > 3 else None
        except (ValueError, IndexError):
            raise InputError(f"bad grid entry {item!r}; expected n1xn2xn3:density|sparse[:noise[:rate]]") from None
        configs.append(BenchConfig(n1, n2, n3, density, noise, rate))
    if not configs:
        raise InputError("empty grid")
    return configs


def cmd_bench(s):
    from .montecarlo import format_long, format_table, run_bench, summarize

    rep = Report("bench", s)
    configs = parse_grid(s["grid"])
    estimators = tuple(e.strip() for e in s["estimators"].split(",") if e.strip())
    bad = [e for e in estimators if e not in ("polyads", "ppml")]
    if bad or s["replications"] < 1:
        raise InputError(f"bad estimators {bad} or replications < 1")
    rows = run_bench(configs, s["replications"], s["seed"], estimators, n_jobs=s["workers"])
    timings = not s["deterministic"]
    table = format_table(summarize(rows), timings=timings)
    if s["output"]:
        Path(s["output"]).write_text(table, encoding="utf-8")
    if s["long_output"]:
        Path(s["long_output"]).write_text(format_long(rows, timings=timings), encoding="utf-8")
    for k, line in enumerate(table.strip().splitlines()):
        rep.add(f"table[{k}]", line)
    rep.emit()
    return EXIT_OK


def cmd_meta(s):
    from .io import read_table
    from .meta import meta_analysis

    rep = Report("meta", s)
    header, data = read_table(s["results"])
    cols = {h: k for k, h in enumerate(header)}
    if "beta" in cols and "var" in cols:
        est = np.column_stack([data[:, cols["beta"]], data[:, cols["var"]]])
    elif "beta_hat" in cols and "se" in cols:
        est = np.column_stack([data[:, cols["beta_hat"]], data[:, cols["se"]] ** 2])
    else:
        raise InputError(f"{s['results']}: need columns beta,var or beta_hat,se")
    est = est[np.all(np.isfinite(est), axis=1)]
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = meta_analysis(est)
    for w in caught:
        rep.add("warning", str(w.message))
    rep.add("n_studies", res.n_studies)
    rep.add("pooled", res.pooled)
    rep.add("se", res.se)
    rep.add("ci95.lower", res.ci_95[0])
    rep.add("ci95.upper", res.ci_95[1])
    rep.add("tau2", res.tau2)
    rep.add("method", res.method)
    rep.add("converged", int(res.converged))
    rep.emit(s["output"])
    return EXIT_OK


COMMANDS = {"fit": cmd_fit, "simulate": cmd_simulate, "bench": cmd_bench, "meta": cmd_meta}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        settings = resolve(args.command, args)
        return COMMANDS[args.command](settings)
    except ResourceGuardError as exc:
        print(f"error=resource_guard\nmessage={exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (InputError, CollinearityError, CalibrationError, PolyadsError, OSError, ValueError) as exc:
        print(f"error={type(exc).__name__}\nmessage={exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
