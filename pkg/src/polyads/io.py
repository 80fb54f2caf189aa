"""Reading and writing edge files, covariate files and node-attribute formulas.

Edge file: header ``i1,...,iD,y`` then one integer row per edge.
Covariate file: header ``i1,...,iD,x1,...,xp``.
Node ids may be any integers; they are relabeled densely per dimension in
increasing order over the union of ids seen in both files.

A covariate argument of the form ``formula:<path>`` instead names a text
file describing features as functions of per-dimension node attributes::

    node 0 exporters.csv        # header id,attr,...
    node 1 importers.csv
    feature same_city = eq(0.city, 1.city)
    feature log_dist = sum(0.lon, 1.lon)

Supported expressions are ``eq``, ``sum`` and ``prod`` over ``d.attr``
references, or a bare reference.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .covariates import FunctionCovariates, TableCovariates
from .exceptions import DimensionMismatchError, InvalidParameterError, MissingCovariateError
from .graph import SparseCountGraph

__all__ = [
    "EdgeData",
    "read_table",
    "read_edges",
    "read_covariates",
    "load_problem",
    "write_edges",
    "write_covariates",
    "parse_formula",
]


def read_table(path):
    """Header and numeric rows of a comma-separated file."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise InvalidParameterError(f"{path}: empty file") from None
        rows = [r for r in reader if r and any(c.strip() for c in r)]
    for k, r in enumerate(rows):
        if len(r) != len(header):
            raise InvalidParameterError(f"{path}: line {k + 2} has {len(r)} fields, header has {len(header)}")
    try:
        data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    except ValueError as exc:
        raise InvalidParameterError(f"{path}: non-numeric value ({exc})") from None
    return header, data


def _index_columns(header, path):
    D = 0
    while D < len(header) and header[D] == f"i{D + 1}":
        D += 1
    if D < 2:
        raise InvalidParameterError(f"{path}: header must start with i1,i2,... (got {header[:3]})")
    return D


def _as_int(a, path, what):
    if a.size and not np.all(a == np.round(a)):
        raise InvalidParameterError(f"{path}: {what} must be integers")
    return a.astype(np.int64)


def read_edges(path):
    header, data = read_table(path)
    D = _index_columns(header, path)
    if header[D:] != ["y"]:
        raise InvalidParameterError(f"{path}: expected header i1,...,i{D},y")
    coords = _as_int(data[:, :D], path, "node ids")
    counts = _as_int(data[:, D], path, "counts")
    if np.any(counts < 0):
        raise InvalidParameterError(f"{path}: negative counts")
    return coords, counts


def read_covariates(path):
    header, data = read_table(path)
    D = _index_columns(header, path)
    names = header[D:]
    if not names:
        raise InvalidParameterError(f"{path}: no feature columns")
    return _as_int(data[:, :D], path, "node ids"), data[:, D:], names


@dataclass
class EdgeData:
    graph: SparseCountGraph
    covariates: object
    node_ids: list
    feature_names: list


def load_problem(edge_path, covariate_spec):
    """Graph and covariate provider from an edge file and a covariate file or formula."""
    coords, counts = read_edges(edge_path)
    D = coords.shape[1]
    spec = str(covariate_spec)
    if spec.startswith("formula:"):
        formula = parse_formula(spec[len("formula:"):])
        if formula.D != D:
            raise DimensionMismatchError(f"formula covers {formula.D} dimensions, edges have {D}")
        labels = [np.union1d(np.unique(coords[:, d]), formula.node_ids[d]) for d in range(D)]
        cov = formula.provider(labels)
        names = formula.names
    else:
        cc, values, names = read_covariates(spec)
        if cc.shape[1] != D:
            raise DimensionMismatchError(f"covariates have {cc.shape[1]} index columns, edges have {D}")
        labels = [np.union1d(coords[:, d], cc[:, d]) for d in range(D)]
        local = np.stack([np.searchsorted(labels[d], cc[:, d]) for d in range(D)], axis=1)
        cov = TableCovariates(tuple(lab.size for lab in labels), local, values)
    dims = tuple(max(lab.size, 1) for lab in labels)
    local = np.stack([np.searchsorted(labels[d], coords[:, d]) for d in range(D)], axis=1)
    graph = SparseCountGraph(dims, local, counts)
    return EdgeData(graph, cov, labels, list(names))


def write_edges(path, graph, node_ids=None):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        fh.write(",".join([f"i{d + 1}" for d in range(graph.D)] + ["y"]) + "\n")
        coords = graph.coords if node_ids is None else np.stack(
            [np.asarray(node_ids[d])[graph.coords[:, d]] for d in range(graph.D)], axis=1)
        for c, y in zip(coords.tolist(), graph.counts.tolist()):
            fh.write(",".join(map(str, c)) + f",{y}\n")


def write_covariates(path, dims, values, names=None):
    """Write a dense covariate array ``dims + (p,)`` for every cell."""
    values = np.asarray(values, dtype=float).reshape(int(np.prod(dims)), -1)
    p = values.shape[1]
    names = names or [f"x{k + 1}" for k in range(p)]
    grid = np.indices(dims).reshape(len(dims), -1).T
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        fh.write(",".join([f"i{d + 1}" for d in range(len(dims))] + list(names)) + "\n")
        for c, v in zip(grid.tolist(), values.tolist()):
            fh.write(",".join(map(str, c)) + "," + ",".join(repr(x) for x in v) + "\n")


_REF = re.compile(r"^(\d+)\.([A-Za-z_]\w*)$")
_CALL = re.compile(r"^(eq|sum|prod)\((.*)\)$")


@dataclass
class Formula:
    attributes: dict      # d -> (ids, {name: values})
    features: list        # (name, op, [(d, attr), ...])

    @property
    def D(self):
        return max(self.attributes) + 1 if self.attributes else 0

    @property
    def names(self):
        return [f[0] for f in self.features]

    @property
    def node_ids(self):
        return [self.attributes[d][0] for d in range(self.D)]

    def provider(self, labels):
        """Covariates over densely relabeled nodes; unknown nodes make the query fail loudly."""
        tables = []
        for d in range(self.D):
            ids, attrs = self.attributes[d]
            pos = np.searchsorted(ids, labels[d])
            known = (pos < ids.size) & (ids[np.minimum(pos, ids.size - 1)] == labels[d])
            tables.append((np.where(known, pos, -1), attrs))

        def func(coords):
            out = np.empty((coords.shape[0], len(self.features)))
            rows = [tables[d][0][coords[:, d]] for d in range(self.D)]
            bad = np.any(np.stack(rows) < 0, axis=0)
            if bad.any():
                raise MissingCovariateError(np.unique(coords[bad], axis=0))
            for k, (_, op, refs) in enumerate(self.features):
                vals = [tables[d][1][a][rows[d]] for d, a in refs]
                if op == "eq":
                    out[:, k] = np.all([v == vals[0] for v in vals[1:]], axis=0).astype(float)
                elif op == "sum":
                    out[:, k] = np.sum(vals, axis=0)
                elif op == "prod":
                    out[:, k] = np.prod(vals, axis=0)
                else:
                    out[:, k] = vals[0]
            return out

        return FunctionCovariates(func, len(self.features))


def _parse_refs(text, attributes, where):
    refs = []
    for part in [p.strip() for p in text.split(",")]:
        m = _REF.match(part)
        if not m:
            raise InvalidParameterError(f"{where}: bad reference {part!r}, expected <dim>.<attribute>")
        d, a = int(m.group(1)), m.group(2)
        if d not in attributes or a not in attributes[d][1]:
            raise InvalidParameterError(f"{where}: unknown attribute {part!r}")
        refs.append((d, a))
    return refs


def parse_formula(path):
    path = Path(path)
    attributes, features = {}, []
    lines = path.read_text(encoding="utf-8").splitlines()
    for n, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{path}:{n}"
        kind, _, rest = line.partition(" ")
        if kind == "node":
            d_text, _, file_text = rest.strip().partition(" ")
            attr_path = Path(file_text.strip())
            if not attr_path.is_absolute():
                attr_path = path.parent / attr_path
            header, data = read_table(attr_path)
            if not header or header[0] != "id":
                raise InvalidParameterError(f"{attr_path}: first column must be 'id'")
            ids = _as_int(data[:, 0], attr_path, "ids")
            order = np.argsort(ids)
            attributes[int(d_text)] = (ids[order], {h: data[order, k] for k, h in enumerate(header) if k})
        elif kind == "feature":
            name, eq, expr = rest.partition("=")
            if not eq:
                raise InvalidParameterError(f"{where}: expected 'feature <name> = <expr>'")
            expr = expr.strip()
            m = _CALL.match(expr)
            if m:
                features.append((name.strip(), m.group(1), _parse_refs(m.group(2), attributes, where)))
            else:
                features.append((name.strip(), "ref", _parse_refs(expr, attributes, where)))
        else:
            raise InvalidParameterError(f"{where}: unknown directive {kind!r}")
    if sorted(attributes) != list(range(len(attributes))):
        raise InvalidParameterError(f"{path}: node files must cover dimensions 0..D-1")
    if not features:
        raise InvalidParameterError(f"{path}: no features defined")
    return Formula(attributes, features)
