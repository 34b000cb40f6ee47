"""CSV and JSON readers/writers for observations, latent data, model specs and fits."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from . import hypercube as hc
from .distributions import family_from_dict
from .intervals import AggregationSpec, Hypercube, Interval
from .likelihood import DescriptiveModel, HierarchicalModel, IIDGenerativeModel, UniformMixtureModel

__all__ = [
    "InputError",
    "fmt",
    "read_observations",
    "write_observations",
    "read_raw",
    "write_raw",
    "write_rows",
    "parse_model_spec",
    "load_model_spec",
    "model_to_spec",
    "fit_type_for",
]


class InputError(ValueError):
    """Malformed input file or model specification."""


def fmt(x) -> str:
    """17 significant digits, enough for a bit-exact float round trip."""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "%.17g" % x
    return str(x)


def write_rows(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])


def _float(value, line, col):
    try:
        v = float(value)
    except (TypeError, ValueError):
        raise InputError(f"line {line}: column {col!r} is not a number: {value!r}") from None
    if math.isnan(v):
        raise InputError(f"line {line}: column {col!r} is NaN")
    return v


def _reader(path):
    fh = open(path, newline="", encoding="utf-8")
    rd = csv.reader(fh)
    try:
        header = [h.strip() for h in next(rd)]
    except StopIteration:
        fh.close()
        raise InputError(f"{path}: empty file") from None
    return fh, rd, header


def read_observations(path):
    """Interval rows ``group_id,lower,upper,m`` or hypercube rows ``group_id,l1,u1,...,m``.

    Returns ``[(group_id, Interval | Hypercube, m), ...]`` in file order.
    """
    fh, rd, header = _reader(path)
    with fh:
        if header[0] != "group_id" or header[-1] != "m":
            raise InputError(f"{path} line 1: header must start with group_id and end with m")
        cols = header[1:-1]
        if cols == ["lower", "upper"]:
            p = 1
        elif len(cols) >= 2 and len(cols) % 2 == 0 and cols == [f"{s}{j}" for j in range(1, len(cols) // 2 + 1) for s in ("l", "u")]:
            p = len(cols) // 2
        else:
            raise InputError(f"{path} line 1: unrecognised endpoint columns {cols}")
        out = []
        for line, row in enumerate(rd, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise InputError(f"{path} line {line}: expected {len(header)} fields, got {len(row)}")
            vals = [_float(v, line, c) for v, c in zip(row[1:-1], cols)]
            try:
                m = int(row[-1])
            except ValueError:
                raise InputError(f"{path} line {line}: m is not an integer: {row[-1]!r}") from None
            try:
                dims = [Interval(vals[2 * j], vals[2 * j + 1]) for j in range(p)]
            except ValueError as exc:
                raise InputError(f"{path} line {line}: {exc}") from None
            out.append((row[0], dims[0] if p == 1 else Hypercube(tuple(dims)), m))
    return out


def write_observations(path, records):
    """Inverse of read_observations."""
    records = list(records)
    if not records:
        raise ValueError("no observations to write")
    first = records[0][1]
    p = first.p if isinstance(first, Hypercube) else 1
    cols = ["lower", "upper"] if p == 1 else [f"{s}{j}" for j in range(1, p + 1) for s in ("l", "u")]
    rows = []
    for gid, obs, m in records:
        dims = obs.dims if isinstance(obs, Hypercube) else (obs,)
        rows.append([gid, *[v for d in dims for v in (d.lower, d.upper)], m])
    write_rows(path, ["group_id", *cols, "m"], rows)


def read_raw(path):
    """Micro-data ``group_id,x1[,x2,...]`` -> ordered dict of group -> (n, p) array."""
    fh, rd, header = _reader(path)
    with fh:
        if header[0] != "group_id" or len(header) < 2:
            raise InputError(f"{path} line 1: header must be group_id,x1[,x2,...]")
        groups: dict = {}
        for line, row in enumerate(rd, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise InputError(f"{path} line {line}: expected {len(header)} fields, got {len(row)}")
            groups.setdefault(row[0], []).append([_float(v, line, c) for v, c in zip(row[1:], header[1:])])
    return {g: np.array(v) for g, v in groups.items()}


def write_raw(path, groups, ids=None):
    """Latent points as ``group_id,x1[,x2,...]``; ``groups`` is a list of (m, p) or (m,) arrays."""
    ids = ids if ids is not None else [str(i) for i in range(len(groups))]
    p = np.atleast_2d(np.asarray(groups[0]).reshape(len(groups[0]), -1)).shape[1]
    rows = []
    for gid, x in zip(ids, groups):
        x = np.asarray(x).reshape(len(x), -1)
        rows.extend([gid, *r] for r in x)
    write_rows(path, ["group_id", *[f"x{j}" for j in range(1, p + 1)]], rows)


# ---------------------------------------------------------------------------
# model specs


def _need(d, key, kind=float):
    if key not in d:
        raise InputError(f"model spec: missing field {key!r}")
    try:
        return kind(d[key])
    except (TypeError, ValueError):
        raise InputError(f"model spec: field {key!r} has invalid value {d[key]!r}") from None


def parse_model_spec(d: dict):
    """Build a model object from a JSON-style dict tagged by ``type``.

    Types: ``descriptive``, ``iid``, ``hierarchical``, ``credit`` and
    ``credit-descriptive``. Domain violations raise InputError naming the field.
    """
    if not isinstance(d, dict):
        raise InputError("model spec must be a JSON object")
    kind = d.get("type")
    try:
        if kind == "descriptive":
            return DescriptiveModel(
                _need(d, "mean_c"), _need(d, "mean_t"), _need(d, "var_c"), _need(d, "var_t"), float(d.get("rho", 0.0))
            )
        if kind == "iid":
            if "family" not in d:
                raise InputError("model spec: missing field 'family'")
            fam = family_from_dict(d["family"])
            m = _need(d, "m", int)
            return IIDGenerativeModel(fam, AggregationSpec(int(d.get("l", 1)), int(d.get("u") or m), m))
        if kind == "hierarchical":
            local = d.get("local", "uniform")
            mean = d.get("mean")
            var = d.get("var")
            for key, v in (("mean", mean), ("var", var)):
                if not isinstance(v, (list, tuple)) or len(v) != 2:
                    raise InputError(f"model spec: field {key!r} must be a list of two numbers")
            corr = float(d.get("corr", 0.0))
            l, u = int(d.get("l", 1)), d.get("u")
            if local == "uniform" and corr == 0.0 and l == 1 and u is None and d.get("method", "laguerre") == "laguerre":
                return UniformMixtureModel(float(mean[0]), float(var[0]), float(mean[1]), float(var[1]))
            return HierarchicalModel(local, tuple(mean), tuple(var), corr, l, None if u is None else int(u))
        if kind in ("credit", "credit-descriptive"):
            params = {n: _need(d, n) for n in hc.PARAM_NAMES}
            cls = hc.CreditModelSpec if kind == "credit" else hc.CreditDescriptiveModel
            return cls(**params)
    except InputError:
        raise
    except ValueError as exc:
        raise InputError(f"model spec: {exc}") from None
    raise InputError(f"model spec: field 'type' must be one of descriptive, iid, hierarchical, credit; got {kind!r}")


def load_model_spec(path):
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return parse_model_spec(d)


def model_to_spec(model) -> dict:
    if isinstance(model, DescriptiveModel):
        return {"type": "descriptive", "mean_c": model.mean_c, "mean_t": model.mean_t, "var_c": model.var_c, "var_t": model.var_t, "rho": model.rho}
    if isinstance(model, UniformMixtureModel):
        return {"type": "hierarchical", "local": "uniform", "mean": [model.mean_c, model.mean_t], "var": [model.var_c, model.var_t]}
    if isinstance(model, HierarchicalModel):
        return {"type": "hierarchical", "local": model.local, "mean": list(model.mean), "var": list(model.var), "corr": model.corr, "l": model.l, "u": model.u, "method": "grid"}
    if isinstance(model, IIDGenerativeModel):
        return {"type": "iid", "family": model.family.to_dict(), "l": model.agg.l, "u": model.agg.u, "m": model.agg.m}
    if isinstance(model, hc.CreditModelSpec):
        return {"type": "credit", **dict(zip(hc.PARAM_NAMES, map(float, model.as_vector())))}
    if isinstance(model, hc.CreditDescriptiveModel):
        return {"type": "credit-descriptive", **dict(zip(hc.PARAM_NAMES, map(float, model.as_vector())))}
    raise TypeError(f"cannot serialise {type(model).__name__}")


def fit_type_for(model) -> str:
    """Fitting tag matching a model object's family."""
    if isinstance(model, DescriptiveModel):
        return "descriptive" if model.rho == 0 else "descriptive-rho"
    if isinstance(model, UniformMixtureModel):
        return "uniform-mixture"
    if isinstance(model, HierarchicalModel):
        return "hierarchical"
    if isinstance(model, IIDGenerativeModel):
        if model.family.to_dict()["family"] != "gaussian":
            raise InputError("only gaussian i.i.d. models can be fitted")
        return "iid-gaussian"
    if isinstance(model, hc.CreditModelSpec):
        return "credit"
    if isinstance(model, hc.CreditDescriptiveModel):
        return "credit-descriptive"
    raise TypeError(type(model).__name__)
