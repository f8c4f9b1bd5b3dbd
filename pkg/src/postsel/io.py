"""Plain-text input and output: CSV tables and JSON configs.

Floats are written with ``repr``, the shortest string that parses back to
the same double, so tables survive a write/read cycle unchanged.  JSON has
no infinity, so unbounded thresholds are written as ``null``.
"""

import csv
import hashlib
import json

import numpy as np

from .exceptions import ConfigError, SingularCovarianceError
from .truncated_gaussian import TmvnSpec, TruncRegion

SCHEMA_VERSION = 1


class ParseError(ConfigError):
    pass


def fmt(x):
    """Round-trip decimal string for a number."""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_table(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in row])


def read_table(path):
    """``(header, float matrix)`` of a numeric CSV with a header row.

    Raises :class:`ParseError` naming the line and column of the first
    field that is not a number.
    """
    try:
        fh = open(path, encoding="utf-8", newline="")
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        rows = []
        for row in reader:
            if not row:
                continue
            line = reader.line_num
            if len(row) != len(header):
                raise ParseError(f"{path}:{line}: expected {len(header)} fields, got {len(row)}")
            vals = []
            for name, field in zip(header, row):
                try:
                    vals.append(float(field))
                except ValueError:
                    raise ParseError(f"{path}:{line}: column {name!r}: not a number: {field!r}") from None
            rows.append(vals)
    if not rows:
        raise ParseError(f"{path}: no data rows")
    return header, np.array(rows)


def read_xy(path, response="y"):
    """Design matrix and response from a CSV whose ``response`` column is y."""
    header, data = read_table(path)
    if response not in header:
        raise ParseError(f"{path}: no column named {response!r}")
    j = header.index(response)
    X = np.delete(data, j, axis=1)
    names = [h for h in header if h != response]
    return X, data[:, j], names


def write_xy(path, X, y, names=None):
    names = [f"x{j + 1}" for j in range(X.shape[1])] if names is None else list(names)
    write_table(path, names + ["y"], np.column_stack([X, y]))


def read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from exc


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _bound(v, default):
    if v is None:
        return default
    try:
        return float(v)
    except (TypeError, ValueError):
        raise ParseError(f"bound must be a number or null, got {v!r}") from None


def region_from_dict(d, where="region"):
    if not isinstance(d, dict):
        raise ParseError(f"{where}: expected an object")
    kind = d.get("kind", "inside")
    lo, hi = d.get("lower"), d.get("upper")
    try:
        if kind == "inside":
            return TruncRegion.inside(_bound(lo, -np.inf), _bound(hi, np.inf))
        if kind == "outside":
            if lo is None or hi is None:
                raise ParseError(f"{where}: outside regions need finite lower and upper")
            return TruncRegion.outside(_bound(lo, 0), _bound(hi, 0))
    except ValueError as exc:
        if isinstance(exc, ParseError):
            raise
        raise ParseError(f"{where}: {exc}") from exc
    raise ParseError(f"{where}: unknown kind {kind!r}")


def region_to_dict(r):
    def b(x):
        return None if not np.isfinite(x) else float(x)
    return {"kind": r.kind, "lower": b(r.lower), "upper": b(r.upper)}


def _matrix(v, p, where):
    """A p x p covariance from a nested list or ``{variance, correlation}``."""
    if isinstance(v, dict):
        try:
            var = float(v.get("variance", 1.0))
            rho = float(v.get("correlation", 0.0))
        except (TypeError, ValueError):
            raise ParseError(f"{where}: variance and correlation must be numbers") from None
        return var * ((1 - rho) * np.eye(p) + rho * np.ones((p, p)))
    try:
        m = np.array(v, dtype=float)
    except (TypeError, ValueError):
        raise ParseError(f"{where}: not a numeric matrix") from None
    if m.shape != (p, p):
        raise ParseError(f"{where}: expected shape ({p}, {p}), got {m.shape}")
    return m


def tmvn_spec_from_dict(d):
    """Spec JSON: ``{"mu": [...], "sigma": [[...]], "regions": [{...}], "init": [...]}``.

    ``init`` is optional.  Returns ``(TmvnSpec, init or None)``.
    """
    for key in ("mu", "sigma", "regions"):
        if key not in d:
            raise ParseError(f"spec is missing {key!r}")
    try:
        mu = np.array(d["mu"], dtype=float).ravel()
    except (TypeError, ValueError):
        raise ParseError("mu: not a numeric vector") from None
    p = mu.size
    sigma = _matrix(d["sigma"], p, "sigma")
    if not isinstance(d["regions"], list) or len(d["regions"]) != p:
        raise ParseError(f"regions: expected a list of {p} objects")
    regions = [region_from_dict(r, f"regions[{i}]") for i, r in enumerate(d["regions"])]
    init = d.get("init")
    if init is not None:
        init = np.array(init, dtype=float).ravel()
        if init.size != p:
            raise ParseError(f"init: expected {p} values")
    return TmvnSpec(mu, sigma, regions), init


def tmvn_spec_to_dict(spec, init=None):
    d = {"schema_version": SCHEMA_VERSION, "mu": [float(v) for v in spec.mu],
         "sigma": np.asarray(spec.sigma, dtype=float).tolist(),
         "regions": [region_to_dict(r) for r in spec.regions]}
    if init is not None:
        d["init"] = [float(v) for v in init]
    return d


def normal_means_from_files(data_path, config_path=None):
    """Observed means from CSV plus covariance and thresholds from JSON.

    The CSV needs a ``y`` column; ``lower``/``upper`` columns, if present,
    override the thresholds of the config.  Config keys: ``sigma`` (matrix
    or ``{variance, correlation}``), ``lower``, ``upper`` (scalars or lists),
    or ``threshold`` for symmetric ``-t, t``.
    """
    from .normal_means import NormalMeansProblem

    header, data = read_table(data_path)
    if "y" not in header:
        raise ParseError(f"{data_path}: no column named 'y'")
    y = data[:, header.index("y")]
    p = y.size
    cfg = read_json(config_path) if config_path else {}
    sigma = _matrix(cfg.get("sigma", {"variance": 1.0, "correlation": 0.0}), p, "sigma")
    if "threshold" in cfg:
        t = float(cfg["threshold"])
        lower, upper = -t, t
    else:
        lower, upper = cfg.get("lower"), cfg.get("upper")
    if "lower" in header:
        lower = data[:, header.index("lower")]
    if "upper" in header:
        upper = data[:, header.index("upper")]
    if lower is None or upper is None:
        raise ParseError("thresholds missing: give threshold, lower/upper in the config or columns")
    try:
        return NormalMeansProblem(y, sigma, lower, upper)
    except SingularCovarianceError:
        raise
    except ValueError as exc:
        raise ParseError(str(exc)) from exc
