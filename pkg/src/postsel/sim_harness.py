"""Simulation study of lasso, refitted and conditional estimates.

Data follow the AR(1)-design linear model: rows of ``X`` are
``N(0, Sigma)`` with ``Sigma_ij = rho^|i-j|``, ``k`` coefficients are
Laplace(1) and the noise variance is ``var(X beta) / snr``.  Each
replicate selects a model by cross-validated lasso and scores every method
against ``beta0 = (X_M'X_M)^{-1} X_M' mu``, the projection of the true mean
onto the selected columns.
"""

import csv
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .ascent import AscentOptions
from .exceptions import ConfigError, PostselError, ReplicateError
from .lasso_core import Dataset, cv_lambda, fit_lasso, refitted_ci, sigma2_lasso

__all__ = [
    "SimConfig", "RepResult", "Aggregate", "gen_design", "gen_coefs", "gen_response",
    "run_replicate", "run_simulation", "aggregate", "write_replicates_csv",
    "read_replicates_csv", "write_aggregate_json", "SCHEMA_VERSION", "METHODS",
]

SCHEMA_VERSION = 1
METHODS = ("lasso", "refitted", "conditional")
CI_METHODS = ("refitted", "conditional")
# fixed labels of the per-replicate random streams
PHASES = {"design": 0, "coefs": 1, "noise": 2, "cv": 3, "sampler": 4}
_TINY = 1e-300


@dataclass
class SimConfig:
    n: int
    p: int
    k: int
    rho: float = 0.5
    snr: float = 0.8
    reps: int = 100
    seed: int = 0
    lambda_rule: str = "min"
    ci_level: float = 0.95
    methods: tuple = METHODS
    cv_folds: int = 10
    imputation: str = "zero"
    n_steps: int = 1000
    quantile_samples: int = 2000
    workers: int = 1

    def __post_init__(self):
        self.methods = tuple(self.methods)
        for name in ("n", "p", "k", "reps", "cv_folds", "n_steps", "quantile_samples", "workers"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)):
                raise ConfigError(f"{name} must be an integer, got {v!r}")
        if self.n < 2 or self.p < 1 or self.k < 0:
            raise ConfigError("need n >= 2, p >= 1 and k >= 0")
        if self.k > self.p:
            raise ConfigError(f"k = {self.k} exceeds p = {self.p}")
        if self.reps < 1 or self.workers < 1:
            raise ConfigError("reps and workers must be >= 1")
        if not 0 <= self.rho < 1:
            raise ConfigError("rho must lie in [0, 1)")
        if not (np.isfinite(self.snr) and self.snr > 0):
            raise ConfigError("snr must be positive and finite")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.lambda_rule not in ("min", "1se"):
            raise ConfigError(f"lambda_rule must be 'min' or '1se', got {self.lambda_rule!r}")
        if not 0 < self.ci_level < 1:
            raise ConfigError("ci_level must lie in (0, 1)")
        unknown = set(self.methods) - set(METHODS)
        if unknown or not self.methods:
            raise ConfigError(f"methods must be a nonempty subset of {METHODS}")
        if self.imputation not in ("zero", "plugin", "none"):
            raise ConfigError(f"unknown imputation {self.imputation!r}")

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d.pop("schema_version", None)
        names = {f.name for f in fields(cls)}
        extra = set(d) - names
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self):
        d = asdict(self)
        d["methods"] = list(self.methods)
        d["schema_version"] = SCHEMA_VERSION
        return d

    def ascent_options(self):
        return AscentOptions(n_steps=self.n_steps, quantile_samples=self.quantile_samples,
                             ci_level=self.ci_level)


def stream(seed, rep_id, phase):
    """Generator for one phase of one replicate; independent of other phases."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(rep_id), PHASES[phase]))
    return np.random.default_rng(ss)


def gen_design(n, p, rho, rng):
    """AR(1) columns: ``x_j = rho x_{j-1} + sqrt(1 - rho^2) z_j``."""
    if not 0 <= rho < 1:
        raise ValueError("rho must lie in [0, 1)")
    rng = np.random.default_rng(rng)
    Z = rng.standard_normal((n, p))
    X = np.empty_like(Z)
    X[:, 0] = Z[:, 0]
    c = np.sqrt(1 - rho ** 2)
    for j in range(1, p):
        X[:, j] = rho * X[:, j - 1] + c * Z[:, j]
    return X


def gen_coefs(p, k, rng):
    """``k`` random coordinates get Laplace(0, 1) values, the rest are zero."""
    if not 0 <= k <= p:
        raise ValueError("need 0 <= k <= p")
    rng = np.random.default_rng(rng)
    beta = np.zeros(p)
    idx = rng.choice(p, size=k, replace=False)
    beta[idx] = rng.laplace(0.0, 1.0, size=k)
    return beta


def gen_response(X, beta, snr, rng):
    """Returns ``(y, sigma2, zero_signal)``.

    ``sigma2 = var(mu) / snr`` with the sample variance of ``mu = X beta``;
    when ``mu`` is constant the noise variance falls back to 1 and
    ``zero_signal`` is set.
    """
    if not (np.isfinite(snr) and snr > 0):
        raise ValueError("snr must be positive and finite")
    rng = np.random.default_rng(rng)
    mu = X @ beta
    v = float(np.var(mu, ddof=1)) if mu.size > 1 else 0.0
    zero_signal = v == 0
    sigma2 = 1.0 if zero_signal else v / snr
    y = mu + np.sqrt(sigma2) * rng.standard_normal(mu.shape[0])
    return y, sigma2, zero_signal


@dataclass
class RepResult:
    """Outcome of one replicate.

    Per-method dictionaries are keyed by method name; coefficient arrays
    are indexed like ``active``.  ``lengths`` use ``inf`` for unbounded
    intervals.
    """

    rep_id: int
    selected_size: int
    active: np.ndarray
    lam: float = np.nan
    sigma2_true: float = np.nan
    sigma2_hat: float = np.nan
    zero_signal: bool = False
    beta0: np.ndarray = None
    estimates: dict = field(default_factory=dict)
    pred_error: dict = field(default_factory=dict)
    covered: dict = field(default_factory=dict)
    lengths: dict = field(default_factory=dict)
    wall_time: float = 0.0

    @property
    def null_selection(self):
        return self.selected_size == 0

    def sq_errors(self, method):
        return (self.estimates[method] - self.beta0) ** 2


def _data(config, rep_id):
    X = gen_design(config.n, config.p, config.rho, stream(config.seed, rep_id, "design"))
    beta = gen_coefs(config.p, config.k, stream(config.seed, rep_id, "coefs"))
    y, sigma2, zero = gen_response(X, beta, config.snr, stream(config.seed, rep_id, "noise"))
    return X, beta, y, sigma2, zero


def run_replicate(config, rep_id):
    """Generate one data set, fit every method and score it."""
    t0 = time.perf_counter()
    try:
        return _run_replicate(config, rep_id, t0)
    except PostselError as exc:
        raise ReplicateError(f"replicate {rep_id}: {type(exc).__name__}: {exc}", rep_id) from exc


def _run_replicate(config, rep_id, t0):
    X, beta, y, sigma2_true, zero = _data(config, rep_id)
    data = Dataset(X, y)
    mu = X @ beta
    lam = cv_lambda(data, folds=config.cv_folds, rule=config.lambda_rule,
                    rng=stream(config.seed, rep_id, "cv"))
    lasso = fit_lasso(data, lam)
    M = lasso.active
    res = RepResult(rep_id=rep_id, selected_size=int(M.size), active=M, lam=float(lam),
                    sigma2_true=float(sigma2_true), zero_signal=bool(zero))
    if M.size == 0:
        res.wall_time = time.perf_counter() - t0
        return res
    XM = X[:, M]
    G = XM.T @ XM
    res.beta0 = np.linalg.solve(G, XM.T @ mu)
    res.sigma2_hat = sigma2_lasso(data, lasso)
    eta = np.linalg.solve(G, XM.T @ y)
    alpha = 1.0 - config.ci_level
    est = {"lasso": lasso.beta[M].copy()}
    if "refitted" in config.methods:
        est["refitted"] = eta
        lo, hi = refitted_ci(data, M, res.sigma2_hat, alpha)
        _score_ci(res, "refitted", lo, hi)
    if "conditional" in config.methods:
        # imported here so that lasso-only runs never load the sampler
        from .lasso_postsel import fit_lasso_mle
        fit = fit_lasso_mle(data, lam, res.sigma2_hat, config.imputation,
                            config.ascent_options(), stream(config.seed, rep_id, "sampler"),
                            lasso=lasso)
        est["conditional"] = fit.beta_hat
        _score_ci(res, "conditional", fit.ci_lower, fit.ci_upper)
    res.estimates = {m: est[m] for m in METHODS if m in est and m in config.methods}
    res.pred_error = {m: float(np.sum((XM @ b - mu) ** 2)) for m, b in res.estimates.items()}
    res.wall_time = time.perf_counter() - t0
    return res


def _score_ci(res, method, lo, hi):
    res.covered[method] = ((lo <= res.beta0) & (res.beta0 <= hi)).astype(int)
    res.lengths[method] = np.asarray(hi - lo, dtype=float)


def _run_one(args):
    return run_replicate(*args)


def run_simulation(config, rep_ids=None, progress=None):
    """All replicates of ``config``, ordered by ``rep_id``.

    Uses a process pool when ``config.workers > 1``; each replicate draws
    only from its own streams so the output does not depend on scheduling.
    """
    rep_ids = list(range(config.reps)) if rep_ids is None else list(rep_ids)
    jobs = [(config, r) for r in rep_ids]
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = []
            for r in pool.map(_run_one, jobs, chunksize=1):
                results.append(r)
                if progress:
                    progress(r)
    else:
        results = []
        for job in jobs:
            results.append(_run_one(job))
            if progress:
                progress(results[-1])
    return sorted(results, key=lambda r: r.rep_id)


@dataclass
class Aggregate:
    """Summary over replicates.

    ``rel_mse`` and ``rel_pred`` map a method to ``(mean, stderr)`` of its
    log2 error relative to the lasso.  ``ci_ratio_log2`` is the log2 ratio
    of the median (over replicates) of per-replicate median conditional
    interval lengths to the same for the refitted intervals, with a
    bootstrap standard error.
    """

    n_reps: int
    n_null: int
    mean_selected: float
    rel_mse: dict
    rel_pred: dict
    coverage: dict
    median_length: dict
    ci_ratio_log2: float
    ci_ratio_log2_se: float
    n_zero_signal: int = 0
    schema_version: int = SCHEMA_VERSION

    def to_dict(self):
        return asdict(self)


def _log2_ratio(num, den):
    return np.log2(np.maximum(num, _TINY)) - np.log2(np.maximum(den, _TINY))


def _mean_se(x):
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return (np.nan, np.nan)
    se = float(x.std(ddof=1) / np.sqrt(x.size)) if x.size > 1 else np.nan
    return (float(x.mean()), se)


def aggregate(results, n_boot=1000, seed=0):
    """Summary statistics; replicates with an empty model are only counted."""
    results = sorted(results, key=lambda r: r.rep_id)
    if not results:
        raise ValueError("no replicates to aggregate")
    used = [r for r in results if not r.null_selection]
    methods = [m for m in METHODS if any(m in r.estimates for r in used)]
    rel_mse, rel_pred = {}, {}
    for m in methods:
        if m == "lasso":
            continue
        rs = [r for r in used if m in r.estimates]
        rel_mse[m] = _mean_se([np.mean(_log2_ratio(r.sq_errors(m), r.sq_errors("lasso"))) for r in rs])
        rel_pred[m] = _mean_se([_log2_ratio(r.pred_error[m], r.pred_error["lasso"]) for r in rs])
    coverage, median_length = {}, {}
    meds = {}
    for m in CI_METHODS:
        rs = [r for r in used if m in r.covered]
        if not rs:
            continue
        coverage[m] = float(np.concatenate([r.covered[m] for r in rs]).mean())
        meds[m] = np.array([np.median(r.lengths[m]) for r in rs])
        median_length[m] = float(np.median(meds[m]))
    ratio, ratio_se = np.nan, np.nan
    if len(meds) == 2 and len(meds["conditional"]) == len(meds["refitted"]):
        a, b = meds["conditional"], meds["refitted"]
        ratio = float(np.log2(np.median(a) / np.median(b)))
        if a.size > 1:
            rng = np.random.default_rng(seed)
            idx = rng.integers(0, a.size, size=(n_boot, a.size))
            boot = np.log2(np.median(a[idx], axis=1) / np.median(b[idx], axis=1))
            ratio_se = float(boot.std(ddof=1))
    return Aggregate(
        n_reps=len(results), n_null=len(results) - len(used),
        mean_selected=float(np.mean([r.selected_size for r in results])),
        rel_mse=rel_mse, rel_pred=rel_pred, coverage=coverage, median_length=median_length,
        ci_ratio_log2=ratio, ci_ratio_log2_se=ratio_se,
        n_zero_signal=sum(r.zero_signal for r in results),
    )


CSV_COLUMNS = [
    ("schema_version", "format version of this file"),
    ("rep_id", "replicate index"),
    ("selected_size", "|M|, number of lasso-selected variables"),
    ("lambda", "cross-validated penalty"),
    ("sigma2_true", "noise variance used to generate y"),
    ("sigma2_hat", "residual variance of the lasso fit"),
    ("zero_signal", "1 when var(mu) = 0 and sigma2 fell back to 1"),
] + [
    (f"{m}_{col}", desc.format(m=m))
    for m in METHODS
    for col, desc in (
        ("sq_error", "sum over M of squared deviations of {m} from beta0"),
        ("log2_rel_mse", "mean over M of log2 squared-deviation ratio of {m} to lasso"),
        ("pred_error", "||X_M b - mu||^2 for {m}"),
    )
] + [
    (f"{m}_{col}", desc.format(m=m))
    for m in CI_METHODS
    for col, desc in (
        ("n_covered", "number of coordinates of beta0 inside the {m} interval"),
        ("median_length", "median over M of {m} interval lengths"),
    )
]


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _row(r):
    row = {"schema_version": SCHEMA_VERSION, "rep_id": r.rep_id, "selected_size": r.selected_size,
           "lambda": r.lam, "sigma2_true": r.sigma2_true, "sigma2_hat": r.sigma2_hat,
           "zero_signal": r.zero_signal}
    for m in METHODS:
        if m in r.estimates:
            row[f"{m}_sq_error"] = float(np.sum(r.sq_errors(m)))
            row[f"{m}_log2_rel_mse"] = float(np.mean(_log2_ratio(r.sq_errors(m), r.sq_errors("lasso"))))
            row[f"{m}_pred_error"] = r.pred_error[m]
    for m in CI_METHODS:
        if m in r.covered:
            row[f"{m}_n_covered"] = int(r.covered[m].sum())
            row[f"{m}_median_length"] = float(np.median(r.lengths[m]))
    return row


def write_replicates_csv(results, path):
    """One row per replicate; comment lines at the top document the columns.

    Timings are left out so that the file is a pure function of the config.
    """
    names = [c for c, _ in CSV_COLUMNS]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for c, desc in CSV_COLUMNS:
            fh.write(f"# {c}: {desc}\n")
        w = csv.writer(fh)
        w.writerow(names)
        for r in sorted(results, key=lambda r: r.rep_id):
            row = _row(r)
            w.writerow([_fmt(row.get(c)) for c in names])


def read_replicates_csv(path):
    """Rows of a replicate CSV as dictionaries of floats (empty -> nan)."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = []
    for rec in csv.DictReader(lines):
        rows.append({k: float(v) if v != "" else np.nan for k, v in rec.items()})
    return rows


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if np.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    return x


def write_aggregate_json(agg, path, config=None):
    out = {"schema_version": SCHEMA_VERSION, "aggregate": _jsonable(agg.to_dict())}
    if config is not None:
        out["config"] = config.to_dict()
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(out, fh, indent=2, sort_keys=True)
        fh.write("\n")
