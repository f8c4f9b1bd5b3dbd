"""Shipped example inputs and the code that regenerates them.

Every file under ``postsel/data`` is a deterministic function of the seeds
below; ``python -m postsel.fixtures DIR`` rewrites them into ``DIR``.
"""

import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import io
from .lasso_core import Dataset, cv_lambda, fit_lasso, sigma2_lasso
from .sim_harness import SimConfig, gen_coefs, gen_design, gen_response
from .truncated_gaussian import TmvnSpec, TruncRegion

TWO_MEANS_SPEC = "tmvn_two_means.json"
NORMAL_MEANS_DATA = "normal_means_demo.csv"
NORMAL_MEANS_CONFIG = "normal_means_demo.json"
IMPUTATION_DATA = "imputation_fixture.csv"
IMPUTATION_META = "imputation_fixture.json"
LASSO_DATA = "lasso_example.csv"
LASSO_META = "lasso_example.json"
DESK_GRID = "desk_grid.json"

NORMAL_MEANS_SEED = 4
IMPUTATION_SEED = 23
LASSO_SEED = 5


def path(name):
    """Filesystem path of a shipped data file."""
    return Path(str(resources.files("postsel") / "data" / name))


def two_means_spec():
    """Two correlated means, the second selected by ``|y_2| > 1.65``.

    The mean is the observed vector, as for the plug-in fit.
    """
    y = np.array([1.45, 1.8])
    sigma = np.array([[1.0, 0.5], [0.5, 1.0]])
    regions = [TruncRegion.inside(-1.65, 1.65), TruncRegion.outside(-1.65, 1.65)]
    return TmvnSpec(y, sigma, regions), y


def normal_means_demo(seed=NORMAL_MEANS_SEED):
    """20 N(0, 4) signals and 80 zeros, equicorrelated noise (rho = 0.3)."""
    rng = np.random.default_rng(seed)
    p, k, rho = 100, 20, 0.3
    mu = np.zeros(p)
    mu[:k] = rng.normal(0.0, 2.0, size=k)
    sigma = (1 - rho) * np.eye(p) + rho * np.ones((p, p))
    y = mu + np.linalg.cholesky(sigma) @ rng.standard_normal(p)
    config = {"schema_version": io.SCHEMA_VERSION,
              "sigma": {"variance": 1.0, "correlation": rho}, "threshold": 1.65}
    return y, mu, config


def imputation_fixture(seed=IMPUTATION_SEED):
    """n = p = 100, rho = 0.5, k = 3, snr = 0.5, 1se-rule lambda.

    The seed was picked so that the lasso keeps two variables, both with
    positive sign, one of them close to its threshold.
    """
    rng = np.random.default_rng(seed)
    X = gen_design(100, 100, 0.5, rng)
    beta = gen_coefs(100, 3, rng)
    y, sigma2, _ = gen_response(X, beta, 0.5, rng)
    data = Dataset(X, y)
    lam = cv_lambda(data, rng=rng, rule="1se")
    fit = fit_lasso(data, lam)
    meta = {"schema_version": io.SCHEMA_VERSION, "seed": seed, "lambda": lam,
            "sigma2": sigma2_lasso(data, fit), "sigma2_true": sigma2,
            "active": fit.active.tolist(), "signs": fit.signs.tolist(),
            "mu": (X @ beta).tolist()}
    return X, y, meta


def lasso_example(seed=LASSO_SEED):
    """n = 200, p = 100, k = 5, rho = 0.5, snr = 0.2."""
    rng = np.random.default_rng(seed)
    X = gen_design(200, 100, 0.5, rng)
    beta = gen_coefs(100, 5, rng)
    y, sigma2, _ = gen_response(X, beta, 0.2, rng)
    meta = {"schema_version": io.SCHEMA_VERSION, "seed": seed, "sigma2_true": sigma2,
            "beta": beta.tolist()}
    return X, y, meta


def desk_grid():
    """Scaled-down simulation grid (coverage, estimation and interval size)."""
    base = dict(p=50, rho=0.5, seed=2024)
    configs = [
        SimConfig(n=200, k=2, snr=0.8, reps=200, **base),
        SimConfig(n=200, k=2, snr=0.2, reps=200, **base),
    ] + [SimConfig(n=n, k=5, snr=0.2, reps=100, **base) for n in (100, 400, 1600)]
    return {"schema_version": io.SCHEMA_VERSION, "configs": [c.to_dict() for c in configs]}


def load_desk_grid(p=None):
    d = io.read_json(p or path(DESK_GRID))
    return [SimConfig.from_dict(c) for c in d["configs"]]


def load_imputation_fixture():
    X, y, _ = io.read_xy(path(IMPUTATION_DATA))
    return X, y, io.read_json(path(IMPUTATION_META))


def build_all(outdir):
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    spec, init = two_means_spec()
    io.write_json(out / TWO_MEANS_SPEC, io.tmvn_spec_to_dict(spec, init))
    y, mu, cfg = normal_means_demo()
    io.write_table(out / NORMAL_MEANS_DATA, ["y", "mu"], np.column_stack([y, mu]))
    io.write_json(out / NORMAL_MEANS_CONFIG, cfg)
    X, y, meta = imputation_fixture()
    io.write_xy(out / IMPUTATION_DATA, X, y)
    io.write_json(out / IMPUTATION_META, meta)
    X, y, meta = lasso_example()
    io.write_xy(out / LASSO_DATA, X, y)
    io.write_json(out / LASSO_META, meta)
    io.write_json(out / DESK_GRID, desk_grid())


if __name__ == "__main__":
    build_all(sys.argv[1] if len(sys.argv) > 1 else path(""))
