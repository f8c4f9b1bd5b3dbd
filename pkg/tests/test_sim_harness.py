import json

import numpy as np
import pytest

from postsel.exceptions import ConfigError
from postsel.sim_harness import (RepResult, SimConfig, aggregate, gen_coefs, gen_design,
                                 gen_response, read_replicates_csv, run_replicate, run_simulation,
                                 stream, write_aggregate_json, write_replicates_csv)

FAST = dict(n=60, p=10, k=3, rho=0.5, snr=1.0, seed=7, methods=("lasso", "refitted"))


# data generation

def test_design_independent_columns():
    X = gen_design(10_000, 3, 0.0, np.random.default_rng(0))
    C = X.T @ X / X.shape[0]
    # sd of an entry of the sample second-moment matrix is about sqrt(2/n) on
    # the diagonal and sqrt(1/n) off it
    se = np.where(np.eye(3, dtype=bool), np.sqrt(2 / 1e4), np.sqrt(1 / 1e4))
    assert np.all(np.abs(C - np.eye(3)) < 4 * se)


def test_design_ar1_correlation():
    X = gen_design(10_000, 3, 0.5, np.random.default_rng(1))
    r = np.corrcoef(X[:, 0], X[:, 1])[0, 1]
    # Fisher-z standard error of a sample correlation, mapped back
    assert abs(r - 0.5) < 4 * (1 - 0.25) / np.sqrt(1e4)
    assert abs(np.corrcoef(X[:, 0], X[:, 2])[0, 1] - 0.25) < 4 * (1 - 0.25 ** 2) / np.sqrt(1e4)


def test_design_single_column():
    X = gen_design(5000, 1, 0.7, np.random.default_rng(2))
    assert X.shape == (5000, 1)
    assert abs(X.std() - 1) < 0.05


def test_design_rejects_rho_one():
    with pytest.raises(ValueError):
        gen_design(10, 2, 1.0, 0)


def test_coefs_counts():
    rng = np.random.default_rng(3)
    assert np.all(gen_coefs(8, 0, rng) == 0)
    assert np.count_nonzero(gen_coefs(8, 8, rng)) == 8
    assert np.count_nonzero(gen_coefs(8, 3, rng)) == 3
    with pytest.raises(ValueError):
        gen_coefs(3, 4, rng)


def test_coefs_laplace_variance():
    b = gen_coefs(100_000, 100_000, np.random.default_rng(4))
    # var of b^2 for Laplace(1) is E b^4 - 4 = 24 - 4 = 20
    assert abs(np.var(b) - 2.0) < 4 * np.sqrt(20 / 1e5)


def test_response_noise_from_snr():
    rng = np.random.default_rng(5)
    X = rng.standard_normal((50, 2))
    beta = np.array([1.0, 0.0])
    mu = X @ beta
    X = X / np.std(mu, ddof=1)
    y, s2, zero = gen_response(X, beta, 0.2, rng)
    assert s2 == pytest.approx(5.0) and not zero


def test_response_near_noiseless_and_reproducible():
    X = gen_design(40, 3, 0.2, 0)
    beta = np.array([1.0, -2.0, 0.5])
    y, s2, _ = gen_response(X, beta, 1e6, np.random.default_rng(6))
    assert np.max(np.abs(y - X @ beta)) < 0.05
    y2, _, _ = gen_response(X, beta, 1e6, np.random.default_rng(6))
    np.testing.assert_array_equal(y, y2)
    with pytest.raises(ValueError):
        gen_response(X, beta, np.inf, 0)


def test_response_zero_signal_flagged():
    y, s2, zero = gen_response(np.ones((10, 2)), np.zeros(2), 0.5, 0)
    assert zero and s2 == 1.0


def test_streams_are_phase_separated():
    a = stream(1, 0, "design").standard_normal(3)
    b = stream(1, 0, "noise").standard_normal(3)
    c = stream(1, 1, "design").standard_normal(3)
    assert not np.allclose(a, b) and not np.allclose(a, c)
    np.testing.assert_array_equal(a, stream(1, 0, "design").standard_normal(3))


# configuration

@pytest.mark.parametrize("kw", [
    {"k": 11}, {"reps": 0}, {"rho": 1.0}, {"snr": 0.0}, {"snr": np.inf}, {"lambda_rule": "max"},
    {"methods": ("bayes",)}, {"methods": ()}, {"n": 2.5}, {"seed": -1}, {"ci_level": 1.0},
])
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        SimConfig(**{**FAST, **kw})


def test_config_dict_roundtrip():
    c = SimConfig(**FAST)
    d = c.to_dict()
    assert d["schema_version"] == 1
    assert SimConfig.from_dict(d) == c
    with pytest.raises(ConfigError):
        SimConfig.from_dict({**d, "colour": "red"})


# replicates

def test_lasso_only_replicate():
    r = run_replicate(SimConfig(**{**FAST, "methods": ("lasso",)}), 0)
    assert set(r.estimates) == {"lasso"} and r.covered == {}


def test_replicate_deterministic():
    c = SimConfig(**FAST)
    a, b = run_replicate(c, 3), run_replicate(c, 3)
    for m in a.estimates:
        np.testing.assert_array_equal(a.estimates[m], b.estimates[m])
    np.testing.assert_array_equal(a.covered["refitted"], b.covered["refitted"])
    assert a.lam == b.lam


def test_coverage_indicator_definition():
    c = SimConfig(**FAST)
    r = run_replicate(c, 1)
    from postsel.lasso_core import Dataset, refitted_ci
    from postsel.sim_harness import _data
    X, _, y, _, _ = _data(c, 1)
    lo, hi = refitted_ci(Dataset(X, y), r.active, r.sigma2_hat, 0.05)
    np.testing.assert_array_equal(r.covered["refitted"], (lo <= r.beta0) & (r.beta0 <= hi))
    np.testing.assert_allclose(r.lengths["refitted"], hi - lo)


def test_target_is_projection_of_mean():
    c = SimConfig(**FAST)
    r = run_replicate(c, 2)
    from postsel.sim_harness import _data
    X, beta, _, _, _ = _data(c, 2)
    XM = X[:, r.active]
    np.testing.assert_allclose(r.beta0, np.linalg.lstsq(XM, X @ beta, rcond=None)[0], atol=1e-10)


def test_replicate_with_conditional_method():
    c = SimConfig(**{**FAST, "methods": ("lasso", "refitted", "conditional"), "n_steps": 200,
                     "quantile_samples": 2000})
    r = run_replicate(c, 0)
    assert set(r.estimates) == {"lasso", "refitted", "conditional"}
    assert np.all(np.isfinite(r.lengths["conditional"])) and np.all(r.lengths["conditional"] > 0)


def test_parallel_matches_serial():
    c = SimConfig(**{**FAST, "reps": 4})
    serial = run_simulation(c)
    par = run_simulation(SimConfig(**{**FAST, "reps": 4, "workers": 2}))
    for a, b in zip(serial, par):
        assert a.rep_id == b.rep_id
        np.testing.assert_array_equal(a.estimates["refitted"], b.estimates["refitted"])


# aggregation

def fake(rep_id, est, beta0, covered=None, lengths=None):
    est = {m: np.asarray(v, float) for m, v in est.items()}
    r = RepResult(rep_id=rep_id, selected_size=len(beta0), active=np.arange(len(beta0)),
                  beta0=np.asarray(beta0, float), estimates=est,
                  pred_error={m: float(np.sum((v - beta0) ** 2)) for m, v in est.items()})
    r.covered = covered or {}
    r.lengths = lengths or {}
    return r


def test_identical_methods_give_zero():
    rs = [fake(i, {m: [1.0 + i, 2.0] for m in ("lasso", "refitted", "conditional")}, [0.5, 1.5])
          for i in range(3)]
    agg = aggregate(rs)
    assert agg.rel_mse["refitted"][0] == 0 and agg.rel_mse["conditional"][0] == 0
    assert agg.rel_pred["conditional"][0] == 0


def test_squared_deviation_reading():
    r = fake(0, {"lasso": [1.0, 0.0], "refitted": [3.0, 1.0]}, [0.0, 0.5])
    agg = aggregate([r])
    # log2(9/1) and log2(0.25/0.25), averaged over the two coordinates
    assert agg.rel_mse["refitted"][0] == pytest.approx(np.log2(9) / 2)


def test_unbounded_interval_always_covers():
    inf = np.full(2, np.inf)
    rs = [fake(i, {"lasso": [0.0, 0.0], "refitted": [1.0, 1.0]}, [5.0, -5.0],
               covered={"refitted": ((-inf <= 5) & (5 <= inf)).astype(int)},
               lengths={"refitted": inf}) for i in range(2)]
    agg = aggregate(rs)
    assert agg.coverage["refitted"] == 1.0
    assert agg.median_length["refitted"] == np.inf


def test_null_selection_counted_not_scored():
    rs = [fake(0, {"lasso": [1.0], "refitted": [2.0]}, [0.0]),
          RepResult(rep_id=1, selected_size=0, active=np.zeros(0, int))]
    agg = aggregate(rs)
    assert agg.n_reps == 2 and agg.n_null == 1
    assert agg.rel_mse["refitted"][0] == pytest.approx(2.0)


def test_aggregate_order_independent():
    results = run_simulation(SimConfig(**{**FAST, "reps": 6}))
    a = aggregate(results)
    b = aggregate(list(reversed(results))[::2] + list(reversed(results))[1::2])
    assert a.to_dict() == b.to_dict()
    with pytest.raises(ValueError):
        aggregate([])


def test_csv_and_json_outputs(tmp_path):
    c = SimConfig(**{**FAST, "reps": 3})
    results = run_simulation(c)
    write_replicates_csv(results, tmp_path / "reps.csv")
    rows = read_replicates_csv(tmp_path / "reps.csv")
    assert len(rows) == 3 and rows[0]["schema_version"] == 1
    assert rows[1]["lambda"] == results[1].lam
    assert np.isnan(rows[0]["conditional_sq_error"])
    text = (tmp_path / "reps.csv").read_text()
    assert text.startswith("# schema_version:") and "wall" not in text
    write_aggregate_json(aggregate(results), tmp_path / "agg.json", c)
    out = json.loads((tmp_path / "agg.json").read_text())
    assert out["schema_version"] == 1 and out["config"]["n"] == 60
    assert 0 <= out["aggregate"]["coverage"]["refitted"] <= 1
