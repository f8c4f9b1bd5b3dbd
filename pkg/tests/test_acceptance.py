"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line that is printed in the terminal
summary.  Criteria 6-8 run the shipped desk-scale simulation grid and take
several minutes each on one core.
"""

import os
import time

import numpy as np
import pytest

from conftest import report, within_mc
from lasso_oracle import rejection_oracle, small_instance
from test_lasso_core import boundary_crossings
from test_truncated_gaussian import grid_conditional_mean
from postsel.ascent import batch_means_stderr
from postsel.fixtures import load_desk_grid, load_imputation_fixture, normal_means_demo
from postsel.lasso_core import (Dataset, cv_lambda, eta_xi, fit_lasso, in_event,
                                selection_event, sigma2_lasso)
from postsel.lasso_postsel import (ImputationStrategy, LassoSampler, MhSpec, compare_imputations,
                                   fit_lasso_mle)
from postsel.normal_means import (NormalMeansProblem, exact_full_mle, fit_conditional_mle,
                                  univariate_conditional_mle)
from postsel.sim_harness import (_data, aggregate, gen_coefs, gen_design, gen_response,
                                 run_simulation, stream)
from postsel.truncated_gaussian import TmvnSpec, TruncRegion, feasible_point, sample_tmvn

pytestmark = pytest.mark.acceptance

WORKERS = os.cpu_count() or 1
TWO_MEANS = NormalMeansProblem([1.45, 1.8], [[1.0, 0.5], [0.5, 1.0]], -1.65, 1.65)


@pytest.fixture(scope="module")
def two_means_fit():
    t0 = time.perf_counter()
    fit = fit_conditional_mle(TWO_MEANS, rng=np.random.default_rng(11))
    full = exact_full_mle(TWO_MEANS)
    return fit, full, time.perf_counter() - t0


def test_criterion_1_two_means(two_means_fit):
    fit, full, secs = two_means_fit
    ok = (fit.estimate[0] == 1.45 and abs(fit.estimate[1] - 0.8) <= 0.15
          and np.all(np.abs(full - [5.4, 2.5]) <= 0.3) and secs < 30)
    detail = (f"plug-in ({fit.estimate[0]:.2f}, {fit.estimate[1]:.3f}), "
              f"full MLE ({full[0]:.2f}, {full[1]:.2f}), {secs:.1f} s")
    assert report(1, ok, detail)


def test_criterion_2_univariate_shapes():
    t0 = time.perf_counter()
    two = [univariate_conditional_mle(y, 1.96) for y in (2.0, 2.2, 2.5)]
    far = univariate_conditional_mle(6.0, 1.96)
    near = univariate_conditional_mle(1.97, 1.96, "one_sided")
    grid = np.linspace(1.96, 6.0, 51)[1:]
    one = np.array([univariate_conditional_mle(y, 1.96, "one_sided") for y in grid])
    secs = time.perf_counter() - t0
    ok = (all(e < y for e, y in zip(two, (2.0, 2.2, 2.5))) and abs(far - 6) < 0.05 and near < -5
          and np.all(np.diff(one) > 0) and secs < 1)
    assert report(2, ok, f"estimate(6) = {far:.4f}, one-sided estimate(1.97) = {near:.2f}, "
                         f"{secs:.2f} s")


def _normal_means_oracle_cases():
    cases = []
    for seed in range(5):
        rng = np.random.default_rng([3, seed])
        mu = rng.normal(0, 1, 2)
        r = rng.uniform(-0.7, 0.7)
        c = rng.uniform(1.0, 2.0, 2)
        second = TruncRegion.outside(-c[1], c[1]) if seed % 2 else TruncRegion.inside(-c[1], c[1])
        cases.append((mu, np.array([[1.0, r], [r, 1.0]]), [TruncRegion.outside(-c[0], c[0]), second]))
    return cases


def test_criterion_3_sampler_oracles():
    t0 = time.perf_counter()
    zs = []
    for k, (mu, S, regions) in enumerate(_normal_means_oracle_cases()):
        spec = TmvnSpec(mu, S, regions)
        x = sample_tmvn(spec, feasible_point(spec), 50_000, burn_in=1000,
                        rng=np.random.default_rng(k))
        zs.append(within_mc(x, grid_conditional_mean(mu, S, regions), batch=True)[1])
    for rho, seed in [(0.0, 0), (0.0, 2), (0.5, 0), (0.5, 3), (0.8, 3)]:
        data, mu, lam, fit = small_instance(seed, rho)
        ref, _ = rejection_oracle(data, mu, lam, fit, seed=100 + seed)
        ev = selection_event(data.X, fit.active, fit.signs, lam)
        beta = ev.C @ data.X[:, fit.active].T @ mu
        spec, state = MhSpec.from_data(data, fit.active, fit.signs, lam, 1.0,
                                       ImputationStrategy.truth(ev.A0 @ mu), beta=beta)
        S = LassoSampler(spec, state).sample(100_000, np.random.default_rng(seed), burn_in=1000)
        se = np.hypot(batch_means_stderr(S), ref.std(axis=0) / np.sqrt(len(ref)))
        zs.append(np.abs(S.mean(axis=0) - ref.mean(axis=0)) / se)
    secs = time.perf_counter() - t0
    worst = float(np.max(np.concatenate(zs)))
    assert report(3, worst < 4 and secs < 300,
                  f"10 instances, largest |z| = {worst:.2f}, {secs:.0f} s")


def test_criterion_4_kkt_event_equivalence():
    t0 = time.perf_counter()
    members = 0
    for rep in range(100):
        rng = np.random.default_rng([4, rep])
        n, p = (40, 15) if rep % 2 else (80, 120)
        X = gen_design(n, p, 0.5 * (rep % 3) / 2, rng)
        y, _, _ = gen_response(X, gen_coefs(p, 3, rng), 1.0, rng)
        data = Dataset(X, y)
        lam = rng.uniform(0.1, 0.6) * np.max(np.abs(X.T @ y))
        fit = fit_lasso(data, lam)
        if fit.active.size == 0:
            members += bool(np.all(np.abs(X.T @ y) <= lam))
            continue
        ev = selection_event(X, fit.active, fit.signs, lam)
        ex = eta_xi(data, fit.active, lam)
        members += in_event(ev, ex.eta, ex.xi, tol=fit.kkt_tol / lam) == (True, True)
    flips = 0
    for seed in range(10):
        X, y, d, lam, fit, lo, hi = boundary_crossings(seed)
        step = 1e-6 * (1 + hi)
        key = (fit.active.tolist(), fit.signs.tolist())
        before = fit_lasso(Dataset(X, y + (lo - step) * d), lam)
        after = fit_lasso(Dataset(X, y + (hi + step) * d), lam)
        flips += ((before.active.tolist(), before.signs.tolist()) == key
                  and (after.active.tolist(), after.signs.tolist()) != key)
    secs = time.perf_counter() - t0
    assert report(4, members == 100 and flips == 10 and secs < 60,
                  f"{members}/100 fits in their event, {flips}/10 crossings flip, {secs:.1f} s")


def test_criterion_5_score_roots(two_means_fit):
    ratios = {"normal means": [two_means_fit[0].root_ratio()], "lasso": []}
    for seed in range(5):
        y, _, cfg = normal_means_demo(seed=200 + seed)
        rho = cfg["sigma"]["correlation"]
        S = (1 - rho) * np.eye(y.size) + rho * np.ones((y.size, y.size))
        pr = NormalMeansProblem(y, S, -cfg["threshold"], cfg["threshold"])
        ratios["normal means"].append(fit_conditional_mle(pr, rng=np.random.default_rng(seed))
                                      .root_ratio())
    for cfg in load_desk_grid()[:3]:
        for rep in range(8):
            X, _, y, _, _ = _data(cfg, rep)
            data = Dataset(X, y)
            lam = cv_lambda(data, rng=stream(cfg.seed, rep, "cv"))
            lasso = fit_lasso(data, lam)
            if lasso.active.size == 0:
                continue
            fit = fit_lasso_mle(data, lam, sigma2_lasso(data, lasso),
                                rng=stream(cfg.seed, rep, "sampler"), lasso=lasso)
            ratios["lasso"].append(fit.root_ratio())
    worst = {k: max(v) for k, v in ratios.items()}
    ok = all(w < 4 for w in worst.values())
    assert report(5, ok, ", ".join(f"{k}: {len(ratios[k])} fits, max |r|/se = {w:.2f}"
                                   for k, w in worst.items()))


@pytest.fixture(scope="module")
def desk_runs():
    out = {}
    for name, cfg in zip(("dense", "sparse"), load_desk_grid()[:2]):
        cfg.workers = WORKERS
        t0 = time.perf_counter()
        out[name] = (aggregate(run_simulation(cfg)), time.perf_counter() - t0)
    return out


def test_criterion_6_coverage(desk_runs):
    agg, secs = desk_runs["dense"]
    cond, refit = agg.coverage["conditional"], agg.coverage["refitted"]
    ok = 0.92 <= cond <= 0.99 and refit < 0.90
    assert report(6, ok, f"conditional {cond:.3f}, refitted {refit:.3f} "
                         f"({agg.n_reps} reps, {agg.n_null} empty, {secs / 60:.1f} min)")


def test_criterion_7_estimation_ordering(desk_runs):
    parts, ok = [], True
    for name in ("dense", "sparse"):
        agg = desk_runs[name][0]
        cond, refit = agg.rel_mse["conditional"][0], agg.rel_mse["refitted"][0]
        ok &= cond <= 0 and refit > cond
        parts.append(f"{name}: conditional {cond:.2f}, refitted {refit:.2f}")
    assert report(7, ok, "; ".join(parts))


def test_criterion_8_interval_size_trend():
    t0 = time.perf_counter()
    ratio, se, ns = [], [], []
    for cfg in load_desk_grid()[2:]:
        cfg.workers = WORKERS
        agg = aggregate(run_simulation(cfg))
        ratio.append(agg.ci_ratio_log2)
        se.append(agg.ci_ratio_log2_se)
        ns.append(cfg.n)
    secs = time.perf_counter() - t0
    monotone = all(ratio[i + 1] <= ratio[i] + se[i + 1] for i in range(len(ratio) - 1))
    ok = monotone and abs(ratio[-1]) < abs(ratio[0]) and secs < 1800
    detail = ", ".join(f"n={n}: {r:.3f} +/- {s:.3f}" for n, r, s in zip(ns, ratio, se))
    assert report(8, ok, f"{detail} ({secs / 60:.1f} min)")


def test_criterion_9_imputation_equivalence():
    t0 = time.perf_counter()
    X, y, meta = load_imputation_fixture()
    out = compare_imputations(Dataset(X, y), meta["lambda"], meta["sigma2"], ("zero", "none"),
                              rng=0, truth=meta["mu"])
    arg = {k: v.argmax for k, v in out.items()}
    gap = max(np.max(np.abs(arg[a] - arg[b])) for a in arg for b in arg)
    secs = time.perf_counter() - t0
    assert report(9, len(meta["active"]) <= 2 and gap < 0.05 and secs < 120,
                  f"|M| = {len(meta['active'])}, largest argmax gap {gap:.4f}, {secs:.0f} s")
