"""Small lasso instances and a rejection-sampling oracle for the sampler."""

import itertools

import numpy as np

from postsel.lasso_core import Dataset, fit_lasso, selection_event
from postsel.sim_harness import gen_design


def small_instance(seed, rho=0.5, n=30, p=4, m=2):
    """A design with ``p`` AR(1) columns and a response where the lasso keeps ``m``."""
    rng = np.random.default_rng(seed)
    X = gen_design(n, p, rho, rng)
    b = np.zeros(p)
    b[:2] = np.array([0.15, -0.1]) * rng.uniform(0, 1)
    mu = X @ b
    while True:
        y = mu + rng.standard_normal(n)
        data = Dataset(X, y)
        lam = 0.3 * np.max(np.abs(X.T @ y))
        fit = fit_lasso(data, lam)
        if fit.active.size == m:
            return data, mu, lam, fit


def rejection_oracle(data, mu, lam, fit, n_draws=400_000, seed=0, sigma2=1.0):
    """Draws of eta from y ~ N(mu, sigma2 I) kept when the lasso selects ``fit.active``.

    Returns ``(eta draws, acceptance fraction)``.  Membership is decided
    through the affine event description for every sign vector.
    """
    X = data.X
    M = fit.active
    ev = selection_event(X, M, fit.signs, lam)
    C = ev.C
    rng = np.random.default_rng(seed)
    Y = mu + np.sqrt(sigma2) * rng.standard_normal((n_draws, X.shape[0]))
    eta = Y @ X[:, M] @ C
    xi = Y @ ev.A0.T
    keep = np.zeros(n_draws, dtype=bool)
    for s in itertools.product((-1.0, 1.0), repeat=M.size):
        s = np.array(s)
        active = np.all(s * (eta - lam * (C @ s)) > 0, axis=1)
        lo, hi = ev.inactive_bounds(s)
        keep |= active & np.all((xi > lo) & (xi < hi), axis=1)
    return eta[keep], keep.mean()


def lasso_agrees(data, lam, fit, y):
    """Direct check: does the lasso on ``y`` select the same model?"""
    f = fit_lasso(Dataset(data.X, y), lam)
    return f.active.tolist() == fit.active.tolist()
