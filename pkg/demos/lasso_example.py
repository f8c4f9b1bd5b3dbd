"""Lasso, refitted and conditional estimates on the shipped example data.

n = 200, p = 100, five Laplace coefficients, AR(1) design with rho = 0.5
and signal-to-noise ratio 0.2.  The penalty is chosen by 10-fold
cross-validation.
"""

import numpy as np

from postsel import fixtures, io
from postsel.lasso_core import Dataset, cv_lambda, fit_lasso, refitted_ci, sigma2_lasso
from postsel.lasso_postsel import fit_lasso_mle

X, y, names = io.read_xy(fixtures.path(fixtures.LASSO_DATA))
beta = np.array(io.read_json(fixtures.path(fixtures.LASSO_META))["beta"])
data = Dataset(X, y)
rng = np.random.default_rng(1)
lam = cv_lambda(data, rng=rng)
lasso = fit_lasso(data, lam)
sigma2 = sigma2_lasso(data, lasso)
fit = fit_lasso_mle(data, lam, sigma2, rng=rng, lasso=lasso)
lo, hi = refitted_ci(data, fit.active, sigma2)

XM = X[:, fit.active]
beta0 = np.linalg.lstsq(XM, X @ beta, rcond=None)[0]
print(f"lambda = {lam:.3f}, |M| = {fit.active.size}, sigma2 = {sigma2:.3f}")
print(f"{'var':>5} {'target':>8} {'lasso':>8} {'refit':>8} {'cond':>8}   conditional CI      refitted CI")
for i, j in enumerate(fit.active):
    print(f"{names[j]:>5} {beta0[i]:8.3f} {fit.lasso_beta[i]:8.3f} {fit.eta[i]:8.3f} "
          f"{fit.beta_hat[i]:8.3f}   ({fit.ci_lower[i]:6.2f}, {fit.ci_upper[i]:6.2f})"
          f"   ({lo[i]:6.2f}, {hi[i]:6.2f})")
print(f"score residual / MC stderr: {fit.root_ratio():.2f}")
