"""Conditional maximum likelihood for normal means selected by thresholds.

Coordinate ``j`` of ``y ~ N(mu, sigma)`` is selected when ``y_j <= l_j`` or
``y_j >= u_j``.  Unselected means are fixed at their observed values and
the selected ones are fitted by stochastic ascent on the likelihood of
``y`` given the selection.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, linalg, optimize, stats

from .ascent import (AscentOptions, batch_means_stderr, newton_correction,
                     step_sizes, tail_average)
from .exceptions import (BracketError, InsufficientSamplesError, NoSelectionError,
                         NotSelectedError, SingularCovarianceError)
from .truncated_gaussian import (GibbsChain, TmvnSpec, TruncRegion,
                                 precompute_conditionals, trunc_moments)

__all__ = [
    "NormalMeansProblem", "Selection", "ConditionalFit", "select",
    "fit_conditional_mle", "conditional_ci", "naive_ci",
    "univariate_conditional_mle", "exact_conditional_loglik",
    "exact_plugin_mle", "exact_full_mle",
]

# one-sided roots beyond this are reported as -inf
ONE_SIDED_FLOOR = 1e6


@dataclass
class NormalMeansProblem:
    """Observed vector, known covariance and selection thresholds.

    Thresholds may coincide (``lower_j == upper_j``), in which case
    coordinate ``j`` is always selected and its truncation is vacuous.
    """

    y: np.ndarray
    sigma: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float).ravel()
        p = self.y.shape[0]
        self.sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        self.lower = np.broadcast_to(np.asarray(self.lower, dtype=float), (p,)).copy()
        self.upper = np.broadcast_to(np.asarray(self.upper, dtype=float), (p,)).copy()
        if self.sigma.shape != (p, p):
            raise ValueError(f"sigma has shape {self.sigma.shape}, expected ({p}, {p})")
        if np.any(self.lower > self.upper):
            raise ValueError("thresholds need lower <= upper")
        if not np.allclose(self.sigma, self.sigma.T, rtol=0, atol=1e-10):
            raise SingularCovarianceError("sigma is not symmetric")
        try:
            linalg.cholesky(self.sigma, lower=True)
        except linalg.LinAlgError as exc:
            raise SingularCovarianceError("sigma is not positive definite") from exc

    @property
    def p(self):
        return self.y.shape[0]

    def regions(self, selected=None):
        """Per-coordinate support of ``y`` given the selection."""
        if selected is None:
            selected = select(self).selected
        mask = np.zeros(self.p, dtype=bool)
        mask[selected] = True
        return [TruncRegion.outside(lo, hi) if m else TruncRegion.inside(lo, hi)
                for lo, hi, m in zip(self.lower, self.upper, mask)]


@dataclass
class Selection:
    selected: np.ndarray
    p: int

    @property
    def mask(self):
        m = np.zeros(self.p, dtype=bool)
        m[self.selected] = True
        return m

    def __len__(self):
        return len(self.selected)


def select(problem):
    """Indices with ``y_j <= l_j`` or ``y_j >= u_j`` (boundaries count)."""
    y = problem.y
    hit = (y <= problem.lower) | (y >= problem.upper)
    return Selection(np.flatnonzero(hit), problem.p)


@dataclass
class ConditionalFit:
    """Result of :func:`fit_conditional_mle`.

    ``ci_lower``, ``ci_upper``, ``score_residual`` and ``score_stderr`` are
    indexed like ``selected``.  ``quantile_samples`` holds the pivot draws
    used for the intervals and ``samples`` the raw post-convergence draws
    of ``y``.
    """

    estimate: np.ndarray
    selected: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    quantile_samples: np.ndarray
    samples: np.ndarray = field(repr=False)
    score_residual: np.ndarray
    score_stderr: np.ndarray
    trajectory: np.ndarray = field(repr=False)
    n_steps: int = 0
    degenerate_count: int = 0
    ci_level: float = 0.95

    def root_ratio(self):
        """Largest |score residual| in units of its Monte-Carlo error."""
        return float(np.max(np.abs(self.score_residual) / self.score_stderr))


def _precision(sigma):
    factor = linalg.cho_factor(sigma, lower=True)
    prec = linalg.cho_solve(factor, np.eye(sigma.shape[0]))
    return 0.5 * (prec + prec.T)


def pivot_draws(samples, prec, selected):
    """Centered and whitened draws of ``(sigma^{-1} y*)_M``.

    Each row is ``V^{-1} (w - w_bar)`` with ``w = (sigma^{-1} y*)_M`` and
    ``V`` the sample covariance of ``w``.
    """
    w = samples @ prec[selected].T
    wc = w - w.mean(axis=0)
    v = np.atleast_2d(np.cov(w, rowvar=False))
    try:
        return linalg.solve(v, wc.T, assume_a="pos").T
    except linalg.LinAlgError as exc:
        raise SingularCovarianceError("pivot covariance is singular") from exc


def _quantile_interval(center, pivot, alpha, min_samples):
    n = pivot.shape[0]
    if n < min_samples:
        raise InsufficientSamplesError(
            f"{n} pivot samples is below the required {int(np.ceil(min_samples))}")
    q_lo, q_hi = np.quantile(pivot, [alpha / 2, 1 - alpha / 2], axis=0)
    return center - q_hi, center - q_lo


def conditional_ci(fit, problem, alpha=0.05):
    """Intervals for the selected means from the pivot distribution.

    ``(mu_j - q_{1-alpha/2}, mu_j - q_{alpha/2})`` with ``q`` empirical
    quantiles of :func:`pivot_draws` over ``fit.samples``.  Requires at
    least ``100 / alpha`` samples.
    """
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    prec = _precision(problem.sigma)
    pivot = pivot_draws(fit.samples, prec, fit.selected)
    return _quantile_interval(fit.estimate[fit.selected], pivot, alpha, 100.0 / alpha)


def naive_ci(problem, alpha=0.05, selected=None):
    """Unadjusted Wald intervals ``y_j -/+ z_{1-alpha/2} sqrt(sigma_jj)`` over M."""
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    if selected is None:
        selected = select(problem).selected
    z = stats.norm.ppf(1 - alpha / 2)
    half = z * np.sqrt(np.diag(problem.sigma)[selected])
    y = problem.y[selected]
    return y - half, y + half


def fit_conditional_mle(problem, opts=None, rng=None):
    """Plug-in conditional MLE by stochastic ascent.

    Each step runs ``opts.gibbs_cycles_per_step`` Gibbs sweeps of the
    selection-conditional law at the current mean, warm-started from the
    previous state, and moves the selected means along
    ``sigma^{-1}_{j,.} (y - y_sample)``.  The estimate averages the last
    ``opts.average_fraction`` of the iterates and is then refined by
    ``opts.polish_rounds`` Newton steps on the Monte-Carlo score.  A fresh
    run at the estimate supplies the draws for the score residual and the
    intervals.
    """
    opts = AscentOptions() if opts is None else opts
    rng = np.random.default_rng(rng)
    sel = select(problem)
    if len(sel) == 0:
        raise NoSelectionError("no coordinate passed the thresholds")
    M = sel.selected

    prec = _precision(problem.sigma)
    coeffs = precompute_conditionals(problem.sigma)
    y = problem.y
    spec = TmvnSpec(y, problem.sigma, problem.regions(M))
    chain = GibbsChain(spec, y.copy(), coeffs=coeffs)

    prec_M = prec[M]
    target = prec_M @ y
    gammas = step_sizes(opts.n_steps, opts.step_scale / np.max(np.diag(prec)),
                        opts.step_exponent)
    mu = y.copy()
    trajectory = np.empty((opts.n_steps, len(M)))
    T = opts.gibbs_cycles_per_step
    for i, gamma in enumerate(gammas):
        chain.set_mean(mu)
        draw = chain.run(T, rng)
        mu[M] += gamma * (target - prec_M @ draw)
        trajectory[i] = mu[M]

    estimate = y.copy()
    estimate[M] = tail_average(trajectory, opts.average_fraction)

    for _ in range(opts.polish_rounds if opts.polish_samples else 0):
        chain.set_mean(estimate)
        w = chain.sample(opts.polish_samples, rng, burn_in=opts.burn_in, thin=opts.thin) @ prec_M.T
        estimate[M] += newton_correction(target - w.mean(axis=0), np.cov(w, rowvar=False))

    chain.set_mean(estimate)
    samples = chain.sample(opts.quantile_samples, rng, burn_in=opts.burn_in, thin=opts.thin)
    w = samples @ prec_M.T
    score_residual = target - w.mean(axis=0)
    score_stderr = batch_means_stderr(w)

    pivot = pivot_draws(samples, prec, M)
    alpha = opts.alpha
    lo, hi = _quantile_interval(estimate[M], pivot, alpha, 100.0 / alpha)
    return ConditionalFit(
        estimate=estimate, selected=M, ci_lower=lo, ci_upper=hi,
        quantile_samples=pivot, samples=samples,
        score_residual=score_residual, score_stderr=score_stderr,
        trajectory=trajectory, n_steps=opts.n_steps,
        degenerate_count=int(chain.degenerate.sum()), ci_level=opts.ci_level,
    )


def univariate_conditional_mle(y, c, side="two_sided"):
    """Conditional MLE of the mean of ``y ~ N(mu, 1)`` given selection.

    ``two_sided`` conditions on ``|y| > c`` and ``one_sided`` on ``y > c``.
    Solves ``y = E_mu(y | selected)`` by bracketing.  In the one-sided case
    the root runs off to minus infinity as ``y`` approaches ``c``; roots
    below ``-ONE_SIDED_FLOOR`` are reported as ``-inf``.
    """
    if c <= 0:
        raise ValueError("c must be positive")
    if side == "two_sided":
        if not abs(y) > c:
            raise NotSelectedError(f"|y| = {abs(y)} does not exceed c = {c}")
        region = TruncRegion.outside(-c, c)
    elif side == "one_sided":
        if not y > c:
            raise NotSelectedError(f"y = {y} does not exceed c = {c}")
        region = TruncRegion.inside(c, np.inf)
    else:
        raise ValueError(f"unknown side {side!r}")

    def score(mu):
        return y - trunc_moments(mu, 1.0, region)[0]

    lo, hi = min(-50.0, y - 50.0), y + 50.0
    f_lo, f_hi = score(lo), score(hi)
    while f_lo <= 0 and side == "one_sided" and lo > -ONE_SIDED_FLOOR:
        lo *= 10.0
        f_lo = score(lo)
    if f_lo <= 0:
        if side == "one_sided":
            return -np.inf
        raise BracketError(f"score does not change sign on [{lo}, {hi}]")
    if f_hi >= 0:
        raise BracketError(f"score does not change sign on [{lo}, {hi}]")
    return optimize.brentq(score, lo, hi, xtol=1e-12, rtol=1e-12)


# Exact likelihoods for p <= 2, used as diagnostics and test oracles.

def _interval_pieces(region):
    if region.kind == "inside":
        return [(region.lower, region.upper)]
    return [(-np.inf, region.lower), (region.upper, np.inf)]


def _region_prob(region, mean, sd):
    return float(np.exp(region.log_mass(mean, sd * sd)))


def selection_probability(mu, sigma, regions):
    """P(y in product of ``regions``) for ``y ~ N(mu, sigma)``, p <= 2."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    p = mu.shape[0]
    if p == 1:
        return _region_prob(regions[0], mu[0], np.sqrt(sigma[0, 0]))
    if p != 2:
        raise ValueError("exact selection probability is only available for p <= 2")
    # integrate over the coordinate whose region is bounded when possible
    order = (1, 0) if regions[0].kind == "outside" and regions[1].kind == "inside" else (0, 1)
    a, b = order
    sa = np.sqrt(sigma[a, a])
    slope = sigma[b, a] / sigma[a, a]
    cond_sd = np.sqrt(sigma[b, b] - slope * sigma[a, b])

    def integrand(t):
        return (stats.norm.pdf(t, mu[a], sa)
                * _region_prob(regions[b], mu[b] + slope * (t - mu[a]), cond_sd))

    total = 0.0
    for lo, hi in _interval_pieces(regions[a]):
        lo_c, hi_c = max(lo, mu[a] - 40 * sa), min(hi, mu[a] + 40 * sa)
        if lo_c < hi_c:
            total += integrate.quad(integrand, lo_c, hi_c, epsabs=0, epsrel=1e-10, limit=200)[0]
    return total


def exact_conditional_loglik(problem, mu, selected=None):
    """Log-likelihood of ``y`` given selection, up to a constant (p <= 2)."""
    mu = np.asarray(mu, dtype=float)
    r = problem.y - mu
    quad = r @ linalg.solve(problem.sigma, r, assume_a="pos")
    prob = selection_probability(mu, problem.sigma, problem.regions(selected))
    if prob <= 0:
        return -np.inf
    return -0.5 * quad - np.log(prob)


def exact_plugin_mle(problem, half_width=8.0, step=0.01):
    """Maximizer over the selected means with the others fixed at ``y``.

    Grid search on ``y_j -/+ half_width`` followed by a local refinement.
    Intended for p <= 2.
    """
    if problem.p > 2:
        raise ValueError("exact_plugin_mle is only available for p <= 2")
    M = select(problem).selected
    if len(M) == 0:
        raise NoSelectionError("no coordinate passed the thresholds")

    def negll(theta):
        mu = problem.y.copy()
        mu[M] = theta
        return -exact_conditional_loglik(problem, mu, M)

    if len(M) == 1:
        j = M[0]
        grid = np.arange(problem.y[j] - half_width, problem.y[j] + half_width + step / 2, step)
        vals = np.array([negll([g]) for g in grid])
        best = grid[np.argmin(vals)]
        res = optimize.minimize_scalar(lambda t: negll([t]), bounds=(best - step, best + step),
                                       method="bounded", options={"xatol": 1e-8})
        theta = np.array([res.x])
    else:
        theta = _grid_then_nelder_mead(negll, problem.y, half_width)
    out = problem.y.copy()
    out[M] = theta
    return out


def exact_full_mle(problem, half_width=8.0):
    """Maximizer over all means of the conditional likelihood (p <= 2)."""
    if problem.p > 2:
        raise ValueError("exact_full_mle is only available for p <= 2")
    M = select(problem).selected
    if len(M) == 0:
        raise NoSelectionError("no coordinate passed the thresholds")
    return _grid_then_nelder_mead(lambda mu: -exact_conditional_loglik(problem, mu, M),
                                  problem.y, half_width)


def _grid_then_nelder_mead(negll, center, half_width, n_grid=33):
    axes = [np.linspace(c - half_width, c + half_width, n_grid) for c in center]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(center))
    vals = np.array([negll(x) for x in pts])
    start = pts[np.argmin(vals)]
    res = optimize.minimize(negll, start, method="Nelder-Mead",
                            options={"xatol": 1e-6, "fatol": 1e-10, "maxiter": 4000})
    return res.x
