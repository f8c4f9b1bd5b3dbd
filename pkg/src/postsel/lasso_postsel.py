"""Conditional inference for coefficients selected by the lasso.

The sampler targets the law of ``eta = (X_M'X_M)^{-1} X_M' y`` given that
the lasso selects ``M`` (with any sign vector).  Each sweep redraws the
inactive statistic ``xi`` inside its box and then updates the coordinates
of ``eta`` with a Gibbs proposal, falling back to a delayed-rejection
second stage when a sign change pushes the other coordinates out of the
event.  A sign-reflection move lets the chain cross between sign patterns
whose inactive boxes do not overlap.  Stochastic ascent with these draws gives the conditional MLE.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, stats

from . import _kernels as K
from .ascent import (AscentOptions, batch_means_stderr, newton_correction,
                     step_sizes, tail_average)
from .exceptions import (DegenerateMassError, DimensionError, InsufficientSamplesError,
                         InvalidInitError, NoSelectionError, RankDeficientError,
                         SingularCovarianceError)
from .lasso_core import eta_xi, fit_lasso, in_event, refitted_ci, selection_event
from .truncated_gaussian import precompute_conditionals

__all__ = [
    "ImputationStrategy", "MhState", "MhSpec", "LassoSampler",
    "LassoConditionalFit", "sign_thresholds", "sample_xi", "mh_sweep",
    "acceptance_prob", "fit_lasso_mle", "lasso_conditional_ci", "refitted_ci",
    "compare_imputations", "lasso_signs", "LoglikModel", "LoglikSurface", "ImputationResult",
    "loglik_model", "loglik_surface",
]

STAT_NAMES = ("first_stage", "same_side", "sign_flip", "xi_reject", "second_stage",
              "reverse_legal", "second_accept", "second_reject", "numeric_reject",
              "degenerate", "reflect_try", "reflect_accept")

DEFAULT_XI_CYCLES = 2
EXTRA_POLISH_ROUNDS = 3
RETRY_RATIO = 3.0


@dataclass(frozen=True)
class ImputationStrategy:
    """How the mean of the inactive statistic is filled in.

    ``zero`` uses a vector of zeros, ``plugin`` the observed statistic,
    ``truth`` a supplied vector and ``none`` drops the inactive constraint
    altogether.
    """

    kind: str = "zero"
    value: tuple = None

    def __post_init__(self):
        if self.kind not in ("zero", "plugin", "none", "truth"):
            raise ValueError(f"unknown imputation {self.kind!r}")
        if self.kind == "truth":
            if self.value is None:
                raise ValueError("truth imputation needs a value")
            object.__setattr__(self, "value", tuple(np.asarray(self.value, dtype=float).ravel()))

    @classmethod
    def zero(cls):
        return cls("zero")

    @classmethod
    def plugin(cls):
        return cls("plugin")

    @classmethod
    def none(cls):
        return cls("none")

    @classmethod
    def truth(cls, value):
        return cls("truth", value)

    @classmethod
    def parse(cls, name):
        if isinstance(name, cls):
            return name
        return cls(name)

    @property
    def checks_xi(self):
        return self.kind != "none"

    def xi_mean(self, observed_xi):
        q = len(observed_xi)
        if self.kind == "plugin":
            return np.array(observed_xi, dtype=float)
        if self.kind == "truth":
            v = np.array(self.value)
            if v.shape != (q,):
                raise ValueError(f"truth imputation has length {v.size}, expected {q}")
            return v
        return np.zeros(q)


def lasso_signs(eta, C, lam):
    """Signs of the lasso coefficients ``eta - lam C s`` implied by ``eta``.

    Coordinate ``j`` has sign +1 when ``eta_j >= u_j`` and -1 when
    ``eta_j <= l_j``.  Raises if some ``eta_j`` lies strictly between.
    """
    m = len(eta)
    s = np.empty(m)
    for j in range(m):
        s[j] = 1.0
    for _ in range(m + 1):
        changed = False
        for j in range(m):
            lo, hi = K.first_stage_bounds(j, s, C, lam)
            new = 1.0 if eta[j] >= hi else (-1.0 if eta[j] <= lo else 0.0)
            if new == 0.0:
                raise InvalidInitError(f"eta[{j}] lies inside its sign thresholds")
            if new != s[j]:
                s[j] = new
                changed = True
        if not changed:
            return s
    raise InvalidInitError("no consistent sign vector for eta")


def sign_thresholds(j, signs, event):
    """``(l_j, u_j)``: eta_j must avoid this interval given the other signs."""
    return K.first_stage_bounds(int(j), np.asarray(signs, dtype=float), event.C, event.lam)


@dataclass
class MhState:
    eta: np.ndarray
    xi: np.ndarray
    signs: np.ndarray

    def copy(self):
        return MhState(self.eta.copy(), self.xi.copy(), self.signs.copy())


def _robust_conditionals(cov, max_cond=1e12):
    # cov of xi is singular when p > n; a small ridge keeps the Gibbs
    # conditionals defined without changing the box constraints
    scale = float(np.mean(np.diag(cov))) if cov.size else 1.0
    for jitter in (0.0, 1e-10, 1e-8, 1e-6, 1e-4):
        try:
            c = cov + jitter * scale * np.eye(cov.shape[0]) if jitter else cov
            return precompute_conditionals(c, max_cond=max_cond), jitter
        except SingularCovarianceError:
            continue
    raise SingularCovarianceError("inactive covariance is singular even after regularization")


@dataclass
class MhSpec:
    """Everything the sampler needs for one selected model.

    ``beta`` is the mean of the untruncated law of ``eta``; it is the
    only field that changes during the ascent.  ``reflect`` adds a
    sign-reflection move after each sweep.  Without it the chain cannot
    change the sign of coordinate j whenever some ``|B[r, j]| >= 1``,
    because the inactive boxes of the two signs are then disjoint while
    the inactive statistic is held fixed.
    """

    event: object
    beta: np.ndarray
    sigma2: float
    xi_mean: np.ndarray
    cov_xi: np.ndarray
    check_xi: bool = True
    xi_cycles: int = DEFAULT_XI_CYCLES
    reflect: bool = True
    xi_jitter: float = field(default=0.0, init=False)

    def __post_init__(self):
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be positive")
        self.beta = np.asarray(self.beta, dtype=float).copy()
        ev = self.event
        self.cov_eta = self.sigma2 * ev.C
        self.prec_eta = linalg.inv(self.cov_eta)
        self.prec_eta = 0.5 * (self.prec_eta + self.prec_eta.T)
        m = ev.C.shape[0]
        if m == 1:
            self.eta_weights = np.zeros((1, 1))
            self.eta_sd = np.sqrt(np.diag(self.cov_eta))
        else:
            cc = precompute_conditionals(self.cov_eta)
            self.eta_weights, self.eta_sd = cc.weights, cc.cond_sd
        q = ev.B.shape[0]
        if q and self.check_xi:
            cc, self.xi_jitter = _robust_conditionals(self.cov_xi)
            self.xi_weights, self.xi_sd = cc.weights, cc.cond_sd
        else:
            self.xi_weights, self.xi_sd = np.zeros((q, q)), np.ones(q)
        if not self.check_xi:
            self.xi_cycles = 0
        if q and self.check_xi:
            cov = self.cov_xi + self.xi_jitter * np.mean(np.diag(self.cov_xi)) * np.eye(q)
            self.xi_prec_B = np.ascontiguousarray(linalg.pinvh(cov) @ ev.B)
            self.xi_BPB = np.einsum("rj,rj->j", ev.B, self.xi_prec_B)
        else:
            self.xi_prec_B, self.xi_BPB = np.zeros((q, m)), np.zeros(m)

    @classmethod
    def from_data(cls, data, M, s, lam, sigma2, strategy=None, beta=None,
                  xi_cycles=DEFAULT_XI_CYCLES, reflect=True):
        strategy = ImputationStrategy() if strategy is None else ImputationStrategy.parse(strategy)
        event = selection_event(data.X, M, s, lam)
        ex = eta_xi(data, M, lam, sigma2)
        _check_inactive_span(data.X, M)
        beta = ex.eta if beta is None else beta
        spec = cls(event, beta, sigma2, strategy.xi_mean(ex.xi), ex.cov_xi,
                   check_xi=strategy.checks_xi, xi_cycles=xi_cycles, reflect=reflect)
        return spec, MhState(ex.eta.copy(), ex.xi.copy(), np.asarray(s, dtype=float).copy())

    @property
    def m(self):
        return self.event.C.shape[0]

    @property
    def q(self):
        return self.event.B.shape[0]

    def uniforms_per_sweep(self):
        return K.sweep_uniform_count(self.m, self.q, self.xi_cycles, self.reflect)


def _check_inactive_span(X, M):
    """An inactive column inside span(X_M) pins its xi coordinate to the box edge."""
    inactive = np.setdiff1d(np.arange(X.shape[1]), M)
    if inactive.size == 0:
        return
    XM = X[:, M]
    XI = X[:, inactive]
    R = XI - XM @ np.linalg.lstsq(XM, XI, rcond=None)[0]
    bad = np.linalg.norm(R, axis=0) <= 1e-10 * np.maximum(np.linalg.norm(XI, axis=0), 1e-300)
    if np.any(bad):
        raise RankDeficientError(
            f"inactive columns {inactive[bad].tolist()} lie in the span of the selected columns")


class LassoSampler:
    """Stateful delayed-rejection chain for one :class:`MhSpec`."""

    def __init__(self, spec, state):
        self.spec = spec
        self.state = state.copy()
        self.state.eta = np.ascontiguousarray(self.state.eta, dtype=float)
        self.state.xi = np.ascontiguousarray(self.state.xi, dtype=float)
        self.state.signs = np.ascontiguousarray(self.state.signs, dtype=float)
        self.stats = np.zeros(K.N_STATS, dtype=np.int64)
        self.xi_degenerate = np.zeros(spec.q, dtype=np.int64)
        ok_a, ok_i = in_event(spec.event, self.state.eta, self.state.xi, self.state.signs)
        if not ok_a or (spec.check_xi and not ok_i):
            raise InvalidInitError("initial state is outside the selection event")

    def _run(self, n_sweeps, rng, thin, out):
        sp, st = self.spec, self.state
        per = sp.uniforms_per_sweep()
        chunk = max(thin, (1 << 20) // max(per, 1) // thin * thin)
        done = 0
        row = 0
        while done < n_sweeps:
            k = min(chunk, n_sweeps - done)
            rows = k // thin if out.shape[0] else 0
            K.mh_chain(st.eta, st.signs, st.xi, sp.beta, sp.eta_weights, sp.eta_sd,
                       sp.prec_eta, sp.event.C, sp.event.lam, sp.event.B, sp.xi_mean,
                       sp.xi_weights, sp.xi_sd, sp.check_xi, sp.xi_cycles,
                       rng.random(per * k), per, k, thin, out[row:row + rows],
                       self.stats, self.xi_degenerate,
                       sp.reflect, sp.sigma2, sp.xi_prec_B, sp.xi_BPB)
            done += k
            row += rows

    def run(self, n_sweeps, rng):
        self._run(n_sweeps, rng, 1, np.empty((0, self.spec.m)))
        return self.state

    def sample(self, n_samples, rng, burn_in=0, thin=1):
        self.run(burn_in, rng)
        out = np.empty((n_samples, self.spec.m))
        self._run(n_samples * thin, rng, thin, out)
        return out

    def acceptance_stats(self):
        return dict(zip(STAT_NAMES, self.stats.tolist()))


def sample_xi(spec, signs, rng, xi=None, cycles=None):
    """Draw the inactive statistic given the signs.

    Under the ``none`` strategy the draw is from the untruncated normal;
    otherwise ``cycles`` Gibbs sweeps inside the box ``|xi + B s| < 1``,
    started from ``xi`` (default: the box center clipped towards the mean).
    """
    rng = np.random.default_rng(rng)
    q = spec.q
    if not spec.check_xi:
        if q == 0:
            return np.zeros(0)
        chol = _psd_sqrt(spec.cov_xi)
        return spec.xi_mean + chol @ rng.standard_normal(chol.shape[1])
    s = np.asarray(signs, dtype=float)
    lo, hi = spec.event.inactive_bounds(s)
    if xi is None:
        xi = np.clip(spec.xi_mean, lo + 1e-9 * (hi - lo), hi - 1e-9 * (hi - lo))
    xi = np.array(xi, dtype=float)
    cycles = spec.xi_cycles if cycles is None else cycles
    deg = np.zeros(q, dtype=np.int64)
    K.gibbs_cycles(xi, spec.xi_mean, spec.xi_weights, spec.xi_sd,
                   np.zeros(q, dtype=np.int64), lo, hi, rng.random(2 * q * cycles), cycles, deg)
    if deg.any():
        j = int(np.flatnonzero(deg)[0])
        raise DegenerateMassError(f"inactive coordinate {j} has a degenerate box", coordinate=j)
    return xi


def _psd_sqrt(cov):
    w, v = np.linalg.eigh(cov)
    return v * np.sqrt(np.clip(w, 0.0, None))


def mh_sweep(state, spec, rng):
    """One outer iteration of the sampler; returns the new state and stage counts."""
    sampler = LassoSampler(spec, state)
    sampler.run(1, np.random.default_rng(rng))
    return sampler.state, sampler.acceptance_stats()


def acceptance_prob(current, proposal, spec, j):
    """Second-stage acceptance probability of moving ``current`` -> ``proposal``.

    ``j`` is the coordinate whose first-stage draw triggered the second
    stage.  Evaluated in log space; a non-finite ratio counts as a reject.
    """
    ev = spec.event
    lr = K.log_dr_ratio(np.asarray(current.eta, dtype=float), np.asarray(current.signs, dtype=float),
                        np.asarray(proposal.eta, dtype=float), np.asarray(proposal.signs, dtype=float),
                        int(j), spec.beta, spec.eta_weights, spec.eta_sd, spec.prec_eta, ev.C, ev.lam)
    if np.isnan(lr):
        return 0.0
    return float(np.exp(min(lr, 0.0)))


@dataclass
class LassoConditionalFit:
    """Result of :func:`fit_lasso_mle`; vectors are indexed like ``active``."""

    beta_hat: np.ndarray
    active: np.ndarray
    signs: np.ndarray
    lam: float
    sigma2: float
    eta: np.ndarray
    lasso_beta: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    pivot_samples: np.ndarray = field(repr=False)
    samples: np.ndarray = field(repr=False)
    score_residual: np.ndarray
    score_stderr: np.ndarray
    sign_projection_count: int
    acceptance_stats: dict
    trajectory: np.ndarray = field(repr=False)
    ci_level: float = 0.95

    @property
    def pinned(self):
        """Coordinates held at zero by the sign constraint."""
        return self.beta_hat == 0

    def root_ratio(self):
        """Largest score residual in units of its Monte-Carlo error.

        Coordinates held at zero only count the part of the residual that
        points across the constraint.
        """
        return _root_ratio(self.beta_hat, np.sign(self.eta), self.score_residual,
                           self.score_stderr)


def _root_ratio(beta, s0, score, se):
    r = score / se
    return float(np.max(np.where(beta == 0, np.maximum(s0 * r, 0.0), np.abs(r))))


def _project(beta, s0):
    clipped = s0 * np.maximum(0.0, s0 * beta)
    return clipped, int(np.count_nonzero(clipped != beta))


def _pivot(t, sigma2):
    tc = t - t.mean(axis=0)
    v = np.atleast_2d(np.cov(t, rowvar=False))
    try:
        return sigma2 * linalg.solve(v, tc.T, assume_a="pos").T
    except linalg.LinAlgError as exc:
        raise SingularCovarianceError("pivot covariance is singular") from exc


def _interval(center, pivot, alpha):
    n = pivot.shape[0]
    if n < 100.0 / alpha:
        raise InsufficientSamplesError(
            f"{n} pivot samples is below the required {int(np.ceil(100 / alpha))}")
    q_lo, q_hi = np.quantile(pivot, [alpha / 2, 1 - alpha / 2], axis=0)
    return center - q_hi, center - q_lo


def lasso_conditional_ci(fit, data, sigma2=None, alpha=0.05):
    """Conditional-Wald intervals from the pivot ``sigma2 V^{-1} (t* - mean t*)``.

    ``t* = X_M' X_M eta*`` over the stored samples and ``V`` is their
    sample covariance.  Requires at least ``100 / alpha`` samples.
    """
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    sigma2 = fit.sigma2 if sigma2 is None else sigma2
    XM = data.X[:, fit.active]
    t = fit.samples @ (XM.T @ XM)
    return _interval(fit.beta_hat, _pivot(t, sigma2), alpha)


def _polish(beta, s0, target, sample_t, rounds, sigma2):
    # projected Newton steps on the coordinates not held by the constraint;
    # the score's derivative is Cov(X_M'y) / sigma2
    for _ in range(rounds):
        t = sample_t(beta)
        r = target - t.mean(axis=0)
        pinned = beta == 0
        free = ~pinned | (s0 * r > 0)
        if not free.any():
            break
        v = np.atleast_2d(np.cov(t, rowvar=False)) / sigma2
        step = np.zeros_like(beta)
        step[free] = newton_correction(r[free], v[np.ix_(free, free)])
        beta, _ = _project(beta + step, s0)
    return beta


def fit_lasso_mle(data, lam, sigma2, strategy=None, opts=None, rng=None, lasso=None,
                  xi_cycles=DEFAULT_XI_CYCLES, reflect=True):
    """Conditional MLE of the selected coefficients by stochastic ascent.

    Starts from the refitted least-squares estimate ``eta`` and iterates
    ``beta += gamma_i (X_M'y - X_M'X_M eta_i)`` with ``eta_i`` from the
    sampler at the current ``beta``.  After every step coordinates whose
    sign differs from that of ``eta`` are set to zero.  The estimate is
    the average of the trailing iterates followed by projected Newton
    refinement; intervals and the score residual come from a fresh run at
    the estimate.
    """
    opts = AscentOptions() if opts is None else opts
    rng = np.random.default_rng(rng)
    lasso = fit_lasso(data, lam) if lasso is None else lasso
    M, s = lasso.active, lasso.signs
    if M.size == 0:
        raise NoSelectionError("the lasso selected no variables")

    spec, state = MhSpec.from_data(data, M, s, lam, sigma2, strategy, xi_cycles=xi_cycles,
                                   reflect=reflect)
    sampler = LassoSampler(spec, state)
    XM = data.X[:, M]
    G = XM.T @ XM
    eta_obs = state.eta.copy()
    target = XM.T @ data.y
    s0 = np.sign(eta_obs)

    scale = opts.step_scale / np.linalg.norm(G, 2)
    gammas = step_sizes(opts.n_steps, scale, opts.step_exponent)
    beta = eta_obs.copy()
    trajectory = np.empty((opts.n_steps, M.size))
    n_proj = 0
    T = opts.gibbs_cycles_per_step
    for i, gamma in enumerate(gammas):
        spec.beta[:] = beta
        eta = sampler.run(T, rng).eta
        beta = beta + gamma * (target - G @ eta)
        beta, k = _project(beta, s0)
        n_proj += k
        trajectory[i] = beta

    beta = tail_average(trajectory, opts.average_fraction)

    def sample_t(b):
        spec.beta[:] = b
        return sampler.sample(opts.polish_samples, rng, burn_in=opts.burn_in, thin=opts.thin) @ G

    if opts.polish_samples:
        beta = _polish(beta, s0, target, sample_t, opts.polish_rounds, sigma2)

    for extra in range(EXTRA_POLISH_ROUNDS + 1):
        spec.beta[:] = beta
        samples = sampler.sample(opts.quantile_samples, rng, burn_in=opts.burn_in, thin=opts.thin)
        t = samples @ G
        score = target - t.mean(axis=0)
        se = batch_means_stderr(t)
        # refine again only when the estimate is visibly off the root
        if (not opts.polish_samples or extra == EXTRA_POLISH_ROUNDS
                or _root_ratio(beta, s0, score, se) < RETRY_RATIO):
            break
        beta = _polish(beta, s0, target, sample_t, 1, sigma2)
    lo, hi = _interval(beta, _pivot(t, sigma2), opts.alpha)
    return LassoConditionalFit(
        beta_hat=beta, active=M, signs=s, lam=float(lam), sigma2=float(sigma2),
        eta=eta_obs, lasso_beta=lasso.beta[M].copy(), ci_lower=lo, ci_upper=hi,
        pivot_samples=_pivot(t, sigma2), samples=samples, score_residual=score,
        score_stderr=se, sign_projection_count=n_proj,
        acceptance_stats=sampler.acceptance_stats(), trajectory=trajectory,
        ci_level=opts.ci_level,
    )


def _sign_patterns(m):
    return np.array(list(itertools.product((-1.0, 1.0), repeat=m)))


def _orthant_prob(mean, cov):
    # P(v < 0) for v ~ N(mean, cov)
    if mean.size == 1:
        return float(stats.norm.cdf(-mean[0] / np.sqrt(cov[0, 0])))
    return float(stats.multivariate_normal.cdf(np.zeros(mean.size), mean, cov,
                                               abseps=1e-12, releps=1e-8))


@dataclass
class LoglikModel:
    """Conditional log-likelihood of ``eta`` given selection of ``M``.

    ``loglik(beta) = log phi(eta_obs; beta, sigma2 C)
    - log sum_s w_s P_beta(eta in A1(s))`` where ``w_s`` is the probability
    of the inactive box for signs ``s`` under the imputed mean, estimated
    once by Monte Carlo (all ones under the ``none`` strategy).
    """

    event: object
    eta: np.ndarray
    sigma2: float
    patterns: np.ndarray
    weights: np.ndarray

    def selection_prob(self, beta):
        ev, total = self.event, 0.0
        cov = self.sigma2 * ev.C
        for s, w in zip(self.patterns, self.weights):
            if w <= 0:
                continue
            center = np.asarray(beta, dtype=float) - ev.lam * (ev.C @ s)
            total += w * _orthant_prob(-s * center, cov * np.outer(s, s))
        return total

    def loglik(self, beta):
        prob = self.selection_prob(beta)
        if prob <= 0:
            return -np.inf
        dens = stats.multivariate_normal(beta, self.sigma2 * self.event.C).logpdf(self.eta)
        return float(dens - np.log(prob))


def loglik_model(data, lam, sigma2, strategy=None, lasso=None, n_xi=20000, rng=None,
                 max_dim=4):
    """Build a :class:`LoglikModel` for the lasso selection on ``data``."""
    strategy = ImputationStrategy() if strategy is None else ImputationStrategy.parse(strategy)
    lasso = fit_lasso(data, lam) if lasso is None else lasso
    M = lasso.active
    if M.size == 0:
        raise NoSelectionError("the lasso selected no variables")
    if M.size > max_dim:
        raise DimensionError(f"|M| = {M.size} exceeds {max_dim}; the likelihood sums over 2^|M| signs")
    event = selection_event(data.X, M, lasso.signs, lam)
    ex = eta_xi(data, M, lam, sigma2)
    patterns = _sign_patterns(M.size)
    if strategy.checks_xi and event.B.shape[0]:
        z = np.random.default_rng(rng).standard_normal((n_xi, event.B.shape[0]))
        xi = strategy.xi_mean(ex.xi) + z @ _psd_sqrt(ex.cov_xi).T
        weights = np.array([np.all(np.abs(xi + event.B @ sg) < 1, axis=1).mean() for sg in patterns])
    else:
        weights = np.ones(len(patterns))
    return LoglikModel(event, ex.eta, float(sigma2), patterns, weights)


@dataclass
class LoglikSurface:
    axes: list
    values: np.ndarray
    argmax: np.ndarray
    max: float


def loglik_surface(model, axes=None, n_grid=41, width=3.0):
    """Log-likelihood on a grid over ``beta`` (``|M| <= 2`` only).

    Default axes span ``eta_j +/- width`` marginal standard deviations.
    """
    m = model.eta.size
    if m > 2:
        raise DimensionError(f"grid output needs |M| <= 2, got {m}")
    if axes is None:
        sd = np.sqrt(model.sigma2 * np.diag(model.event.C))
        axes = [np.linspace(e - width * d, e + width * d, n_grid) for e, d in zip(model.eta, sd)]
    axes = [np.asarray(a, dtype=float) for a in axes]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    flat = mesh.reshape(-1, m)
    values = np.array([model.loglik(b) for b in flat]).reshape(mesh.shape[:-1])
    k = int(np.argmax(values))
    return LoglikSurface(axes, values, flat[k].copy(), float(values.flat[k]))


@dataclass
class ImputationResult:
    """Per-strategy outcome of :func:`compare_imputations`."""

    strategy: ImputationStrategy
    fit: LassoConditionalFit
    loglik: float
    surface: LoglikSurface = None

    @property
    def argmax(self):
        return self.fit.beta_hat


def compare_imputations(data, lam, sigma2, strategies=("zero", "plugin", "none"),
                        opts=None, rng=None, truth=None, surface=True, n_grid=41):
    """Conditional MLE under several imputation strategies.

    Returns ``{name: ImputationResult}`` holding the stochastic-ascent fit,
    the log-likelihood at its estimate and, for ``|M| <= 2`` when
    ``surface`` is set, the log-likelihood on a grid.  ``truth`` (the true
    mean of ``y``) adds the ``truth`` strategy with ``A0 E(y)`` as the
    imputed mean.  All strategies share random numbers so that differences
    reflect the strategy alone.
    """
    lasso = fit_lasso(data, lam)
    M = lasso.active
    if M.size == 0:
        raise NoSelectionError("the lasso selected no variables")
    if M.size > 4:
        raise DimensionError(f"|M| = {M.size}; imputation comparison needs |M| <= 4")
    if surface and M.size > 2:
        raise DimensionError(f"grid output needs |M| <= 2, got {M.size}")
    seed = np.random.default_rng(rng).integers(2 ** 63)
    names = list(strategies)
    if truth is not None and "truth" not in names:
        names.append("truth")
    out = {}
    for name in names:
        if name == "truth":
            if truth is None:
                raise ValueError("truth strategy needs the true mean of y")
            ev = selection_event(data.X, M, lasso.signs, lam)
            strat = ImputationStrategy.truth(ev.A0 @ np.asarray(truth, dtype=float))
        else:
            strat = ImputationStrategy.parse(name)
        fit = fit_lasso_mle(data, lam, sigma2, strat, opts, np.random.default_rng(seed),
                            lasso=lasso)
        model = loglik_model(data, lam, sigma2, strat, lasso, rng=np.random.default_rng(seed + 1))
        surf = loglik_surface(model, n_grid=n_grid) if surface else None
        out[name] = ImputationResult(strat, fit, model.loglik(fit.beta_hat), surf)
    return out
