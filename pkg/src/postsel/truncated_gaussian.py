"""Univariate truncated normal primitives and a coordinate-wise Gibbs sampler.

Supports are described per coordinate by a :class:`TruncRegion`, which is
either an interval (``inside``) or the complement of an open interval
(``outside``).  All probabilities are evaluated in log space with
``log_ndtr`` / ``ndtri_exp`` so that draws far in the tails keep full
precision.
"""

from dataclasses import dataclass, field

import numba
import numpy as np
from scipy import linalg
from scipy.special import erfcx, log_ndtr

from . import _kernels as K
from .exceptions import (DegenerateMassError, InvalidInitError,
                         InvalidRegionError, SingularCovarianceError)

__all__ = [
    "TruncRegion", "TmvnSpec", "ConditionalCoeffs", "GibbsChain",
    "trunc_cdf", "sample_inside", "sample_outside", "trunc_moments",
    "precompute_conditionals", "gibbs_cycle", "sample_tmvn", "feasible_point",
]

INSIDE = "inside"
OUTSIDE = "outside"
_KIND_CODE = {INSIDE: K.INSIDE, OUTSIDE: K.OUTSIDE}

_LOG_SQRT_2PI = 0.5 * np.log(2 * np.pi)
# uniforms drawn per batch when recording long chains
_UNIFORM_CHUNK = 1 << 20


@numba.vectorize(["float64(float64, float64)"], cache=True)
def _log_mass(a, b):
    return K.log_mass(a, b)


@numba.vectorize(["float64(float64, float64, float64)"], cache=True)
def _std_inside(a, b, u):
    z, ok = K.std_inside(a, b, u)
    return z if ok else np.nan


@dataclass(frozen=True)
class TruncRegion:
    """Support of one coordinate.

    ``inside`` means ``lower <= x <= upper``; ``outside`` means
    ``x <= lower or x >= upper``.  An outside region with
    ``lower == upper`` is the whole real line.
    """

    kind: str
    lower: float
    upper: float

    def __post_init__(self):
        if self.kind not in (INSIDE, OUTSIDE):
            raise InvalidRegionError(f"unknown region kind {self.kind!r}")
        lo, hi = float(self.lower), float(self.upper)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if np.isnan(lo) or np.isnan(hi):
            raise InvalidRegionError("region endpoints must not be NaN")
        if self.kind == INSIDE and not lo < hi:
            raise InvalidRegionError(f"inside region needs lower < upper, got ({lo}, {hi})")
        if self.kind == OUTSIDE:
            if lo > hi:
                raise InvalidRegionError(f"outside region needs lower <= upper, got ({lo}, {hi})")
            if lo == -np.inf and hi == np.inf:
                raise InvalidRegionError("outside(-inf, inf) has empty support")

    @classmethod
    def inside(cls, lower=-np.inf, upper=np.inf):
        return cls(INSIDE, lower, upper)

    @classmethod
    def outside(cls, lower, upper):
        return cls(OUTSIDE, lower, upper)

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == INSIDE:
            return (x >= self.lower) & (x <= self.upper)
        return (x <= self.lower) | (x >= self.upper)

    def log_mass(self, mu=0.0, sigma2=1.0):
        """Log-probability of the region under N(mu, sigma2)."""
        sd = np.sqrt(sigma2)
        a = (self.lower - mu) / sd
        b = (self.upper - mu) / sd
        if self.kind == INSIDE:
            return _log_mass(a, b)
        return np.logaddexp(log_ndtr(a), log_ndtr(-b))


def _regions_to_arrays(regions):
    kind = np.array([_KIND_CODE[r.kind] for r in regions], dtype=np.int64)
    lo = np.array([r.lower for r in regions], dtype=float)
    hi = np.array([r.upper for r in regions], dtype=float)
    return kind, lo, hi


def regions_contain(regions, x):
    """Boolean membership of ``x`` (shape (..., p)) in every region."""
    x = np.asarray(x, dtype=float)
    kind, lo, hi = _regions_to_arrays(regions)
    inside = (x >= lo) & (x <= hi)
    outside = (x <= lo) | (x >= hi)
    return np.where(kind == K.INSIDE, inside, outside).all(axis=-1)


@dataclass
class TmvnSpec:
    """N(mu, sigma) restricted coordinate-wise to ``regions``."""

    mu: np.ndarray
    sigma: np.ndarray
    regions: list

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float).ravel()
        self.sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        p = self.mu.shape[0]
        if self.sigma.shape != (p, p):
            raise ValueError(f"sigma has shape {self.sigma.shape}, expected ({p}, {p})")
        if len(self.regions) != p:
            raise ValueError(f"expected {p} regions, got {len(self.regions)}")
        if not np.allclose(self.sigma, self.sigma.T, rtol=0, atol=1e-10):
            raise SingularCovarianceError("sigma is not symmetric")
        try:
            linalg.cholesky(self.sigma, lower=True)
        except linalg.LinAlgError as exc:
            raise SingularCovarianceError("sigma is not positive definite") from exc
        self.regions = list(self.regions)

    @property
    def dim(self):
        return self.mu.shape[0]

    def contains(self, x):
        return regions_contain(self.regions, x)


@dataclass
class ConditionalCoeffs:
    """Full-conditional regression coefficients of a Gaussian.

    ``weights`` is stored as a p x p matrix with zero diagonal: row j holds
    Sigma_{j,-j} Sigma_{-j,-j}^{-1} scattered back into the positions of
    the other coordinates.  Use :meth:`weights_offdiag` for the packed
    p x (p-1) form.
    """

    weights: np.ndarray
    cond_var: np.ndarray

    @property
    def cond_sd(self):
        return np.sqrt(self.cond_var)

    def weights_offdiag(self):
        p = self.weights.shape[0]
        mask = ~np.eye(p, dtype=bool)
        return self.weights[mask].reshape(p, p - 1)

    def cond_mean(self, j, x, mu):
        return mu[j] + self.weights[j] @ (np.asarray(x) - mu)


def _check_params(sigma2, l, u):
    if np.any(np.asarray(sigma2) <= 0):
        raise ValueError("sigma2 must be positive")
    if np.any(np.asarray(l) >= np.asarray(u)):
        raise InvalidRegionError("need l < u")


def trunc_cdf(x, mu, sigma2, l, u):
    """CDF of N(mu, sigma2) truncated to [l, u]."""
    _check_params(sigma2, l, u)
    sd = np.sqrt(sigma2)
    a = (np.asarray(l, dtype=float) - mu) / sd
    b = (np.asarray(u, dtype=float) - mu) / sd
    z = (np.asarray(x, dtype=float) - mu) / sd
    log_den = _log_mass(a, b)
    if np.any(log_den < K.LOG_TINY):
        raise DegenerateMassError("truncation interval has numerically zero mass")
    zc = np.clip(z, a, b)
    out = np.exp(_log_mass(a, zc) - log_den)
    out = np.clip(out, 0.0, 1.0)
    return out[()] if np.ndim(out) == 0 else out


def sample_inside(u01, mu, sigma2, l, u):
    """Inverse-CDF transform of ``u01`` into N(mu, sigma2) truncated to [l, u].

    Strictly increasing in ``u01``; the result always lies in [l, u].
    """
    _check_params(sigma2, l, u)
    sd = np.sqrt(sigma2)
    l = np.asarray(l, dtype=float)
    u = np.asarray(u, dtype=float)
    z = _std_inside((l - mu) / sd, (u - mu) / sd, np.asarray(u01, dtype=float))
    if np.any(np.isnan(z)):
        raise DegenerateMassError("truncation interval has numerically zero mass")
    out = np.clip(mu + sd * z, l, u)
    return out[()] if np.ndim(out) == 0 else out


def sample_outside(rng, mu, sigma2, l, u, size=None):
    """Draw from N(mu, sigma2) restricted to (-inf, l] U [u, inf).

    The left tail is picked with probability Phi(l) / (Phi(l) + 1 - Phi(u))
    and the draw is then made inside that tail.
    """
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    if l > u:
        raise InvalidRegionError("need l <= u")
    region = TruncRegion.outside(l, u)
    sd = np.sqrt(sigma2)
    a, b = (l - mu) / sd, (u - mu) / sd
    log_left, log_right = log_ndtr(a), log_ndtr(-b)
    log_total = np.logaddexp(log_left, log_right)
    if log_total < K.LOG_TINY:
        raise DegenerateMassError("both tails have numerically zero mass")
    shape = () if size is None else size
    pick_left = rng.random(shape) < np.exp(log_left - log_total)
    z = np.where(pick_left,
                 _std_inside(-np.inf, a, rng.random(shape)),
                 _std_inside(b, np.inf, rng.random(shape)))
    x = mu + sd * z
    x = np.where(pick_left, np.minimum(x, l), np.maximum(x, u))
    assert np.all(region.contains(x))
    return x[()] if np.ndim(x) == 0 else x


def _lower_tail_ratio(b):
    # phi(b) / Phi(b), exact in the far left tail via erfcx
    return np.sqrt(2 / np.pi) / erfcx(-b / np.sqrt(2))


def _std_interval_moments(a, b):
    """Mean and variance of N(0,1) restricted to [a, b]."""
    flip = a > 0
    if flip:
        a, b = -b, -a
    if a == -np.inf and b == np.inf:
        return 0.0, 1.0
    if a == -np.inf:
        r = _lower_tail_ratio(b)
        mean = -r
        var = 1.0 - r * (b + r)
    else:
        log_z = float(_log_mass(a, b))
        if log_z < K.LOG_TINY:
            raise DegenerateMassError("truncation region has numerically zero mass")
        ra = np.exp(-0.5 * a * a - _LOG_SQRT_2PI - log_z)
        if b == np.inf:
            rb, brb = 0.0, 0.0
        else:
            rb = np.exp(-0.5 * b * b - _LOG_SQRT_2PI - log_z)
            brb = b * rb
        mean = ra - rb
        var = 1.0 + a * ra - brb - mean * mean
    var = max(var, 0.0)
    return (-mean if flip else mean), var


def trunc_moments(mu, sigma2, region):
    """Exact mean and variance of N(mu, sigma2) restricted to ``region``."""
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    sd = np.sqrt(sigma2)
    a = (region.lower - mu) / sd
    b = (region.upper - mu) / sd
    if region.kind == INSIDE:
        m, v = _std_interval_moments(a, b)
    else:
        log_l, log_r = log_ndtr(a), log_ndtr(-b)
        log_t = np.logaddexp(log_l, log_r)
        if log_t < K.LOG_TINY:
            raise DegenerateMassError("truncation region has numerically zero mass")
        w_l = np.exp(log_l - log_t)
        w_r = np.exp(log_r - log_t)
        parts = []
        if w_l > 0:
            parts.append((w_l, *_std_interval_moments(-np.inf, a)))
        if w_r > 0:
            parts.append((w_r, *_std_interval_moments(b, np.inf)))
        m = sum(w * mi for w, mi, _ in parts)
        v = sum(w * (vi + (mi - m) ** 2) for w, mi, vi in parts)
    return mu + sd * m, sigma2 * v


def precompute_conditionals(sigma, max_cond=1e12):
    """Regression weights and variances of every full conditional.

    Uses the precision matrix K = sigma^{-1}: the conditional variance of
    coordinate j is 1 / K_jj and its weights are -K_{j,-j} / K_jj.
    """
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    p = sigma.shape[0]
    if p == 1:
        return ConditionalCoeffs(np.zeros((1, 1)), np.array([sigma[0, 0]]))
    cond = np.linalg.cond(sigma)
    if not np.isfinite(cond) or cond > max_cond:
        raise SingularCovarianceError(f"covariance condition number {cond:.3g} exceeds {max_cond:g}")
    try:
        factor = linalg.cho_factor(sigma, lower=True)
    except linalg.LinAlgError as exc:
        raise SingularCovarianceError("covariance is not positive definite") from exc
    prec = linalg.cho_solve(factor, np.eye(p))
    prec = 0.5 * (prec + prec.T)
    d = np.diag(prec).copy()
    weights = -prec / d[:, None]
    np.fill_diagonal(weights, 0.0)
    return ConditionalCoeffs(weights, 1.0 / d)


@dataclass
class GibbsChain:
    """A running Gibbs chain for a :class:`TmvnSpec`.

    The chain owns its state and a per-coordinate counter of sweeps in
    which a coordinate was left unchanged because its conditional region
    had negligible mass.  Not safe for concurrent use.
    """

    spec: TmvnSpec
    state: np.ndarray
    coeffs: ConditionalCoeffs = None
    degenerate: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.state = np.array(self.state, dtype=float).ravel()
        if not self.spec.contains(self.state):
            bad = np.flatnonzero(~np.array([r.contains(x) for r, x in zip(self.spec.regions, self.state)]))
            raise InvalidInitError(f"initial state violates regions at coordinates {bad.tolist()}")
        if self.coeffs is None:
            self.coeffs = precompute_conditionals(self.spec.sigma)
        if self.degenerate is None:
            self.degenerate = np.zeros(self.spec.dim, dtype=np.int64)
        self._kind, self._lo, self._hi = _regions_to_arrays(self.spec.regions)
        self._sd = self.coeffs.cond_sd
        self._mu = self.spec.mu.copy()

    def set_mean(self, mu):
        self._mu = np.asarray(mu, dtype=float).copy()

    @property
    def mean(self):
        return self._mu

    def run(self, n_cycles, rng):
        if n_cycles <= 0:
            return self.state
        p = self.spec.dim
        uniforms = rng.random(2 * p * n_cycles)
        K.gibbs_cycles(self.state, self._mu, self.coeffs.weights, self._sd,
                       self._kind, self._lo, self._hi, uniforms, n_cycles, self.degenerate)
        return self.state

    def sample(self, n_samples, rng, burn_in=0, thin=1):
        """Run ``burn_in`` sweeps, then record every ``thin``-th state."""
        self.run(burn_in, rng)
        p = self.spec.dim
        out = np.empty((n_samples, p))
        per_row = 2 * p * thin
        chunk = max(1, _UNIFORM_CHUNK // per_row)
        for start in range(0, n_samples, chunk):
            rows = out[start:start + chunk]
            uniforms = rng.random(per_row * rows.shape[0])
            K.gibbs_sample(self.state, self._mu, self.coeffs.weights, self._sd,
                           self._kind, self._lo, self._hi, uniforms, thin, rows,
                           self.degenerate)
        return out


def gibbs_cycle(state, spec, coeffs, rng, degenerate=None):
    """One systematic sweep over coordinates 0..p-1.

    Returns the new state (the input is not modified).  When
    ``degenerate`` (an int array of length p) is given, coordinates with a
    degenerate conditional are left unchanged and counted there; otherwise
    a :class:`DegenerateMassError` naming the coordinate is raised.
    """
    counts = np.zeros(spec.dim, dtype=np.int64)
    chain = GibbsChain(spec, state, coeffs=coeffs, degenerate=counts)
    out = chain.run(1, rng).copy()
    if degenerate is not None:
        degenerate += counts
    elif counts.any():
        j = int(np.flatnonzero(counts)[0])
        raise DegenerateMassError(f"coordinate {j} has a degenerate conditional region", coordinate=j)
    return out


def feasible_point(spec):
    """A point of the support close to the mean, coordinate by coordinate."""
    x = spec.mu.copy()
    for j, r in enumerate(spec.regions):
        if r.kind == INSIDE:
            x[j] = min(max(x[j], r.lower), r.upper)
        elif r.lower < x[j] < r.upper:
            x[j] = r.lower if x[j] - r.lower < r.upper - x[j] else r.upper
    return x


def sample_tmvn(spec, init, n_samples, burn_in=0, thin=1, rng=None):
    """Draw ``n_samples`` rows from the truncated normal by Gibbs sampling.

    Runs ``burn_in`` sweeps from ``init`` and then keeps every ``thin``-th
    state.
    """
    if thin < 1:
        raise ValueError("thin must be >= 1")
    rng = np.random.default_rng(rng)
    chain = GibbsChain(spec, init)
    if n_samples == 0:
        return np.empty((0, spec.dim))
    return chain.sample(n_samples, rng, burn_in=burn_in, thin=thin)
