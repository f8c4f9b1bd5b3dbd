"""Lasso fitting and the algebra of its selection event.

The lasso here minimizes ``0.5 * ||y - X b||^2 + lam * ||b||_1`` with no
intercept and no internal standardization.  For a model ``M`` with signs
``s`` the event {lasso selects (M, s)} is an intersection of two boxes in
the statistics

    eta = (X_M' X_M)^{-1} X_M' y
    xi  = X_{-M}' (I - P_M) y / lam

which are independent under the Gaussian linear model.
"""

from dataclasses import dataclass

import numpy as np
from scipy import linalg, stats

from . import _kernels as K
from .exceptions import (EmptyFoldError, NonConvergenceError, RankDeficientError,
                         SaturatedModelError)

__all__ = [
    "Dataset", "LassoFit", "SelectionEvent", "EtaXi", "CvResult",
    "fit_lasso", "lambda_grid", "cv_lambda", "cross_validate", "sigma2_lasso",
    "selection_event", "in_event", "eta_xi", "kkt_violation", "refitted_ci",
]

MAX_SWEEPS = 100_000
CD_TOL = 1e-9
MAX_COND = 1e12


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.y = np.asarray(self.y, dtype=float).ravel()
        n, p = self.X.shape
        if self.y.shape[0] != n:
            raise ValueError(f"X has {n} rows but y has {self.y.shape[0]} entries")
        if n < 2:
            raise ValueError("need at least two observations")
        zero = np.flatnonzero(~np.any(self.X != 0, axis=0))
        if zero.size:
            raise ValueError(f"columns {zero.tolist()} of X are identically zero")

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]


@dataclass
class LassoFit:
    """Lasso solution at a single ``lam``.

    ``active`` lists the nonzero coefficients and ``signs`` their signs.
    ``sigma2_hat`` is the residual variance estimate of
    :func:`sigma2_lasso` (NaN when the model is saturated).
    """

    beta: np.ndarray
    lam: float
    active: np.ndarray
    signs: np.ndarray
    sigma2_hat: float
    n_sweeps: int = 0
    kkt_tol: float = 0.0


def kkt_tolerance(lam):
    return 1e-6 * lam if lam > 0 else 1e-8


def kkt_violation(data, beta, lam):
    """Largest violation of the lasso optimality conditions at ``beta``."""
    grad = data.X.T @ (data.y - data.X @ beta)
    nz = beta != 0
    viol = np.maximum(np.abs(grad[~nz]) - lam, 0.0)
    on = np.abs(grad[nz] - lam * np.sign(beta[nz]))
    return float(max(viol.max(initial=0.0), on.max(initial=0.0)))


def _solve_cd(G, c, lam, beta0=None):
    beta = np.zeros(G.shape[0]) if beta0 is None else np.array(beta0, dtype=float)
    sweeps = K.cd_lasso(G, c, float(lam), beta, CD_TOL, MAX_SWEEPS)
    if sweeps < 0:
        raise NonConvergenceError(f"coordinate descent did not converge in {MAX_SWEEPS} sweeps")
    return beta, sweeps


def _polish(G, c, lam, beta):
    # exact stationary point on the support found by coordinate descent
    M = np.flatnonzero(beta)
    if M.size == 0:
        return beta
    s = np.sign(beta[M])
    try:
        exact = linalg.solve(G[np.ix_(M, M)], c[M] - lam * s, assume_a="pos")
    except (linalg.LinAlgError, ValueError):
        return beta
    if np.any(np.sign(exact) != s):
        return beta
    out = np.zeros_like(beta)
    out[M] = exact
    return out


def _prune(data, G, c, lam, beta):
    # coefficients at rounding level next to a tie are dropped when the
    # optimality conditions still hold without them
    tiny = (beta != 0) & (np.abs(beta) <= 1e-9 * (1 + np.max(np.abs(beta))))
    if not tiny.any():
        return beta
    b = beta.copy()
    b[tiny] = 0.0
    b = _polish(G, c, lam, b)
    return b if kkt_violation(data, b, lam) <= kkt_tolerance(lam) else beta


def fit_lasso(data, lam, beta0=None):
    """Lasso solution by cyclic coordinate descent on the Gram matrix.

    The coefficients on the support found by coordinate descent are then
    re-solved exactly from the stationarity equations, which is kept only
    if it satisfies the optimality conditions at least as well.  A
    coefficient of rounding size whose removal keeps the optimality
    conditions is set to zero, so ties count as inactive.
    """
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    G = data.X.T @ data.X
    c = data.X.T @ data.y
    beta, sweeps = _solve_cd(G, c, lam, beta0)
    polished = _polish(G, c, lam, beta)
    if polished is not beta and kkt_violation(data, polished, lam) <= kkt_violation(data, beta, lam):
        beta = polished
    beta = _prune(data, G, c, lam, beta)
    return _make_fit(data, beta, lam, sweeps)


def _make_fit(data, beta, lam, sweeps=0):
    active = np.flatnonzero(beta)
    signs = np.sign(beta[active])
    n = data.n
    if n > active.size:
        resid = data.y - data.X @ beta
        s2 = float(resid @ resid / (n - active.size))
    else:
        s2 = np.nan
    return LassoFit(beta=beta, lam=float(lam), active=active, signs=signs,
                    sigma2_hat=s2, n_sweeps=int(sweeps), kkt_tol=kkt_tolerance(lam))


def sigma2_lasso(data, fit):
    """Residual variance ``||y - X beta||^2 / (n - |M|)``."""
    m = fit.active.size
    if data.n <= m:
        raise SaturatedModelError(f"n = {data.n} does not exceed |M| = {m}")
    resid = data.y - data.X @ fit.beta
    return float(resid @ resid / (data.n - m))


def lambda_grid(data, n_lambda=100, ratio=None):
    """Log-spaced descending grid from ``||X'y||_inf`` to ``ratio`` times that.

    ``ratio`` defaults to 1e-3 when n > p and 1e-2 otherwise, where small
    penalties approach an interpolating fit and coordinate descent stalls.
    """
    if ratio is None:
        ratio = 1e-3 if data.n > data.p else 1e-2
    top = float(np.max(np.abs(data.X.T @ data.y)))
    if top == 0:
        raise ValueError("X'y is identically zero")
    return np.geomspace(top, ratio * top, n_lambda)


@dataclass
class CvResult:
    grid: np.ndarray
    cv_mean: np.ndarray
    cv_se: np.ndarray
    lam_min: float
    lam_1se: float

    def choose(self, rule="min"):
        if rule == "min":
            return self.lam_min
        if rule == "1se":
            return self.lam_1se
        raise ValueError(f"unknown rule {rule!r}")


def _path(G, c, grid):
    out = np.empty((grid.size, G.shape[0]))
    beta = np.zeros(G.shape[0])
    for i, lam in enumerate(grid):
        beta, _ = _solve_cd(G, c, lam, beta)
        out[i] = beta
    return out


def cross_validate(data, folds=10, grid=None, rng=None):
    """K-fold prediction error along a descending ``grid`` of penalties.

    Fold membership is a random permutation from ``rng`` cut into ``folds``
    nearly equal parts.  Because the loss is a sum over observations, each
    training fit uses the same penalty scale as a fit on all data.
    """
    if folds < 2:
        raise ValueError("need at least two folds")
    n = data.n
    if n < folds:
        raise EmptyFoldError(f"{n} observations cannot fill {folds} folds")
    grid = lambda_grid(data) if grid is None else np.sort(np.asarray(grid, dtype=float))[::-1]
    if grid.size == 0:
        raise ValueError("empty lambda grid")
    rng = np.random.default_rng(rng)
    assign = np.empty(n, dtype=int)
    assign[rng.permutation(n)] = np.arange(n) % folds
    X, y = data.X, data.y
    err = np.empty((folds, grid.size))
    for k in range(folds):
        test = assign == k
        Xtr, ytr = X[~test], y[~test]
        path = _path(Xtr.T @ Xtr, Xtr.T @ ytr, grid)
        resid = y[test][:, None] - X[test] @ path.T
        err[k] = np.mean(resid ** 2, axis=0)
    mean = err.mean(axis=0)
    se = err.std(axis=0, ddof=1) / np.sqrt(folds)
    i_min = int(np.argmin(mean))
    within = np.flatnonzero(mean <= mean[i_min] + se[i_min])
    lam_1se = float(grid[within].max())
    return CvResult(grid, mean, se, float(grid[i_min]), lam_1se)


def cv_lambda(data, folds=10, grid=None, rule="min", rng=None):
    """Penalty chosen by K-fold cross-validation (``min`` or ``1se`` rule)."""
    if grid is not None and len(grid) == 1:
        return float(grid[0])
    return cross_validate(data, folds, grid, rng).choose(rule)


def _gram_inverse(XM):
    G = XM.T @ XM
    if G.size and np.linalg.cond(G) > MAX_COND:
        raise RankDeficientError("selected columns are (numerically) collinear")
    try:
        factor = linalg.cho_factor(G, lower=True)
    except linalg.LinAlgError as exc:
        raise RankDeficientError("selected columns are linearly dependent") from exc
    C = linalg.cho_solve(factor, np.eye(G.shape[0]))
    return 0.5 * (C + C.T)


@dataclass
class SelectionEvent:
    """Affine description of {lasso selects (M, s)} at penalty ``lam``.

    With ``C = (X_M' X_M)^{-1}`` and ``B = X_{-M}' X_M C`` the event is
    ``A1 y < u1`` and ``l0 < A0 y < u0``.  ``A1`` and ``u1`` depend on the
    signs; ``l0`` and ``u0`` are ``-1 - B s`` and ``1 - B s``.
    """

    A1: np.ndarray
    u1: np.ndarray
    A0: np.ndarray
    l0: np.ndarray
    u0: np.ndarray
    XtX_M_inv: np.ndarray
    B: np.ndarray
    active: np.ndarray
    inactive: np.ndarray
    signs: np.ndarray
    lam: float

    @property
    def C(self):
        return self.XtX_M_inv

    def active_bound(self, s):
        """u1 for sign vector ``s``."""
        s = np.asarray(s, dtype=float)
        return -self.lam * s * (self.C @ s)

    def inactive_bounds(self, s):
        bs = self.B @ np.asarray(s, dtype=float)
        return -1.0 - bs, 1.0 - bs


def selection_event(X, M, s, lam):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    M = np.asarray(M, dtype=int).ravel()
    s = np.asarray(s, dtype=float).ravel()
    if M.size != s.size:
        raise ValueError("M and s differ in length")
    if lam <= 0:
        raise ValueError("lam must be positive")
    p = X.shape[1]
    inactive = np.setdiff1d(np.arange(p), M)
    XM, XI = X[:, M], X[:, inactive]
    C = _gram_inverse(XM)
    B = XI.T @ XM @ C
    A1 = -s[:, None] * (C @ XM.T)
    u1 = -lam * s * (C @ s)
    A0 = (XI.T - B @ XM.T) / lam
    bs = B @ s
    return SelectionEvent(A1=A1, u1=u1, A0=A0, l0=-1.0 - bs, u0=1.0 - bs,
                          XtX_M_inv=C, B=B, active=M, inactive=inactive,
                          signs=s, lam=float(lam))


def in_event(event, eta, xi, s=None, tol=0.0):
    """Membership of ``(eta, xi)`` in the event with signs ``s``.

    Returns ``(active_ok, inactive_ok)``: ``s_k (eta_k - lam (C s)_k) > -tol``
    for every active ``k`` and ``l0(s) - tol < xi < u0(s) + tol``.
    """
    s = event.signs if s is None else np.asarray(s, dtype=float)
    eta = np.asarray(eta, dtype=float)
    xi = np.asarray(xi, dtype=float)
    active_ok = bool(np.all(-s * eta < event.active_bound(s) + tol))
    lo, hi = event.inactive_bounds(s)
    inactive_ok = bool(np.all((lo - tol < xi) & (xi < hi + tol)))
    return active_ok, inactive_ok


@dataclass
class EtaXi:
    eta: np.ndarray
    xi: np.ndarray
    cov_eta: np.ndarray
    cov_xi: np.ndarray


def eta_xi(data, M, lam, sigma2=1.0):
    """The active and inactive statistics and their covariances."""
    if lam <= 0:
        raise ValueError("lam must be positive")
    M = np.asarray(M, dtype=int).ravel()
    X, y = data.X, data.y
    inactive = np.setdiff1d(np.arange(data.p), M)
    XM, XI = X[:, M], X[:, inactive]
    C = _gram_inverse(XM) if M.size else np.zeros((0, 0))
    eta = C @ (XM.T @ y)
    B = XI.T @ XM @ C
    xi = (XI.T @ y - B @ (XM.T @ y)) / lam
    G_II = XI.T @ XI
    cov_xi = sigma2 * (G_II - B @ (XM.T @ XI)) / lam ** 2
    return EtaXi(eta=eta, xi=xi, cov_eta=sigma2 * C, cov_xi=0.5 * (cov_xi + cov_xi.T))


def refitted_ci(data, active, sigma2, alpha=0.05):
    """Unadjusted least-squares Wald intervals on the selected columns."""
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    XM = data.X[:, active]
    C = linalg.inv(XM.T @ XM)
    eta = C @ (XM.T @ data.y)
    half = stats.norm.ppf(1 - alpha / 2) * np.sqrt(sigma2 * np.diag(C))
    return eta - half, eta + half
