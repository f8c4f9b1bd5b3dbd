"""Compiled inner loops for the samplers.

The tail-stable normal functions come from ``scipy.special.cython_special``
and are registered as external symbols so numba can call them from
``nopython`` code and still cache the compiled result.

All kernels take pre-drawn uniforms so that a run is a pure function of
the caller's ``numpy.random.Generator`` stream.
"""

import math

import llvmlite.binding as _llvm
import numba
import numpy as np
from numba import types
from numba.extending import get_cython_function_address

_CS = "scipy.special.cython_special"
_llvm.add_symbol("postsel_log_ndtr", get_cython_function_address(_CS, "__pyx_fuse_1log_ndtr"))
_llvm.add_symbol("postsel_ndtri_exp", get_cython_function_address(_CS, "ndtri_exp"))
_llvm.add_symbol("postsel_ndtri", get_cython_function_address(_CS, "ndtri"))

_log_ndtr = types.ExternalFunction("postsel_log_ndtr", types.float64(types.float64))
ndtri_exp = types.ExternalFunction("postsel_ndtri_exp", types.float64(types.float64))
ndtri = types.ExternalFunction("postsel_ndtri", types.float64(types.float64))

# regions carrying less mass than this are treated as empty
TINY_MASS = 1e-290
LOG_TINY = math.log(TINY_MASS)
# probabilities above this are handled without logs
_LINEAR_MIN = 1e-250
_LN2 = math.log(2.0)
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
_SQRT2 = math.sqrt(2.0)

INSIDE = 0
OUTSIDE = 1

jit = numba.njit(cache=True, nogil=True)


@numba.njit(cache=True, nogil=True, fastmath={"reassoc", "contract"})
def _dot_row(w, j, d):
    # reassociation lets LLVM vectorize this reduction
    t = 0.0
    for k in range(d.shape[0]):
        t += w[j, k] * d[k]
    return t


@jit
def log_ndtr(x):
    # infinite arguments would raise the divide-by-zero flag inside log
    if x == -np.inf:
        return -np.inf
    if x == np.inf:
        return 0.0
    return _log_ndtr(x)


@jit
def logaddexp(a, b):
    m = max(a, b)
    if m == -np.inf:
        return -np.inf
    return m + math.log(math.exp(a - m) + math.exp(b - m))


@jit
def log1mexp(x):
    # log(1 - exp(x)) for x <= 0
    if x > -_LN2:
        return math.log(-math.expm1(x))
    return math.log1p(-math.exp(x))


@jit
def log_norm_pdf(z):
    return -0.5 * z * z - _LOG_SQRT_2PI


@jit
def log_mass(a, b):
    """log(Phi(b) - Phi(a)) for standardized endpoints a <= b."""
    if a >= b:
        return -np.inf
    if a > 0.0:
        a, b = -b, -a
    if b <= 0.0:
        lb = log_ndtr(b)
        return lb + log1mexp(log_ndtr(a) - lb)
    # straddles zero: erf keeps relative precision for narrow intervals
    return math.log(0.5 * (math.erf(b / _SQRT2) - math.erf(a / _SQRT2)))


@jit
def log_outside_mass(a, b):
    return logaddexp(log_ndtr(a), log_ndtr(-b))


@jit
def _clip_unit(u):
    if u < 1e-300:
        return 1e-300
    if u > 1.0 - 1.1102230246251565e-16:
        return 1.0 - 1.1102230246251565e-16
    return u


@jit
def _inverse_lower(a, b, u):
    # quantile u of N(0,1) restricted to [a, b], a <= 0
    u = _clip_unit(u)
    lu = math.log(u)
    l1u = math.log1p(-u)
    lp = logaddexp(l1u + log_ndtr(a), lu + log_ndtr(b))
    if lp < -_LN2:
        z = ndtri_exp(lp)
    else:
        lq = logaddexp(l1u + log_ndtr(-a), lu + log_ndtr(-b))
        z = -ndtri_exp(lq)
    if z < a:
        z = a
    elif z > b:
        z = b
    return z


@jit
def _ndtr(x):
    return 0.5 * math.erfc(-x / _SQRT2)


@jit
def _inverse_linear(a, b, pa, pb, u):
    # same transform as _inverse_lower when Phi(a), Phi(b) are well resolved
    u = _clip_unit(u)
    p = pa + u * (pb - pa)
    if p <= 0.5:
        z = ndtri(p)
    else:
        q = 1.0 - p
        if q < 1e-3:
            q = (1.0 - u) * _ndtr(-a) + u * _ndtr(-b)
        z = -ndtri(q)
    if z < a:
        z = a
    elif z > b:
        z = b
    return z


@jit
def _std_inside_lower(a, b, u):
    # a <= 0
    pb = _ndtr(b)
    if pb > _LINEAR_MIN:
        pa = _ndtr(a)
        if pb - pa > 0.01 * pb:
            return _inverse_linear(a, b, pa, pb, u), True
    if not (log_mass(a, b) >= LOG_TINY):
        return np.nan, False
    return _inverse_lower(a, b, u), True


@jit
def std_inside(a, b, u):
    """Inverse-CDF draw from N(0,1) truncated to [a, b].

    Returns ``(z, ok)``; ``ok`` is False when the interval mass is below
    ``TINY_MASS``.
    """
    if a > 0.0:
        z, ok = _std_inside_lower(-b, -a, 1.0 - u)
        return -z, ok
    return _std_inside_lower(a, b, u)


@jit
def std_outside(a, b, u_side, u):
    """Draw from N(0,1) restricted to (-inf, a] U [b, inf).

    Returns ``(z, ok, side)`` with ``side`` -1 for the left tail, +1 for
    the right tail.
    """
    pl = _ndtr(a)
    pr = _ndtr(-b)
    if pl > _LINEAR_MIN and pr > _LINEAR_MIN:
        if u_side * (pl + pr) < pl:
            return _inverse_linear(-np.inf, a, 0.0, pl, u), True, -1
        return -_inverse_linear(-np.inf, -b, 0.0, pr, 1.0 - u), True, 1
    la = log_ndtr(a)
    lr = log_ndtr(-b)
    lt = logaddexp(la, lr)
    if not (lt >= LOG_TINY):
        return np.nan, False, 0
    p_left = math.exp(la - lt)
    if u_side < p_left:
        z, ok = std_inside(-np.inf, a, u)
        return z, ok, -1
    z, ok = std_inside(b, np.inf, u)
    return z, ok, 1


@jit
def draw_region(m, sd, kind, lo, hi, u_side, u):
    """Draw from N(m, sd^2) restricted to an Inside/Outside region.

    The result is clipped so that the boolean membership test holds
    exactly despite rounding in ``m + sd * z``.
    """
    a = (lo - m) / sd
    b = (hi - m) / sd
    if kind == INSIDE:
        z, ok = std_inside(a, b, u)
        if not ok:
            return np.nan, False
        x = m + sd * z
        if x < lo:
            x = lo
        elif x > hi:
            x = hi
        return x, True
    z, ok, side = std_outside(a, b, u_side, u)
    if not ok:
        return np.nan, False
    x = m + sd * z
    if side < 0:
        if x > lo:
            x = lo
    elif x < hi:
        x = hi
    return x, True


@jit
def gibbs_cycles(x, mu, weights, sd, kind, lo, hi, uniforms, n_cycles, degenerate):
    """Run ``n_cycles`` systematic-scan Gibbs sweeps in place.

    ``weights`` is the p x p regression matrix with zero diagonal, so the
    full-conditional mean of coordinate j is ``mu[j] + weights[j] @ (x - mu)``.
    A coordinate whose conditional region is degenerate is left unchanged
    and counted in ``degenerate[j]``.  Consumes ``2 * p * n_cycles`` uniforms.
    """
    p = x.shape[0]
    d = x - mu
    pos = 0
    for _ in range(n_cycles):
        for j in range(p):
            m = mu[j] + _dot_row(weights, j, d)
            val, ok = draw_region(m, sd[j], kind[j], lo[j], hi[j],
                                  uniforms[pos], uniforms[pos + 1])
            pos += 2
            if ok:
                x[j] = val
                d[j] = val - mu[j]
            else:
                degenerate[j] += 1


@jit
def gibbs_sample(x, mu, weights, sd, kind, lo, hi, uniforms, thin, out, degenerate):
    """Fill ``out`` (n x p) with states taken every ``thin`` sweeps."""
    p = x.shape[0]
    step = 2 * p * thin
    for i in range(out.shape[0]):
        gibbs_cycles(x, mu, weights, sd, kind, lo, hi,
                     uniforms[i * step:(i + 1) * step], thin, degenerate)
        out[i] = x


# --- lasso delayed-rejection sampler ------------------------------------

@jit
def _cond_mean(j, x, beta, weights):
    m = beta[j]
    for k in range(x.shape[0]):
        m += weights[j, k] * (x[k] - beta[k])
    return m


@jit
def in_active_set(eta, s, C, lam):
    # s_k * (eta_k - lam * (C s)_k) > 0 for all k
    m = eta.shape[0]
    for k in range(m):
        t = 0.0
        for i in range(m):
            t += C[k, i] * s[i]
        if s[k] * (eta[k] - lam * t) <= 0.0:
            return False
    return True


@jit
def in_inactive_box(xi, s, B):
    # l0(s) < xi < u0(s)  <=>  |xi + B s| < 1
    q = xi.shape[0]
    m = s.shape[0]
    for r in range(q):
        v = xi[r]
        for i in range(m):
            v += B[r, i] * s[i]
        if not (-1.0 < v < 1.0):
            return False
    return True


@jit
def first_stage_bounds(j, s, C, lam):
    c = 0.0
    for i in range(s.shape[0]):
        if i != j:
            c += C[j, i] * s[i]
    return lam * (c - C[j, j]), lam * (c + C[j, j])


@jit
def log_proposal_density(x, y, j, s_y, beta, weights, sd, C, lam):
    """log q(x, y): first-stage full-conditional density of y_j given x_{-j}
    on the outside region, times same-tail normalized normal densities of
    y_k centred at x_k for k != j (tails taken under ``s_y``)."""
    m = x.shape[0]
    lj, uj = first_stage_bounds(j, s_y, C, lam)
    mj = _cond_mean(j, x, beta, weights)
    out = (log_norm_pdf((y[j] - mj) / sd[j]) - math.log(sd[j])
           - log_outside_mass((lj - mj) / sd[j], (uj - mj) / sd[j]))
    for k in range(m):
        if k == j:
            continue
        t = 0.0
        for i in range(m):
            t += C[k, i] * s_y[i]
        t *= lam
        if s_y[k] > 0:
            lp = log_ndtr(-(t - x[k]) / sd[k])
        else:
            lp = log_ndtr((t - x[k]) / sd[k])
        out += log_norm_pdf((y[k] - x[k]) / sd[k]) - math.log(sd[k]) - lp
    return out


@jit
def log_gauss_quad(x, beta, prec):
    m = x.shape[0]
    v = 0.0
    for a in range(m):
        da = x[a] - beta[a]
        for b in range(m):
            v += da * prec[a, b] * (x[b] - beta[b])
    return -0.5 * v


@jit
def log_dr_ratio(cur, s_cur, prop, s_prop, j, beta, weights, sd, prec, C, lam):
    """Log of the second-stage acceptance ratio (before the min with 1)."""
    return (log_gauss_quad(prop, beta, prec) - log_gauss_quad(cur, beta, prec)
            + log_proposal_density(prop, cur, j, s_cur, beta, weights, sd, C, lam)
            - log_proposal_density(cur, prop, j, s_prop, beta, weights, sd, C, lam))


# indices into the sweep statistics vector
ST_FIRST = 0
ST_FIRST_SAME = 1
ST_FIRST_FLIP = 2
ST_XI_REJECT = 3
ST_SECOND = 4
ST_REVERSE_LEGAL = 5
ST_SECOND_ACCEPT = 6
ST_SECOND_REJECT = 7
ST_NUMERIC_REJECT = 8
ST_DEGENERATE = 9
ST_REFLECT_TRY = 10
ST_REFLECT_ACCEPT = 11
N_STATS = 12


@jit
def reflect_log_ratio(eta, s, xi, j, beta, prec, C, lam, sigma2,
                      xi_mean, xi_prec_B, xi_BPB, use_xi):
    """Log target ratio for the sign-reflection move on coordinate j.

    The move sets s_j -> -s_j, replaces the lasso coefficient
    b_j = eta_j - lam (C s)_j by -b_j while keeping the other lasso
    coefficients, and shifts xi by -B (s' - s) so that xi + B s is
    unchanged.  It is a volume-preserving involution between the events
    of s and s', so the acceptance ratio is the ratio of Gaussian
    densities.  Uses prec @ C = I / sigma2.
    """
    m = eta.shape[0]
    t = 0.0
    for i in range(m):
        t += C[j, i] * s[i]
    bj = eta[j] - lam * t
    sj_new = -s[j]
    # eta' = eta + delta with delta = 2 lam s'_j C[:, j] - 2 b_j e_j
    pd_j = 0.0
    for k in range(m):
        pd_j += prec[j, k] * (eta[k] - beta[k])
    d_j = eta[j] - beta[j]
    lin = 2.0 * lam * sj_new * d_j / sigma2 - 2.0 * bj * pd_j
    quad = (4.0 * lam * lam * C[j, j] - 8.0 * lam * sj_new * bj) / sigma2 + 4.0 * bj * bj * prec[j, j]
    out = -lin - 0.5 * quad
    if use_xi:
        # xi' = xi + e with e = -2 s'_j B[:, j]
        wd = 0.0
        for r in range(xi.shape[0]):
            wd += xi_prec_B[r, j] * (xi[r] - xi_mean[r])
        out += 2.0 * sj_new * wd - 2.0 * xi_BPB[j]
    return out


@jit
def apply_reflection(eta, s, xi, j, C, lam, B, use_xi):
    m = eta.shape[0]
    t = 0.0
    for i in range(m):
        t += C[j, i] * s[i]
    bj = eta[j] - lam * t
    sj_new = -s[j]
    for k in range(m):
        eta[k] += 2.0 * lam * sj_new * C[k, j]
    eta[j] -= 2.0 * bj
    if use_xi:
        for r in range(xi.shape[0]):
            xi[r] -= 2.0 * sj_new * B[r, j]
    s[j] = sj_new


@jit
def mh_sweep(eta, s, xi, beta, weights, sd, prec, C, lam,
             B, xi_mean, xi_weights, xi_sd, check_xi, xi_cycles,
             uniforms, stats, xi_degenerate,
             reflect, sigma2, xi_prec_B, xi_BPB):
    """One outer iteration of the delayed-rejection sampler, in place.

    When ``reflect`` is set, each coordinate then gets a sign-reflection
    proposal (see :func:`reflect_log_ratio`).  Uniform budget:
    ``2 * q * xi_cycles + m * (m + 2) + m * reflect``.
    """
    m = eta.shape[0]
    q = xi.shape[0]
    pos = 0

    if check_xi and q > 0:
        lo = np.empty(q)
        hi = np.empty(q)
        for r in range(q):
            v = 0.0
            for i in range(m):
                v += B[r, i] * s[i]
            lo[r] = -1.0 - v
            hi[r] = 1.0 - v
        kind = np.zeros(q, dtype=np.int64)
        gibbs_cycles(xi, xi_mean, xi_weights, xi_sd, kind, lo, hi,
                     uniforms[pos:pos + 2 * q * xi_cycles], xi_cycles, xi_degenerate)
    pos += 2 * q * xi_cycles

    r = np.empty(m)
    s_new = np.empty(m)
    for j in range(m):
        base = pos + j * (m + 2)
        stats[ST_FIRST] += 1
        lj, uj = first_stage_bounds(j, s, C, lam)
        mj = _cond_mean(j, eta, beta, weights)
        rj, ok = draw_region(mj, sd[j], OUTSIDE, lj, uj, uniforms[base], uniforms[base + 1])
        if not ok:
            stats[ST_DEGENERATE] += 1
            continue
        sj = 1.0 if rj >= uj else -1.0
        if sj == s[j]:
            eta[j] = rj
            stats[ST_FIRST_SAME] += 1
            continue

        for i in range(m):
            s_new[i] = s[i]
        s_new[j] = sj
        if check_xi and not in_inactive_box(xi, s_new, B):
            stats[ST_XI_REJECT] += 1
            continue

        old = eta[j]
        eta[j] = rj
        if in_active_set(eta, s_new, C, lam):
            s[j] = sj
            stats[ST_FIRST_FLIP] += 1
            continue
        eta[j] = old

        # second stage: independent same-tail proposals for k != j
        stats[ST_SECOND] += 1
        failed = False
        for k in range(m):
            if k == j:
                r[k] = rj
                continue
            t = 0.0
            for i in range(m):
                t += C[k, i] * s_new[i]
            t *= lam
            u = uniforms[base + 2 + (k if k < j else k - 1)]
            if s_new[k] > 0:
                val, ok = draw_region(eta[k], sd[k], INSIDE, t, np.inf, 0.0, u)
            else:
                val, ok = draw_region(eta[k], sd[k], INSIDE, -np.inf, t, 0.0, u)
            if not ok:
                failed = True
                break
            r[k] = val
        if failed:
            stats[ST_DEGENERATE] += 1
            continue

        r[j] = eta[j]
        reverse_legal = in_active_set(r, s, C, lam)
        r[j] = rj
        if reverse_legal:
            stats[ST_REVERSE_LEGAL] += 1
            continue

        lr = log_dr_ratio(eta, s, r, s_new, j, beta, weights, sd, prec, C, lam)
        if math.isnan(lr):
            stats[ST_NUMERIC_REJECT] += 1
            continue
        if math.log(_clip_unit(uniforms[base + m + 1])) < lr:
            for i in range(m):
                eta[i] = r[i]
                s[i] = s_new[i]
            stats[ST_SECOND_ACCEPT] += 1
        else:
            stats[ST_SECOND_REJECT] += 1

    if reflect:
        base = pos + m * (m + 2)
        for j in range(m):
            stats[ST_REFLECT_TRY] += 1
            lr = reflect_log_ratio(eta, s, xi, j, beta, prec, C, lam, sigma2,
                                   xi_mean, xi_prec_B, xi_BPB, check_xi)
            if math.log(_clip_unit(uniforms[base + j])) < lr:
                apply_reflection(eta, s, xi, j, C, lam, B, check_xi)
                stats[ST_REFLECT_ACCEPT] += 1


@jit
def mh_chain(eta, s, xi, beta, weights, sd, prec, C, lam,
             B, xi_mean, xi_weights, xi_sd, check_xi, xi_cycles,
             uniforms, per_sweep, n_sweeps, thin, out, stats, xi_degenerate,
             reflect, sigma2, xi_prec_B, xi_BPB):
    """Run ``n_sweeps`` sweeps, storing ``eta`` every ``thin`` sweeps in ``out``.

    ``out`` may have zero rows, in which case nothing is recorded.
    """
    row = 0
    for t in range(n_sweeps):
        mh_sweep(eta, s, xi, beta, weights, sd, prec, C, lam,
                 B, xi_mean, xi_weights, xi_sd, check_xi, xi_cycles,
                 uniforms[t * per_sweep:(t + 1) * per_sweep], stats, xi_degenerate,
                 reflect, sigma2, xi_prec_B, xi_BPB)
        if out.shape[0] > 0 and (t + 1) % thin == 0:
            out[row] = eta
            row += 1


def sweep_uniform_count(m, q, xi_cycles, reflect=False):
    return 2 * q * xi_cycles + m * (m + 2) + (m if reflect else 0)


# --- lasso coordinate descent -------------------------------------------

@jit
def _cd_pass(G, grad, lam, beta, active, only_active):
    # one cyclic pass; grad = X^T y - G beta is kept in sync
    p = beta.shape[0]
    dmax = 0.0
    for j in range(p):
        if only_active and not active[j]:
            continue
        gjj = G[j, j]
        z = beta[j] + grad[j] / gjj
        thr = lam / gjj
        if z > thr:
            new = z - thr
        elif z < -thr:
            new = z + thr
        else:
            new = 0.0
        d = new - beta[j]
        if d != 0.0:
            for k in range(p):
                grad[k] -= G[k, j] * d
            beta[j] = new
            if abs(d) > dmax:
                dmax = abs(d)
        if new != 0.0:
            active[j] = True
    return dmax


@jit
def cd_lasso(G, c, lam, beta, tol, max_sweeps):
    """Minimize 0.5 b'Gb - c'b + lam |b|_1 in place, warm-started at ``beta``.

    Alternates full passes with passes over the current nonzero set.
    Converged when a full pass moves no coordinate by more than
    ``tol * (1 + max|beta|)``.  Returns the number of passes, negated if
    ``max_sweeps`` was exhausted.
    """
    p = beta.shape[0]
    grad = c.copy()
    for j in range(p):
        if beta[j] != 0.0:
            for k in range(p):
                grad[k] -= G[k, j] * beta[j]
    active = np.zeros(p, dtype=np.bool_)
    for j in range(p):
        active[j] = beta[j] != 0.0
    sweeps = 0
    while sweeps < max_sweeps:
        dmax = _cd_pass(G, grad, lam, beta, active, False)
        sweeps += 1
        bmax = 0.0
        for j in range(p):
            bmax = max(bmax, abs(beta[j]))
        if dmax < tol * (1.0 + bmax):
            return sweeps
        while sweeps < max_sweeps:
            dmax = _cd_pass(G, grad, lam, beta, active, True)
            sweeps += 1
            if dmax < tol * (1.0 + bmax):
                break
    return -sweeps
