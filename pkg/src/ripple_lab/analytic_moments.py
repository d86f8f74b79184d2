"""Closed-form asymptotic moment curves for the peeling decoder.

Everything is a function of x = u/k, the undecoded fraction, for a code
with n = (1+eps)k collected symbols under the with-replacement model.
Normalized curves (hats) satisfy first-order ODEs in x whose solutions
are fully explicit once Omega and five initial constants are known; the
unnormalized cloud/ripple moments are C = n Chat, R = n Rhat, and
M, L, N = n^2 (Mhat, Lhat, Nhat).

The second derivatives of the hat curves feed the finite-length
discrepancy sums in finite_length.py and are provided in closed form
(validated against finite differences in the test suite).
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .degree_dist import omega_derivative
from .errors import SingularityError, UnsupportedDistributionError

DEFAULT_X_MIN = 0.05
_FG_DEN_TOL = 1e-12


def _as_grid(xs):
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    if np.any(xs <= 0.0) or np.any(xs > 1.0):
        raise ValueError("x must lie in (0, 1]")
    return xs


def _fg_arrays(dist, xs):
    num = xs * omega_derivative(dist, 1.0 - xs, 2)
    den = 1.0 - xs * omega_derivative(dist, 1.0 - xs, 1) - omega_derivative(dist, 1.0 - xs, 0)
    f = np.zeros_like(xs)
    live = num != 0.0
    bad = live & (np.abs(den) <= _FG_DEN_TOL)
    if np.any(bad):
        raise SingularityError(
            f"f(x) denominator vanished at x={xs[bad][0]!r}", where=float(xs[bad][0])
        )
    f[live] = num[live] / den[live]
    return f, f / xs


def f_g(dist, x):
    """Cloud release-rate pair (f, g) at one point, g = f/x.

    A vanishing numerator (no degree >= 2 mass reachable) resolves the
    0/0 to (0, 0): a cloud that can never release has rate zero.
    """
    if not 0.0 < x <= 1.0:
        raise ValueError("x must lie in (0, 1]")
    f, g = _fg_arrays(dist, np.array([float(x)]))
    return float(f[0]), float(g[0])


@dataclass(frozen=True)
class ModelConstants:
    n: int
    eps: float
    omega1: float
    c0: float
    r0: float
    m0: float
    l0: float
    n0: float


def constants(dist, n, eps=float("nan"), conditional=False):
    """Initial constants of the five hat curves, from the u = k state.

    The state after classifying n fresh symbols is binomial in the number
    of reduced-degree-1 symbols, which fixes every curve's value at x = 1.
    Powers of 1 - Omega_1 go through expm1/log1p so that n in the hundreds
    loses nothing.

    By default the x = 1 values are the mass-weighted moments over states
    with at least one reduced-degree-1 symbol (the all-cloud event is
    excluded but its probability is not renormalized away).  With
    conditional=True every constant is divided by 1 - (1-Omega_1)^n, giving
    the moments conditioned on a startable state; the two families agree to
    within (1-Omega_1)^n, which matters only for small n.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    w1 = dist.omega1
    if w1 <= 0.0:
        raise UnsupportedDistributionError(
            "Omega_1 = 0: the decoder can never start; constants are undefined"
        )

    def qpow(m):
        if m == 0:
            return 1.0
        if w1 == 1.0:
            return 0.0
        return float(np.exp(m * np.log1p(-w1)))

    one_minus_qn = 1.0 if w1 == 1.0 else float(-np.expm1(n * np.log1p(-w1)))
    c0 = 1.0 - qpow(n - 1)
    r0 = w1 * qpow(n - 1) - one_minus_qn / n
    m0 = (1.0 - 1.0 / n) * (1.0 - qpow(n - 2))
    # The -c0/n piece keeps Lhat(1) equal to the exact defective moment
    # E[c (r-1); r >= 1] / n^2; without it the whole L curve (and N through
    # its L coupling) is off by O(1/n), which is the same order as the
    # finite-length corrections built on these curves.  n0 carries the
    # compensating +2 Omega_1 c0 / n so that Nhat(1) stays exact.
    l0 = (1.0 - 1.0 / n) * w1 * qpow(n - 2) - c0 / n
    n0 = (
        -(1.0 - 1.0 / n) * qpow(n - 2) * w1 * w1
        - 2.0 * w1 / n
        + 2.0 / (n * n) * one_minus_qn
        + 2.0 * w1 * c0 / n
    )
    if conditional:
        c0 /= one_minus_qn
        r0 /= one_minus_qn
        m0 /= one_minus_qn
        l0 /= one_minus_qn
        n0 /= one_minus_qn
    return ModelConstants(n=n, eps=float(eps), omega1=w1, c0=c0, r0=r0, m0=m0, l0=l0, n0=n0)


def _hat_arrays(dist, n, eps, xs, conditional=False):
    """All five hat curves on a grid.  xs strictly in (0, 1]; x = 1 rows take
    the exact initial-constant expressions so the endpoint is not at the
    mercy of log(1) arithmetic."""
    con = constants(dist, n, eps, conditional=conditional)
    ope = 1.0 + eps
    op0 = omega_derivative(dist, 1.0 - xs, 0)
    op1 = omega_derivative(dist, 1.0 - xs, 1)
    A = 1.0 - xs * op1 - op0
    lnx = np.log(xs)

    chat = con.c0 * A
    rhat = xs * (con.c0 * op1 + lnx / ope + con.r0)
    mhat = con.m0 * A * A
    phi = con.m0 * op1 + con.c0 * lnx / ope + con.l0
    lhat = xs * A * phi
    psi = (
        con.m0 * op1 * op1
        + 2.0 * con.l0 * op1
        + 2.0 * con.c0 / ope * op1 * lnx
        + 2.0 * con.r0 / ope * lnx
        + lnx * lnx / (ope * ope)
        + con.n0
    )
    nhat = xs * xs * psi

    at1 = xs == 1.0
    if np.any(at1):
        # endpoint from the exact initial constants rather than the log forms
        w1 = con.omega1
        q = 1.0 - w1
        chat[at1] = con.c0 * q
        rhat[at1] = con.c0 * w1 + con.r0  # = Omega_1 - (1 - (1-Omega_1)^n)/n
        mhat[at1] = con.m0 * q * q
        lhat[at1] = q * (con.m0 * w1 + con.l0)
        nhat[at1] = con.m0 * w1 * w1 + 2.0 * con.l0 * w1 + con.n0
    return con, A, chat, rhat, mhat, lhat, nhat


def hat_second_derivatives(dist, n, eps, xs, conditional=False):
    """Closed-form second derivatives of the five hat curves."""
    xs = _as_grid(xs)
    con = constants(dist, n, eps, conditional=conditional)
    ope = 1.0 + eps
    op1 = omega_derivative(dist, 1.0 - xs, 1)
    op2 = omega_derivative(dist, 1.0 - xs, 2)
    op3 = omega_derivative(dist, 1.0 - xs, 3)
    op0 = omega_derivative(dist, 1.0 - xs, 0)
    lnx = np.log(xs)

    A = 1.0 - xs * op1 - op0
    A1 = xs * op2
    A2 = op2 - xs * op3

    chat2 = con.c0 * A2
    rhat2 = -2.0 * con.c0 * op2 + con.c0 * xs * op3 + 1.0 / (ope * xs)
    mhat2 = 2.0 * con.m0 * (A1 * A1 + A * A2)

    phi = con.m0 * op1 + con.c0 * lnx / ope + con.l0
    phi1 = -con.m0 * op2 + con.c0 / (ope * xs)
    phi2 = con.m0 * op3 - con.c0 / (ope * xs * xs)
    lhat2 = (
        2.0 * A1 * phi
        + 2.0 * A * phi1
        + xs * A2 * phi
        + 2.0 * xs * A1 * phi1
        + xs * A * phi2
    )

    psi = (
        con.m0 * op1 * op1
        + 2.0 * con.l0 * op1
        + 2.0 * con.c0 / ope * op1 * lnx
        + 2.0 * con.r0 / ope * lnx
        + lnx * lnx / (ope * ope)
        + con.n0
    )
    psi1 = (
        -2.0 * con.m0 * op1 * op2
        - 2.0 * con.l0 * op2
        + 2.0 * con.c0 / ope * (-op2 * lnx + op1 / xs)
        + 2.0 * con.r0 / (ope * xs)
        + 2.0 * lnx / (ope * ope * xs)
    )
    psi2 = (
        2.0 * con.m0 * (op2 * op2 + op1 * op3)
        + 2.0 * con.l0 * op3
        + 2.0 * con.c0 / ope * (op3 * lnx - 2.0 * op2 / xs - op1 / (xs * xs))
        - 2.0 * con.r0 / (ope * xs * xs)
        + 2.0 * (1.0 - lnx) / (ope * ope * xs * xs)
    )
    nhat2 = 2.0 * psi + 4.0 * xs * psi1 + xs * xs * psi2
    return chat2, rhat2, mhat2, lhat2, nhat2


def hat_variance_part(dist, n, eps, x, conditional=False):
    """n^2 (Nhat - Rhat^2) + n Rhat, in the reduced form where the log terms
    of Nhat and Rhat^2 cancel exactly, so no precision is lost to the n^2
    products.  This is NOT the O(k) ripple variance by itself: the curve
    discrepancies enter the variance at the same n^2/k order as this
    combination does (the Nhat - Rhat^2 cancellation leaves only O(1/n)).
    """
    xs = _as_grid(x)
    con, A, chat, rhat, mhat, lhat, nhat = _hat_arrays(dist, n, eps, xs, conditional=conditional)
    op1 = omega_derivative(dist, 1.0 - xs, 1)
    quad = (
        (con.m0 - con.c0 * con.c0) * op1 * op1
        + 2.0 * (con.l0 - con.c0 * con.r0) * op1
        + (con.n0 - con.r0 * con.r0)
    )
    return n * n * xs * xs * quad + n * rhat


def leading_variance(dist, n, eps, x, k=None):
    """Ripple variance to leading order in k: sigma_R^2(u) + O(1).

    Assembled as n^2(Nhat - Rhat^2) + n Rhat minus the discrepancy
    combination n^2 (D_N - 2 Rhat D_R); both pieces are O(k) and neither
    alone tracks the simulated variance.  The discrepancy sweep lives in
    finite_length (imported lazily; the modules are mutually recursive only
    at call time) and is evaluated on the integer-u grid, so off-grid x are
    filled by linear interpolation, an O(1/k^2) detail here.  The value can
    go negative deep in the tail (truncated-order artifact); callers that
    need a standard deviation clamp at zero.

    Uses the conditional constant family throughout: the variance of
    interest is that of a decoder that actually started, and the
    mass-weighted family would contribute spurious n^2 (1-Omega_1)^n
    initial-mass terms, which for k of a few hundred dwarf the O(k)
    variance itself.  Above k ~ 800 the two families agree to float
    precision.
    """
    from . import finite_length

    xs = _as_grid(x)
    if k is None:
        k = int(round(n / (1.0 + eps)))
    base = hat_variance_part(dist, n, eps, xs, conditional=True)
    _, _, _, rhat, _, _, _ = _hat_arrays(dist, n, eps, xs, conditional=True)
    DC, DR, DM, DL, DN, _ = finite_length._full_sweep(dist, n, eps, k, conditional=True)
    ugrid = np.arange(1.0, k + 1.0)
    dr = np.interp(xs * k, ugrid, DR[1:])
    dn = np.interp(xs * k, ugrid, DN[1:])
    var = base - float(n) * n * (dn - 2.0 * rhat * dr)
    return float(var[0]) if np.isscalar(x) or np.asarray(x).ndim == 0 else var


@dataclass
class MomentCurves:
    k: int
    n: int
    eps: float
    x: np.ndarray
    u: np.ndarray
    f: np.ndarray
    g: np.ndarray
    c_hat: np.ndarray
    r_hat: np.ndarray
    m_hat: np.ndarray
    l_hat: np.ndarray
    n_hat: np.ndarray
    C: np.ndarray
    R: np.ndarray
    M: np.ndarray
    L: np.ndarray
    N: np.ndarray
    r_closed: np.ndarray  # (1+eps) u (Omega'(1-x) + ln x / (1+eps)), the constant-free form
    var_leading: np.ndarray
    h: dict
    valid: np.ndarray  # x >= x_min
    var_clamped: np.ndarray
    constants: ModelConstants = None
    x_min: float = DEFAULT_X_MIN


def curves(dist, n, eps, xs, cs=(), x_min=DEFAULT_X_MIN, k=None):
    """Evaluate every moment curve on a grid.

    Points below x_min are still evaluated but flagged invalid, since the
    asymptotic expansion is not trusted there; hard range errors are
    reserved for x outside (0, 1].
    """
    xs = _as_grid(xs)
    if k is None:
        k = int(round(n / (1.0 + eps)))
    con, A, chat, rhat, mhat, lhat, nhat = _hat_arrays(dist, n, eps, xs)
    f, g = _fg_arrays(dist, xs)
    op1 = omega_derivative(dist, 1.0 - xs, 1)
    u = xs * k
    lnx = np.log(xs)
    r_closed = (1.0 + eps) * u * (op1 + lnx / (1.0 + eps))
    var = leading_variance(dist, n, eps, xs, k=k)
    clamped = var < 0.0
    sigma = np.sqrt(np.clip(var, 0.0, None))
    h = {}
    for c in cs:
        if c < 0:
            raise ValueError("deviation multiplier c must be >= 0")
        h[float(c)] = n * rhat - float(c) * sigma
    if h and np.any(clamped):
        warnings.warn(
            "leading variance clamped to 0 on part of the grid; "
            "h curves equal the mean there",
            RuntimeWarning,
            stacklevel=2,
        )
    return MomentCurves(
        k=k,
        n=n,
        eps=float(eps),
        x=xs,
        u=u,
        f=f,
        g=g,
        c_hat=chat,
        r_hat=rhat,
        m_hat=mhat,
        l_hat=lhat,
        n_hat=nhat,
        C=n * chat,
        R=n * rhat,
        M=float(n) * n * mhat,
        L=float(n) * n * lhat,
        N=float(n) * n * nhat,
        r_closed=r_closed,
        var_leading=var,
        h=h,
        valid=xs >= x_min - 1e-12,
        var_clamped=clamped,
        constants=con,
        x_min=x_min,
    )


def h_curve(dist, n, eps, c, xs, refined=None, x_min=DEFAULT_X_MIN):
    """h_c = R - c sigma_R on a grid, refined when finite-length curves are given.

    refined, if supplied, must be a finite_length.RefinedCurves on exactly
    the same grid; its refined_R and refined_var replace the leading forms.
    """
    xs = _as_grid(xs)
    if c < 0:
        raise ValueError("deviation multiplier c must be >= 0")
    if refined is not None:
        if refined.x.shape != xs.shape or not np.allclose(refined.x, xs, rtol=0, atol=1e-12):
            raise ValueError("refined curves were computed on a different grid")
        R = refined.refined_R
        var = refined.refined_var
    else:
        cur = curves(dist, n, eps, xs, x_min=x_min)
        R = cur.R
        var = cur.var_leading
    if np.any(var < 0.0):
        warnings.warn(
            "negative ripple variance clamped to 0 in h curve", RuntimeWarning, stacklevel=2
        )
    return R - c * np.sqrt(np.clip(var, 0.0, None))
