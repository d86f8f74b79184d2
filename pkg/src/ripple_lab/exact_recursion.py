"""Exact decoder-state distribution by generating-function recursion.

The state polynomial at u collects p_{c,r} x^c y^(r-1) over cloud size c
and ripple size r >= 1; mass that reaches r = 0 leaves the polynomial, so
the total remaining mass is the probability the decoder is alive at u.
One step substitutes

    x -> x(1 - p_u) + y p_u        (each cloud symbol releases w.p. p_u)
    y -> 1/u + y(1 - 1/u)          (each other ripple symbol survives)

subtracts the y-free part (trajectories whose ripple just emptied), and
divides by y.  The step here is organized as two nonnegative linear maps
(a binomial rebase in y, then a binomial mix from x into y), which makes
the y^0 cancellation structural: no signed sums occur, so no compensated
accumulation is needed and coefficients can never go negative.

Release probabilities come in three flavors:

  exact   the without-replacement formula (falling-factorial ratios)
  approx  the large-k expansion f(x)/k - g(x)/k^2
  wr      with-replacement encoding with distinct-neighbor reduction,
          matching what the simulator in montecarlo.py actually does

An exact-rational mode (Fraction coefficients) is available for small k
as an oracle for the float arithmetic.
"""

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import analytic_moments
from .degree_dist import omega_derivative
from .errors import NumericalInstabilityError, SingularityError

RESID_HARD_LIMIT = 1e-9  # step() refuses to continue past this y^0 residual
PRUNE_EPS = 1e-18
DEFAULT_MAX_K = 64
RATIONAL_MAX_K = 8

PU_MODES = ("exact", "approx", "wr")

_PASCAL_CACHE = {}


def _pascal(rows):
    """Binomial table C[i, j], exact in float for every entry below 2**53."""
    P = _PASCAL_CACHE.get(rows)
    if P is None or P.shape[0] < rows + 1:
        P = np.zeros((rows + 1, rows + 1))
        P[:, 0] = 1.0
        for i in range(1, rows + 1):
            P[i, 1 : i + 1] = P[i - 1, 0:i] + P[i - 1, 1 : i + 1]
        _PASCAL_CACHE[rows] = P
    return P


@dataclass
class StatePolynomial:
    u: int
    coeff: object  # (n+1, n) float array, or nested Fraction lists in rational mode
    resid: float = 0.0  # measured y^0 residual of the last step
    prune: float = 0.0  # mass dropped by pruning in the last step

    @property
    def is_rational(self):
        return not isinstance(self.coeff, np.ndarray)


def init_state(n, u, rational=False):
    """Fresh state before the first classification step: unit mass at c=n, r=1.

    The r=1 slot is formal; the first step (taken with the initial release
    probability) produces the true ripple/cloud split.  u should be k+1.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if rational:
        coeff = [[Fraction(0)] * n for _ in range(n + 1)]
        coeff[n][0] = Fraction(1)
    else:
        coeff = np.zeros((n + 1, n))
        coeff[n, 0] = 1.0
    return StatePolynomial(u=u, coeff=coeff)


def _step_float(coeff, u, p):
    ncap, ncols = coeff.shape
    n = ncap - 1
    beta = 1.0 / u
    alpha = 1.0 - beta
    C = _pascal(2 * n)

    # stage 1: rebase y^j onto (beta + alpha y)^j
    cols = np.arange(ncols)
    jb = np.subtract.outer(cols, cols)
    betapow = np.where(jb >= 0, beta ** np.clip(jb, 0, None), 0.0)
    My = C[:ncols, :ncols] * (alpha**cols)[None, :] * betapow
    q = coeff @ My

    # stage 2: mix x^c into ((1-p)x + p y)^c
    a = np.arange(n + 1)
    W = C[np.add.outer(a, a), a[None, :]] * ((1.0 - p) ** a)[:, None] * (p**a)[None, :]
    res = np.zeros((n + 1, n + 1))
    for m in range(n + 1):
        bmax = min(ncols - 1, n - m)
        if bmax < 0:
            break
        res[0 : n + 1 - m, m : m + bmax + 1] += (
            W[0 : n + 1 - m, m][:, None] * q[m : n + 1, 0 : bmax + 1]
        )

    # the y^0 column must equal the subtracted evaluation P(x(1-p), 1/u);
    # with this factorization it does so structurally, and the residual
    # only measures summation-order noise
    sub = float(np.dot(W[:, 0], q[:, 0]))
    resid = abs(float(res[:, 0].sum()) - sub)

    new_coeff = res[:, 1 : ncols + 1].copy()
    tiny = (new_coeff > 0.0) & (new_coeff < PRUNE_EPS)
    prune = float(new_coeff[tiny].sum())
    new_coeff[tiny] = 0.0
    return new_coeff, resid, prune


def _step_rational(coeff, u, p):
    n = len(coeff) - 1
    ncols = n
    beta = Fraction(1, u)
    alpha = 1 - beta
    p = Fraction(p)
    one_m_p = 1 - p

    My = [[Fraction(0)] * ncols for _ in range(ncols)]
    My[0][0] = Fraction(1)
    for j in range(1, ncols):
        My[j][0] = beta * My[j - 1][0]
        for b in range(1, j + 1):
            My[j][b] = beta * My[j - 1][b] + alpha * My[j - 1][b - 1]
    q = [[Fraction(0)] * ncols for _ in range(n + 1)]
    for c in range(n + 1):
        row = coeff[c]
        for j in range(ncols):
            pj = row[j]
            if pj:
                Mj = My[j]
                qc = q[c]
                for b in range(j + 1):
                    qc[b] += pj * Mj[b]

    W = [[Fraction(0)] * (n + 1) for _ in range(n + 1)]
    W[0][0] = Fraction(1)
    for m in range(1, n + 1):
        W[0][m] = p * W[0][m - 1]
    for a in range(1, n + 1):
        W[a][0] = one_m_p * W[a - 1][0]
        for m in range(1, n + 1):
            W[a][m] = one_m_p * W[a - 1][m] + p * W[a][m - 1]

    res = [[Fraction(0)] * (n + 1) for _ in range(n + 1)]
    for m in range(n + 1):
        bmax = min(ncols - 1, n - m)
        if bmax < 0:
            break
        for a in range(n + 1 - m):
            Wam = W[a][m]
            if Wam:
                qrow = q[a + m]
                ra = res[a]
                for b in range(bmax + 1):
                    if qrow[b]:
                        ra[m + b] += Wam * qrow[b]

    sub = sum(W[a][0] * q[a][0] for a in range(n + 1))
    resid = sum(r[0] for r in res) - sub  # exactly zero
    new = [[res[c][j + 1] for j in range(ncols)] for c in range(n + 1)]
    return new, float(abs(resid)), 0.0


def step(state, p_u):
    """Advance the state polynomial from u to u-1 with release probability p_u."""
    u = state.u
    if u < 1:
        raise ValueError("cannot step below u=1")
    if state.is_rational:
        if not 0 <= p_u <= 1:
            raise ValueError("p_u must be a probability")
        coeff, resid, prune = _step_rational(state.coeff, u, p_u)
    else:
        p = float(p_u)
        if not 0.0 <= p <= 1.0:
            raise ValueError("p_u must be a probability")
        coeff, resid, prune = _step_float(state.coeff, u, p)
    if resid > RESID_HARD_LIMIT:
        raise NumericalInstabilityError(
            f"y^0 residual {resid:.3e} at u={u} exceeds {RESID_HARD_LIMIT}"
        )
    return StatePolynomial(u=u - 1, coeff=coeff, resid=resid, prune=prune)


def survival(state):
    """Total remaining mass P_u(1, 1)."""
    if state.is_rational:
        return sum(v for row in state.coeff for v in row)
    return float(state.coeff.sum())


def moments(state):
    """Restricted (alive-only, unnormalized) moments (C, R, M, L, N).

    With j = r - 1:  C = E[c], R = E[j], M = E[c(c-1)], L = E[cj],
    N = E[j(j-1)], all summed against the defective state distribution.
    """
    if state.is_rational:
        C = R = M = L = N = Fraction(0)
        for c, row in enumerate(state.coeff):
            for j, v in enumerate(row):
                if v:
                    C += c * v
                    R += j * v
                    M += c * (c - 1) * v
                    L += c * j * v
                    N += j * (j - 1) * v
        return C, R, M, L, N
    coeff = state.coeff
    cs = np.arange(coeff.shape[0])[:, None]
    js = np.arange(coeff.shape[1])[None, :]
    C = float((coeff * cs).sum())
    R = float((coeff * js).sum())
    M = float((coeff * cs * (cs - 1)).sum())
    L = float((coeff * cs * js).sum())
    N = float((coeff * js * (js - 1)).sum())
    return C, R, M, L, N


def eval_state(state, x, y):
    """P_u(x, y)."""
    if state.is_rational:
        total = Fraction(0)
        for c, row in enumerate(state.coeff):
            for j, v in enumerate(row):
                if v:
                    total += v * x**c * y**j
        return total
    coeff = state.coeff
    xp = np.asarray(x, dtype=float) ** np.arange(coeff.shape[0])
    yp = np.asarray(y, dtype=float) ** np.arange(coeff.shape[1])
    return float(xp @ coeff @ yp)


def dirt_term(state, p_u):
    """The correction 2[P_u(1,1) - P_u(1-p_u, 1/u)] entering the N recursion.

    Zero for a zero-mass state.  The subtracted evaluation is the mass the
    coming step will drop, so this equals twice the mass that survives it:
    the +2 source term of the N recursion before normalization.
    """
    u = state.u
    if state.is_rational:
        mass = survival(state)
        if mass == 0:
            return Fraction(0)
        return 2 * (mass - eval_state(state, 1 - Fraction(p_u), Fraction(1, u)))
    mass = survival(state)
    if mass == 0.0:
        return 0.0
    return 2.0 * (mass - eval_state(state, 1.0 - float(p_u), 1.0 / u))


def exact_pu(k, u, dist):
    """Release probability for the step u -> u-1 under without-replacement encoding.

    Falling-factorial ratio products are updated incrementally and freeze
    at zero as soon as a numerator factor hits zero, which both encodes the
    combinatorial impossibility of large degrees and avoids 0/0 when the
    distribution's max degree exceeds k.  For u >= 2 every denominator
    factor exceeds its numerator factor, so the updates are always safe.
    """
    if not 1 <= u <= k:
        raise ValueError("need 1 <= u <= k")
    if u == 1:
        return 0.0  # the numerator carries a factor (u - 1)
    probs = dist.probs
    D = dist.max_degree

    num = 0.0
    t2 = 1.0  # [k-u, d-2] / [k-2, d-2], starting at d = 2
    for d in range(2, D + 1):
        w = probs[d - 1]
        if w != 0.0 and t2 != 0.0:
            num += w * d * (d - 1) * t2
        if t2 != 0.0:
            top = k - u - d + 2  # next factor's numerator; k-d = top + (u-2)
            t2 = 0.0 if top <= 0 else t2 * top / (k - d)
    num *= (u - 1) / (k * (k - 1))
    if num == 0.0:
        return 0.0

    sum1 = 0.0
    t1 = 1.0 / k  # [k-u, d-1] / [k, d] at d = 1
    sum0 = 0.0
    t0 = (k - u) / k  # [k-u, d] / [k, d] at d = 1
    for d in range(1, D + 1):
        w = probs[d - 1]
        if w != 0.0:
            sum1 += w * d * t1
            sum0 += w * t0
        if t1 != 0.0:
            top = k - u - d + 1
            t1 = 0.0 if top <= 0 else t1 * top / (k - d)
        if t0 != 0.0:
            top = k - u - d
            t0 = 0.0 if top <= 0 else t0 * top / (k - d)
    den = 1.0 - u * sum1 - sum0
    if abs(den) < 1e-300:
        raise SingularityError(f"release-probability denominator vanished at u={u}", where=u)
    return min(1.0, max(0.0, num / den))


def approx_pu(k, u, dist):
    """Large-k release probability f(x)/k - g(x)/k^2 at x = u/k, clamped to [0, 1]."""
    if not 1 <= u <= k:
        raise ValueError("need 1 <= u <= k")
    x = u / k
    f, g = analytic_moments.f_g(dist, x)
    return min(1.0, max(0.0, f / k - g / (k * k)))


def wr_pu(k, u, dist):
    """Release probability under with-replacement encoding, distinct-neighbor reduction.

    For a symbol with i.i.d. uniform neighbors and k - u inputs covered,
    inclusion-exclusion over which uncovered inputs its edges can touch
    gives, with w = (k-u)/k and h = 1/k,

        P(cloud)   = 1 - Omega(w) - u (Omega(w+h) - Omega(w))
        P(release) = (u-1) [Omega(w+2h) - 2 Omega(w+h) + Omega(w)]

    Both differences are expanded binomially into all-positive sums, since
    the direct second difference cancels catastrophically for large k.
    """
    if not 1 <= u <= k:
        raise ValueError("need 1 <= u <= k")
    if u == 1:
        return 0.0
    w = (k - u) / k
    h = 1.0 / k
    d1 = 0.0  # Omega(w+h) - Omega(w)
    d2 = 0.0  # Omega(w+2h) - 2 Omega(w+h) + Omega(w)
    p0 = 0.0  # Omega(w)
    for d, mass in enumerate(dist.probs, start=1):
        if mass == 0.0:
            continue
        p0 += mass * w**d
        for m in range(1, d + 1):
            term = math.comb(d, m) * w ** (d - m) * h**m
            d1 += mass * term
            if m >= 2:
                d2 += mass * term * (2.0**m - 2.0)
    den = 1.0 - p0 - u * d1
    if abs(den) < 1e-300:
        raise SingularityError(f"release-probability denominator vanished at u={u}", where=u)
    return min(1.0, max(0.0, (u - 1) * d2 / den))


def wr_init_prob(k, dist):
    """P(a fresh with-replacement symbol has reduced degree 1) = k Omega(1/k)."""
    h = 1.0 / k
    return float(sum(mass * k * h**d for d, mass in enumerate(dist.probs, start=1)))


# rational twins, used by the exact-arithmetic mode and as test oracles


def _falling(a, b):
    out = 1
    for t in range(b):
        out *= a - t
    return out


def _exact_pu_frac(k, u, probs):
    # terms with a zero falling factorial upstairs are combinatorially
    # impossible and must be skipped before the denominator can vanish too
    if u == 1:
        return Fraction(0)
    num = Fraction(0)
    for d in range(2, len(probs) + 1):
        w = probs[d - 1]
        if w:
            top = _falling(k - u, d - 2)
            if top:
                num += w * d * (d - 1) * Fraction(top, _falling(k - 2, d - 2))
    num *= Fraction(u - 1, k * (k - 1))
    if num == 0:
        return Fraction(0)
    den = Fraction(1)
    for d in range(1, len(probs) + 1):
        w = probs[d - 1]
        if w:
            t1 = _falling(k - u, d - 1)
            if t1:
                den -= u * w * d * Fraction(t1, _falling(k, d))
            t0 = _falling(k - u, d)
            if t0:
                den -= w * Fraction(t0, _falling(k, d))
    if den == 0:
        raise SingularityError(f"release-probability denominator vanished at u={u}", where=u)
    p = num / den
    return min(Fraction(1), max(Fraction(0), p))


def _omega_frac(probs, z):
    acc = Fraction(0)
    for w in reversed(probs):
        acc = acc * z + w
    return acc * z


def _wr_pu_frac(k, u, probs):
    if u == 1:
        return Fraction(0)
    w = Fraction(k - u, k)
    h = Fraction(1, k)
    ow = _omega_frac(probs, w)
    owh = _omega_frac(probs, w + h)
    ow2h = _omega_frac(probs, w + 2 * h)
    den = 1 - ow - u * (owh - ow)
    if den == 0:
        raise SingularityError(f"release-probability denominator vanished at u={u}", where=u)
    p = (u - 1) * (ow2h - 2 * owh + ow) / den
    return min(Fraction(1), max(Fraction(0), p))


def _approx_pu_frac(k, u, probs):
    x = Fraction(u, k)
    d0 = _omega_frac(probs, 1 - x)
    # Horner for Omega' and Omega'' at 1-x
    d1 = Fraction(0)
    for d in range(len(probs), 0, -1):
        d1 = d1 * (1 - x) + probs[d - 1] * d
    d2 = Fraction(0)
    for d in range(len(probs), 1, -1):
        d2 = d2 * (1 - x) + probs[d - 1] * d * (d - 1)
    num = x * d2
    if num == 0:
        return Fraction(0)
    A = 1 - x * d1 - d0
    if A == 0:
        raise SingularityError(f"f(x) denominator vanished at x={x}", where=float(x))
    f = num / A
    g = f / x
    p = f / k - g / k**2
    return min(Fraction(1), max(Fraction(0), p))


@dataclass
class ExactReport:
    k: int
    n: int
    pu_mode: str
    arithmetic: str
    u: np.ndarray  # k .. 1
    survival: np.ndarray  # P_u(1, 1)
    perr_u: np.ndarray  # mass lost entering state u (ripple emptied with u left)
    C: np.ndarray
    R: np.ndarray
    M: np.ndarray
    L: np.ndarray
    N: np.ndarray
    dirt: np.ndarray
    prune_loss: np.ndarray  # cumulative pruned mass up to each u
    resid_frac: np.ndarray  # per-step y^0 residual relative to remaining mass
    total_perr: float
    success: float


def _pu_fn(k, dist, pu_mode, rational):
    if rational:
        probs = [Fraction(p) for p in dist.probs]
        if pu_mode == "exact":
            return lambda u: _exact_pu_frac(k, u, probs)
        if pu_mode == "wr":
            return lambda u: _wr_pu_frac(k, u, probs)
        return lambda u: _approx_pu_frac(k, u, probs)
    if pu_mode == "exact":
        return lambda u: exact_pu(k, u, dist)
    if pu_mode == "wr":
        return lambda u: wr_pu(k, u, dist)
    return lambda u: approx_pu(k, u, dist)


def run_exact(k, n, dist, pu_mode="exact", arithmetic="float", max_k=DEFAULT_MAX_K):
    """Sweep the recursion from u = k+1 down to u = 1 and report per-u statistics.

    The initial step (u = k+1) classifies the n fresh symbols: its release
    probability is Omega_1 in exact/approx mode and k Omega(1/k) in wr mode,
    the with-replacement probability that all of a symbol's draws coincide.
    Cost is O(n^3) per step; the cap on k exists because the whole table is
    dense, not because anything breaks above it.
    """
    if k < 1 or n < 1:
        raise ValueError("k and n must be >= 1")
    if pu_mode not in PU_MODES:
        raise ValueError(f"pu_mode must be one of {PU_MODES}")
    if arithmetic not in ("float", "rational"):
        raise ValueError("arithmetic must be 'float' or 'rational'")
    rational = arithmetic == "rational"
    if rational and k > RATIONAL_MAX_K:
        raise ValueError(f"rational mode is limited to k <= {RATIONAL_MAX_K}")
    if k > max_k:
        raise ValueError(f"k={k} exceeds the cap {max_k}; raise max_k explicitly if intended")

    pu = _pu_fn(k, dist, pu_mode, rational)
    if pu_mode == "wr":
        p_init = wr_init_prob(k, dist)
        if rational:
            probs = [Fraction(p) for p in dist.probs]
            p_init = k * _omega_frac(probs, Fraction(1, k))
    else:
        p_init = Fraction(dist.probs[0]) if rational else dist.omega1

    state = init_state(n, k + 1, rational=rational)
    us = np.arange(k, 0, -1)
    cols = {name: np.zeros(k) for name in ("survival", "perr_u", "C", "R", "M", "L", "N", "dirt", "prune_loss", "resid_frac")}
    prev_mass = Fraction(1) if rational else 1.0
    prune_total = 0.0

    for i, u_now in enumerate(us):
        # plain int: np.int64 would seep into Fraction internals in rational
        # mode and wrap the falling factorials
        u_now = int(u_now)
        p_step = p_init if u_now == k else pu(u_now + 1)
        state = step(state, p_step)
        mass = survival(state)
        C, R, M, L, N = moments(state)
        p_next = pu(u_now) if u_now >= 1 else (Fraction(0) if rational else 0.0)
        dirt = dirt_term(state, p_next)
        prune_total += state.prune
        cols["survival"][i] = float(mass)
        cols["perr_u"][i] = float(prev_mass - mass)
        cols["C"][i] = float(C)
        cols["R"][i] = float(R)
        cols["M"][i] = float(M)
        cols["L"][i] = float(L)
        cols["N"][i] = float(N)
        cols["dirt"][i] = float(dirt)
        cols["prune_loss"][i] = prune_total
        cols["resid_frac"][i] = state.resid / float(mass) if mass else 0.0
        prev_mass = mass

    return ExactReport(
        k=k,
        n=n,
        pu_mode=pu_mode,
        arithmetic=arithmetic,
        u=us,
        total_perr=float(1.0 - float(prev_mass)),
        success=float(prev_mass),
        **cols,
    )
