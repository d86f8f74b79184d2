import numpy as np
import pytest
from scipy import stats

from ripple_lab.analytic_moments import (
    constants,
    curves,
    f_g,
    h_curve,
    hat_second_derivatives,
    hat_variance_part,
    leading_variance,
)
from ripple_lab.degree_dist import DegreeDistribution, make_single_degree
from ripple_lab.errors import UnsupportedDistributionError
from ripple_lab.finite_length import refine_curves

EPS = 0.1


def _binomial_hats(w1, n):
    """Independent endpoint oracle: at x = 1 the ripple count is binomial.

    Each of the n fresh symbols lands in the ripple with probability
    Omega_1, independently; c = n - r.  The hat curves at x = 1 are the
    r >= 1 restricted moments of (c, r - 1), scaled by 1/n and 1/n^2.
    """
    r = np.arange(n + 1)
    pmf = stats.binom.pmf(r, n, w1)
    pmf[0] = 0.0
    c = n - r
    chat = float(np.sum(pmf * c)) / n
    rhat = float(np.sum(pmf * (r - 1))) / n
    mhat = float(np.sum(pmf * c * (c - 1))) / n**2
    lhat = float(np.sum(pmf * c * (r - 1))) / n**2
    nhat = float(np.sum(pmf * (r - 1) * (r - 2))) / n**2
    return chat, rhat, mhat, lhat, nhat


def test_initial_constants_match_binomial_endpoint(quad):
    n = 24
    cur = curves(quad, n, EPS, [1.0])
    chat, rhat, mhat, lhat, nhat = _binomial_hats(quad.omega1, n)
    assert cur.c_hat[0] == pytest.approx(chat, abs=1e-11)
    assert cur.r_hat[0] == pytest.approx(rhat, abs=1e-11)
    assert cur.m_hat[0] == pytest.approx(mhat, abs=1e-11)
    assert cur.l_hat[0] == pytest.approx(lhat, abs=1e-11)
    assert cur.n_hat[0] == pytest.approx(nhat, abs=1e-11)


def test_conditional_family_is_rescaled(quad):
    n = 40
    plain = constants(quad, n, EPS)
    cond = constants(quad, n, EPS, conditional=True)
    scale = 1.0 - (1.0 - quad.omega1) ** n
    for name in ("c0", "r0", "m0", "l0", "n0"):
        assert getattr(cond, name) == pytest.approx(getattr(plain, name) / scale, rel=1e-12)


def test_constants_validation(quad):
    with pytest.raises(ValueError):
        constants(quad, 1, EPS)
    with pytest.raises(UnsupportedDistributionError):
        constants(make_single_degree(2), 50, EPS)


def test_fg_closed_form(quad):
    # for Omega = 0.3 x + 0.7 x^2 the denominator collapses to 0.7 x^2,
    # so f = 2/x and g = 2/x^2 exactly
    for x in (0.1, 0.4, 1.0):
        f, g = f_g(quad, x)
        assert f == pytest.approx(2.0 / x, rel=1e-12)
        assert g == pytest.approx(2.0 / x**2, rel=1e-12)
    # a pure degree-1 code has no cloud to release: 0/0 resolves to zero
    assert f_g(make_single_degree(1), 0.5) == (0.0, 0.0)
    with pytest.raises(ValueError):
        f_g(quad, 0.0)
    with pytest.raises(ValueError):
        f_g(quad, 1.5)


@pytest.mark.parametrize("dist_name", ["cap", "mix13"])
def test_hat_second_derivatives_match_finite_differences(dist_name, request):
    dist = request.getfixturevalue(dist_name)
    n = 660
    h = 1e-4
    xs = np.array([0.2, 0.5, 0.8, 0.95])
    d2 = hat_second_derivatives(dist, n, EPS, xs)
    lo = curves(dist, n, EPS, xs - h)
    mid = curves(dist, n, EPS, xs)
    hi = curves(dist, n, EPS, xs + h)
    for closed, name in zip(d2, ("c_hat", "r_hat", "m_hat", "l_hat", "n_hat")):
        fd = (getattr(hi, name) - 2.0 * getattr(mid, name) + getattr(lo, name)) / h**2
        denom = np.maximum(np.abs(closed), 1.0)
        assert np.max(np.abs(fd - closed) / denom) < 1e-5, name


def test_variance_part_reduced_form_matches_naive(cap):
    # the reduced form cancels the log terms analytically; the naive
    # n^2 (nhat - rhat^2) + n rhat assembly must agree where it is stable
    n = 110
    xs = np.array([0.3, 0.6, 0.9])
    reduced = hat_variance_part(cap, n, EPS, xs)
    cur = curves(cap, n, EPS, xs)
    naive = n * n * (cur.n_hat - cur.r_hat**2) + n * cur.r_hat
    assert np.max(np.abs(reduced - naive) / np.maximum(np.abs(reduced), 1.0)) < 1e-8


def test_leading_variance_close_to_refined(cap):
    k, n = 800, 880
    lead = leading_variance(cap, n, EPS, 0.5)
    assert isinstance(lead, float)
    ref = refine_curves(cap, n, EPS, k, [0.5])
    assert abs(lead - ref.refined_var[0]) < 1.0


def test_curves_fields_and_validity(cap):
    n = 110
    xs = np.array([0.02, 0.5, 1.0])
    cur = curves(cap, n, EPS, xs, cs=(2.0,))
    assert cur.valid.tolist() == [False, True, True]
    assert cur.u == pytest.approx(xs * cur.k)
    assert cur.C == pytest.approx(n * cur.c_hat)
    assert cur.R == pytest.approx(n * cur.r_hat)
    assert cur.N == pytest.approx(n * n * cur.n_hat)
    sigma = np.sqrt(np.clip(cur.var_leading, 0.0, None))
    assert cur.h[2.0] == pytest.approx(cur.R - 2.0 * sigma)
    with pytest.raises(ValueError):
        curves(cap, n, EPS, [0.0, 0.5])
    with pytest.raises(ValueError):
        curves(cap, n, EPS, [0.5, 1.2])
    with pytest.raises(ValueError):
        curves(cap, n, EPS, [0.5], cs=(-1.0,))


def test_h_curve_refined_grid_must_match(cap):
    k, n = 100, 110
    xs = np.array([0.3, 0.6])
    ref = refine_curves(cap, n, EPS, k, xs)
    out = h_curve(cap, n, EPS, 2.0, xs, refined=ref)
    assert out == pytest.approx(ref.refined_R - 2.0 * np.sqrt(np.clip(ref.refined_var, 0, None)))
    with pytest.raises(ValueError):
        h_curve(cap, n, EPS, 2.0, np.array([0.3, 0.7]), refined=ref)
    with pytest.raises(ValueError):
        h_curve(cap, n, EPS, -1.0, xs)


def test_h_curve_warns_when_variance_clamped(cap):
    # at k = 800 the refined variance dips just below zero at u = 2; the h
    # curve must clamp and say so rather than propagate a NaN
    k, n = 800, 880
    xs = np.array([2.0 / k, 0.5])
    ref = refine_curves(cap, n, EPS, k, xs)
    assert ref.refined_var[0] < 0.0
    with pytest.warns(RuntimeWarning):
        out = h_curve(cap, n, EPS, 2.0, xs, refined=ref)
    assert np.all(np.isfinite(out))
