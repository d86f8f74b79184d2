import numpy as np
import pytest

from ripple_lab.analytic_moments import _hat_arrays, curves
from ripple_lab.exact_recursion import approx_pu, exact_pu
from ripple_lab.finite_length import (
    _full_sweep,
    discrepancies,
    refine_curves,
    refined_R,
    refined_variance,
)

EPS = 0.1


def _tilde(dist, k, n, pu_fn):
    """Independent oracle: run the exact defective moment difference
    equations from the binomial endpoint down to u = 1, one step per u,
    with the supplied release probability.  No hat curves, no sweeps."""
    _, _, ch, rh, mh, lh, nh = _hat_arrays(dist, n, EPS, np.array([1.0]))
    C = np.zeros(k + 1)
    R = np.zeros(k + 1)
    M = np.zeros(k + 1)
    L = np.zeros(k + 1)
    N = np.zeros(k + 1)
    C[k] = n * ch[0]
    R[k] = n * rh[0]
    M[k] = n * n * mh[0]
    L[k] = n * n * lh[0]
    N[k] = n * n * nh[0]
    for u in range(k, 1, -1):
        p = pu_fn(k, u, dist)
        a = 1.0 - 1.0 / u
        C[u - 1] = (1 - p) * C[u]
        R[u - 1] = p * C[u] + a * R[u] - 1.0
        M[u - 1] = (1 - p) ** 2 * M[u]
        L[u - 1] = (1 - p) * (p * M[u] + a * L[u] - C[u])
        N[u - 1] = (
            a * a * N[u] + p * p * M[u] + 2 * p * a * L[u] - 2 * p * C[u] - 2 * a * R[u] + 2.0
        )
    return C, R, M, L, N


@pytest.fixture(scope="module")
def k800(cap):
    k = 800
    n = 880
    us = np.arange(160, k + 1)  # x >= 0.2, the trusted region
    xs = us / k
    return k, n, us, xs


def test_model_discrepancies_track_difference_equations(cap, k800):
    k, n, us, xs = k800
    Ct, Rt, Mt, Lt, Nt = _tilde(cap, k, n, approx_pu)
    cur = curves(cap, n, EPS, xs, k=k)
    d = discrepancies(cap, n, EPS, k, xs)
    assert np.max(np.abs(n * (cur.c_hat - d.D_C) - Ct[us])) < 0.01
    assert np.max(np.abs(n * (cur.r_hat - d.D_R) - Rt[us])) < 0.015
    assert np.max(np.abs(n * n * (cur.m_hat - d.D_M) - Mt[us])) / k < 0.01
    assert np.max(np.abs(n * n * (cur.l_hat - d.D_L) - Lt[us])) / k < 0.01
    assert np.max(np.abs(n * n * (cur.n_hat - d.D_N) - Nt[us])) / k < 0.01


def test_refined_curves_track_exact_difference_equations(cap, k800):
    k, n, us, xs = k800
    Ct, Rt, Mt, Lt, Nt = _tilde(cap, k, n, exact_pu)
    ref = refine_curves(cap, n, EPS, k, xs)
    assert np.max(np.abs(ref.refined_C - Ct[us])) < 2e-4
    assert np.max(np.abs(ref.refined_R - Rt[us])) < 5e-4
    assert np.max(np.abs(ref.refined_M - Mt[us])) / k < 1e-4
    assert np.max(np.abs(ref.refined_L - Lt[us])) / k < 5e-4
    assert np.max(np.abs(ref.refined_N - Nt[us])) / k < 1e-3
    # defective variance N - R^2 + R, assembled inside refine_curves
    var_t = Nt[us] - Rt[us] ** 2 + Rt[us]
    assert np.max(np.abs(ref.refined_var - var_t)) < 1.0


def test_discrepancies_vanish_at_endpoint(cap):
    d = discrepancies(cap, 110, EPS, 100, [1.0])
    for name in ("D_C", "D_R", "D_M", "D_L", "D_N"):
        assert getattr(d, name)[0] == 0.0


def test_scalar_helpers_match_curves(cap):
    k, n = 100, 110
    ref = refine_curves(cap, n, EPS, k, [0.5])
    assert refined_R(cap, n, EPS, k, 0.5) == pytest.approx(ref.refined_R[0], rel=1e-12)
    assert refined_variance(cap, n, EPS, k, 0.5) == pytest.approx(ref.refined_var[0], rel=1e-12)


def test_sweep_cache_and_family_flag(cap):
    a = _full_sweep(cap, 55, EPS, 50)
    b = _full_sweep(cap, 55, EPS, 50)
    assert a is b  # cached
    cond = _full_sweep(cap, 55, EPS, 50, conditional=True)
    assert cond is not a
    # at n = 55 the startability mass (1-Omega_1)^n is not negligible, so
    # the two constant families give measurably different discrepancies
    assert not np.allclose(a[1], cond[1])


def test_grid_alignment_errors(cap):
    with pytest.raises(ValueError):
        discrepancies(cap, 110, EPS, 100, [0.333])  # u = 33.3 off-grid
    with pytest.raises(ValueError):
        refine_curves(cap, 110, EPS, 100, [0.001])  # u < 1
    with pytest.raises(ValueError):
        discrepancies(cap, 110, EPS, 1, [1.0])  # k too small
