import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nptorus.geometry import DomainError, TorusShape
from nptorus.modes import (
    I_kl_direct, I_kl_polar, I_kl_spectral, NumericalRangeRecord, c_m, c_m_quadrature, direct_integrand,
    ds_kl, h_eval, mode_table, numerator, numerator_literal, numerical_range_record, s_k_eta, s_kl,
    sign_verdict,
)
from nptorus.quadrature import QuadratureSpec, square_radius
from oracles import midpoint_oracle_2d, stable_gap, torus_gap, trapezoid_periodic

TIGHT = QuadratureSpec(rel_tol=1e-13, abs_tol=1e-15)


def rel(a, b):
    return abs(a - b) / abs(b)


# ---- s_k(eta) -------------------------------------------------------------

def test_s0_at_pi_against_summation(shape05):
    oracle = trapezoid_periodic(lambda p: 1 / np.sqrt(torus_gap(0.5, p, math.pi)), 4096)
    assert rel(s_k_eta(shape05, 0, math.pi).value, oracle) <= 1e-8


def test_s_k_eta_symmetry(shape05):
    for k, eta in [(0, 1.0), (3, 2.5), (7, 0.4)]:
        a = s_k_eta(shape05, k, eta).value
        assert abs(a - s_k_eta(shape05, -k, eta).value) <= 1e-12 * abs(a)
        assert abs(a - s_k_eta(shape05, k, -eta).value) <= 1e-12 * abs(a)


def test_s_k_eta_decay(shape05):
    vals = [s_k_eta(shape05, k, math.pi).value for k in range(11)]
    assert all(b < a for a, b in zip(vals, vals[1:]))


def test_s_k_eta_refuses_singular_point(shape05):
    with pytest.raises(DomainError):
        s_k_eta(shape05, 0, 0.0)


# ---- s_kl, ds_kl ----------------------------------------------------------

def test_s00_against_midpoint_oracle(shape05):
    oracle = midpoint_oracle_2d(lambda p, e: 1 / np.sqrt(stable_gap(0.5, p, e)), 4096)
    r = s_kl(shape05, 0, 0)
    assert r.converged and rel(r.value, oracle) <= 1e-6


def test_s_kl_symmetry_and_table(shape05):
    tab = mode_table(shape05, [0, 2, 5], [0, 1, 4])
    for k, l in [(2, 1), (5, 4), (0, 4)]:
        ref = s_kl(shape05, k, l)
        for kk, ll in [(-k, l), (k, -l)]:
            other = s_kl(shape05, kk, ll)
            assert abs(ref.value - other.value) <= ref.err_estimate + other.err_estimate + 1e-12
        i, j = tab.lookup(k, l)
        assert abs(tab.s[i, j] - ref.value) <= 3 * (tab.s_err[i, j] + ref.err_estimate) + 1e-12
        d = ds_kl(shape05, -k, l)
        assert abs(tab.ds[i, j] - d.value) <= 3 * (tab.ds_err[i, j] + d.err_estimate) + 1e-12


@pytest.mark.parametrize("xi", [0.3, 0.9])
def test_s_kl_positive(xi):
    tab = mode_table(TorusShape(xi), range(21), range(21))
    assert tab.converged and np.all(tab.s > 0)


def _fd(xi, h, k, l, spec):
    up = mode_table(TorusShape(xi + h), [k], [l], spec)
    dn = mode_table(TorusShape(xi - h), [k], [l], spec)
    return (up.s[0, 0] - dn.s[0, 0]) / (2 * h)


@pytest.mark.parametrize("k,l", [(3, 2), (0, 0)])
def test_ds_against_central_difference(shape05, k, l):
    ds = mode_table(shape05, [k], [l]).ds[0, 0]
    fd = _fd(0.5, 1e-3, k, l, None)
    assert np.sign(ds) == np.sign(fd)
    assert rel(ds, fd) <= 1e-4


def test_ds_difference_error_is_second_order(shape05):
    ds = mode_table(shape05, [3], [2], TIGHT).ds[0, 0]
    e2 = abs(_fd(0.5, 1e-2, 3, 2, TIGHT) - ds)
    e3 = abs(_fd(0.5, 1e-3, 3, 2, TIGHT) - ds)
    assert 50 <= e2 / e3 <= 200


# ---- c_m ------------------------------------------------------------------

def test_c_m_examples(shape05):
    assert c_m(shape05, 0) == pytest.approx(1 / math.sqrt(0.75), rel=1e-15)
    assert c_m(shape05, 0) == pytest.approx(1.1547005, rel=1e-7)
    beta = (1 - math.sqrt(0.75)) / 0.5
    assert beta == pytest.approx(0.2679492, rel=1e-7)
    assert c_m(shape05, 1) == pytest.approx(0.3094010, rel=1e-6)
    for m in range(12):
        assert c_m(shape05, m + 1) / c_m(shape05, m) == pytest.approx(beta, rel=1e-12)
        assert c_m(shape05, m) <= c_m(shape05, 0) * beta**m * (1 + 1e-10)
        assert c_m(shape05, m) == pytest.approx(c_m_quadrature(shape05, m).value, rel=1e-10, abs=1e-15)


@settings(max_examples=50, deadline=None)
@given(xi=st.floats(0.05, 0.99), m=st.integers(-20, 20))
def test_c_m_even_and_matches_quadrature(xi, m):
    sh = TorusShape(xi)
    assert c_m(sh, m) == c_m(sh, -m)
    q = c_m_quadrature(sh, m)
    assert abs(c_m(sh, m) - q.value) <= 1e-9 * c_m(sh, 0)


# ---- direct integrand -----------------------------------------------------

def test_direct_numerator_vanishes_to_second_order(shape05):
    assert numerator(shape05, 0.0, 0.0) == 0.0
    h = 1e-5
    gp = (numerator(shape05, h, 0.0) - numerator(shape05, -h, 0.0)) / (2 * h)
    ge = (numerator(shape05, 0.0, h) - numerator(shape05, 0.0, -h)) / (2 * h)
    assert abs(gp) < 1e-12 and abs(ge) < 1e-12
    rng = np.random.default_rng(2)
    p, e = rng.uniform(-math.pi, math.pi, size=(2, 100))
    np.testing.assert_allclose(numerator(shape05, p, e), numerator_literal(shape05, p, e), atol=1e-14)


def test_direct_integrand_even(shape05):
    rng = np.random.default_rng(4)
    p, e = rng.uniform(-math.pi, math.pi, size=(2, 100))
    np.testing.assert_allclose(direct_integrand(shape05, p, e), direct_integrand(shape05, -p, -e), rtol=1e-14)


# ---- polar amplitude ------------------------------------------------------

def test_h_examples():
    for xi in (0.1, 0.5, 0.9):
        assert h_eval(TorusShape(xi), 0.0, math.pi / 2) == pytest.approx(math.sqrt(2), rel=1e-14)
    xi, s = 0.5, math.sqrt(0.75)
    expected = math.sqrt(2) * xi * (1 - xi**2 - s) / (1 - xi**2) ** 1.5
    assert h_eval(TorusShape(xi), 0.0, 0.0) == pytest.approx(expected, rel=1e-14)
    assert h_eval(TorusShape(xi), 0.0, 0.0) == pytest.approx(-0.126313, rel=1e-5)


def test_h_away_from_origin_matches_literal(shape05):
    rng = np.random.default_rng(6)
    r = rng.uniform(0.05, 3.0, 50)
    th = rng.uniform(-math.pi, math.pi, 50)
    phi, eta = r * np.cos(th), r * np.sin(th)
    s = math.sqrt(0.75)
    N = 1 - s - (0.75 - s) * np.cos(phi) - 0.25 * np.cos(eta)
    Q = torus_gap(0.5, phi, eta)
    np.testing.assert_allclose(h_eval(shape05, r, th), r * N / (0.25 * Q**1.5), rtol=1e-9)


def test_h_continuous_at_origin(shape05):
    th = np.linspace(-math.pi, math.pi, 37)
    r = np.array([1e-2, 5e-3, 2e-3, 1e-3])
    dev = np.abs(h_eval(shape05, r[:, None], th[None, :]) - h_eval(shape05, 0.0, th)[None, :])
    C = (dev / r[:, None] ** 2).max(axis=1)
    # a quadratic deviation gives a flat C across the radii
    assert C.max() < 100 and C.max() <= 1.5 * C.min() + 1e-9


@settings(max_examples=100, deadline=None)
@given(r=st.floats(-4.0, 4.0), th=st.floats(-4.0, 4.0), xi=st.floats(0.05, 0.99))
def test_h_symmetries(r, th, xi):
    sh = TorusShape(xi)
    h = h_eval(sh, r, th)
    scale = abs(h) + 1e-12
    assert abs(h - h_eval(sh, -r, th)) <= 1e-12 * scale
    assert abs(h - h_eval(sh, r, th + math.pi)) <= 1e-9 * scale
    assert abs(h - h_eval(sh, r, -th)) <= 1e-12 * scale


def test_square_radius_examples():
    assert square_radius(math.pi / 4) == pytest.approx(math.pi * math.sqrt(2), rel=1e-15)
    assert square_radius(0.0) == math.pi


def test_polar_matches_full_turn_literal_form(shape05):
    """Brute-force the full-turn form 1/2 int int_{-R}^{R} h e^{-i r(k cos + l sin)} dr dtheta."""
    k, l = 1, 2
    x, w = np.polynomial.legendre.leggauss(40)
    edges = np.linspace(-math.pi, math.pi, 65)
    tha = 0.5 * (edges[1:, None] - edges[:-1, None]) * x + 0.5 * (edges[1:, None] + edges[:-1, None])
    thw = 0.5 * (edges[1:, None] - edges[:-1, None]) * w
    tha, thw = tha.ravel(), thw.ravel()
    total = 0j
    redges = np.linspace(-1, 1, 33)
    ru = (0.5 * (redges[1:, None] - redges[:-1, None]) * x + 0.5 * (redges[1:, None] + redges[:-1, None])).ravel()
    rw = (0.5 * (redges[1:, None] - redges[:-1, None]) * w).ravel()
    for t, wt in zip(tha, thw):
        R = square_radius(t)
        r = R * ru
        f = h_eval(shape05, r, t) * np.exp(-1j * r * (k * math.cos(t) + l * math.sin(t)))
        total += wt * R * (f @ rw)
    literal = 0.5 * total
    assert abs(literal.imag) < 1e-9
    assert literal.real == pytest.approx(I_kl_polar(shape05, k, l).value, rel=1e-8)


# ---- I_kl by three methods ------------------------------------------------

@pytest.mark.parametrize("k,l", [(0, 0), (3, 0), (0, 3), (5, 5)])
def test_direct_agrees_with_spectral(shape05, k, l):
    d = I_kl_direct(shape05, k, l)
    s = I_kl_spectral(shape05, k, l)
    assert d.converged and s.converged
    assert rel(d.value, s.value) <= 1e-5


def test_polar_cross_checks(shape05):
    assert rel(I_kl_polar(shape05, 4, 0).value, I_kl_direct(shape05, 4, 0).value) <= 1e-5
    assert rel(I_kl_polar(shape05, 0, 4).value, I_kl_spectral(shape05, 0, 4).value) <= 1e-5


def test_I_symmetry_direct_and_polar(shape05):
    for f in (I_kl_direct, I_kl_polar):
        a, b, c = f(shape05, 3, 2), f(shape05, -3, 2), f(shape05, 3, -2)
        tol = 3 * (a.err_estimate + b.err_estimate + c.err_estimate) + 1e-12
        assert abs(a.value - b.value) <= tol and abs(a.value - c.value) <= tol


def test_numerical_range_record(shape05):
    rec = numerical_range_record(shape05, 3, 3)
    assert isinstance(rec, NumericalRangeRecord)
    assert rec.converged and rec.spread_ok()
    assert rec.I_spectral == pytest.approx(0.2084953347, rel=1e-9)
    assert rec.sign_verdict == "positive"
    assert rec.lead_pred < 0  # the l law applies whenever l != 0
    only = numerical_range_record(shape05, 3, 3, methods=("spectral",))
    assert only.I_direct is None and only.I_polar is None


def test_sign_verdict_margin():
    assert sign_verdict(1.0, 0.3) == "positive"
    assert sign_verdict(-1.0, 0.3) == "negative"
    assert sign_verdict(1.0, 0.34) == "indeterminate"
    assert sign_verdict(1.0, 0.01, converged=False) == "indeterminate"


def test_domain_refusals():
    for xi in (0.04, 0.995):
        with pytest.raises(DomainError):
            s_kl(TorusShape(xi), 0, 0)
    with pytest.raises(ValueError):
        I_kl_polar(TorusShape(0.5), 600, 0)
