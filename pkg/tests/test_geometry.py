import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nptorus.geometry import (
    DomainError, SurfacePoint, TorusShape, cartesian, fundamental_solution, gap, identity_deviations,
    kernel_np, kernel_np_terms, kernel_single, mu, normal, normal_projection, outward_normal, psi,
    reduce_angle, scale_factors, surface_jacobian, to_cartesian,
)
from oracles import richardson, trapezoid_periodic, triangulated_area

angles = st.floats(0.0, 2 * math.pi, allow_nan=False)
xis = st.floats(0.05, 0.99)


def test_shape_validation_and_radii():
    sh = TorusShape(0.5, 2.0)
    assert sh.a / sh.r0 == pytest.approx(0.5, rel=1e-15)
    assert abs(sh.recomputed_R0() - 2.0) <= 1e-14 * 2.0
    back = TorusShape.from_radii(sh.r0, sh.a)
    assert back.xi == pytest.approx(0.5, rel=1e-15) and back.R0 == pytest.approx(2.0, rel=1e-14)
    for bad in (0.0, 1.0, -0.1, float("nan")):
        with pytest.raises(DomainError):
            TorusShape(bad)
    with pytest.raises(DomainError):
        TorusShape(0.5, 0.0)


def test_angle_reduction():
    assert reduce_angle(2 * math.pi) == 0.0
    assert reduce_angle(-0.5) == pytest.approx(2 * math.pi - 0.5)
    p = SurfacePoint(7.0, -1.0)
    assert 0 <= p.eta < 2 * math.pi and 0 <= p.phi < 2 * math.pi


def test_cartesian_examples(shape05):
    np.testing.assert_allclose(to_cartesian(shape05, SurfacePoint(0, 0)), [math.sqrt(3), 0, 0], atol=1e-15)
    np.testing.assert_allclose(to_cartesian(shape05, SurfacePoint(math.pi / 2, 0)),
                               [math.sqrt(0.75), 0, -0.5], atol=1e-15)


def test_scalar_functions():
    sh = TorusShape(0.5)
    assert psi(sh, 0.0) == 0.5 and psi(sh, math.pi) == 1.5
    assert psi(TorusShape(0.3), math.pi / 2) == pytest.approx(1.0, abs=1e-16)
    assert mu(sh, 0.0) == 1.0
    assert mu(sh, math.pi) == pytest.approx(7.0, rel=1e-15)
    for xi in (0.2, 0.7):
        assert mu(TorusShape(xi), math.pi / 2) == pytest.approx(1 / xi**2, rel=1e-15)


def test_scale_factor_examples(shape05):
    np.testing.assert_allclose(scale_factors(shape05, SurfacePoint(math.pi / 2, 0)),
                               [2 / math.sqrt(3), 0.5, math.sqrt(3) / 2], rtol=1e-15)
    np.testing.assert_allclose(scale_factors(shape05, SurfacePoint(0, 0)),
                               [2.3094011, 1.0, 1.7320508], rtol=1e-7)


@pytest.mark.parametrize("xi", [0.3, 0.5, 0.8])
def test_surface_area_against_mesh(xi):
    sh = TorusShape(xi, 1.3)
    # the eta integral of the Jacobian is periodic and smooth, so the trapezoid rule is exact to rounding
    area = 2 * math.pi * trapezoid_periodic(lambda t: surface_jacobian(sh, t), 512)
    mesh = richardson(triangulated_area(sh.r0, sh.a, 512), triangulated_area(sh.r0, sh.a, 1024), 2)
    assert abs(area - mesh) / mesh <= 1e-6
    assert area == pytest.approx(4 * math.pi**2 * sh.r0 * sh.a, rel=1e-12)


def test_normal_examples(shape05):
    np.testing.assert_allclose(outward_normal(shape05, SurfacePoint(0, 0)), [1, 0, 0], atol=1e-15)
    np.testing.assert_allclose(outward_normal(shape05, SurfacePoint(math.pi / 2, 0)),
                               [-0.5, 0, -0.8660254], atol=1e-7)


def test_normal_orthogonal_to_tangents_and_outward(shape05):
    rng = np.random.default_rng(3)
    h = 1e-6
    for eta, phi in rng.uniform(0, 2 * math.pi, size=(50, 2)):
        n = normal(shape05, eta, phi)
        assert abs(np.linalg.norm(n) - 1) <= 1e-14
        te = (cartesian(shape05, eta + h, phi) - cartesian(shape05, eta - h, phi)) / (2 * h)
        tp = (cartesian(shape05, eta, phi + h) - cartesian(shape05, eta, phi - h)) / (2 * h)
        assert abs(n @ te) / np.linalg.norm(te) < 1e-8
        assert abs(n @ tp) / np.linalg.norm(tp) < 1e-8
        # outward: points away from the core circle
        x = cartesian(shape05, eta, phi)
        core = shape05.r0 * np.array([x[0], x[1], 0.0]) / math.hypot(x[0], x[1])
        assert n @ (x - core) > 0


def test_kernel_single_example(shape05):
    # Cartesian oracle: Gamma(x - y) times the surface Jacobian at y
    x = cartesian(shape05, 0.0, math.pi)
    y = cartesian(shape05, math.pi, 0.0)
    ref = surface_jacobian(shape05, math.pi) / (4 * math.pi * np.linalg.norm(x - y))
    val = kernel_single(shape05, 0.0, math.pi, math.pi)
    assert val == pytest.approx(ref, rel=1e-13)
    assert val == pytest.approx(0.0066315, rel=1e-4)


def test_kernel_symmetry_and_positivity(shape05):
    rng = np.random.default_rng(1)
    e, ep, d = rng.uniform(0, 2 * math.pi, size=(3, 200))
    np.testing.assert_allclose(kernel_single(shape05, e, ep, d), kernel_single(shape05, e, ep, -d), rtol=1e-14)
    np.testing.assert_allclose(kernel_np(shape05, e, ep, d), kernel_np(shape05, e, ep, -d), rtol=1e-12, atol=1e-15)
    assert np.all(kernel_single(shape05, e, ep, d) > 0)


@pytest.mark.parametrize("xi", [0.2, 0.5, 0.8])
def test_identity_suite(xi):
    dev = identity_deviations(TorusShape(xi), 100, seed=11)
    assert dev["fundamental_solution"] <= 1e-12
    assert dev["normal_projection"] <= 1e-10
    assert dev["kernel_np"] <= 1e-10
    assert dev["kernel_single"] <= 1e-12


def test_kernel_np_diagonal_row(shape05):
    x = cartesian(shape05, 0.0, math.pi)
    y = cartesian(shape05, 0.0, 0.0)
    nu = normal(shape05, 0.0, math.pi)
    ref = (x - y) @ nu / (4 * math.pi * np.linalg.norm(x - y) ** 3) * surface_jacobian(shape05, 0.0)
    val = kernel_np(shape05, 0.0, 0.0, math.pi)
    assert np.isfinite(val)
    assert val == pytest.approx(ref, rel=1e-10)


def test_kernel_np_weights(shape05):
    # first term carries psi(eta)^{1/2} psi(eta')^{-3/2}, second psi(eta)^{3/2} psi(eta')^{-3/2}
    rng = np.random.default_rng(5)
    e, ep, d = rng.uniform(0.1, 6.0, size=(3, 50))
    f1, s1 = kernel_np_terms(shape05, e, ep, d)
    f2, s2 = kernel_np_terms(shape05, ep, e, d)
    ratio = psi(shape05, e) / psi(shape05, ep)
    np.testing.assert_allclose(f1, f2 * ratio**2, rtol=1e-12)
    np.testing.assert_allclose(s1, s2 * ratio**3, rtol=1e-12)


def test_normal_projection_closed_form(shape05):
    rng = np.random.default_rng(8)
    e, ep, p, pp = rng.uniform(0, 2 * math.pi, size=(4, 100))
    d = cartesian(shape05, e, p) - cartesian(shape05, ep, pp)
    ref = np.einsum("ij,ij->i", d, normal(shape05, e, p))
    np.testing.assert_allclose(normal_projection(shape05, e, ep, p - pp), ref, rtol=1e-10, atol=1e-13)


def test_coincident_points_rejected(shape05):
    with pytest.raises(DomainError):
        kernel_single(shape05, 1.0, 1.0, 0.0)
    with pytest.raises(DomainError):
        fundamental_solution(shape05, 0.3, 0.3 + 2 * math.pi, 1e-9)


@settings(max_examples=200, deadline=None)
@given(xi=xis, d=angles)
def test_mu_at_least_one(xi, d):
    sh = TorusShape(xi)
    assert mu(sh, d) >= 1 - 1e-12


@settings(max_examples=200, deadline=None)
@given(xi=xis, de=angles, dp=angles)
def test_gap_matches_literal(xi, de, dp):
    sh = TorusShape(xi)
    g = gap(sh, de, dp)
    literal = mu(sh, dp) - math.cos(de)
    assert g >= 0
    assert abs(g - literal) <= 1e-12 * max(1.0, 1 / xi**2)


@settings(max_examples=100, deadline=None)
@given(xi=xis, a=angles, b=angles, c=angles, d=angles)
def test_distance_identity(xi, a, b, c, d):
    sh = TorusShape(xi)
    dist = np.linalg.norm(cartesian(sh, a, b) - cartesian(sh, c, d))
    g = gap(sh, a - c, b - d)
    if g < 1e-8:
        return
    closed = math.sqrt(2) * sh.R0 * xi * math.sqrt(g) / math.sqrt(psi(sh, a) * psi(sh, c))
    assert closed == pytest.approx(dist, rel=1e-12)
