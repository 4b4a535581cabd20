import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from h1modlab.curves import ray_points
from h1modlab.errors import SingularParam
from h1modlab.group import dilate, koranyi_norm, multiply
from h1modlab.polar import (
    ConeSpec, SphereParam, ball_indicator, cartesian_integrate, cone_membership,
    polar_integrate, ray_coordinates, ray_flow_jacobian, rho_one, rho_one_integral,
    sigma_mass, sphere_point,
)

HALF_PI2 = math.pi ** 2 / 2


def test_sphere_point_examples():
    np.testing.assert_allclose(sphere_point(SphereParam(0.0, 0.0)), (1, 0, 0), atol=1e-15)
    np.testing.assert_allclose(sphere_point(SphereParam(0.0, math.pi / 2)), (0, 1, 0), atol=1e-15)
    with pytest.raises(SingularParam):
        SphereParam(math.pi / 2, 0.0)


@given(st.floats(-1.5707, 1.5707), st.floats(0, 2 * math.pi))
def test_sphere_point_unit_norm(alpha, theta):
    assert koranyi_norm(sphere_point(SphereParam(alpha, theta))) == pytest.approx(1.0, abs=1e-12)


def test_sigma_total_mass():
    assert sigma_mass(200, 200) == pytest.approx(2 * math.pi ** 2, rel=1e-6)


def test_ball_volume_polar_vs_cartesian():
    polar = polar_integrate(ball_indicator(1.0), 1.0, 200, 200, 200)
    cart = cartesian_integrate(ball_indicator(1.0), ((-1, 1), (-1, 1), (-1, 1)), 200)
    assert polar == pytest.approx(cart, rel=1e-3)
    assert polar == pytest.approx(HALF_PI2, rel=1e-3)


def test_ball_volume_homogeneity():
    v2 = polar_integrate(ball_indicator(2.0), 2.0, 64, 64, 64)
    v1 = polar_integrate(ball_indicator(1.0), 1.0, 64, 64, 64)
    assert v2 == pytest.approx(16 * v1, rel=1e-12)
    assert v2 == pytest.approx(16 * HALF_PI2, rel=1e-3)


def test_rho_one_integral():
    assert rho_one_integral() == pytest.approx(98.71434, abs=1e-5)
    val = polar_integrate(lambda p: rho_one(p) ** 4, math.inf, 400, 4, 4)
    assert val == pytest.approx(rho_one_integral(), rel=1e-5)


def test_polar_integrate_non_radial():
    # int over B(0,1) of t^2: polar and Cartesian rules must agree
    f = lambda p: p[:, 2] ** 2 * (koranyi_norm(p) < 1)  # noqa: E731
    polar = polar_integrate(f, 1.0, 100, 100, 8)
    cart = cartesian_integrate(f, ((-1, 1), (-1, 1), (-1, 1)), 200)
    assert polar == pytest.approx(cart, rel=2e-3)


@pytest.mark.parametrize("s", [0.3, 1.0, 2.7])
def test_ray_flow_jacobian(rng, s):
    for a, th in zip(rng.uniform(-1.4, 1.4, 5), rng.uniform(0, 2 * math.pi, 5)):
        v = sphere_point(SphereParam(a, th))
        assert ray_flow_jacobian(s, v) == pytest.approx(s ** 4, rel=1e-6)


def test_ray_coordinates_roundtrip(rng):
    a = rng.uniform(-1.5, 1.5, 200)
    th = rng.uniform(0, 2 * math.pi, 200)
    s = rng.uniform(0.05, 5, 200)
    v = np.column_stack([np.sqrt(np.cos(a)) * np.cos(th), np.sqrt(np.cos(a)) * np.sin(th), np.sin(a)])
    q = ray_points(v, s)
    s2, a2, th2 = ray_coordinates(q)
    np.testing.assert_allclose(s2, s, rtol=1e-12)
    np.testing.assert_allclose(a2, a, atol=1e-9)
    np.testing.assert_allclose(np.cos(th2 - th), 1.0, atol=1e-9)


def make_cone(alpha0=0.4, eps=0.1):
    center, r = (1, 2, 3), 2.0
    apex = multiply(center, dilate(r, sphere_point(SphereParam(alpha0, 0.5))))
    return ConeSpec(center, r, apex, eps)


def test_cone_examples():
    c = make_cone()
    assert c.apex_alpha == pytest.approx(0.4)
    assert not cone_membership(c, c.apex)
    x0 = c.normalize(c.apex)
    mid = multiply(c.center, dilate(c.radius, ray_points(x0, 0.5)))
    assert cone_membership(c, mid)
    antipode = multiply(c.center, dilate(c.radius, -x0))
    assert not cone_membership(c, antipode)
    assert not cone_membership(c, c.center)


def test_cone_latitude_band():
    c = make_cone(0.4, 0.1)
    inside = multiply(c.center, dilate(c.radius, ray_points(sphere_point(SphereParam(0.45, 3.0)), 0.7)))
    outside = multiply(c.center, dilate(c.radius, ray_points(sphere_point(SphereParam(0.55, 0.5)), 0.7)))
    assert cone_membership(c, inside)
    assert not cone_membership(c, outside)


def test_cone_requires_apex_on_sphere():
    with pytest.raises(ValueError):
        ConeSpec((0, 0, 0), 1.0, (2, 0, 0), 0.1)
