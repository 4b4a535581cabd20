import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import trapezoid

from h1modlab.curves import (
    RayParam, SampledCurve, arc_length_nodes, geodesic, geodesic_length, h_length,
    horizontal_lift, horizontality_defect, is_rectifiable, line_integral, radial_ray,
    ray_points, ray_speed, sr_distance_estimate, sr_length,
)
from h1modlab.errors import Divergent, NotHorizontal, SingularDirection
from h1modlab.group import Point, dist_h, koranyi_norm, multiply


def unit_dir(alpha, theta=0.0):
    r = math.sqrt(math.cos(alpha))
    return (r * math.cos(theta), r * math.sin(theta), math.sin(alpha))


def segment(n=1001):
    u = np.linspace(0, 1, n)
    return SampledCurve(np.column_stack([u, 0 * u, 0 * u]))


def vertical(n=1025):
    u = np.linspace(0, 1, n)
    return SampledCurve(np.column_stack([0 * u, 0 * u, u]))


def circle(n=10_001, orientation=1.0):
    u = np.linspace(0, 2 * np.pi, n)
    return np.column_stack([np.cos(u), orientation * np.sin(u)])


def test_sampled_curve_validation():
    with pytest.raises(ValueError):
        SampledCurve(np.zeros((3, 3)), params=[0, 0, 1])
    c = SampledCurve([[1, 2, 3]])
    assert c.is_constant and len(c) == 1


def test_h_length_segment():
    assert h_length(segment()) == pytest.approx(1.0, abs=1e-6)


def test_h_length_vertical_divergent():
    with pytest.raises(Divergent) as info:
        h_length(vertical())
    sums = info.value.sums
    assert sums[-1] / sums[-2] == pytest.approx(math.sqrt(2), rel=1e-9)
    assert not is_rectifiable(vertical())


def test_h_length_closed_loop_not_flagged():
    c = horizontal_lift(circle(4097))
    assert h_length(c) == pytest.approx(2 * math.pi, rel=1e-5)


@pytest.mark.parametrize("a, b", [(0.5, 1.0), (1.0, 3.0)])
def test_ray_length_horizontal_direction(a, b):
    c = radial_ray(RayParam(unit_dir(0.0, 0.4), (a, b)), 10_000)
    assert h_length(c) == pytest.approx(b - a, abs=1e-4)
    assert sr_length(c) == pytest.approx(b - a, abs=1e-4)


@pytest.mark.parametrize("alpha", [0.3, -0.9, 1.3])
def test_ray_length_tilted_direction(alpha):
    # ray speed is 1/sqrt(cos alpha), so only alpha = 0 rays have length b - a
    c = radial_ray(RayParam(unit_dir(alpha, 1.0), (0.5, 2.0)), 10_000)
    expect = 1.5 / math.sqrt(math.cos(alpha))
    assert ray_speed(unit_dir(alpha)) == pytest.approx(1 / math.sqrt(math.cos(alpha)))
    assert h_length(c) == pytest.approx(expect, rel=1e-5)
    assert sr_length(c) == pytest.approx(expect, rel=1e-5)


def test_ray_not_metric_geodesic_off_equator():
    v = unit_dir(0.8)
    c = radial_ray(RayParam(v, (1e-6, 1.0)), 20_000)
    assert koranyi_norm(c.end) == pytest.approx(1.0, rel=1e-12)
    assert h_length(c) > 1.1 * dist_h(c.start, c.end)
    c0 = radial_ray(RayParam(unit_dir(0.0), (1e-6, 1.0)), 2000)
    assert h_length(c0) == pytest.approx(dist_h(c0.start, c0.end), rel=1e-6)


def test_sr_length_examples():
    assert sr_length(segment()) == pytest.approx(1.0)
    assert sr_length(horizontal_lift(circle())) == pytest.approx(2 * math.pi, abs=1e-4)
    with pytest.raises(NotHorizontal):
        sr_length(vertical())


def test_defect_examples():
    assert horizontality_defect(segment()) == 0.0
    assert horizontality_defect(vertical()) == math.inf
    c = SampledCurve([[0, 0, 0], [1, 0, 0.5]])
    assert horizontality_defect(c) == pytest.approx(0.5)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=8, max_size=8), st.floats(-5, 5))
def test_lift_is_horizontal(coeffs, t0):
    u = np.linspace(0, 1, 10_000)
    a = np.array(coeffs)
    x = a[0] * u + a[1] * np.sin(3 * u) + a[2] * u ** 2 + a[3] * np.cos(5 * u)
    y = a[4] * u + a[5] * np.cos(2 * u) + a[6] * u ** 3 + a[7] * np.sin(7 * u)
    c = horizontal_lift(np.column_stack([x, y]), t0)
    assert c.nodes[0, 2] == t0
    assert horizontality_defect(c) <= 1e-8


def test_lift_examples():
    c = horizontal_lift([[0, 0], [0.5, 0], [1, 0]])
    np.testing.assert_array_equal(c.end, (1, 0, 0))
    ccw = horizontal_lift(circle(100_001))
    np.testing.assert_allclose(ccw.end, (1, 0, -4 * math.pi), atol=1e-7)
    cw = horizontal_lift(circle(100_001, -1.0))
    np.testing.assert_allclose(cw.end, (1, 0, 4 * math.pi), atol=1e-7)


def test_lift_matches_quadrature():
    # independent evaluation of -2 * closed-loop integral of x dy - y dx
    u = np.linspace(0, 2 * np.pi, 100_001)
    x, y = 2 + np.cos(u) * 0.5, np.sin(u) * 0.25
    dx, dy = -0.5 * np.sin(u), 0.25 * np.cos(u)
    f = x * dy - y * dx
    quad = -2 * trapezoid(f, u)
    c = horizontal_lift(np.column_stack([x, y]))
    assert c.nodes[-1, 2] == pytest.approx(quad, abs=1e-8)
    assert quad == pytest.approx(-4 * math.pi * 0.5 * 0.25, rel=1e-9)


def test_h_length_equals_sr_length_on_lifts():
    u = np.linspace(0, 1, 10_000)
    planar = np.column_stack([np.sin(4 * u) + u, u ** 2 - np.cos(3 * u)])
    c = horizontal_lift(planar, 1.5)
    assert h_length(c) == pytest.approx(sr_length(c), rel=1e-3)


def test_line_integral_examples():
    c = horizontal_lift(circle(2001))
    assert line_integral(lambda p: np.ones(len(p)), c) == pytest.approx(sr_length(c), rel=1e-12)
    assert line_integral(lambda p: np.zeros(len(p)), c) == 0.0
    with pytest.raises(NotHorizontal):
        line_integral(lambda p: np.ones(len(p)), vertical())


@pytest.mark.parametrize("alpha", [0.0, 0.6])
def test_line_integral_log_density_on_ray(alpha):
    a, b = 0.5, 4.0
    c = radial_ray(RayParam(unit_dir(alpha, 2.0), (a, b)), 10_000)
    rho = lambda p: 1.0 / (koranyi_norm(p) * math.log(b / a))  # noqa: E731
    assert line_integral(rho, c) == pytest.approx(1 / math.sqrt(math.cos(alpha)), abs=1e-4)


def test_radial_ray_examples(rng):
    p = Point(0.3, -0.8, 0.5)
    np.testing.assert_allclose(ray_points(p, 1.0), p, atol=1e-15)
    np.testing.assert_allclose(ray_points((0.3, 0.4, 0.0), 2.5), (0.75, 1.0, 0.0), atol=1e-15)
    s = rng.uniform(0.01, 10, 50)
    np.testing.assert_allclose(koranyi_norm(ray_points(p, s)), s * koranyi_norm(p), rtol=1e-12)
    with pytest.raises(SingularDirection):
        RayParam((0, 0, 1), (0.5, 1))
    c = radial_ray(RayParam(unit_dir(0.7, 0.3), (0.1, 3.0)), 10_000)
    assert horizontality_defect(c) <= 1e-6


def test_ray_defect_second_order():
    # near the singular set the ray spirals; the discrete defect is O(n^-2)
    r = RayParam(unit_dir(1.2, 0.3), (0.1, 3.0))
    d1 = horizontality_defect(radial_ray(r, 10_000))
    d2 = horizontality_defect(radial_ray(r, 20_000))
    assert d1 / d2 == pytest.approx(4.0, rel=0.01)


def test_arc_length_reparametrization_lipschitz():
    c = horizontal_lift(circle(5001))
    step = 0.01
    pts = arc_length_nodes(c, step)
    d = dist_h(pts[:-1], pts[1:])
    assert np.all(d <= step * (1 + 1e-6))
    assert len(pts) == pytest.approx(2 * math.pi / step, abs=2)


def test_closing_by_endpoint_limits():
    u = np.arange(1, 10_000) / 10_000
    planar = np.column_stack([np.cos(3 * u), np.sin(2 * u)])
    full = horizontal_lift(np.vstack([[1.0, 0.0], planar, [math.cos(3), math.sin(2)]]))
    open_part = SampledCurve(full.nodes[1:-1], u, is_closed_interval=False)
    closed = open_part.closed(full.nodes[0], full.nodes[-1], params=(0.0, 1.0))
    assert closed.is_closed_interval
    assert h_length(closed) == pytest.approx(h_length(open_part), rel=1e-3)
    assert h_length(closed) == pytest.approx(h_length(full), rel=1e-12)


def test_sr_distance_examples():
    assert sr_distance_estimate((0, 0, 0), (1, 0, 0)).value == pytest.approx(1.0, abs=1e-3)
    d = sr_distance_estimate((0, 0, 0), (0, 0, 1)).value
    assert d == pytest.approx(math.sqrt(math.pi), rel=0.02)
    with pytest.raises(ValueError):
        sr_distance_estimate((1, 1, 1), (1, 1, 1))


def test_sr_distance_geodesic_is_feasible():
    p, q = Point(0.5, -1, 2), Point(1, 0.3, -0.7)
    g = geodesic(p, q, 2049)
    np.testing.assert_allclose(g.end, q, atol=1e-12)
    est = sr_distance_estimate(p, q, budget=3)
    assert est.value <= sr_length(g) * (1 + 1e-6)
    assert est.value >= dist_h(p, q)


def test_sr_distance_descent_does_not_beat_arc():
    # circular arcs are optimal, so descent must not find anything shorter
    for q in [(1, 0.5, 0.7), (0.2, 0, 3.0), (-1, 1, -0.5)]:
        arc = sr_distance_estimate((0, 0, 0), q, budget=0).value
        est = sr_distance_estimate((0, 0, 0), q, budget=4)
        assert est.value == pytest.approx(arc, rel=1e-3)


def test_sr_distance_sandwich(rng):
    p, q = rng.uniform(-3, 3, (2, 1000, 3))
    for a, b in zip(p, q):
        d = sr_distance_estimate(a, b, budget=0).value
        dh = dist_h(a, b)
        assert d / math.sqrt(math.pi) <= dh * (1 + 1e-12)
        assert dh <= d * (1 + 1e-12)


def test_sr_distance_symmetry_and_invariance(rng):
    a = Point(0.7, -0.3, 1.2)
    for p, q in rng.uniform(-2, 2, (20, 2, 3)):
        d = sr_distance_estimate(p, q, budget=0).value
        assert sr_distance_estimate(q, p, budget=0).value == pytest.approx(d, rel=1e-3)
        moved = sr_distance_estimate(multiply(a, p), multiply(a, q), budget=0).value
        assert moved == pytest.approx(d, rel=1e-3)


def test_sr_distance_dilation():
    d1 = geodesic_length(complex(0.3, 0.4), 0.9)
    d2 = geodesic_length(complex(0.6, 0.8), 3.6)
    assert d2 == pytest.approx(2 * d1, rel=1e-12)
