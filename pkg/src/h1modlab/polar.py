"""Polar coordinates on the Heisenberg group.

Every point off the vertical axis lies on exactly one horizontal radial ray
``s -> phi(s, v)`` issued from the origin through a point ``v`` of the unit
Korányi sphere, and Lebesgue measure splits as ``s^3 ds dsigma(v)`` with
``dsigma = d alpha d theta`` in the sphere coordinates below.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .curves import ray_points
from .errors import SingularParam
from .group import Point, dilate, dist_h, inverse, koranyi_norm, multiply

SIGMA_MASS = 2.0 * math.pi ** 2
UNIT_BALL_VOLUME = math.pi ** 2 / 2.0


@dataclass(frozen=True)
class SphereParam:
    alpha: float
    theta: float

    def __post_init__(self):
        if not abs(self.alpha) < math.pi / 2:
            raise SingularParam("alpha must lie in the open interval (-pi/2, pi/2)")


def sphere_point(sp: SphereParam) -> Point:
    """Point ``(sqrt(cos a) e^{i theta}, sin a)`` of the unit Korányi sphere."""
    if not isinstance(sp, SphereParam):
        sp = SphereParam(*sp)
    r = math.sqrt(math.cos(sp.alpha))
    return Point(r * math.cos(sp.theta), r * math.sin(sp.theta), math.sin(sp.alpha))


def sphere_points(alpha: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Vectorised :func:`sphere_point` over broadcast ``alpha``, ``theta``."""
    alpha, theta = np.broadcast_arrays(np.asarray(alpha, float), np.asarray(theta, float))
    if np.any(np.abs(alpha) >= math.pi / 2):
        raise SingularParam("alpha must lie in the open interval (-pi/2, pi/2)")
    r = np.sqrt(np.cos(alpha))
    return np.stack([r * np.cos(theta), r * np.sin(theta), np.sin(alpha)], axis=-1)


def sphere_coordinates(v) -> tuple:
    """Inverse of :func:`sphere_point` for a point of the unit sphere off the
    vertical axis."""
    v = np.asarray(v, dtype=float)
    alpha = np.arcsin(np.clip(v[..., 2], -1.0, 1.0))
    theta = np.mod(np.arctan2(v[..., 1], v[..., 0]), 2.0 * math.pi)
    return alpha, theta


def _midpoints(lo: float, hi: float, n: int) -> tuple:
    h = (hi - lo) / n
    return lo + h * (np.arange(n) + 0.5), h


def _angular_sum(u: Callable, s: np.ndarray, weights: np.ndarray, dirs: np.ndarray,
                 cell: float) -> float:
    """``sum_s w(s) sum_v u(phi(s, v)) * cell`` over the angular grid."""
    total = []
    for si, wi in zip(s, weights):
        vals = np.asarray(u(ray_points(dirs, si)), dtype=float)
        total.append(wi * math.fsum(vals.ravel()) * cell)
    return math.fsum(total)


def _radial_nodes(s_max: float, n_s: int, tail_rtol: float, u: Callable, dirs, cell):
    """Radial integral ``int_0^{s_max} F(s) s^3 ds`` with ``F`` the angular sum.

    Finite ``s_max``: midpoint rule with ``n_s`` nodes.  Infinite: midpoint on
    ``[0, 1]`` then panels in ``log s`` with breakpoints ``s = 2^(2^k)``
    (1, 2, 4, 16, 256, ...), each with ``n_s`` nodes, until a panel adds less
    than ``tail_rtol`` of the running total.
    """
    def panel_linear(lo, hi):
        s, h = _midpoints(lo, hi, n_s)
        return _angular_sum(u, s, h * s ** 3, dirs, cell)

    def panel_log(ulo, uhi):
        x, h = _midpoints(ulo, uhi, n_s)
        s = np.exp(x)
        return _angular_sum(u, s, h * s ** 4, dirs, cell)

    if math.isfinite(s_max):
        return panel_linear(0.0, s_max)
    total = panel_linear(0.0, 1.0)
    lo = 0.0
    hi = math.log(2.0)
    while True:
        part = panel_log(lo, hi)
        total += part
        if abs(part) <= tail_rtol * abs(total) or hi >= 170.0:
            return total
        lo, hi = hi, min(2.0 * hi, 170.0)


def polar_integrate(u: Callable, s_max: float = 1.0, n_s: int = 200, n_alpha: int = 200,
                    n_theta: int = 200, tail_rtol: float = 1e-7) -> float:
    """Integrate ``u`` over ``B(0, s_max)`` in polar coordinates.

    Tensor-product midpoint rule in ``(s, alpha, theta)``; nodes in ``alpha``
    never reach the singular endpoints ``+-pi/2``.

    Parameters
    ----------
    u : callable
        Takes an ``(m, 3)`` array of points and returns ``m`` values.
    s_max : float
        Outer radius; ``math.inf`` integrates over the whole group.
    """
    if not s_max > 0:
        raise ValueError("s_max must be positive")
    alpha, da = _midpoints(-math.pi / 2, math.pi / 2, n_alpha)
    theta, dth = _midpoints(0.0, 2.0 * math.pi, n_theta)
    A, T = np.meshgrid(alpha, theta, indexing="ij")
    dirs = sphere_points(A.ravel(), T.ravel())
    return _radial_nodes(s_max, n_s, tail_rtol, u, dirs, da * dth)


def cartesian_integrate(u: Callable, box: tuple, n: int = 200) -> float:
    """Midpoint rule on an axis-aligned box ``((x0, x1), (y0, y1), (t0, t1))``."""
    (x0, x1), (y0, y1), (t0, t1) = box
    xs, hx = _midpoints(x0, x1, n)
    ys, hy = _midpoints(y0, y1, n)
    ts, ht = _midpoints(t0, t1, n)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    parts = []
    for t in ts:
        pts = np.column_stack([X.ravel(), Y.ravel(), np.full(X.size, t)])
        parts.append(math.fsum(np.asarray(u(pts), dtype=float)))
    return math.fsum(parts) * hx * hy * ht


def sigma_mass(n_alpha: int = 200, n_theta: int = 200) -> float:
    """Total mass of ``sigma`` from the same angular grid used in quadrature."""
    _, da = _midpoints(-math.pi / 2, math.pi / 2, n_alpha)
    _, dth = _midpoints(0.0, 2.0 * math.pi, n_theta)
    return math.fsum(np.full(n_alpha * n_theta, da * dth))


def ray_flow_jacobian(s: float, v, h: float = 1e-6) -> float:
    """Determinant of the derivative of ``v -> phi(s, v)`` by central
    differences (extended off the sphere by the same formula)."""
    v = np.asarray(v, dtype=float)
    jac = np.empty((3, 3))
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        jac[:, k] = (ray_points(v + e, s) - ray_points(v - e, s)) / (2 * h)
    return float(np.linalg.det(jac))


def ball_indicator(radius: float = 1.0) -> Callable:
    return lambda pts: (koranyi_norm(pts) < radius).astype(float)


def rho_one(pts) -> np.ndarray:
    """Density equal to 1 on ``B(0, 2)`` and ``1 / (||p|| log ||p||)`` outside."""
    n = np.asarray(koranyi_norm(pts), dtype=float)
    out = np.ones_like(n)
    far = n >= 2.0
    out[far] = 1.0 / (n[far] * np.log(n[far]))
    return out


def rho_one_integral(Q: int = 4) -> float:
    """Closed form of ``int rho_one^Q`` over the group."""
    return SIGMA_MASS * (2.0 ** Q / Q + 1.0 / ((Q - 1) * math.log(2.0) ** (Q - 1)))


# --------------------------------------------------------------------------
# cones

@dataclass(frozen=True)
class ConeSpec:
    """Open cone in ``B(p0, r)`` around the rays whose latitude is within
    ``epsilon`` of the apex latitude."""

    center: Point
    radius: float
    apex: Point
    epsilon: float

    def __post_init__(self):
        object.__setattr__(self, "center", Point(*self.center))
        object.__setattr__(self, "apex", Point(*self.apex))
        if not self.radius > 0 or not self.epsilon > 0:
            raise ValueError("radius and epsilon must be positive")
        if abs(dist_h(self.center, self.apex) - self.radius) > 1e-9:
            raise ValueError("apex must lie on the sphere S(center, radius)")

    def normalize(self, p) -> np.ndarray:
        return dilate(1.0 / self.radius, multiply(inverse(self.center), p))

    @property
    def apex_alpha(self) -> float:
        a = self.normalize(self.apex)
        return math.asin(max(-1.0, min(1.0, a[2])))


def ray_coordinates(q) -> tuple:
    """Recover ``(s, alpha, theta)`` with ``q = phi(s, sphere_point(alpha, theta))``.

    Returns NaNs for points on the vertical axis (no ray passes there except
    in the limit ``s = 0``).
    """
    q = np.asarray(q, dtype=float)
    s = np.asarray(koranyi_norm(q), dtype=float)
    r2 = q[..., 0] ** 2 + q[..., 1] ** 2
    ok = (r2 > 0) & (s > 0)
    safe_s = np.where(ok, s, 1.0)
    tv = q[..., 2] / safe_s ** 2
    zv2 = r2 / safe_s ** 2
    ang = tv * np.log(safe_s) / np.where(ok, zv2, 1.0)
    c, sn = np.cos(ang), np.sin(ang)
    xv = (c * q[..., 0] - sn * q[..., 1]) / safe_s
    yv = (sn * q[..., 0] + c * q[..., 1]) / safe_s
    alpha = np.arcsin(np.clip(tv, -1.0, 1.0))
    theta = np.mod(np.arctan2(yv, xv), 2.0 * math.pi)
    nan = np.nan
    return (np.where(ok, s, nan if s.ndim else s), np.where(ok, alpha, nan),
            np.where(ok, theta, nan))


def cone_membership(c: ConeSpec, p) -> bool:
    """Whether ``p`` lies in the open cone ``c`` (boundary ties count as outside)."""
    s, alpha, _ = ray_coordinates(c.normalize(p))
    s, alpha = float(s), float(alpha)
    if math.isnan(alpha) or math.isnan(s):
        return False
    a0 = c.apex_alpha
    return 0.0 < s < 1.0 and a0 - c.epsilon < alpha < a0 + c.epsilon
