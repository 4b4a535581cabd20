"""Sampled curves: Heisenberg and sub-Riemannian length, horizontality,
horizontal lifts, line integrals, radial rays and sub-Riemannian distance."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

from .errors import Divergent, NotHorizontal, SingularDirection
from .group import Point, dilate, dist_h, inverse, koranyi_norm, multiply

HORIZONTAL_TOL = 1e-4
DIVERGENCE_RATIO = 1.2


@dataclass
class SampledCurve:
    """Finite node list with strictly increasing parameters.

    A single node is a constant curve; constant curves make every curve
    family containing them inadmissible.
    """

    nodes: np.ndarray
    params: Optional[np.ndarray] = None
    is_closed_interval: bool = True

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float)
        if nodes.ndim == 1:
            nodes = nodes[None, :]
        if nodes.ndim != 2 or nodes.shape[1] != 3 or len(nodes) == 0:
            raise ValueError("nodes must have shape (n, 3) with n >= 1")
        if not np.all(np.isfinite(nodes)):
            raise ValueError("nodes must be finite")
        if self.params is None:
            params = np.linspace(0.0, 1.0, len(nodes)) if len(nodes) > 1 else np.zeros(1)
        else:
            params = np.asarray(self.params, dtype=float)
        if params.shape != (len(nodes),):
            raise ValueError("params and nodes must have equal length")
        if np.any(np.diff(params) <= 0):
            raise ValueError("params must be strictly increasing")
        self.nodes, self.params = nodes, params

    def __len__(self):
        return len(self.nodes)

    @property
    def start(self) -> Point:
        return Point(*self.nodes[0])

    @property
    def end(self) -> Point:
        return Point(*self.nodes[-1])

    @property
    def is_constant(self) -> bool:
        return len(self.nodes) == 1 or bool(np.all(self.nodes == self.nodes[0]))

    def segment_lengths(self) -> np.ndarray:
        """Heisenberg chord length of every segment."""
        return dist_h(self.nodes[:-1], self.nodes[1:]) if len(self) > 1 else np.zeros(0)

    def mapped(self, f: Callable) -> "SampledCurve":
        return SampledCurve(np.asarray(f(self.nodes)), self.params.copy(), self.is_closed_interval)

    def closed(self, start=None, end=None, params=None) -> "SampledCurve":
        """Extend an open curve to the closed interval by its endpoint limits.

        ``start``/``end`` are the limits at the parameter endpoints (``params``
        gives their parameter values); when omitted the extreme samples stand
        in for them.
        """
        nodes, p = self.nodes, self.params
        lo, hi = params if params is not None else (p[0] - 1.0, p[-1] + 1.0)
        if start is not None:
            nodes, p = np.vstack([np.asarray(start, float)[None, :], nodes]), np.concatenate([[lo], p])
        if end is not None:
            nodes, p = np.vstack([nodes, np.asarray(end, float)[None, :]]), np.concatenate([p, [hi]])
        return SampledCurve(nodes.copy(), p.copy(), True)

    def reversed(self) -> "SampledCurve":
        p = self.params
        return SampledCurve(self.nodes[::-1].copy(), (p[-1] + p[0] - p)[::-1],
                            self.is_closed_interval)

    def concat(self, other: "SampledCurve") -> "SampledCurve":
        """Join ``other`` after ``self``; a shared junction node is kept once."""
        tail = other.nodes
        if np.allclose(tail[0], self.nodes[-1], rtol=0, atol=1e-12):
            tail = tail[1:]
        nodes = np.vstack([self.nodes, tail])
        return SampledCurve(nodes, np.linspace(0.0, 1.0, len(nodes)))


def as_curve(c) -> SampledCurve:
    return c if isinstance(c, SampledCurve) else SampledCurve(np.asarray(c, dtype=float))


# --------------------------------------------------------------------------
# lengths and horizontality

def chordal_sums(c: SampledCurve, refine: int) -> list:
    """Chordal sums over nested partitions: every ``2**j``-th node for
    ``j = J..0`` (coarse to fine), the last node always included."""
    c = as_curve(c)
    n = len(c)
    if n < 2:
        raise ValueError("need at least two nodes")
    levels = min(int(refine), int(math.floor(math.log2(n - 1))))
    sums = []
    for j in range(levels, -1, -1):
        idx = np.arange(0, n, 2 ** j)
        if idx[-1] != n - 1:
            idx = np.append(idx, n - 1)
        sub = c.nodes[idx]
        sums.append(math.fsum(dist_h(sub[:-1], sub[1:])))
    return sums


def h_length(c: SampledCurve, refine: int = 8) -> float:
    """Heisenberg length as the supremum of chordal sums.

    Raises :class:`Divergent` when each of the last three partition doublings
    grows the sum by more than a factor ``1.2``.
    """
    sums = chordal_sums(c, refine)
    if len(sums) >= 4:
        tail = sums[-4:]
        ratios = [b / a if a > 0 else math.inf for a, b in zip(tail[:-1], tail[1:])]
        if all(r > DIVERGENCE_RATIO for r in ratios):
            raise Divergent("chordal sums grow without stabilizing", sums=sums)
    return max(sums)


def is_rectifiable(c: SampledCurve, refine: int = 8) -> bool:
    c = as_curve(c)
    if len(c) < 2:
        return True
    try:
        h_length(c, refine)
    except Divergent:
        return False
    return True


def horizontality_defect(c: SampledCurve) -> float:
    """Largest discrete contact-form value per unit planar length.

    Each segment contributes ``|dt + 2(x dy - y dx)| / |dz|`` with ``x, y``
    at the segment midpoint; a purely vertical segment gives ``inf``.
    """
    c = as_curve(c)
    if len(c) < 2:
        raise ValueError("need at least two nodes")
    a, b = c.nodes[:-1], c.nodes[1:]
    d = b - a
    xm = 0.5 * (a[:, 0] + b[:, 0])
    ym = 0.5 * (a[:, 1] + b[:, 1])
    omega = np.abs(d[:, 2] + 2.0 * (xm * d[:, 1] - ym * d[:, 0]))
    planar = np.hypot(d[:, 0], d[:, 1])
    moving = planar > 0
    if np.any(~moving & (omega > 0)):
        return math.inf
    if not np.any(moving):
        return 0.0
    return float(np.max(omega[moving] / planar[moving]))


def _require_horizontal(c: SampledCurve, tol: float):
    defect = horizontality_defect(c)
    if defect > tol:
        raise NotHorizontal(f"horizontality defect {defect:.3g} exceeds {tol:g}")


def sr_length(c: SampledCurve, tol: float = HORIZONTAL_TOL) -> float:
    """Sub-Riemannian length ``int sqrt(x'^2 + y'^2)`` of a horizontal curve."""
    c = as_curve(c)
    if len(c) < 2:
        return 0.0
    _require_horizontal(c, tol)
    d = np.diff(c.nodes[:, :2], axis=0)
    return math.fsum(np.hypot(d[:, 0], d[:, 1]))


def horizontal_lift(planar, t0: float = 0.0, params=None) -> SampledCurve:
    """Lift a planar polyline so that the contact form vanishes segment by
    segment (midpoint rule).

    With the midpoint rule every lifted segment is exactly a left translate of
    a horizontal line, so consecutive nodes differ by a horizontal element.
    """
    xy = np.asarray(planar, dtype=float)
    if xy.ndim != 2 or xy.shape[1] != 2 or len(xy) < 2:
        raise ValueError("planar path must have shape (n, 2) with n >= 2")
    x, y = xy[:, 0], xy[:, 1]
    dt = -2.0 * (x[:-1] * y[1:] - x[1:] * y[:-1])
    t = t0 + np.concatenate([[0.0], np.cumsum(dt)])
    return SampledCurve(np.column_stack([x, y, t]), params)


def line_integral(rho: Callable, c: SampledCurve, tol: float = HORIZONTAL_TOL) -> float:
    """``int_c rho dl`` by the midpoint rule in arc length.

    ``rho`` takes an ``(m, 3)`` array and returns ``m`` nonnegative values;
    segments contribute ``rho(midpoint) * chord``, the midpoint taken along
    the horizontal segment ``p * delta_{1/2}(p^-1 q)``.
    """
    c = as_curve(c)
    if len(c) < 2:
        return 0.0
    _require_horizontal(c, tol)
    a, b = c.nodes[:-1], c.nodes[1:]
    mid = multiply(a, dilate(0.5, multiply(inverse(a), b)))
    vals = np.asarray(rho(mid), dtype=float)
    if np.any(vals < 0):
        raise ValueError("density must be nonnegative")
    return math.fsum(vals * c.segment_lengths())


def arc_length_nodes(c: SampledCurve, step: float) -> np.ndarray:
    """Resample a curve at (approximately) equal Heisenberg arc length ``step``."""
    c = as_curve(c)
    seg = c.segment_lengths()
    s = np.concatenate([[0.0], np.cumsum(seg)])
    if s[-1] == 0:
        return c.nodes[:1].copy()
    targets = np.arange(0.0, s[-1], step)
    idx = np.clip(np.searchsorted(s, targets, side="right") - 1, 0, len(seg) - 1)
    frac = np.where(seg[idx] > 0, (targets - s[idx]) / np.where(seg[idx] > 0, seg[idx], 1.0), 0.0)
    a, b = c.nodes[idx], c.nodes[idx + 1]
    inc = multiply(inverse(a), b)
    # travel along the horizontal segment: p * (frac * dz, frac^2 * residual t)
    step_pts = multiply(a, _partial(inc, frac))
    return np.vstack([step_pts, c.nodes[-1:]])


def _partial(inc: np.ndarray, frac: np.ndarray) -> np.ndarray:
    out = inc * frac[:, None]
    out[:, 2] = inc[:, 2] * frac ** 2
    return out


# --------------------------------------------------------------------------
# radial rays

@dataclass(frozen=True)
class RayParam:
    direction: Point
    s_range: tuple = (0.5, 1.0)

    def __post_init__(self):
        d = Point(*self.direction)
        object.__setattr__(self, "direction", d)
        lo, hi = map(float, self.s_range)
        if not 0 < lo < hi:
            raise ValueError("s_range must satisfy 0 < s_lo < s_hi")
        object.__setattr__(self, "s_range", (lo, hi))
        if d.x == 0 and d.y == 0:
            raise SingularDirection("ray direction lies on the singular set (z = 0)")


def ray_points(direction, s) -> np.ndarray:
    """Points ``phi(s, v) = delta_s(exp(-i t log(s) / |z|^2) z, t)``.

    ``direction`` and ``s`` broadcast (``direction`` has a trailing axis of
    length 3); ``s = 0`` gives the origin, the limit of every ray.
    """
    v = np.asarray(direction, dtype=float)
    s = np.asarray(s, dtype=float)
    vx, vy, vt = v[..., 0], v[..., 1], v[..., 2]
    r2 = vx ** 2 + vy ** 2
    if np.any(r2 == 0):
        raise SingularDirection("ray direction lies on the singular set (z = 0)")
    logs = np.log(np.where(s > 0, s, 1.0))
    ang = -vt * logs / r2
    c, sn = np.cos(ang), np.sin(ang)
    x = s * (c * vx - sn * vy)
    y = s * (sn * vx + c * vy)
    return np.stack(np.broadcast_arrays(x, y, s * s * vt), axis=-1)


def radial_ray(r: RayParam, n: int) -> SampledCurve:
    """``n`` equally spaced samples of the horizontal ray over ``s_range``."""
    if n < 2:
        raise ValueError("n must be at least 2")
    s = np.linspace(r.s_range[0], r.s_range[1], n)
    return SampledCurve(ray_points(r.direction, s), s)


def ray_speed(direction) -> float:
    """Sub-Riemannian speed ``|dz/ds| = ||v||^2 / |z|`` of ``s -> phi(s, v)``
    (``1 / sqrt(cos alpha)`` on the unit sphere)."""
    v = Point(*direction)
    if v.x == 0 and v.y == 0:
        raise SingularDirection("ray direction lies on the singular set (z = 0)")
    n = koranyi_norm(v)
    return n * n / math.hypot(v.x, v.y)


# --------------------------------------------------------------------------
# geodesic shooting and sub-Riemannian distance

def _segment_area_ratio(phi: float, m: int = 0) -> float:
    """Area cut off by a circular arc of half-angle ``phi`` per squared chord;
    with ``m > 0`` the arc is replaced by its inscribed ``m``-segment polygon."""
    s = math.sin(phi)
    arc = 2.0 * phi - math.sin(2.0 * phi) if m == 0 else m * math.sin(2.0 * phi / m) - math.sin(2.0 * phi)
    return arc / (8.0 * s * s)


def arc_half_angle(chord: float, area: float, m: int = 0) -> float:
    """Half-angle ``phi`` in ``[0, pi)`` of the circular arc over a chord of the
    given length that cuts off a segment of the given (unsigned) area.

    With ``m > 0`` the area is that of the inscribed ``m``-segment polygon, so
    a sampled arc encloses the area exactly.
    """
    if area <= 0:
        return 0.0
    target = area / (chord * chord)
    f = lambda phi: _segment_area_ratio(phi, m) - target  # noqa: E731
    hi = math.pi - 1e-6
    while f(hi) < 0:
        hi = math.pi - (math.pi - hi) / 10
        if math.pi - hi < 1e-15:  # pragma: no cover
            return hi
    return brentq(f, 1e-12, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)


def geodesic_length(z: complex, t: float) -> float:
    """Length of the lifted circular arc from the origin to ``(z, t)``."""
    c = abs(z)
    area = abs(t) / 4.0
    if c == 0:
        return math.sqrt(4.0 * math.pi * area)
    phi = arc_half_angle(c, area)
    return c if phi == 0 else c * phi / math.sin(phi)


def arc_path(z: complex, t: float, n: int = 129) -> np.ndarray:
    """Planar circular arc from 0 to ``z`` whose lift from ``t = 0`` ends at
    height ``t`` (signed area ``-t/4``).  ``z = 0`` gives a full circle."""
    u = np.linspace(0.0, 1.0, n)
    c = abs(z)
    area = abs(t) / 4.0
    if c == 0:
        if area == 0:
            return np.zeros((n, 2))
        m = n - 1
        radius = math.sqrt(2.0 * area / (m * math.sin(2.0 * math.pi / m)))
        # clockwise loops lift upwards
        w = radius * (np.exp(-1j * np.sign(t) * 2.0 * np.pi * u) - 1.0)
        return np.column_stack([w.real, w.imag])
    phi = arc_half_angle(c, area, n - 1)
    if phi == 0:
        w = u * z
        return np.column_stack([w.real, w.imag])
    radius = c / (2.0 * math.sin(phi))
    # chord on [0, c]; this arc bulges to the left of the chord, which lifts up
    w = complex(c / 2, -radius * math.cos(phi)) + radius * np.exp(1j * (np.pi / 2 + phi - 2.0 * phi * u))
    if t < 0:
        w = np.conj(w)
    w = w * (z / c)
    w[0], w[-1] = 0.0, z
    return np.column_stack([w.real, w.imag])


def geodesic(p, q, n: int = 129) -> SampledCurve:
    """Lifted circular arc from ``p`` to ``q`` (a sub-Riemannian geodesic)."""
    p, q = Point(*p), Point(*q)
    g = Point(*multiply(inverse(p), q))
    planar = arc_path(g.z, g.t, n)
    local = horizontal_lift(planar)
    return SampledCurve(multiply(p, local.nodes))


@dataclass
class SrDistance:
    value: float
    iterations: int
    exhausted: bool
    coefficients: np.ndarray = field(repr=False, default=None)


def _signed_area(w: np.ndarray) -> float:
    """Signed area enclosed by the path closed with the chord back to 0."""
    x, y = w.real, w.imag
    return 0.5 * float(np.sum(x[:-1] * y[1:] - x[1:] * y[:-1]))


def sr_distance_estimate(p, q, budget: int = 20, n: int = 257, modes: int = 10) -> SrDistance:
    """Sub-Riemannian distance by circular-arc area shooting refined by
    coordinate descent over Fourier perturbations.

    The circular-arc candidate is evaluated in closed form.  ``budget`` is the
    number of descent sweeps over the ``2 * modes`` real shape parameters; each
    candidate path is re-shot so its lift ends exactly at ``q``.
    """
    p, q = Point(*p), Point(*q)
    if p == q:
        raise ValueError("p and q must differ")
    g = Point(*multiply(inverse(p), q))
    z, t = g.z, g.t
    best = geodesic_length(z, t)
    coeffs = np.zeros(2 * modes)
    if budget <= 0:
        return SrDistance(best, 0, False, coeffs)

    u = np.linspace(0.0, 1.0, n)
    ks = np.arange(1, modes + 1)
    scale = max(abs(z), math.sqrt(abs(t)))
    arc = arc_path(z, t, n)
    arc_w = arc[:, 0] + 1j * arc[:, 1]

    def length(cf):
        pert = scale * ((cf[0::2] + 1j * cf[1::2])[None, :]
                        * np.sin(np.pi * np.outer(u, ks))).sum(axis=1)
        w = arc_w + pert
        # re-shoot: scale the perturbation's area deficit into a loop at the end
        deficit = -t / 4.0 - _signed_area(w)
        w = _close_area(w, deficit)
        return float(np.sum(np.abs(np.diff(w))))

    polyline_best = length(coeffs)
    step = 0.1
    sweeps = 0
    improved_last = False
    while sweeps < budget and step > 1e-6:
        sweeps += 1
        improved_last = False
        for i in range(len(coeffs)):
            for sgn in (1.0, -1.0):
                trial = coeffs.copy()
                trial[i] += sgn * step
                val = length(trial)
                if val < polyline_best - 1e-15:
                    coeffs, polyline_best = trial, val
                    improved_last = True
                    break
        if not improved_last:
            step *= 0.5
    if np.any(coeffs != 0):
        best = min(best, polyline_best)
    exhausted = sweeps >= budget and step > 1e-6 and improved_last
    return SrDistance(best, sweeps, exhausted, coeffs)


def _close_area(w: np.ndarray, deficit: float) -> np.ndarray:
    """Insert a circular loop of signed area ``deficit`` at the end of ``w``."""
    if deficit == 0:
        return w
    radius = math.sqrt(abs(deficit) / math.pi)
    m = 65
    u = np.linspace(0.0, 1.0, m)
    sgn = 1.0 if deficit > 0 else -1.0
    loop = w[-1] + radius * (np.exp(1j * sgn * 2.0 * np.pi * u) - 1.0) * 1j
    return np.concatenate([w, loop[1:]])
