"""Curve families: radial ring families, seeded join families between point
sets, relative distance, Loewner estimates and modulus invariance checks."""

from __future__ import annotations

import math
from typing import Callable, Optional, Union

import numpy as np

from .curves import SampledCurve, geodesic, horizontal_lift, ray_points
from .errors import DegenerateSet, FamilyEmpty
from .group import QcMap, set_diameter, set_distance
from .modulus import CurveFamily, GridSpec, ModulusResult, discrete_modulus
from .polar import sphere_points

Sampler = Union[np.ndarray, Callable[[np.random.Generator, int], np.ndarray]]


def ring_ray_family(a: float, b: float, n_alpha: int = 32, n_theta: int = 64,
                    nodes_per_log: int = 200) -> CurveFamily:
    """Radial rays ``s -> phi(s, v)``, ``s in [a, b]``, over a midpoint grid of
    unit-sphere directions ``v``.

    Nodes are geometric in ``s`` (uniform in ``log s``), denser for tilted
    directions whose rays wind faster: ``nodes_per_log * log(b/a) / sqrt(cos alpha)``.
    """
    if not 0 < a < b:
        raise ValueError("need 0 < a < b")
    alpha = -math.pi / 2 + math.pi * (np.arange(n_alpha) + 0.5) / n_alpha
    theta = 2 * math.pi * (np.arange(n_theta) + 0.5) / n_theta
    curves = []
    for al in alpha:
        n = max(8, int(nodes_per_log * math.log(b / a) / math.sqrt(math.cos(al))))
        s = np.geomspace(a, b, n)
        dirs = sphere_points(np.full(n_theta, al), theta)
        for v in dirs:
            curves.append(SampledCurve(ray_points(v, s), s))
    return CurveFamily(curves, f"ring({a:g},{b:g})")


def ring_grid(a: float, b: float, dims: int = 32, rel_width: float = 0.2) -> GridSpec:
    """Grid graded towards the origin whose smallest cells are
    ``rel_width * (a, a, a^2)``, i.e. the same in every dilation of the ring."""
    return GridSpec((dims, dims, dims), min_width=(rel_width * a, rel_width * a, rel_width * a * a))


def ring_value(a: float, b: float) -> float:
    """``2 pi^2 log(b/a)^-3``: the 4-energy of the density ``1/(||p|| log(b/a))``
    on the ring, an upper bound for its modulus."""
    return 2 * math.pi ** 2 / math.log(b / a) ** 3


def _draw(sampler: Sampler, rng: np.random.Generator) -> np.ndarray:
    if callable(sampler):
        return np.asarray(sampler(rng, 1), dtype=float).reshape(3)
    pts = np.atleast_2d(np.asarray(sampler, dtype=float))
    return pts[rng.integers(len(pts))]


def _bezier(p0, p3, rng, spread, n):
    d = p3 - p0
    scale = max(abs(complex(*d)), 1e-3)
    p1 = p0 + d / 3 + spread * scale * rng.standard_normal(2)
    p2 = p0 + 2 * d / 3 + spread * scale * rng.standard_normal(2)
    u = np.linspace(0.0, 1.0, n)[:, None]
    return ((1 - u) ** 3 * p0 + 3 * (1 - u) ** 2 * u * p1 + 3 * (1 - u) * u ** 2 * p2 + u ** 3 * p3)


def _loop(at, radius, phase, ccw, m=48, aspect=1.0, angle=0.0):
    """Closed planar ``m``-gon starting and ending at ``at``.

    With ``aspect > 1`` the circle is stretched into an ellipse of the same
    area whose major axis points along ``angle``; ``phase = pi`` then starts
    the loop at the end of that axis.
    """
    s = np.linspace(0.0, 2 * math.pi, m + 1) * (1 if ccw else -1)
    u = radius * math.sqrt(aspect) * (np.cos(phase + s) - math.cos(phase))
    v = radius / math.sqrt(aspect) * (np.sin(phase + s) - math.sin(phase))
    ca, sa = math.cos(angle), math.sin(angle)
    return np.column_stack([at[0] + ca * u - sa * v, at[1] + sa * u + ca * v])


def _with_loops(planar, t0, target_t, rng, n_loops, m=48, aspect=1.0, angle=None):
    """Insert ``n_loops`` equal loops so the lift ends at height ``target_t``.

    Loops are circles with random phase unless ``angle`` is given, in which
    case they are ellipses of the given aspect stretched along ``angle``.
    """
    end_t = horizontal_lift(planar, t0).nodes[-1, 2]
    deficit = target_t - end_t
    if deficit == 0:
        return planar
    # a lifted closed polygon drops t by 4 * (signed area); m-gon area = m/2 r^2 sin(2pi/m)
    area = abs(deficit) / (4.0 * n_loops)
    radius = math.sqrt(area / (0.5 * m * math.sin(2 * math.pi / m)))
    ccw = deficit < 0
    where = np.sort(rng.integers(1, len(planar) - 1, n_loops))
    parts, last = [], 0
    for j in where:
        parts.append(planar[last:j + 1])
        if angle is None:
            loop = _loop(planar[j], radius, rng.uniform(0, 2 * math.pi), ccw, m)
        else:
            loop = _loop(planar[j], radius, math.pi, ccw, m, aspect, angle)
        parts.append(loop[1:])
        last = j + 1
    parts.append(planar[last:])
    return np.vstack(parts)


def join_curve(e, f, omega, rng, max_tries: int = 40, n: int = 97) -> Optional[SampledCurve]:
    """One horizontal curve from ``e`` to ``f`` inside ``omega`` or ``None``.

    The first try is the geodesic; later tries lift random cubic Bezier
    shapes and close the height gap with area-adjusting loops, with more
    spread and more (smaller) loops as tries accumulate.
    """
    e, f = np.asarray(e, dtype=float), np.asarray(f, dtype=float)
    for k in range(max_tries):
        if k == 0:
            c = geodesic(e, f, n).nodes
        else:
            planar = _bezier(e[:2], f[:2], rng, 0.15 * (1 + k / 8), n)
            planar = _with_loops(planar, e[2], f[2], rng, 1 + k // 8)
            c = horizontal_lift(planar, e[2]).nodes
        if abs(c[-1, 2] - f[2]) > 1e-9 * max(1.0, abs(f[2])):
            continue
        c[-1] = f
        if omega is None or np.all(omega.contains(c[1:-1])):
            return SampledCurve(c)
    return None


def join_family(E: Sampler, F: Sampler, omega, n: int = 64, seed: int = 0,
                max_tries: int = 40) -> CurveFamily:
    """``n`` seeded horizontal curves joining samples of ``E`` to samples of ``F``
    inside ``omega``.

    Curve ``i`` uses the generator ``default_rng([seed, i])``, so the family
    for ``n`` is a prefix of the family for any larger ``n``.  Curves that
    fail every try are skipped.

    Raises
    ------
    FamilyEmpty
        If no curve was found.
    """
    curves = []
    for i in range(n):
        rng = np.random.default_rng([seed, i])
        e, f = _draw(E, rng), _draw(F, rng)
        c = join_curve(e, f, omega, rng, max_tries)
        if c is not None:
            curves.append(c)
    if not curves:
        raise FamilyEmpty(f"no joining curve found in {n} x {max_tries} tries")
    return CurveFamily(curves, "join")


def relative_distance(E, F) -> float:
    """``dist(E, F) / min(diam E, diam F)`` over finite samples."""
    E, F = np.atleast_2d(np.asarray(E, float)), np.atleast_2d(np.asarray(F, float))
    if len(E) < 2 or len(F) < 2:
        raise DegenerateSet("each set needs at least two samples")
    dE, dF = set_diameter(E), set_diameter(F)
    if min(dE, dF) == 0:
        raise DegenerateSet("a set has zero diameter")
    return set_distance(E, F) / min(dE, dF)


def loewner_estimate(E, F, omega, n: int = 64, seed: int = 0, grid=None,
                     full: bool = False) -> Union[float, ModulusResult]:
    """Discrete modulus of a seeded join family between ``E`` and ``F``.

    The grid defaults to ``24^3`` cells over the domain box, independent of
    ``n``; with the prefix property of :func:`join_family` the estimate is
    then monotone in ``n``.
    """
    fam = join_family(E, F, omega, n, seed)
    if grid is None:
        grid = GridSpec((24, 24, 24), bbox=omega.bbox)
    res = discrete_modulus(fam, grid, check_rectifiable=False)
    return res if full else res.value


def qc_invariance_check(m: QcMap, fam: CurveFamily, grid: Optional[GridSpec] = None,
                        grid_after: Optional[GridSpec] = None) -> dict:
    """Modulus of ``fam`` and of its image under ``m``.

    Each grid defaults to ``GridSpec()`` fitted to the respective family, so
    the image is discretised on its own bounding box.
    """
    grid = grid or GridSpec()
    grid_after = grid_after or grid
    before = discrete_modulus(fam, grid, check_rectifiable=False)
    after = discrete_modulus(fam.mapped(m), grid_after, check_rectifiable=False)
    return {"mod_before": before.value, "mod_after": after.value,
            "ratio": after.value / before.value,
            "gap_before": before.gap, "gap_after": after.gap}

