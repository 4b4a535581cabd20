"""Boundary behaviour of maps on domains: distortion profiles, cluster sets
along neighbourhoods and end-cuts, contractible end-cuts, principal points,
Koebe and Lindelöf experiments and condenser capacity."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .chains import (canonical_chain_ball, chain_validate, map_chain,
                     minimax_center)
from .curves import SampledCurve, horizontal_lift, ray_points
from .domain import Domain, ball, safe_apply, sphere_samples
from .errors import FamilyEmpty, HypothesisFailed, InversionAtOrigin, MapUndefined
from .families import loewner_estimate
from .group import (ORIGIN, QcMap, contraction, dist_h, hausdorff_distance, inverse,
                    koranyi_norm, multiply, set_diameter)
from .modulus import CurveFamily, GridSpec, discrete_modulus
from .polar import ray_coordinates, sphere_points

TAIL_TOL = 1e-2
DEEP_KS = tuple(2 ** j for j in range(1, 10))


def _apply(m: QcMap, q: np.ndarray) -> np.ndarray:
    try:
        with np.errstate(all="ignore"):
            out = np.asarray(m(q), dtype=float)
    except InversionAtOrigin as exc:
        raise MapUndefined(str(exc)) from exc
    if not np.all(np.isfinite(out)):
        raise MapUndefined("map is undefined at some sample")
    return out


def _directions(n_dir: int) -> np.ndarray:
    """About ``n_dir`` unit-sphere points on a midpoint ``(alpha, theta)`` grid."""
    n_alpha = max(2, int(round(math.sqrt(n_dir / 2))))
    n_theta = max(4, int(math.ceil(n_dir / n_alpha)))
    alpha = -math.pi / 2 + math.pi * (np.arange(n_alpha) + 0.5) / n_alpha
    theta = 2 * math.pi * (np.arange(n_theta) + 0.5) / n_theta
    a, t = np.meshgrid(alpha, theta, indexing="ij")
    return sphere_points(a.ravel(), t.ravel())


# --------------------------------------------------------------------------
# distortion

@dataclass
class DistortionProfile:
    """``H(p, r) = max / min`` of ``d_H(f(p), f(q))`` over ``q`` in ``S(p, r)``."""

    radii: list
    H_values: list
    limsup_estimate: float

    def to_dict(self) -> dict:
        return {"radii": list(map(float, self.radii)), "H_values": list(map(float, self.H_values)),
                "limsup_estimate": float(self.limsup_estimate)}


def distortion_profile(m: QcMap, p, radii: Sequence[float], n_dir: int = 512) -> DistortionProfile:
    """Distortion ratios on spheres about ``p``; the limsup estimate is the
    largest of the values at the three smallest radii.

    Raises
    ------
    MapUndefined
        If ``m`` is undefined at ``p`` or on a sampled sphere.
    """
    radii = sorted(map(float, radii), reverse=True)
    p = np.asarray(p, dtype=float)
    dirs = _directions(n_dir)
    fp = _apply(m, p[None, :])[0]
    H = []
    for r in radii:
        q = multiply(p, np.column_stack([r * dirs[:, :2], r * r * dirs[:, 2]]))
        d = dist_h(fp, _apply(m, q))
        H.append(float(d.max() / d.min()) if d.min() > 0 else math.inf)
    return DistortionProfile(radii, H, max(H[-3:]))


# --------------------------------------------------------------------------
# cluster sets

@dataclass
class ClusterReport:
    """Sampled cluster set with the diameters of the image tails."""

    points: np.ndarray = field(repr=False)
    tail_diameters: list
    singleton_verdict: bool
    tolerance: float
    limit: Optional[np.ndarray] = None
    scales: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"tail_diameters": list(map(float, self.tail_diameters)),
                "singleton_verdict": self.singleton_verdict, "tolerance": self.tolerance,
                "limit": None if self.limit is None else list(map(float, self.limit)),
                "scales": list(map(float, self.scales))}


def _report(tails, diams, tol, scales) -> ClusterReport:
    last = tails[-1]
    center = minimax_center(last[:: max(1, len(last) // 400)])
    return ClusterReport(last, diams, bool(diams[-1] <= tol), tol, center, list(scales))


def neighbourhood_samples(omega: Domain, x, r: float, n_shells: int = 4, n_alpha: int = 15,
                          n_theta: int = 32) -> np.ndarray:
    """Samples of ``B(x, r) & omega`` on spheres of radii ``r 2^-j``."""
    pts = np.vstack([sphere_samples(x, r * 0.5 ** j, n_alpha, n_theta) for j in range(n_shells)])
    pts = pts[dist_h(np.asarray(x, float), pts) < r * (1 + 1e-12)]
    return pts[omega.contains(pts)]


def cluster_set(m: QcMap, omega: Domain, x, radii: Sequence[float], tol: float = TAIL_TOL,
                n_alpha: int = 15, n_theta: int = 32) -> ClusterReport:
    """Images of ``B(x, r) & omega`` for decreasing ``r``.

    ``points`` are the images at the smallest radius and the tail diameters
    are the diameters of the images.

    Raises
    ------
    MapUndefined
        If ``m`` is undefined on a sample.
    """
    radii = sorted(map(float, radii), reverse=True)
    tails, diams = [], []
    for r in radii:
        pts = neighbourhood_samples(omega, x, r, n_alpha=n_alpha, n_theta=n_theta)
        if len(pts) == 0:
            raise ValueError(f"B(x, {r:g}) misses the domain samples")
        img = _apply(m, pts)
        tails.append(img)
        diams.append(set_diameter(img) if len(img) > 1 else 0.0)
    return _report(tails, diams, tol, radii)


def cluster_along(m: QcMap, gamma: SampledCurve, ts: Sequence[float], tol: float = TAIL_TOL) -> ClusterReport:
    """Images of the tails ``gamma([t, 1))`` for increasing ``t``.

    The end node is excluded: it lies on the boundary, where only the limit
    is of interest.

    Raises
    ------
    MapUndefined
        If ``m`` is undefined on a tail node.
    """
    ts = sorted(map(float, ts))
    p = gamma.params
    t_end = p[-1]
    tails, diams = [], []
    for t in ts:
        sel = (p >= t) & (p < t_end)
        if not sel.any():
            raise ValueError(f"no curve node in [{t:g}, end)")
        img = _apply(m, gamma.nodes[sel])
        tails.append(img)
        diams.append(set_diameter(img) if len(img) > 1 else 0.0)
    return _report(tails, diams, tol, ts)


# --------------------------------------------------------------------------
# end-cuts of balls

def _ball_center(omega: Domain):
    if omega.name != "ball":
        raise ValueError("this experiment needs a ball fixture")
    return np.asarray(omega.params["center"], float), float(omega.params["radius"])


def _normalized(omega: Domain, x0):
    """Unit-sphere point ``v`` with ``x0 = c delta_R v``."""
    c, R = _ball_center(omega)
    v = multiply(inverse(c), np.asarray(x0, float))
    return c, R, np.array([v[0] / R, v[1] / R, v[2] / R ** 2])


def _to_ball(c, R, w):
    w = np.atleast_2d(w)
    return multiply(c, np.column_stack([R * w[:, 0], R * w[:, 1], R * R * w[:, 2]]))


def radial_cut(x0, omega: Optional[Domain] = None, s0: float = 0.05, n: int = 600,
               depth: float = 1e-7) -> SampledCurve:
    """Radial ray ``s -> phi(s, v)`` from ``s0`` to the boundary point ``x0``.

    Nodes crowd the end geometrically down to ``1 - s = depth``; the
    parameter is ``s``.
    """
    omega = omega or ball()
    c, R, v = _normalized(omega, x0)
    s = 1.0 - (1.0 - s0) * np.geomspace(1.0, depth, n)
    s = np.concatenate([[s0], s[1:], [1.0]])
    return SampledCurve(_to_ball(c, R, ray_points(v, s)), s)


def spiral_cut(x0, omega: Optional[Domain] = None, turns: float = 3.0, amp: float = 0.25,
               s0: float = 0.05, n: int = 1200, depth: float = 1e-7) -> SampledCurve:
    """End-cut winding around the radial ray into ``x0``.

    In the frame ``w = x0^-1 q`` the planar part of the radial ray is turned
    by the angle ``amp sin(2 pi turns log(1 - s) / log(depth))``; the lift is
    made from the end so that the curve still ends at ``x0``.  ``amp`` is
    halved until the curve stays in the ball.
    """
    omega = omega or ball()
    c, R, v = _normalized(omega, x0)
    s = 1.0 - (1.0 - s0) * np.geomspace(1.0, depth, n)
    s = np.concatenate([s, [1.0]])
    w = multiply(inverse(v), ray_points(v, s))
    u = np.log(np.maximum(1.0 - s, depth)) / math.log(depth)
    for _ in range(20):
        ang = amp * np.sin(2 * math.pi * turns * u)
        z = (w[:, 0] + 1j * w[:, 1]) * np.exp(1j * ang)
        lifted = horizontal_lift(np.column_stack([z.real, z.imag]), 0.0).nodes
        lifted[:, 2] -= lifted[-1, 2]
        nodes = multiply(v, lifted)
        nodes[-1] = v
        pts = _to_ball(c, R, nodes)
        if np.all(omega.contains(pts[:-1])):
            return SampledCurve(pts, s)
        amp /= 2
    raise ValueError("could not fit a spiral cut inside the ball")


def _contracted_samples(x0, s: float, omega: Domain, n: int) -> np.ndarray:
    c, R = _ball_center(omega)
    axes = [np.linspace(lo, hi, n) for lo, hi in omega.bbox]
    g = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    g = np.vstack([g[omega.contains(g)], sphere_samples(c, R * (1 - 1e-9), 21, 40)])
    return contraction(x0, s)(g)


def contraction_overshoot(x0, s: float, omega: Optional[Domain] = None, n: int = 24) -> float:
    """``max d_H(c, g_s(q)) / R - 1`` over grid samples ``q`` of ``B(c, R)``;
    positive when ``g_s(B)`` leaves ``B``."""
    omega = omega or ball()
    c, R = _ball_center(omega)
    return float(dist_h(c, _contracted_samples(x0, s, omega, n)).max() / R - 1.0)


def contraction_inclusion(x0, s: float, eps: Optional[float] = None, omega: Optional[Domain] = None,
                          n: int = 24) -> bool:
    """``g_s(B) <= B & B(x0, eps)`` on grid samples of ``B``; ``eps``
    defaults to ``2 s R``, the bound from homogeneity."""
    omega = omega or ball()
    c, R = _ball_center(omega)
    eps = 2 * s * R * (1 + 1e-9) if eps is None else eps
    img = _contracted_samples(x0, s, omega, n)
    return bool(np.all(omega.contains(img)) and np.all(dist_h(np.asarray(x0, float), img) < eps))


def contractible_check(gamma: SampledCurve, s_list: Sequence[float], x0=None,
                       omega: Optional[Domain] = None, ts: Optional[Sequence[float]] = None,
                       threshold: Optional[float] = None) -> bool:
    """Every sampled tail ``gamma([t, 1))`` leaves ``g_s(B)`` for every ``s``
    of ``s_list`` at or below ``threshold``.

    ``ts`` defaults to the parameters at 50%, 75% and 90% of the range and
    ``threshold`` to the median of ``s_list``.  Membership uses normalised
    coordinates: ``q`` is in ``g_s(B)`` iff ``g_s^-1(q)`` is in ``B``.
    """
    omega = omega or ball()
    x0 = gamma.nodes[-1] if x0 is None else np.asarray(x0, float)
    p = gamma.params
    if ts is None:
        ts = [p[0] + f * (p[-1] - p[0]) for f in (0.5, 0.75, 0.9)]
    s_list = sorted(map(float, s_list), reverse=True)
    threshold = float(np.median(s_list)) if threshold is None else threshold
    for s in (s for s in s_list if s <= threshold):
        back = contraction(x0, s).inverse()
        for t in ts:
            tail = gamma.nodes[(p >= t) & (p < p[-1])]
            if len(tail) and np.all(omega.contains(back(tail))):
                return False
    return True


# --------------------------------------------------------------------------
# Koebe

@dataclass
class KoebeReport:
    passed: bool
    tolerance: float
    kinds: list
    verdicts: list
    tail_diameters: list = field(repr=False)
    limits: list = field(repr=False)
    spot_moduli: list = field(default_factory=list)
    distortion: Optional[float] = None

    def to_dict(self) -> dict:
        return {"passed": self.passed, "tolerance": self.tolerance, "kinds": self.kinds,
                "verdicts": self.verdicts,
                "tail_diameters": [list(map(float, d)) for d in self.tail_diameters],
                "limits": [list(map(float, x)) for x in self.limits],
                "spot_moduli": list(map(float, self.spot_moduli)), "distortion": self.distortion}


def koebe_cuts(omega: Optional[Domain] = None, n_radial: int = 8, n_spiral: int = 4,
               seed: int = 0) -> list:
    """Radial and spiral end-cuts to seeded random boundary points."""
    omega = omega or ball()
    rng = np.random.default_rng(seed)
    c, R = _ball_center(omega)
    total = n_radial + n_spiral
    alpha = rng.uniform(-1.3, 1.3, total)
    theta = rng.uniform(0, 2 * math.pi, total)
    ends = _to_ball(c, R, sphere_points(alpha, theta))
    cuts = [("radial", radial_cut(x, omega)) for x in ends[:n_radial]]
    cuts += [("spiral", spiral_cut(x, omega)) for x in ends[n_radial:]]
    return cuts


def _image_domain(m: QcMap, omega: Domain) -> Domain:
    inv = m.inverse()
    pts = _apply(m, omega.boundary_points())
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    pad = 0.05 * (hi - lo)
    member = lambda q: omega.contains(safe_apply(inv, q))  # noqa: E731
    return Domain(member, np.column_stack([lo - pad, hi + pad]), omega.resolution,
                  omega.name + "|image", {}, None, omega.uniform)


def koebe_experiment(m: QcMap, omega: Optional[Domain] = None, cuts=None, tol: float = TAIL_TOL,
                     ts: Sequence[float] = (0.9, 0.99, 0.999, 0.9999, 0.99999),
                     spot_checks: int = 2, seed: int = 0) -> KoebeReport:
    """Arcwise limits of ``m`` along end-cuts; passes iff every cut has a
    singleton verdict at ``tol``.

    ``spot_checks`` Loewner estimates between images of small balls in
    ``omega`` are recorded as a positivity check on the image domain.
    """
    omega = omega or ball()
    cuts = koebe_cuts(omega, seed=seed) if cuts is None else cuts
    kinds, verdicts, tails, limits = [], [], [], []
    for kind, cut in cuts:
        rep = cluster_along(m, cut, ts, tol)
        kinds.append(kind)
        verdicts.append(rep.singleton_verdict)
        tails.append(rep.tail_diameters)
        limits.append(rep.limit)
    spots = []
    if spot_checks:
        c, R = _ball_center(omega)
        image = _image_domain(m, omega)
        E = _apply(m, sphere_samples(c, 0.2 * R, 9, 16))
        grid = GridSpec((16, 16, 16), bbox=image.bbox)
        for _, cut in cuts[:spot_checks]:
            q = cut.nodes[np.argmin(np.abs(cut.params - 0.7))]
            F = _apply(m, sphere_samples(q, 0.1 * R, 9, 16))
            try:
                spots.append(loewner_estimate(E, F, image, n=32, seed=seed, grid=grid))
            except FamilyEmpty:
                spots.append(0.0)
    # empirical distortion at the middle of the first cut
    mid = cuts[0][1].nodes[len(cuts[0][1]) // 2]
    K = distortion_profile(m, mid, [1e-2, 1e-3, 1e-4], 128).limsup_estimate
    return KoebeReport(all(verdicts), tol, kinds, verdicts, tails, limits, spots, K)


# --------------------------------------------------------------------------
# principal points and Lindelöf

@dataclass
class PrincipalSet:
    """Candidates ``y`` whose Chebyshev radius ``rho(y) = min_k max_(q in f(E_k)) d_H(y, q)``
    is within ``eps`` of the smallest one found."""

    points: np.ndarray = field(repr=False)
    rho: np.ndarray = field(repr=False)
    rho_min: float
    eps: float
    center: np.ndarray

    def to_dict(self) -> dict:
        return {"n_points": int(len(self.points)), "rho_min": self.rho_min, "eps": self.eps,
                "center": list(map(float, self.center)),
                "diameter": float(set_diameter(self.points)) if len(self.points) > 1 else 0.0}


def _boundary_patch(c, R, x0, r: float, n: int) -> np.ndarray:
    """Sphere points near ``x0``: a frame box of half-size ``(r, r, r^2)``
    pushed radially (by dilation about ``c``) onto ``S(c, R)``."""
    u = np.linspace(-1.0, 1.0, n)
    a, b, t = np.meshgrid(u, u, u, indexing="ij")
    w = np.column_stack([r * a.ravel(), r * b.ravel(), r * r * t.ravel()])
    q = multiply(inverse(c), multiply(np.asarray(x0, float), w))
    nq = koranyi_norm(q)
    lam = R / np.where(nq > 0, nq, 1.0)
    q = np.column_stack([lam * q[:, 0], lam * q[:, 1], lam * lam * q[:, 2]])
    return multiply(c, q[nq > 0])


def principal_points(m: QcMap, x0, ks: Sequence[int] = DEEP_KS,
                     omega: Optional[Domain] = None, depth: int = 3, slack: float = 0.1,
                     n_patch: int = 21, dims: int = 64, chain=None) -> PrincipalSet:
    """Principal-point candidates of the mapped canonical chain at ``x0``.

    Candidates are images of boundary points near ``x0``.  A candidate
    qualifies when some of the last ``depth`` image cross-sets fits in the
    ball about it of radius ``eps = (1 + slack) rho_min``: with finitely many
    cross-sets this is the sampled form of "every neighbourhood contains a
    cross-set".
    """
    omega = omega or ball()
    c, R = _ball_center(omega)
    if chain is None:
        chain = canonical_chain_ball(x0, ks, omega, dims, strict=False, graded=True)
    image = map_chain(m, chain)
    tail = image.cross_sets[-depth:]
    reach = chain.cross_sets[-depth].scale
    cand = _apply(m, _boundary_patch(c, R, x0, 2 * reach, n_patch))
    rho = np.full(len(cand), np.inf)
    for e in tail:
        far = np.zeros(len(cand))
        for i in range(0, len(e.points), 256):
            far = np.maximum(far, dist_h(cand[:, None, :], e.points[None, i:i + 256, :]).max(axis=1))
        rho = np.minimum(rho, far)
    rho_min = float(rho.min())
    eps = (1 + slack) * rho_min
    keep = rho <= eps
    pts = cand[keep]
    return PrincipalSet(pts, rho[keep], rho_min, eps, minimax_center(pts[:: max(1, len(pts) // 400)]))


@dataclass
class LindelofReport:
    cluster_pt: np.ndarray
    principal_set: PrincipalSet = field(repr=False)
    agree: bool
    hausdorff: float
    tolerance: float
    contractible: bool
    inclusion_ok: bool
    image_diameters: list = field(repr=False)
    cluster: ClusterReport = field(repr=False, default=None)
    overshoot: Optional[float] = None

    def to_dict(self) -> dict:
        return {"cluster_pt": list(map(float, self.cluster_pt)),
                "principal_set": self.principal_set.to_dict(), "agree": self.agree,
                "hausdorff": self.hausdorff, "tolerance": self.tolerance,
                "contractible": self.contractible, "inclusion_ok": self.inclusion_ok,
                "overshoot": self.overshoot,
                "image_diameters": list(map(float, self.image_diameters)),
                "cluster": None if self.cluster is None else self.cluster.to_dict()}


def lindelof_experiment(m: QcMap, x0, cut: Optional[SampledCurve] = None,
                        ks: Sequence[int] = DEEP_KS, tol: float = 5e-2,
                        omega: Optional[Domain] = None,
                        ts: Sequence[float] = (0.9, 0.99, 0.999, 0.9999, 0.99999),
                        s_list: Sequence[float] = (0.1, 0.05, 0.02, 0.01, 0.005)) -> LindelofReport:
    """Compare the arcwise limit along ``cut`` with the principal points of
    the mapped canonical chain; they agree when their Hausdorff distance is at
    most ``tol``.

    Raises
    ------
    HypothesisFailed
        If the diameters of the image cross-sets do not decay.
    """
    omega = omega or ball()
    x0 = np.asarray(x0, dtype=float)
    cut = radial_cut(x0, omega) if cut is None else cut
    inclusion = all(contraction_inclusion(x0, s, omega=omega) for s in s_list)
    overshoot = contraction_overshoot(x0, min(s_list), omega) / min(s_list)
    contractible = contractible_check(cut, s_list, x0, omega)
    chain = canonical_chain_ball(x0, ks, omega, strict=False, graded=True)
    image = map_chain(m, chain)
    rep = chain_validate(image, mod_budget=0)
    if not rep.diam_trend_ok:
        raise HypothesisFailed(f"image cross-set diameters do not decay: {rep.diameters}")
    clus = cluster_along(m, cut, ts)
    pp = principal_points(m, x0, ks, omega, chain=chain)
    h = hausdorff_distance(clus.limit[None, :], pp.points)
    return LindelofReport(clus.limit, pp, bool(h <= tol and clus.singleton_verdict), float(h), tol,
                          contractible, inclusion, list(image.diameters), clus, overshoot)


# --------------------------------------------------------------------------
# condenser capacity

def condenser_family(K, R: float, nodes_per_log: int = 200) -> CurveFamily:
    """Radial segments ``s -> phi(s, v_q)``, ``s in [s_q, R]``, from every
    sample ``q = phi(s_q, v_q)`` of ``K`` out to ``S(0, R)``.

    Each segment starts on ``K`` and ends on the sphere inside ``B(0, R)``.
    Node positions depend on the direction only, so a sample set containing
    another yields a family containing the other's.  Samples on the vertical
    axis have no ray and are skipped.
    """
    K = np.atleast_2d(np.asarray(K, dtype=float))
    if np.any(koranyi_norm(K) >= R):
        raise ValueError("K must lie in the open ball B(0, R)")
    keep = np.hypot(K[:, 0], K[:, 1]) > 0
    curves = []
    if keep.any():
        s, alpha, theta = ray_coordinates(K[keep])
        v = sphere_points(alpha, theta)
        for sq, a, vq in zip(s, alpha, v):
            step = 1.0 / (nodes_per_log / math.sqrt(math.cos(a)))
            j = np.arange(1, int(math.log(R / sq) / step) + 1) if sq > 0 else np.arange(1, 400)
            grid = R * np.exp(-step * j)[::-1]
            ss = np.concatenate([[sq], grid[grid > sq * (1 + 1e-12)], [R]])
            curves.append(SampledCurve(ray_points(vq, ss), ss))
    if not curves:
        raise FamilyEmpty("no sample of K lies off the vertical axis")
    return CurveFamily(curves, "condenser")


def condenser_capacity(K, R: float, grid: Optional[GridSpec] = None, full: bool = False,
                       nodes_per_log: int = 200):
    """Discrete 4-modulus of the curves joining ``K`` to ``S(0, R)`` in ``B(0, R)``.

    The family is :func:`condenser_family`; the grid defaults to ``32^3``
    cells over the ball box graded towards the origin with smallest cells
    ``0.2 (a, a, a^2)``, ``a`` the smallest sample norm.
    """
    fam = condenser_family(K, R, nodes_per_log)
    if grid is None:
        a = max(float(koranyi_norm(np.atleast_2d(K)).min()), 1e-3 * R)
        grid = GridSpec((32, 32, 32), bbox=ball(ORIGIN, R).bbox,
                        min_width=(0.2 * a, 0.2 * a, 0.2 * a * a))
    res = discrete_modulus(fam, grid, check_rectifiable=False)
    return res if full else res.value
