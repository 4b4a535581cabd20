"""Cross-sets, chains of cross-sets, impressions and end-cuts on rasters.

A cross-set is described by a level-set function ``g`` (negative on the
side facing the prime end) and by point samples of its locus.  On a
:class:`~h1modlab.domain.Raster` it becomes the set of domain cells that
``g`` straddles.  Two face-adjacent cells outside that set share a face whose
corners carry one strict sign, so the straddle set cannot leak: every face
path between the two sides crosses it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import ndimage

from .curves import SampledCurve, geodesic, horizontal_lift
from .domain import FULL, Domain, Raster, ball, label_components, safe_apply, sphere_samples
from .errors import (BudgetExhausted, FamilyEmpty, InsufficientDepth, MapUndefined,
                     NotAccessible, ResolutionTooCoarse)
from .families import _bezier, _with_loops, join_curve, loewner_estimate
from .group import QcMap, dist_h, inverse, multiply, nearest_distances, set_diameter, set_distance
from .modulus import GridSpec

DEBRIS_FRACTION = 0.05


@dataclass(eq=False)
class CrossSetApprox:
    """Rasterised cross-set.

    ``labels`` numbers the face components of the domain cells left after
    removing ``cells`` (small debris merged into the side of matching sign);
    ``side_components`` holds the labels of the ``D(E)`` side and the other
    side.
    """

    cells: np.ndarray
    boundary_contact: bool
    side_components: tuple
    labels: np.ndarray = field(repr=False)
    n_components: int
    points: np.ndarray = field(repr=False)
    levelset: Callable = field(repr=False)
    scale: float
    raster: Raster = field(repr=False)
    restrict: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def valid(self) -> bool:
        return self.n_components == 2 and self.boundary_contact

    @property
    def inner(self) -> np.ndarray:
        """Cells of ``D(E)``."""
        return self.labels == self.side_components[0]

    @property
    def outer(self) -> np.ndarray:
        return self.labels == self.side_components[1]


def rasterize_cross_set(raster: Raster, levelset: Callable, points, scale: float,
                        restrict: Optional[np.ndarray] = None,
                        inner_hint: Optional[np.ndarray] = None) -> CrossSetApprox:
    """Rasterise ``{levelset = 0}`` (optionally only within ``restrict``) and
    analyse the components of its complement in the domain."""
    cells = raster.straddle(levelset) & raster.inside
    if restrict is not None:
        cells &= restrict
    labels, n = label_components(raster.inside & ~cells)
    sign = raster.sign_at_centers(levelset)
    ids = np.arange(1, n + 1)
    sizes = ndimage.sum_labels(np.ones(raster.dims), labels, ids) if n else np.zeros(0)
    neg = ndimage.sum_labels(sign < 0, labels, ids) if n else np.zeros(0)
    if inner_hint is not None and n:
        neg = ndimage.sum_labels(inner_hint, labels, ids)
    pos = sizes - neg
    inner = int(ids[np.argmax(neg)]) if n and neg.max() > 0 else 0
    rest = pos.copy()
    if inner:
        rest[inner - 1] = -1
    outer = int(ids[np.argmax(rest)]) if n and rest.max() > 0 else 0
    count = int(inner > 0) + int(outer > 0)
    if inner and outer:
        floor = DEBRIS_FRACTION * min(sizes[inner - 1], sizes[outer - 1])
        lut = np.arange(n + 1)
        for i in ids:
            if i in (inner, outer):
                continue
            if sizes[i - 1] < floor:
                lut[i] = inner if neg[i - 1] > pos[i - 1] else outer
            else:
                count += 1
        labels = lut[labels]
    touch_e = bool(np.any(ndimage.binary_dilation(cells, FULL) & ~raster.inside))
    touch = touch_e and all(bool(np.any(raster.boundary & (labels == s))) for s in (inner, outer) if s)
    pts = np.atleast_2d(np.asarray(points, dtype=float)).reshape(-1, 3)
    return CrossSetApprox(cells, touch and inner > 0 and outer > 0, (inner, outer), labels, count,
                          pts, levelset, float(scale), raster, restrict)


def _sphere_levelset(center, r):
    c = np.asarray(center, dtype=float)
    return lambda q: dist_h(c, q) - r


@dataclass(eq=False)
class ChainApprox:
    """Ordered cross-sets on one raster.

    ``indices`` are chain indices used as the abscissa ``1/k`` of the
    finite-depth trend fits (``k`` for canonical chains).
    """

    cross_sets: list
    domain: Domain
    raster: Raster = field(repr=False)
    anchor: np.ndarray
    indices: list
    separations: list = field(default_factory=list)
    diameters: list = field(default_factory=list)

    def __post_init__(self):
        self.anchor = np.asarray(self.anchor, dtype=float)
        if not self.diameters:
            self.diameters = [set_diameter(e.points) if len(e.points) > 1 else 0.0
                              for e in self.cross_sets]
        if not self.separations:
            self.separations = [set_distance(a.points, b.points) if len(a.points) and len(b.points)
                                else math.inf
                                for a, b in zip(self.cross_sets[:-1], self.cross_sets[1:])]

    def __len__(self):
        return len(self.cross_sets)

    def subchain(self, idx: Sequence[int]) -> "ChainApprox":
        return ChainApprox([self.cross_sets[i] for i in idx], self.domain, self.raster, self.anchor,
                           [self.indices[i] for i in idx])

    def to_record(self) -> dict:
        return {"indices": list(map(float, self.indices)),
                "scales": [e.scale for e in self.cross_sets],
                "separations": list(map(float, self.separations)),
                "diameters": list(map(float, self.diameters)),
                "cross_set_valid": [e.valid for e in self.cross_sets]}


def build_chain(domain: Domain, specs, anchor, indices, dims=64, strict: bool = True,
                raster: Optional[Raster] = None, min_width=None) -> ChainApprox:
    """Chain from ``(levelset, points, scale)`` triples.

    Raises
    ------
    ResolutionTooCoarse
        If ``strict`` and some cross-set does not split the domain into
        exactly two sides that both reach the boundary.
    """
    raster = raster or Raster(domain, anchor, dims, min_width=min_width)
    sets = []
    for k, (g, pts, scale) in zip(indices, specs):
        e = rasterize_cross_set(raster, g, pts, scale)
        if strict and not e.valid:
            raise ResolutionTooCoarse(
                f"cross-set {k}: {e.n_components} side component(s), boundary contact "
                f"{e.boundary_contact}; refine the raster")
        sets.append(e)
    return ChainApprox(sets, domain, raster, anchor, list(indices))


def _ball_params(omega: Domain):
    if omega.name != "ball":
        raise ValueError("canonical chains need a ball fixture")
    return np.asarray(omega.params["center"], dtype=float), float(omega.params["radius"])


def sphere_chain(omega: Domain, x0, radii, indices=None, dims=64, strict: bool = True,
                 n_alpha: int = 31, n_theta: int = 64, graded: bool = False) -> ChainApprox:
    """Chain of the sphere pieces ``S(x0, r) & omega`` for the given radii.

    ``graded`` packs the raster towards ``x0`` with smallest cells
    ``(r, r, r^2) / 4`` for the smallest radius ``r``.
    """
    x0 = np.asarray(x0, dtype=float)
    specs = []
    for r in radii:
        pts = sphere_samples(x0, r, n_alpha, n_theta)
        specs.append((_sphere_levelset(x0, r), pts[omega.contains(pts)], r))
    idx = list(indices) if indices is not None else [radii[0] / r for r in radii]
    r = min(radii)
    width = (r / 4, r / 4, r * r / 4) if graded else None
    return build_chain(omega, specs, x0, idx, dims, strict, min_width=width)


def canonical_chain_ball(x0, ks: Sequence[int], omega: Optional[Domain] = None, dims: int = 64,
                         strict: bool = True, graded: bool = False) -> ChainApprox:
    """Cross-sets ``S(x0, R/k) & B(c, R)`` for a boundary point ``x0`` of the ball."""
    omega = omega or ball()
    c, R = _ball_params(omega)
    x0 = np.asarray(x0, dtype=float)
    if abs(dist_h(c, x0) - R) > 1e-9 * R:
        raise ValueError("x0 must lie on the boundary sphere")
    ks = list(ks)
    if any(k < 1 for k in ks) or any(b <= a for a, b in zip(ks[:-1], ks[1:])):
        raise ValueError("ks must be strictly increasing integers >= 1")
    return sphere_chain(omega, x0, [R / k for k in ks], ks, dims, strict, graded=graded)


# --------------------------------------------------------------------------
# validation

@dataclass
class ChainReport:
    cross_set_ok: bool
    separation_ok: bool
    diam_trend_ok: bool
    mod_finite_ok: bool
    mod_vanish_ok: bool
    uniform_domain: Optional[bool] = None
    separations: list = field(default_factory=list)
    diameters: list = field(default_factory=list)
    diam_limit: float = math.nan
    mod_indices: list = field(default_factory=list)
    mod_values: list = field(default_factory=list)
    mod_limit: float = math.nan

    @property
    def passed(self) -> bool:
        return (self.cross_set_ok and self.separation_ok and self.diam_trend_ok
                and self.mod_finite_ok and self.mod_vanish_ok)

    def to_dict(self) -> dict:
        d = {k: v for k, v in self.__dict__.items()}
        d["passed"] = self.passed
        return d


def decay_exponent(indices, values, n: int = 3) -> float:
    """Least-squares ``beta`` of ``values ~ C k^-beta`` over the last ``n`` points."""
    k = np.asarray(indices[-n:], dtype=float)
    y = np.asarray(values[-n:], dtype=float)
    if len(k) < 2 or np.any(y <= 0):
        return math.inf if np.all(y <= 0) else 0.0
    return float(-np.polyfit(np.log(k), np.log(y), 1)[0])


def _tail_limit(indices, values, n: int = 3, log: bool = False) -> float:
    """Intercept at ``x = 0`` of a line through the last ``n`` points, with
    ``x = 1/k`` or, for ``log``, ``x = 1/log(1 + k)``."""
    k = np.asarray(indices[-n:], dtype=float)
    x = 1.0 / np.log1p(k) if log else 1.0 / k
    y = np.asarray(values[-n:], dtype=float)
    if len(x) < 2:
        return float(y[-1])
    return float(np.polyfit(x, y, 1)[1])


def reference_continuum(omega: Domain, avoid: Sequence[np.ndarray] = ()) -> np.ndarray:
    """Samples of a small closed ball deep inside ``omega`` that misses ``avoid``."""
    if omega.name == "ball":
        c, R = _ball_params(omega)
        center, rad = c, R / 4
    else:
        ras = Raster(omega, dims=32)
        pts = ras.world_centers(ras.inside)
        pts = pts[:: max(1, len(pts) // 2000)]
        d = omega.distance_to_boundary(pts)
        center, rad = pts[np.argmax(d)], 0.4 * float(d.max())
    for _ in range(20):
        F = sphere_samples(center, rad, 9, 16)
        if all(len(a) == 0 or set_distance(a, F) > 0.25 * rad for a in avoid):
            return F
        rad /= 2
    return F


def chain_validate(c: ChainApprox, omega: Optional[Domain] = None, mod_budget: int = 64,
                   seed: int = 0, n_mod: int = 4, sep_tol: float = 1e-7,
                   burn_in: int = 0, grid_dims: int = 32) -> ChainReport:
    """Finite-depth checks of the chain conditions.

    * ``cross_set_ok``: every cross-set splits the domain into two sides that
      both reach the boundary.
    * ``separation_ok``: consecutive sampled cross-sets are more than
      ``sep_tol`` apart (the height term puts rounding of order
      ``sqrt(eps)`` into ``d_H``).
    * ``diam_trend_ok``: diameters do not increase after ``burn_in`` and
      either their extrapolation to ``1/k = 0`` is below a quarter of the last
      value plus two pitches or they decay at least like ``k^-1/4`` over the
      last three indices (slower power laws arise under non-contact maps).
    * ``mod_finite_ok``: positive separation in a domain not known to be
      non-uniform (in uniform domains the two are equivalent; the uniformity
      flag is reported separately).
    * ``mod_vanish_ok``: the seeded Loewner estimate between cross-sets and a
      fixed small ball decreases along ``n_mod`` chain indices, drops below
      a quarter of its first value, and its extrapolation to
      ``1/log(1 + k) = 0`` is below a quarter of the last value. Moduli of
      shrinking cross-sets decay like a power of ``1/log k``, hence the variable.
      ``mod_budget`` is the number of curves per estimate; ``0`` skips it
      (verdict ``False``).
    """
    omega = omega or c.domain
    if len(c) < 3:
        raise ValueError("chain_validate needs at least three cross-sets")
    h = omega.resolution
    cross_ok = all(e.valid for e in c.cross_sets)
    sep_ok = all(s > sep_tol for s in c.separations)
    d = np.asarray(c.diameters[burn_in:])
    mono = bool(np.all(np.diff(d) <= 2 * h + 1e-12))
    dlim = _tail_limit(c.indices[burn_in:], d)
    diam_ok = bool(mono and (dlim <= 0.25 * d[-1] + 2 * h
                             or decay_exponent(c.indices[burn_in:], d) >= 0.25))
    finite_ok = sep_ok and omega.uniform is not False

    mod_idx, vals, mlim, vanish = [], [], math.nan, False
    if mod_budget > 0:
        ks = np.asarray(c.indices, dtype=float)
        want = np.geomspace(ks[0], ks[-1], n_mod)
        pick = sorted({int(np.argmin(np.abs(ks - w))) for w in want})
        F = reference_continuum(omega, [c.cross_sets[i].points for i in pick])
        # modulus is invariant under left translation: work in the anchor frame,
        # where small balls about the anchor are axis-aligned boxes
        back = np.asarray(inverse(c.anchor))
        local = omega.translated(back)
        F = multiply(back, F)
        s_min = min(c.cross_sets[i].scale for i in pick)
        width = (s_min / 4, s_min / 4, s_min * s_min / 4)
        grid = GridSpec((grid_dims,) * 3, bbox=local.bbox, focus=(0.0, 0.0, 0.0), min_width=width)
        for i in pick:
            E = multiply(back, c.cross_sets[i].points)
            E = E[:: max(1, len(E) // 400)]
            try:
                v = loewner_estimate(E, F, local, mod_budget, seed, grid)
            except FamilyEmpty:
                v = 0.0
            mod_idx.append(c.indices[i])
            vals.append(v)
        if len(vals) >= 2:
            dec = all(b <= 1.05 * a for a, b in zip(vals[:-1], vals[1:]))
            mlim = _tail_limit(mod_idx, vals, log=True)
            vanish = bool(dec and vals[-1] <= 0.25 * vals[0] and mlim <= 0.25 * vals[-1])
    return ChainReport(cross_ok, sep_ok, diam_ok, finite_ok, vanish, omega.uniform,
                       list(c.separations), list(c.diameters), dlim, mod_idx, vals, mlim)


# --------------------------------------------------------------------------
# impressions and equivalence

@dataclass
class Impression:
    points: np.ndarray = field(repr=False)
    diameter: float
    center: Optional[np.ndarray]
    singleton: bool
    tolerance: float
    cells: np.ndarray = field(repr=False)


def _cell_size(raster: Raster, mask: np.ndarray) -> float:
    wx, wy, wt = raster.widths()
    i, j, k = np.nonzero(mask)
    if len(i) == 0:
        return 0.0
    return float(max(wx[i].max(), wy[j].max(), np.sqrt(wt[k]).max()))


def nominal_scale(c: ChainApprox) -> float:
    """``s0 / k_max``: first scale times first index over last index."""
    return c.cross_sets[0].scale * float(c.indices[0]) / float(c.indices[-1])


def minimax_center(pts: np.ndarray) -> np.ndarray:
    """Sample minimising the largest distance to the other samples."""
    best, val = pts[0], math.inf
    for p in pts:
        m = float(dist_h(p, pts).max())
        if m < val:
            best, val = p, m
    return best


def impression_estimate(c: ChainApprox) -> Impression:
    """Boundary cells in the closure of every ``D(E_k)``.

    The singleton verdict uses the tolerance ``2 * cell size + 2 * s0 / k_max``
    with ``s0`` the scale at index 1 (``2 / k_max`` for canonical unit-ball
    chains).
    """
    ras = c.raster
    mask = ras.boundary.copy()
    for e in c.cross_sets:
        mask &= ndimage.binary_dilation(e.inner, FULL)
    pts = ras.world_centers(mask)
    diam = set_diameter(pts) if len(pts) > 1 else 0.0
    tol = 2 * max(_cell_size(ras, mask), c.domain.resolution) + 2 * nominal_scale(c)
    center = minimax_center(pts[:: max(1, len(pts) // 500)]) if len(pts) else None
    return Impression(pts, diam, center, bool(len(pts) and diam <= tol), tol, mask)


def _contained(e_points: np.ndarray, cross: "CrossSetApprox") -> bool:
    """Are all samples of a cross-set inside the rasterised ``D(E)`` of ``cross``?"""
    if len(e_points) == 0:
        return False
    ras = cross.raster
    zone = ndimage.binary_dilation(cross.inner, FULL) & ~cross.cells
    ijk = ras.cell_of(e_points)
    return bool(np.all(zone[ijk[:, 0], ijk[:, 1], ijk[:, 2]]))


def _tail_in(c1: ChainApprox, c2: ChainApprox, depth: int) -> bool:
    last = c2.cross_sets[-1]
    comparable = [i for i, d in enumerate(c1.diameters) if c2.diameters[-1] <= d / 2]
    if len(comparable) < depth:
        raise InsufficientDepth(f"only {len(comparable)} comparable cross-sets (need {depth})")
    return all(_contained(last.points, c1.cross_sets[i]) for i in comparable)


def chains_equivalent(c1: ChainApprox, c2: ChainApprox, depth: int = 3) -> bool:
    """Finite-depth equivalence: the deepest cross-set of each chain lies in
    ``D(E_k)`` of the other for every ``E_k`` at least twice its diameter.

    Raises
    ------
    InsufficientDepth
        If fewer than ``depth`` such ``E_k`` exist on either side.
    """
    return _tail_in(c1, c2, depth) and _tail_in(c2, c1, depth)


def local_scale(m: QcMap, c: ChainApprox) -> float:
    pts = c.cross_sets[-1].points
    img = np.asarray(m(pts))
    return float(np.median(dist_h(np.asarray(m(c.anchor)), img) / dist_h(c.anchor, pts)))


def image_shear(m: QcMap, p, h: float = 1e-5) -> np.ndarray:
    """Slope ``a`` of the plane ``w_t = a . w_z`` spanned by the images of the
    horizontal directions at ``p`` (frame of ``m(p)``); zero for contact maps."""
    p = np.asarray(p, dtype=float)
    back = np.asarray(inverse(m(p)))
    cols = []
    for e in ((h, 0.0, 0.0), (0.0, h, 0.0)):
        fwd = np.asarray(multiply(back, np.asarray(m(multiply(p, np.array(e))))))
        bwd = np.asarray(multiply(back, np.asarray(m(multiply(p, -np.array(e))))))
        cols.append((fwd - bwd) / (2 * h))
    J = np.column_stack(cols)
    return np.linalg.solve(J[:2].T, J[2])


def map_chain(m: QcMap, c: ChainApprox, omega: Optional[Domain] = None, strict: bool = False) -> ChainApprox:
    """Image chain ``f(E_k)`` in ``f(omega)``, re-rasterised and re-analysed.

    Raises
    ------
    MapUndefined
        If ``m`` is undefined on a cross-set sample or on the domain.
    """
    omega = omega or c.domain
    pts_all = [e.points for e in c.cross_sets]
    img_pts = [safe_apply(m, p) if len(p) else p for p in pts_all]
    if any(np.any(~np.isfinite(p)) for p in img_pts) or not np.all(np.isfinite(safe_apply(m, c.anchor))):
        raise MapUndefined("map undefined on a cross-set")
    image = omega.mapped(m)
    scale = local_scale(m, c)
    image = Domain(image.membership, image.bbox, omega.resolution * scale, image.name,
                   image.params, image.boundary_sampler, image.uniform)
    anchor = np.asarray(m(c.anchor), dtype=float)
    wx, wy, wt = c.raster.min_width
    raster = Raster(image, anchor, c.raster.dims, min_width=(wx * scale, wy * scale, wt * scale ** 2),
                    shear=image_shear(m, c.anchor))
    inv = m.inverse()
    sets = []
    for e, p in zip(c.cross_sets, img_pts):
        g = (lambda q, g0=e.levelset: np.where(np.all(np.isfinite(b := safe_apply(inv, q)), axis=1),
                                               g0(np.nan_to_num(b)), 1.0))
        restrict = None
        if e.restrict is not None:
            inner_img = raster.mask_of_points(safe_apply(m, e.raster.world_centers(e.inner)))
            restrict = ndimage.binary_dilation(inner_img, FULL, iterations=2)
        s = rasterize_cross_set(raster, g, p, e.scale * scale, restrict)
        if strict and not s.valid:
            raise ResolutionTooCoarse("image cross-set failed validation")
        sets.append(s)
    return ChainApprox(sets, image, raster, anchor, list(c.indices))


# --------------------------------------------------------------------------
# end-cuts

@dataclass
class EndCut:
    curve: SampledCurve
    chain: ChainApprox
    representatives: np.ndarray = field(repr=False)


class _MaskDomain:
    """Membership restricted to a cell mask of a raster."""

    def __init__(self, omega: Domain, raster: Raster, mask: np.ndarray):
        self.omega, self.raster, self.mask = omega, raster, mask

    def contains(self, q):
        q = np.atleast_2d(q)
        ijk = self.raster.cell_of(q)
        return self.omega.contains(q) & self.mask[ijk[:, 0], ijk[:, 1], ijk[:, 2]]


def end_cut_from_point(omega: Domain, x, rs: Sequence[float], dims: int = 64, side: int = 0,
                       seed: int = 0, max_tries: int = 100, n_alpha: int = 31,
                       n_theta: int = 64) -> EndCut:
    """End-cut to a boundary point through nested components of ``omega & B(x, r)``.

    ``side`` picks among the components reaching ``x`` at the first radius
    (ordered by size, largest first).

    Raises
    ------
    NotAccessible
        If the nested components lose contact with ``x`` or a junction cannot
        be joined inside its component within ``max_tries``.
    """
    x = np.asarray(x, dtype=float)
    rs = list(rs)
    if any(b >= a for a, b in zip(rs[:-1], rs[1:])):
        raise ValueError("radii must decrease")
    h = rs[-1] / 6
    ras = Raster(omega, x, dims, min_width=(h, h, h * h))
    centers = ras.world_centers()
    dist_x = dist_h(x, centers).reshape(ras.dims)
    depth = ndimage.distance_transform_edt(ras.inside)
    comps, prev = [], None
    for n, r in enumerate(rs):
        g = _sphere_levelset(x, r)
        free = ras.inside & ~ras.straddle(g) & (dist_x < r)
        labels, _ = label_components(free)
        reach = dist_x <= max(2 * omega.resolution, 0.25 * r)
        ids = [i for i in np.unique(labels[reach & (labels > 0)])]
        if prev is not None:
            ids = [i for i in ids if np.any((labels == i) & prev)]
        if not ids:
            raise NotAccessible(f"no component of B(x, {r:g}) reaches x inside the previous one")
        ids.sort(key=lambda i: -int(np.sum(labels == i)))
        pick = ids[min(side, len(ids) - 1)] if n == 0 else ids[0]
        prev = labels == pick
        comps.append(prev)
    reps = []
    for n, D in enumerate(comps):
        lo = rs[n + 1] if n + 1 < len(rs) else rs[n] / 2
        band = D & (dist_x >= lo) & (dist_x <= rs[n])
        if not band.any():
            band = D
        score = np.where(band, depth, -1.0)
        reps.append(centers[int(np.argmax(score))])
    reps = np.asarray(reps)
    rng = np.random.default_rng(seed)
    pieces = []
    targets = list(reps[1:]) + [x]
    for n, (p, q) in enumerate(zip(reps, targets)):
        region = _MaskDomain(omega, ras, ndimage.binary_dilation(comps[n], FULL) & ras.inside)
        piece = join_curve(p, q, region, rng, max_tries)
        if piece is None:
            raise NotAccessible(f"junction {n} could not be joined inside its component")
        pieces.append(piece.nodes if n == 0 else piece.nodes[1:])
    nodes = np.vstack(pieces)
    curve = SampledCurve(nodes, np.linspace(0.0, 1.0, len(nodes)))
    specs, hints = [], []
    for D, r in zip(comps, rs):
        pts = sphere_samples(x, r, n_alpha, n_theta)
        near = ndimage.binary_dilation(D, FULL, iterations=2)
        ijk = ras.cell_of(pts)
        keep = omega.contains(pts) & near[ijk[:, 0], ijk[:, 1], ijk[:, 2]]
        specs.append((_sphere_levelset(x, r), pts[keep], r))
        hints.append(D)
    sets = [rasterize_cross_set(ras, g, p, s, ndimage.binary_dilation(D, FULL), D)
            for (g, p, s), D in zip(specs, hints)]
    chain = ChainApprox(sets, omega, ras, x, [rs[0] / r for r in rs])
    return EndCut(curve, chain, reps)


# --------------------------------------------------------------------------
# uniformity

@dataclass
class UniformityReport:
    """Best constants found over all pairs: ``l(g) <= beta_hat d_H(x, y)`` and
    ``alpha_hat min(l(g_xz), l(g_zy)) <= dist_H(z, boundary)`` along each witness."""

    alpha_hat: float
    beta_hat: float
    witnesses: list = field(repr=False)

    @property
    def inv_alpha_hat(self) -> float:
        return 1.0 / self.alpha_hat if self.alpha_hat > 0 else math.inf

    def to_dict(self) -> dict:
        return {"alpha_hat": self.alpha_hat, "inv_alpha_hat": self.inv_alpha_hat,
                "beta_hat": self.beta_hat, "witnesses": self.witnesses}


def _curve_scores(nodes: np.ndarray, d_xy: float, bdist: np.ndarray):
    seg = dist_h(nodes[:-1], nodes[1:])
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    inner = slice(1, len(nodes) - 1)
    cigar = np.minimum(cum, total - cum)[inner] / np.maximum(bdist[inner], 1e-300)
    return total / d_xy, float(cigar.max()) if len(cigar) else 0.0


_ASPECTS = (1.0, 4.0, 16.0, 64.0)


def _candidate(x, y, k, rng, n):
    """Candidate ``k``: the geodesic for ``k = 0``, else a lifted Bezier
    shape closed in height by one loop; the loop cycles through aspect
    ratios and eight directions so thin regions can be threaded."""
    if k == 0:
        return geodesic(x, y, n).nodes
    planar = _bezier(x[:2], y[:2], rng, 0.1 * (1 + k / 8), n)
    aspect = _ASPECTS[k % 4]
    angle = None if aspect == 1.0 else math.pi / 4 * ((k // 4) % 8)
    planar = _with_loops(planar, x[2], y[2], rng, 1, aspect=aspect, angle=angle)
    nodes = horizontal_lift(planar, x[2]).nodes
    if abs(nodes[-1, 2] - y[2]) > 1e-9 * max(1.0, abs(y[2])):
        return None
    nodes[-1] = y
    return nodes


def uniformity_check(omega: Domain, pairs, budget: int = 40, seed: int = 0, n: int = 97) -> UniformityReport:
    """Search horizontal curves per pair minimising ``max(l / d_H, cigar ratio)``.

    Candidates are the geodesic and ``budget`` lifted shapes; only those
    inside ``omega`` count.  The constants are upper-bound witnesses: they
    never certify that a domain is not uniform.

    Raises
    ------
    BudgetExhausted
        If no candidate stays inside ``omega`` for some pair.
    """
    boundary = omega.boundary_points()
    witnesses = []
    for j, (x, y) in enumerate(pairs):
        x, y = np.asarray(x, float), np.asarray(y, float)
        rng = np.random.default_rng([seed, j])
        d_xy = float(dist_h(x, y))
        best = None
        for k in range(budget + 1):
            nodes = _candidate(x, y, k, rng, n)
            if nodes is None or not np.all(omega.contains(nodes)):
                continue
            beta, cigar = _curve_scores(nodes, d_xy, nearest_distances(nodes, boundary))
            if best is None or max(beta, cigar) < max(best["beta"], best["cigar"]):
                best = {"pair": (x.tolist(), y.tolist()), "beta": float(beta), "cigar": cigar,
                        "candidate": k, "length": float(beta * d_xy)}
        if best is None:
            raise BudgetExhausted(f"pair {j}: no candidate curve stays inside the domain")
        witnesses.append(best)
    worst = max(w["cigar"] for w in witnesses)
    return UniformityReport(1.0 / worst if worst > 0 else math.inf,
                            max(w["beta"] for w in witnesses), witnesses)
