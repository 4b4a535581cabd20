"""Implicit domains and their rasterisation on anchored cell grids.

A :class:`Domain` is a vectorised membership predicate with a bounding box.
Connectivity questions are answered on a :class:`Raster`: a tensor-product
cell grid laid out in the left-translated frame ``w = anchor^-1 q`` of an
anchor point.  In that frame Korányi balls about the anchor are the
axis-aligned ``|w_z| <= r``, ``|w_t| <= r^2``, so grading the cells towards
``w = 0`` (with the ``t`` widths on the squared scale) resolves small balls
about the anchor without a dense grid everywhere.
"""

from __future__ import annotations

import ast
import math
import operator
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import ndimage

from .errors import InversionAtOrigin, MapUndefined, ResolutionTooCoarse
from .group import ORIGIN, QcMap, dist_h, inverse, multiply, nearest_distances
from .modulus import graded_edges, grading_for_width
from .polar import sphere_points

FACE = ndimage.generate_binary_structure(3, 1)
FULL = ndimage.generate_binary_structure(3, 3)


def sphere_samples(center, radius: float, n_alpha: int = 31, n_theta: int = 64) -> np.ndarray:
    """Points of the Korányi sphere ``S(center, radius)``.

    The ``alpha`` grid is symmetric with ``alpha = 0`` included and the
    ``theta`` grid starts at 0, so the horizontal points ``center * (+-r, 0, 0)``
    are always samples; the two poles are appended.
    """
    a = np.linspace(-math.pi / 2, math.pi / 2, n_alpha + 2)[1:-1]
    th = np.linspace(0.0, 2.0 * math.pi, n_theta, endpoint=False)
    u = sphere_points(a[:, None], th[None, :]).reshape(-1, 3)
    u = np.vstack([u, [[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]]])
    u = u * np.array([radius, radius, radius * radius])
    return multiply(np.asarray(center, dtype=float), u)


def _ball_bbox(center, radius: float) -> np.ndarray:
    pts = sphere_samples(center, radius, 61, 96)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    pad = 0.02 * (hi - lo)
    return np.column_stack([lo - pad, hi + pad])


@dataclass(frozen=True, eq=False)
class Domain:
    """Open set given by a membership predicate on ``(m, 3)`` arrays.

    ``resolution`` is the working grid pitch (in ``d_H`` units) near the
    points that experiments focus on.  ``uniform`` records whether the
    fixture is known to be a uniform domain (``None``: unknown).
    """

    membership: Callable[[np.ndarray], np.ndarray]
    bbox: np.ndarray
    resolution: float = 0.01
    name: str = "custom"
    params: dict = field(default_factory=dict)
    boundary_sampler: Optional[Callable[[], np.ndarray]] = None
    uniform: Optional[bool] = None

    def __post_init__(self):
        box = np.asarray(self.bbox, dtype=float)
        if box.shape != (3, 2) or np.any(box[:, 1] <= box[:, 0]):
            raise ValueError("bbox must be three increasing (lo, hi) pairs")
        if not self.resolution > 0:
            raise ValueError("resolution must be positive")
        object.__setattr__(self, "bbox", box)

    def contains(self, pts):
        a = np.asarray(pts, dtype=float)
        if a.ndim == 1:
            return bool(self.membership(a[None, :])[0])
        flat = a.reshape(-1, 3)
        box = np.all((flat >= self.bbox[:, 0]) & (flat <= self.bbox[:, 1]), axis=1)
        out = np.zeros(len(flat), dtype=bool)
        if box.any():
            out[box] = np.asarray(self.membership(flat[box]), dtype=bool)
        return out.reshape(a.shape[:-1])

    def boundary_points(self) -> np.ndarray:
        """Samples of the boundary (sampler if given, else raster cell centres)."""
        if self.boundary_sampler is not None:
            return self.boundary_sampler()
        r = Raster(self, dims=48)
        return r.to_world(r.centers()[r.boundary.ravel()])

    def distance_to_boundary(self, pts) -> np.ndarray:
        return nearest_distances(pts, self.boundary_points())

    def mapped(self, m: QcMap, n: int = 40) -> "Domain":
        """Image domain ``m(self)`` (membership through ``m^-1``)."""
        inv = m.inverse()
        g = [np.linspace(lo, hi, n) for lo, hi in self.bbox]
        grid = np.stack(np.meshgrid(*g, indexing="ij"), axis=-1).reshape(-1, 3)
        pts = np.vstack([grid[self.contains(grid)], self.boundary_points()])
        try:
            img = np.asarray(m(pts), dtype=float)
        except InversionAtOrigin as exc:
            raise MapUndefined(f"map undefined on the domain: {exc}") from exc
        if not np.all(np.isfinite(img)):
            raise MapUndefined("map sends domain points to infinity")
        lo, hi = img.min(axis=0), img.max(axis=0)
        pad = 0.05 * (hi - lo) + self.resolution
        box = np.column_stack([lo - pad, hi + pad])
        # the domain must stay bounded: its image of the box grid should not blow up
        if np.any(hi - lo > 1e3 * max(1.0, float(np.max(self.bbox[:, 1] - self.bbox[:, 0])))):
            raise MapUndefined("image domain is unbounded at the working resolution")
        member = self.membership

        def membership(q):
            back = safe_apply(inv, q)
            return member(back) & np.all(np.isfinite(back), axis=1)

        sampler = None
        if self.boundary_sampler is not None:
            src = self.boundary_sampler
            sampler = lambda: np.asarray(m(src()), dtype=float)  # noqa: E731
        return Domain(membership, box, self.resolution, f"{self.name}|mapped",
                      {"base": self.params, "map": repr(m)}, sampler, self.uniform)

    def translated(self, by) -> "Domain":
        """Left translate ``by * self`` (an isometric copy)."""
        by = np.asarray(by, dtype=float)
        back = np.asarray(inverse(by))
        member = self.membership
        sampler = None
        if self.boundary_sampler is not None:
            src = self.boundary_sampler
            sampler = lambda: multiply(by, src())  # noqa: E731
        return Domain(lambda q: member(multiply(back, q)), frame_box(self.bbox, back),
                      self.resolution, self.name + "|translated",
                      {"base": self.params, "by": by.tolist()}, sampler, self.uniform)

    def to_dict(self) -> dict:
        return {"type": self.name, **self.params, "resolution": self.resolution}


def safe_apply(m, q) -> np.ndarray:
    """Apply ``m`` to rows of ``q``; rows where it is undefined become NaN."""
    q = np.atleast_2d(np.asarray(q, dtype=float))
    try:
        return np.asarray(m(q), dtype=float)
    except InversionAtOrigin:
        if len(q) == 1:
            return np.full((1, 3), np.nan)
        h = len(q) // 2
        return np.vstack([safe_apply(m, q[:h]), safe_apply(m, q[h:])])


# --------------------------------------------------------------------------
# fixtures

def ball(center=ORIGIN, radius: float = 1.0, resolution: float = 0.01) -> Domain:
    c = np.asarray(center, dtype=float)
    member = lambda q: dist_h(c, q) < radius  # noqa: E731
    sampler = lambda: sphere_samples(c, radius, 41, 80)  # noqa: E731
    return Domain(member, _ball_bbox(c, radius), resolution, "ball",
                  {"center": c.tolist(), "radius": radius}, sampler, True)


def slit_ball(center=ORIGIN, radius: float = 1.0, width: float = 0.04,
              resolution: float = 0.01) -> Domain:
    """Ball minus the thickened half-plane ``{w_x >= 0, |w_y| <= width/2}``
    (``w`` in the frame of the centre).  The slit meets the sphere along the
    arc through ``center * (radius, 0, 0)``."""
    c = np.asarray(center, dtype=float)
    cinv = np.asarray(inverse(c))

    def slit(q):
        w = multiply(cinv, q)
        return (w[:, 0] >= 0) & (np.abs(w[:, 1]) <= width / 2)

    def member(q):
        return (dist_h(c, q) < radius) & ~slit(q)

    def sampler():
        sph = sphere_samples(c, radius, 41, 80)
        sph = sph[~slit(sph)]
        u = np.linspace(0, radius, 40)
        t = np.linspace(-radius ** 2, radius ** 2, 40)
        uu, tt = np.meshgrid(u, t, indexing="ij")
        faces = []
        for side in (-0.5, 0.5):
            w = np.column_stack([uu.ravel(), np.full(uu.size, side * width), tt.ravel()])
            faces.append(multiply(c, w))
        faces = np.vstack(faces)
        faces = faces[dist_h(c, faces) < radius]
        return np.vstack([sph, faces])

    return Domain(member, _ball_bbox(c, radius), resolution, "slit_ball",
                  {"center": c.tolist(), "radius": radius, "width": width}, sampler, False)


def cusp(length: float = 0.5, kappa: float = 0.8, resolution: float = 0.01) -> Domain:
    """Unit ball with an outward spike along the positive ``x`` axis.

    The spike is ``{x < 1 + length, sqrt(y^2 + t^2) < kappa (1 + length - x)^2}``;
    its tip ``(1 + length, 0, 0)`` is an outward cusp.
    """
    tip = 1.0 + length

    def spike(q):
        return (q[:, 0] < tip) & (np.hypot(q[:, 1], q[:, 2]) < kappa * np.clip(tip - q[:, 0], 0, None) ** 2)

    def member(q):
        return (dist_h(ORIGIN, q) < 1.0) | spike(q)

    def sampler():
        sph = sphere_samples(ORIGIN, 1.0, 41, 80)
        sph = sph[~spike(sph)]
        x = np.linspace(0.5, tip, 120)[:, None]
        phi = np.linspace(0, 2 * math.pi, 48, endpoint=False)[None, :]
        rad = kappa * (tip - x) ** 2
        surf = np.stack(np.broadcast_arrays(x, rad * np.cos(phi), rad * np.sin(phi)), axis=-1).reshape(-1, 3)
        surf = surf[dist_h(ORIGIN, surf) >= 1.0]
        return np.vstack([sph, surf, [[tip, 0.0, 0.0]]])

    box = np.array([[-1.05, tip + 0.05], [-1.05, 1.05], [-1.05, 1.05]])
    return Domain(member, box, resolution, "cusp", {"length": length, "kappa": kappa},
                  sampler, False)


_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_UNARY = {ast.USub: operator.neg, ast.UAdd: operator.pos}
_FUNCS = {"sqrt": np.sqrt, "abs": np.abs, "exp": np.exp, "log": np.log, "sin": np.sin,
          "cos": np.cos, "tan": np.tan, "arctan2": np.arctan2, "hypot": np.hypot,
          "minimum": np.minimum, "maximum": np.maximum}
_CONSTS = {"pi": math.pi, "e": math.e}


def compile_expression(expr: str) -> Callable[[np.ndarray], np.ndarray]:
    """Compile an arithmetic expression in ``x, y, t`` to a vectorised function.

    Only numbers, the variables, ``+ - * / **``, and a fixed set of numpy
    functions are accepted.
    """
    tree = ast.parse(expr, mode="eval")

    def ev(node, env):
        if isinstance(node, ast.Expression):
            return ev(node.body, env)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return node.value
        if isinstance(node, ast.Name):
            if node.id in env:
                return env[node.id]
            if node.id in _CONSTS:
                return _CONSTS[node.id]
            raise ValueError(f"unknown name {node.id!r} in expression")
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left, env), ev(node.right, env))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
            return _UNARY[type(node.op)](ev(node.operand, env))
        if (isinstance(node, ast.Call) and isinstance(node.func, ast.Name)
                and node.func.id in _FUNCS and not node.keywords):
            return _FUNCS[node.func.id](*(ev(a, env) for a in node.args))
        raise ValueError(f"unsupported syntax in expression: {ast.dump(node)[:60]}")

    def f(q):
        q = np.asarray(q, dtype=float)
        return np.broadcast_to(ev(tree, {"x": q[..., 0], "y": q[..., 1], "t": q[..., 2]}),
                               q.shape[:-1])

    f(np.zeros((1, 3)))  # surface syntax errors at construction time
    return f


def custom_implicit(expr: str, bbox, resolution: float = 0.01) -> Domain:
    """Domain ``{f(x, y, t) < 0}`` inside ``bbox`` for an arithmetic expression ``f``."""
    f = compile_expression(expr)
    member = lambda q: f(q) < 0  # noqa: E731
    return Domain(member, np.asarray(bbox, dtype=float), resolution, "custom_implicit",
                  {"expr": expr, "bbox": np.asarray(bbox, dtype=float).tolist()})


def domain_from_config(cfg: dict) -> Domain:
    cfg = dict(cfg)
    kind = cfg.pop("type")
    res = cfg.pop("resolution", 0.01)
    if kind == "ball":
        return ball(cfg.get("center", (0, 0, 0)), cfg.get("radius", 1.0), res)
    if kind == "slit_ball":
        return slit_ball(cfg.get("center", (0, 0, 0)), cfg.get("radius", 1.0), cfg.get("width", 0.04), res)
    if kind == "cusp":
        return cusp(cfg.get("length", 0.5), cfg.get("kappa", 0.8), res)
    if kind == "custom_implicit":
        return custom_implicit(cfg["expr"], cfg["bbox"], res)
    raise ValueError(f"unknown domain type {kind!r}")


# --------------------------------------------------------------------------
# rasters

def frame_box(box: np.ndarray, anchor) -> np.ndarray:
    """Bounding box of ``anchor^-1 * box`` (left translation is affine)."""
    corners = np.array(np.meshgrid(*box, indexing="ij")).reshape(3, -1).T
    w = multiply(np.asarray(inverse(anchor)), corners)
    return np.column_stack([w.min(axis=0), w.max(axis=0)])


class Raster:
    """Cell grid in the frame of ``anchor`` covering a domain.

    Parameters
    ----------
    domain : Domain
    anchor : point, optional
        Frame origin; cells are graded towards it.
    dims : int or 3-tuple
    min_width : 3-tuple, optional
        Frame cell widths at the anchor.  Defaults to
        ``(h, h, h^2)`` with ``h = domain.resolution``.
    box : (3, 2) array, optional
        Frame box; defaults to the frame image of the domain box.
    shear : pair, optional
        Grid coordinates are ``(w_x, w_y, w_t - a_x w_x - a_y w_y)``, which
        aligns the cells with the plane ``w_t = a . w_z`` (used for images
        of small balls under maps that tilt the horizontal plane).
    """

    def __init__(self, domain: Domain, anchor=ORIGIN, dims=64, min_width=None, box=None,
                 shear=(0.0, 0.0)):
        self.domain = domain
        self.anchor = np.asarray(anchor, dtype=float)
        self.shear = np.asarray(shear, dtype=float)
        self.dims = (int(dims),) * 3 if np.isscalar(dims) else tuple(int(d) for d in dims)
        if box is None:
            corners = np.array(np.meshgrid(*domain.bbox, indexing="ij")).reshape(3, -1).T
            u = self.to_frame(corners)
            box = np.column_stack([u.min(axis=0), u.max(axis=0)])
        box = np.asarray(box, dtype=float)
        self.box = box
        h = domain.resolution
        if min_width is None:
            min_width = (h, h, h * h)
        self.min_width = tuple(float(w) for w in min_width)
        edges = []
        for k in range(3):
            lo, hi = box[k]
            g = grading_for_width(lo, hi, self.dims[k], min_width[k], 0.0)
            edges.append(graded_edges(lo, hi, self.dims[k], g, 0.0))
        self.edges = tuple(edges)
        self.inside = domain.contains(self.to_world(self.centers())).reshape(self.dims)
        eroded = ndimage.binary_erosion(self.inside, FACE, border_value=0)
        self.boundary = self.inside & ~eroded

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.dims))

    def widths(self):
        return tuple(np.diff(e) for e in self.edges)

    def centers(self) -> np.ndarray:
        mids = [0.5 * (e[1:] + e[:-1]) for e in self.edges]
        return np.stack(np.meshgrid(*mids, indexing="ij"), axis=-1).reshape(-1, 3)

    def nodes(self) -> np.ndarray:
        return np.stack(np.meshgrid(*self.edges, indexing="ij"), axis=-1).reshape(-1, 3)

    def to_world(self, u) -> np.ndarray:
        w = np.array(u, dtype=float)
        w[..., 2] += w[..., :2] @ self.shear
        return multiply(self.anchor, w)

    def to_frame(self, q) -> np.ndarray:
        u = multiply(np.asarray(inverse(self.anchor)), np.asarray(q, dtype=float))
        u[..., 2] -= u[..., :2] @ self.shear
        return u

    def world_centers(self, mask=None) -> np.ndarray:
        c = self.centers()
        if mask is not None:
            c = c[np.asarray(mask).ravel()]
        return self.to_world(c)

    def cell_of(self, q) -> np.ndarray:
        """``(m, 3)`` integer cell indices of world points (clipped to the grid)."""
        w = np.atleast_2d(self.to_frame(q))
        idx = [np.clip(np.searchsorted(self.edges[k], w[:, k], side="right") - 1, 0, self.dims[k] - 1)
               for k in range(3)]
        return np.stack(idx, axis=1)

    def mask_of_points(self, q) -> np.ndarray:
        m = np.zeros(self.dims, dtype=bool)
        ijk = self.cell_of(q)
        m[ijk[:, 0], ijk[:, 1], ijk[:, 2]] = True
        return m

    def straddle(self, f: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        """Cells whose eight corner values of ``f`` do not share a strict sign."""
        g = np.asarray(f(self.to_world(self.nodes())), dtype=float)
        g = g.reshape(tuple(d + 1 for d in self.dims))
        corners = [g[i:i + self.dims[0], j:j + self.dims[1], k:k + self.dims[2]]
                   for i in (0, 1) for j in (0, 1) for k in (0, 1)]
        lo = np.minimum.reduce(corners)
        hi = np.maximum.reduce(corners)
        return (lo <= 0) & (hi >= 0)

    def sign_at_centers(self, f) -> np.ndarray:
        return np.sign(np.asarray(f(self.world_centers()), dtype=float)).reshape(self.dims)


def label_components(mask: np.ndarray):
    """Face-connected components of a boolean cell mask."""
    return ndimage.label(mask, structure=FACE)


@dataclass
class ComponentReport:
    count: int
    labels: np.ndarray
    ids: list
    raster: Raster = field(repr=False)
    sizes: list = field(default_factory=list)


def boundary_components(d: Domain, x, r: float, dims: int = 48) -> ComponentReport:
    """Components of ``d`` intersected with ``B(x, r)`` that reach ``x``.

    ``x`` should lie on the boundary.  A component reaches ``x`` when one of
    its cells lies within a few cell sizes (and at least ``2 * resolution``)
    of ``x``.
    """
    if r < 3 * d.resolution / 2:
        raise ResolutionTooCoarse(f"B(x, {r:g}) spans fewer than 3 cells of pitch {d.resolution:g}")
    x = np.asarray(x, dtype=float)
    box = np.array([[-1.05 * r, 1.05 * r], [-1.05 * r, 1.05 * r], [-1.1 * r * r, 1.1 * r * r]])
    dbox = frame_box(d.bbox, x)
    box = np.column_stack([np.maximum(box[:, 0], dbox[:, 0]), np.minimum(box[:, 1], dbox[:, 1])])
    if np.any(box[:, 1] <= box[:, 0]):
        raise ValueError("B(x, r) misses the domain box")
    widths = (box[:, 1] - box[:, 0]) / dims
    ras = Raster(d, x, dims, min_width=tuple(widths * 2), box=box)  # uniform at this size
    ball_mask = (dist_h(x, ras.world_centers()) < r).reshape(ras.dims)
    labels, n = label_components(ras.inside & ball_mask)
    cell = max(widths[0], widths[1], math.sqrt(widths[2]))
    reach = max(3.0 * cell, 2.0 * d.resolution)
    centers = ras.world_centers()
    near = (dist_h(x, centers) <= reach).reshape(ras.dims)
    ids = sorted(int(i) for i in np.unique(labels[near & (labels > 0)]))
    sizes = [int(np.sum(labels == i)) for i in ids]
    return ComponentReport(len(ids), labels, ids, ras, sizes)
