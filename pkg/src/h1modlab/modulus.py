"""Discrete p-modulus of curve families.

A density is piecewise constant on the cells of a box grid.  Each curve
contributes one linear constraint ``sum_c rho_c * len(curve in c) >= 1`` and
the objective is ``sum_c rho_c^p * vol(c)``.  The problem is solved through its
concave dual over per-curve multipliers ``mu >= 0``: for fixed ``mu`` the
optimal density is explicit,

    rho_c = ((L^T mu)_c / (p * vol_c)) ** (1 / (p - 1)),

and the dual function is ``sum(mu) - (p - 1) * sum(vol * rho^p)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import sparse
from scipy.optimize import brentq, minimize

from .curves import SampledCurve, as_curve, is_rectifiable
from .errors import GridTooCoarse, NotConverged

FEAS_TOL = 1e-6
ACTIVE_UPPER = 1e-3
MIN_PIECE = 1e-12


@dataclass
class CurveFamily:
    curves: list
    label: str = ""

    def __post_init__(self):
        self.curves = [as_curve(c) for c in self.curves]

    def __len__(self):
        return len(self.curves)

    def __iter__(self):
        return iter(self.curves)

    def union(self, other: "CurveFamily", label: str = "") -> "CurveFamily":
        return CurveFamily(self.curves + other.curves, label or f"{self.label}+{other.label}")

    def subfamily(self, idx: Iterable[int], label: str = "") -> "CurveFamily":
        return CurveFamily([self.curves[i] for i in idx], label or self.label)

    def mapped(self, f, label: str = "") -> "CurveFamily":
        return CurveFamily([c.mapped(f) for c in self.curves], label or self.label)

    def bbox(self) -> np.ndarray:
        pts = np.vstack([c.nodes for c in self.curves])
        return np.column_stack([pts.min(axis=0), pts.max(axis=0)])


def graded_edges(lo: float, hi: float, n: int, grading: float = 0.0, focus: float = 0.0) -> np.ndarray:
    """``n + 1`` cell edges on ``[lo, hi]``; ``grading > 0`` packs them
    towards ``focus`` with a ``sinh`` profile (cell size roughly proportional
    to the distance from ``focus`` away from it)."""
    if grading <= 0 or not lo < focus < hi:
        return np.linspace(lo, hi, n + 1)
    amp = max(focus - lo, hi - focus) / math.sinh(grading)
    v = np.linspace(math.asinh((lo - focus) / amp), math.asinh((hi - focus) / amp), n + 1)
    e = focus + amp * np.sinh(v)
    e[0], e[-1] = lo, hi
    return e


def grading_for_width(lo: float, hi: float, n: int, width: float, focus: float = 0.0) -> float:
    """Grading strength that makes the cell next to ``focus`` about ``width`` wide."""
    reach = max(focus - lo, hi - focus)
    if not lo < focus < hi or width >= (hi - lo) / n:
        return 0.0
    # near the focus the cell width is 2 c reach / (n sinh c) for a symmetric box
    f = lambda c: 2.0 * c * reach / (n * math.sinh(c)) - width  # noqa: E731
    return brentq(f, 1e-9, 700.0)


@dataclass
class GridSpec:
    """Grid layout.

    ``bbox`` rows are ``(lo, hi)`` for x, y, t; ``None`` means the family
    bounding box inflated by ``inflate``.  ``grading`` (scalar or one value per
    axis) packs cells towards ``focus``; ``0`` gives a uniform grid.
    ``min_width`` (one value per axis) overrides ``grading`` by choosing, per
    axis, the grading whose cell at the focus has that width.
    """

    dims: tuple = (32, 32, 32)
    bbox: Optional[np.ndarray] = None
    inflate: float = 0.05
    grading: object = 0.0
    focus: tuple = (0.0, 0.0, 0.0)
    min_width: Optional[tuple] = None

    def resolve(self, fam: Optional[CurveFamily] = None) -> np.ndarray:
        if self.bbox is not None:
            box = np.asarray(self.bbox, dtype=float)
        else:
            if fam is None or len(fam) == 0:
                raise ValueError("an explicit bbox is needed for an empty family")
            box = fam.bbox()
            pad = self.inflate * (box[:, 1] - box[:, 0])
            pad = np.where(pad > 0, pad, self.inflate)
            box = np.column_stack([box[:, 0] - pad, box[:, 1] + pad])
        if box.shape != (3, 2) or np.any(box[:, 1] <= box[:, 0]):
            raise ValueError("bbox must be three increasing (lo, hi) pairs")
        return box

    def build(self, fam: Optional[CurveFamily] = None) -> "DensityGrid":
        box = self.resolve(fam)
        grading = np.broadcast_to(np.asarray(self.grading, dtype=float), (3,))
        if self.min_width is not None:
            grading = [grading_for_width(box[k, 0], box[k, 1], int(self.dims[k]),
                                         self.min_width[k], self.focus[k]) for k in range(3)]
        edges = [graded_edges(box[k, 0], box[k, 1], int(self.dims[k]), grading[k], self.focus[k])
                 for k in range(3)]
        return DensityGrid.from_edges(edges)

    def to_dict(self) -> dict:
        g = np.asarray(self.grading, dtype=float)
        return {"dims": list(self.dims),
                "bbox": None if self.bbox is None else np.asarray(self.bbox).tolist(),
                "inflate": self.inflate, "grading": g.tolist(), "focus": list(self.focus),
                "min_width": None if self.min_width is None else list(self.min_width)}

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        return cls(tuple(d["dims"]), None if d.get("bbox") is None else np.asarray(d["bbox"]),
                   d.get("inflate", 0.05), d.get("grading", 0.0),
                   tuple(d.get("focus", (0.0, 0.0, 0.0))),
                   None if d.get("min_width") is None else tuple(d["min_width"]))


@dataclass
class DensityGrid:
    """Nonnegative piecewise-constant density on a tensor-product box grid.

    ``edges`` holds the cell boundaries along x, y and t; a uniform grid is
    described by ``bbox`` and ``dims`` alone.
    """

    bbox: np.ndarray
    dims: tuple
    values: np.ndarray
    edges: Optional[tuple] = None

    def __post_init__(self):
        self.bbox = np.asarray(self.bbox, dtype=float)
        self.dims = tuple(int(d) for d in self.dims)
        if self.edges is None:
            self.edges = tuple(np.linspace(self.bbox[k, 0], self.bbox[k, 1], self.dims[k] + 1)
                               for k in range(3))
            self.uniform = True
        else:
            self.edges = tuple(np.asarray(e, dtype=float) for e in self.edges)
            widths = [np.diff(e) for e in self.edges]
            self.uniform = all(np.allclose(w, w[0], rtol=1e-12, atol=0) for w in widths)
        if any(len(e) != d + 1 for e, d in zip(self.edges, self.dims)):
            raise ValueError("edges must have dims + 1 entries per axis")
        if any(np.any(np.diff(e) <= 0) for e in self.edges):
            raise ValueError("edges must be strictly increasing")
        self.values = np.asarray(self.values, dtype=float).reshape(self.dims)
        if np.any(self.values < 0):
            raise ValueError("density values must be nonnegative")

    @classmethod
    def zeros(cls, bbox, dims) -> "DensityGrid":
        return cls(bbox, dims, np.zeros(tuple(dims)))

    @classmethod
    def from_edges(cls, edges, values=None) -> "DensityGrid":
        edges = tuple(np.asarray(e, dtype=float) for e in edges)
        dims = tuple(len(e) - 1 for e in edges)
        bbox = np.array([[e[0], e[-1]] for e in edges])
        return cls(bbox, dims, np.zeros(dims) if values is None else values, edges)

    def with_values(self, values) -> "DensityGrid":
        return DensityGrid(self.bbox, self.dims, values, self.edges)

    @property
    def spacing(self) -> np.ndarray:
        return (self.bbox[:, 1] - self.bbox[:, 0]) / np.asarray(self.dims)

    @property
    def cell_volumes(self) -> np.ndarray:
        """Lebesgue volume of every cell, flattened in C order."""
        wx, wy, wt = (np.diff(e) for e in self.edges)
        return np.einsum("i,j,k->ijk", wx, wy, wt).ravel()

    @property
    def cell_volume(self) -> float:
        if not self.uniform:
            raise ValueError("graded grid: cells differ in volume, use cell_volumes")
        return float(np.prod(self.spacing))

    def fractional_index(self, x: np.ndarray, k: int) -> np.ndarray:
        """Continuous cell coordinate along axis ``k`` (integer at edges)."""
        e = self.edges[k]
        i = np.clip(np.searchsorted(e, x, side="right") - 1, 0, len(e) - 2)
        return i + (x - e[i]) / (e[i + 1] - e[i])

    def cell_index(self, pts) -> tuple:
        """Flat cell index of each point and a mask of points inside the box."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        ijk = np.stack([np.floor(self.fractional_index(pts[:, k], k)).astype(np.int64)
                        for k in range(3)], axis=1)
        dims = np.asarray(self.dims)
        inside = np.all((pts >= self.bbox[:, 0]) & (pts < self.bbox[:, 1]), axis=1)
        ijk = np.clip(ijk, 0, dims - 1)
        return np.ravel_multi_index(ijk.T, self.dims), inside

    def __call__(self, pts) -> np.ndarray:
        """Evaluate the piecewise-constant density; zero outside the box."""
        idx, inside = self.cell_index(pts)
        return np.where(inside, self.values.ravel()[idx], 0.0)

    def integral(self, p: float = 4.0) -> float:
        return math.fsum((self.values.ravel() ** p) * self.cell_volumes)

    def header(self) -> dict:
        head = {"dims": list(self.dims), "bbox": self.bbox.tolist(), "dtype": "<f8", "order": "C"}
        if self.uniform:
            head["cell_volume"] = self.cell_volume
        else:
            head["edges"] = [e.tolist() for e in self.edges]
        return head

    def export(self, path) -> None:
        """Write a one-line JSON header followed by little-endian float64 cells."""
        with open(path, "wb") as fh:
            fh.write((json.dumps(self.header()) + "\n").encode())
            fh.write(np.ascontiguousarray(self.values, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "DensityGrid":
        with open(path, "rb") as fh:
            head = json.loads(fh.readline().decode())
            data = np.frombuffer(fh.read(), dtype="<f8")
        edges = head.get("edges")
        return cls(np.asarray(head["bbox"]), tuple(head["dims"]), data.copy(),
                   None if edges is None else tuple(np.asarray(e) for e in edges))


@dataclass
class ModulusResult:
    value: float
    density: DensityGrid
    constraint_residuals: np.ndarray
    iterations: int
    converged: bool
    dual_value: float = math.nan
    multipliers: np.ndarray = field(default=None, repr=False)
    n_dropped: int = 0
    n_curves: int = 0

    @property
    def gap(self) -> float:
        if not math.isfinite(self.value) or self.value == 0:
            return 0.0
        return (self.value - self.dual_value) / self.value

    def certificates(self, active_tol: float = 1e-8) -> dict:
        """Feasibility, active-constraint and complementary-slackness checks."""
        if self.multipliers is None or len(self.constraint_residuals) == 0:
            return {"feasible": True, "active_ok": True, "cs_residual": 0.0,
                    "gap": self.gap, "n_active": 0}
        integrals = 1.0 + self.constraint_residuals
        mu = self.multipliers
        active = mu > active_tol * max(mu.max(), 1e-300)
        ok = bool(np.all((integrals[active] >= 1 - FEAS_TOL) & (integrals[active] <= 1 + ACTIVE_UPPER)))
        cs = float(np.max(mu * np.abs(self.constraint_residuals)) / max(mu.sum(), 1e-300))
        return {"feasible": bool(integrals.min() >= 1 - FEAS_TOL), "active_ok": ok,
                "cs_residual": cs, "gap": self.gap, "n_active": int(active.sum())}

    def summary(self) -> dict:
        cert = self.certificates()
        return {"value": self.value, "dual_value": self.dual_value, "iterations": self.iterations,
                "converged": self.converged, "n_curves": self.n_curves,
                "n_dropped": self.n_dropped, **cert}


# --------------------------------------------------------------------------
# curve / cell incidence

def _segments(curves: Sequence[SampledCurve]):
    starts, ends, lens, owner = [], [], [], []
    for i, c in enumerate(curves):
        if len(c) < 2:
            continue
        starts.append(c.nodes[:-1])
        ends.append(c.nodes[1:])
        lens.append(c.segment_lengths())
        owner.append(np.full(len(c) - 1, i))
    if not starts:
        return np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0), np.zeros(0, int)
    return np.vstack(starts), np.vstack(ends), np.concatenate(lens), np.concatenate(owner)


def incidence_matrix(curves: Sequence[SampledCurve], grid: DensityGrid) -> sparse.csr_matrix:
    """Sparse ``(n_curves, n_cells)`` matrix of curve arc length per cell.

    Each segment is treated as a straight piece in coordinates, clipped against
    the grid planes; its Heisenberg chord length is shared among the pieces in
    proportion to their parameter extent (exact for horizontal segments, which
    are left translates of horizontal lines).
    """
    a, b, seg_len, owner = _segments(curves)
    n_cells = int(np.prod(grid.dims))
    if len(a) == 0:
        return sparse.csr_matrix((len(curves), n_cells))
    ga = np.column_stack([grid.fractional_index(a[:, k], k) for k in range(3)])
    gb = np.column_stack([grid.fractional_index(b[:, k], k) for k in range(3)])
    seg_ids = [np.arange(len(a)), np.arange(len(a))]
    us = [np.zeros(len(a)), np.ones(len(a))]
    for k in range(3):
        lo = np.minimum(ga[:, k], gb[:, k])
        hi = np.maximum(ga[:, k], gb[:, k])
        first = np.floor(lo).astype(np.int64) + 1
        count = np.maximum(np.ceil(hi).astype(np.int64) - first, 0)
        if count.sum() == 0:
            continue
        sid = np.repeat(np.arange(len(a)), count)
        offs = np.arange(count.sum()) - np.repeat(np.cumsum(count) - count, count)
        plane = grid.edges[k][np.clip(first[sid] + offs, 0, grid.dims[k])]
        seg_ids.append(sid)
        us.append((plane - a[sid, k]) / (b[sid, k] - a[sid, k]))
    sid = np.concatenate(seg_ids)
    u = np.clip(np.concatenate(us), 0.0, 1.0)
    order = np.lexsort((u, sid))
    sid, u = sid[order], u[order]
    same = sid[1:] == sid[:-1]
    s0, u0, u1 = sid[:-1][same], u[:-1][same], u[1:][same]
    du = u1 - u0
    piece = du * seg_len[s0]
    keep = piece > MIN_PIECE
    s0, um, piece = s0[keep], 0.5 * (u0 + u1)[keep], piece[keep]
    mid = a[s0] + um[:, None] * (b[s0] - a[s0])
    cell, inside = grid.cell_index(mid)
    rows = owner[s0][inside]
    mat = sparse.coo_matrix((piece[inside], (rows, cell[inside])), shape=(len(curves), n_cells))
    return mat.tocsr()


# --------------------------------------------------------------------------
# solver

class _Dual:
    """Dual function of the discrete modulus problem and its closed-form primal."""

    def __init__(self, L: sparse.csr_matrix, vol: np.ndarray, p: float):
        self.L, self.LT, self.vol, self.p = L, L.T.tocsr(), vol, p
        self.q = 1.0 / (p - 1.0)

    def primal(self, mu):
        w = self.LT @ mu
        return np.power(np.maximum(w, 0.0) / (self.p * self.vol), self.q), w

    def value(self, mu):
        rho, _ = self.primal(mu)
        return math.fsum(mu) - (self.p - 1.0) * math.fsum(self.vol * rho ** self.p)

    def negdual(self, mu):
        rho, _ = self.primal(mu)
        g = mu.sum() - (self.p - 1.0) * np.dot(self.vol, rho ** self.p)
        return -g, -(1.0 - self.L @ rho)


def _newton_polish(dual: _Dual, mu: np.ndarray, max_iter: int = 60, tol: float = 1e-13):
    """Projected Newton ascent on the dual, restricted to the free multipliers."""
    L = dual.L
    it = 0
    for it in range(1, max_iter + 1):
        rho, w = dual.primal(mu)
        grad = 1.0 - L @ rho
        free = (mu > 0) | (grad > 0)
        if not np.any(free):
            break
        if np.max(np.abs(grad[free])) < tol:
            break
        d = np.where(w > 0, dual.q * rho / np.where(w > 0, w, 1.0), 0.0)
        LA = L[free]
        H = (LA.multiply(d[None, :]) @ LA.T).toarray()
        H[np.diag_indices_from(H)] += 1e-14 * max(np.trace(H) / len(H), 1e-300)
        try:
            step = np.linalg.solve(H, grad[free])
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, grad[free], rcond=None)[0]
        g0 = dual.value(mu)
        t = 1.0
        while t > 1e-8:
            trial = mu.copy()
            trial[free] = np.maximum(mu[free] + t * step, 0.0)
            if dual.value(trial) >= g0 - 1e-15 * abs(g0):
                break
            t *= 0.5
        else:
            break
        if np.array_equal(trial, mu):
            break
        mu = trial
    return mu, it


def _solve_dual(L: sparse.csr_matrix, vol: np.ndarray, p: float, max_iter: int):
    dual = _Dual(L, vol, p)
    # start from the dual point of the uniform admissible density
    lengths = np.asarray(L.sum(axis=1)).ravel()
    rho0 = 1.0 / lengths.min()
    mu0 = np.full(L.shape[0], p * vol.mean() * rho0 ** (p - 1) / max(lengths.mean(), 1e-300))
    res = minimize(dual.negdual, mu0, jac=True, method="L-BFGS-B",
                   bounds=[(0.0, None)] * L.shape[0],
                   options={"maxiter": max_iter, "maxfun": 2 * max_iter, "gtol": 1e-12,
                            "ftol": 0.0, "maxcor": 30})
    mu = np.maximum(res.x, 0.0)
    mu, extra = _newton_polish(dual, mu)
    rho, _ = dual.primal(mu)
    return mu, rho, dual.value(mu), int(res.nit) + extra


def discrete_modulus(fam: CurveFamily, grid: "GridSpec | DensityGrid | None" = None, p: float = 4.0,
                     max_iter: int = 100_000, gap_tol: float = 1e-6, raise_on_failure: bool = True,
                     check_rectifiable: bool = True) -> ModulusResult:
    """Discrete ``p``-modulus of a curve family on a box grid.

    Non-rectifiable members (chordal sums diverge) are dropped first; a
    constant member makes the family inadmissible and the value ``inf``.

    Parameters
    ----------
    fam : CurveFamily
    grid : GridSpec or DensityGrid, optional
        Grid layout (a ``DensityGrid`` is used only for its layout).
    p : float
        Exponent, ``p > 1``.
    gap_tol : float
        Relative duality gap required for convergence.
    """
    if not p > 1:
        raise ValueError("p must exceed 1")
    if grid is None:
        grid = GridSpec()
    if isinstance(grid, DensityGrid):
        empty = grid.with_values(np.zeros(grid.dims))
    elif len(fam) or grid.bbox is not None:
        empty = grid.build(fam)
    else:
        empty = DensityGrid.zeros(np.array([[-1.0, 1.0]] * 3), grid.dims)
    dims = empty.dims

    if any(c.is_constant for c in fam):
        return ModulusResult(math.inf, empty, np.zeros(0), 0, True, math.inf, None, 0, len(fam))
    curves = [c for c in fam if not check_rectifiable or is_rectifiable(c)]
    dropped = len(fam) - len(curves)
    if not curves:
        return ModulusResult(0.0, empty, np.zeros(0), 0, True, 0.0, np.zeros(0), dropped, len(fam))

    L = incidence_matrix(curves, empty)
    hits = np.diff(L.indptr)
    if np.any(hits < 2):
        bad = int(np.argmin(hits))
        raise GridTooCoarse(f"curve {bad} crosses {int(hits[bad])} cell(s); refine the grid")
    used = np.unique(L.indices)
    Lc = L[:, used].tocsr()
    vol = empty.cell_volumes[used]

    mu, rho, dual, nit = _solve_dual(Lc, vol, p, max_iter)
    integrals = Lc @ rho
    # rescale so every constraint holds; the value is then an admissible upper bound
    scale = 1.0 / integrals.min() if integrals.min() > 0 else math.inf
    rho = rho * scale
    integrals = integrals * scale
    value = math.fsum(vol * rho ** p)
    values = np.zeros(int(np.prod(dims)))
    values[used] = rho
    density = empty.with_values(values)
    res = ModulusResult(value, density, integrals - 1.0, nit, False, dual, mu, dropped, len(fam))
    res.converged = bool(math.isfinite(value) and res.gap <= gap_tol)
    if not res.converged and raise_on_failure:
        raise NotConverged(f"duality gap {res.gap:.3g} above {gap_tol:g} after {nit} iterations",
                           result=res)
    return res


def check_density(fam: CurveFamily, density: DensityGrid) -> np.ndarray:
    """Line integrals of a grid density along each member (cell-exact)."""
    L = incidence_matrix(fam.curves, density)
    return L @ density.values.ravel()
