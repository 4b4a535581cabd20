"""Group law, Korányi gauge and the quasiconformal map zoo on the first
Heisenberg group.

Points are triples ``(x, y, t)`` with ``z = x + iy``.  Every function accepts
either a single :class:`Point` (or any length-3 sequence) or an array of shape
``(..., 3)``; single points come back as :class:`Point`, arrays as arrays.
"""

from __future__ import annotations

import math
from collections import namedtuple
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .errors import InversionAtOrigin, NonConvergent, ZeroDilation

__all__ = [
    "Point", "ORIGIN", "multiply", "inverse", "koranyi_norm", "dist_h", "dilate",
    "rotate", "invert", "Translate", "Dilate", "Rotate", "Invert", "RadialStretch",
    "QcMap", "apply_map", "sphere_project", "PansuDifferential", "pansu_differential",
    "contraction", "set_distance", "set_diameter", "nearest_distances",
    "hausdorff_distance",
]

_PointBase = namedtuple("Point", "x y t")


class Point(_PointBase):
    """An element ``(x, y, t)`` of the Heisenberg group; all fields finite."""

    __slots__ = ()

    def __new__(cls, x, y, t):
        x, y, t = float(x), float(y), float(t)
        if not (math.isfinite(x) and math.isfinite(y) and math.isfinite(t)):
            raise ValueError(f"Point coordinates must be finite, got {(x, y, t)}")
        return super().__new__(cls, x, y, t)

    @property
    def z(self) -> complex:
        return complex(self.x, self.y)

    def __mul__(self, other):
        return multiply(self, other)

    def __neg__(self):
        return Point(-self.x, -self.y, -self.t)


ORIGIN = Point(0.0, 0.0, 0.0)

PointLike = Union[Point, Sequence[float], np.ndarray]


def _arr(p) -> np.ndarray:
    a = np.asarray(p, dtype=float)
    if a.shape[-1:] != (3,):
        raise ValueError(f"expected trailing dimension 3, got shape {a.shape}")
    return a


def _ret(a: np.ndarray):
    if a.ndim == 1:
        return Point(a[0], a[1], a[2])
    return a


def multiply(p: PointLike, q: PointLike):
    """Group product ``(z1+z2, t1+t2+2 Im(z1 conj(z2)))``."""
    a, b = _arr(p), _arr(q)
    x1, y1, t1 = a[..., 0], a[..., 1], a[..., 2]
    x2, y2, t2 = b[..., 0], b[..., 1], b[..., 2]
    out = np.stack([x1 + x2, y1 + y2, t1 + t2 + 2.0 * (x2 * y1 - x1 * y2)], axis=-1)
    return _ret(out)


def inverse(p: PointLike):
    return _ret(-_arr(p))


def koranyi_norm(p: PointLike):
    """Korányi gauge ``(|z|^4 + t^2)^(1/4)``; float for one point, array otherwise."""
    a = _arr(p)
    r2 = a[..., 0] ** 2 + a[..., 1] ** 2
    n = np.sqrt(np.sqrt(r2 * r2 + a[..., 2] ** 2))
    return float(n) if a.ndim == 1 else n


def _norm_arr(a: np.ndarray) -> np.ndarray:
    r2 = a[..., 0] ** 2 + a[..., 1] ** 2
    return np.sqrt(np.sqrt(r2 * r2 + a[..., 2] ** 2))


def dist_h(p: PointLike, q: PointLike):
    """Left-invariant Heisenberg distance ``||p^-1 q||`` (broadcasting)."""
    a, b = _arr(p), _arr(q)
    dx = b[..., 0] - a[..., 0]
    dy = b[..., 1] - a[..., 1]
    dt = b[..., 2] - a[..., 2] + 2.0 * (a[..., 0] * b[..., 1] - b[..., 0] * a[..., 1])
    r2 = dx * dx + dy * dy
    d = np.sqrt(np.sqrt(r2 * r2 + dt * dt))
    return float(d) if d.ndim == 0 else d


def dilate(r: float, p: PointLike):
    """Anisotropic dilation ``(z, t) -> (r z, r^2 t)``."""
    if r == 0:
        raise ZeroDilation("dilation factor must be nonzero")
    a = _arr(p)
    out = np.empty_like(a)
    out[..., 0] = r * a[..., 0]
    out[..., 1] = r * a[..., 1]
    out[..., 2] = r * r * a[..., 2]
    return _ret(out)


def _dilate_var(lam: np.ndarray, a: np.ndarray) -> np.ndarray:
    out = np.empty_like(a)
    out[..., 0] = lam * a[..., 0]
    out[..., 1] = lam * a[..., 1]
    out[..., 2] = lam * lam * a[..., 2]
    return out


def rotate(theta: float, p: PointLike):
    a = _arr(p)
    c, s = math.cos(theta), math.sin(theta)
    out = np.empty_like(a)
    out[..., 0] = c * a[..., 0] - s * a[..., 1]
    out[..., 1] = s * a[..., 0] + c * a[..., 1]
    out[..., 2] = a[..., 2]
    return _ret(out)


def invert(p: PointLike):
    """Korányi inversion ``J(z, t) = (z / (it - |z|^2), -t / (|z|^4 + t^2))``."""
    a = _arr(p)
    x, y, t = a[..., 0], a[..., 1], a[..., 2]
    r2 = x * x + y * y
    n4 = r2 * r2 + t * t
    if np.any(n4 == 0.0):
        raise InversionAtOrigin("Korányi inversion is undefined at the origin")
    # z / (it - r2) = z * (-r2 - it) / n4
    out = np.empty_like(a)
    out[..., 0] = (-r2 * x + t * y) / n4
    out[..., 1] = (-r2 * y - t * x) / n4
    out[..., 2] = -t / n4
    return _ret(out)


# --------------------------------------------------------------------------
# generators

@dataclass(frozen=True)
class Translate:
    """Left translation ``q -> by * q``."""

    by: Point

    def __post_init__(self):
        object.__setattr__(self, "by", Point(*self.by))

    def apply(self, a):
        return multiply(self.by, a)

    def inverse(self):
        return Translate(inverse(self.by))

    def pansu(self, a):
        return np.eye(2)

    claimed_K = 1.0


@dataclass(frozen=True)
class Dilate:
    r: float

    def __post_init__(self):
        if self.r == 0:
            raise ZeroDilation("dilation factor must be nonzero")

    def apply(self, a):
        return dilate(self.r, a)

    def inverse(self):
        return Dilate(1.0 / self.r)

    def pansu(self, a):
        return self.r * np.eye(2)

    claimed_K = 1.0


@dataclass(frozen=True)
class Rotate:
    theta: float

    def apply(self, a):
        return rotate(self.theta, a)

    def inverse(self):
        return Rotate(-self.theta)

    def pansu(self, a):
        c, s = math.cos(self.theta), math.sin(self.theta)
        return np.array([[c, -s], [s, c]])

    claimed_K = 1.0


@dataclass(frozen=True)
class Invert:
    def apply(self, a):
        return invert(a)

    def inverse(self):
        return self

    def pansu(self, a):
        # horizontal part of dJ is multiplication by -conj(w)/w^2, w = it - |z|^2
        x, y, t = a
        w = complex(-(x * x + y * y), t)
        if w == 0:
            raise InversionAtOrigin("Korányi inversion is undefined at the origin")
        c = -w.conjugate() / (w * w)
        return np.array([[c.real, -c.imag], [c.imag, c.real]])

    claimed_K = 1.0


@dataclass(frozen=True)
class RadialStretch:
    """``p -> delta_{||p||^(alpha-1)} p``; fixes the origin and every Korányi
    sphere about it is mapped to a sphere.  Not contact, so no distortion
    bound is claimed."""

    alpha: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("RadialStretch alpha must be positive")

    def apply(self, p):
        a = _arr(p)
        n = _norm_arr(a)
        with np.errstate(divide="ignore"):
            lam = np.where(n > 0, np.power(np.where(n > 0, n, 1.0), self.alpha - 1.0), 0.0)
        return _ret(_dilate_var(lam, a))

    def inverse(self):
        return RadialStretch(1.0 / self.alpha)

    def pansu(self, a):
        return None

    claimed_K = None


Generator = Union[Translate, Dilate, Rotate, Invert, RadialStretch]


@dataclass(frozen=True)
class QcMap:
    """Composite map; generators are applied left to right."""

    generators: Tuple[Generator, ...] = ()
    claimed_K: Optional[float] = field(default=None)

    def __post_init__(self):
        gens = tuple(self.generators)
        object.__setattr__(self, "generators", gens)
        if self.claimed_K is None:
            ks = [g.claimed_K for g in gens]
            if all(k is not None for k in ks):
                object.__setattr__(self, "claimed_K", float(np.prod(ks)) if ks else 1.0)

    @classmethod
    def of(cls, *generators, claimed_K=None):
        return cls(tuple(generators), claimed_K)

    @classmethod
    def identity(cls):
        return cls(())

    def then(self, other: "QcMap | Generator") -> "QcMap":
        """``self`` followed by ``other``."""
        extra = other.generators if isinstance(other, QcMap) else (other,)
        return QcMap(self.generators + tuple(extra))

    def inverse(self) -> "QcMap":
        return QcMap(tuple(g.inverse() for g in reversed(self.generators)), self.claimed_K)

    def __call__(self, p):
        return apply_map(self, p)


def apply_map(m: QcMap, p: PointLike):
    """Apply ``m`` to a point or an ``(..., 3)`` array."""
    a = _arr(p)
    single = a.ndim == 1
    for g in m.generators:
        a = _arr(g.apply(a))
    return _ret(a) if single else a


def contraction(x0: PointLike, s: float) -> QcMap:
    """``g_s = tau_{x0} o delta_s o tau_{x0}^-1``, the contraction fixing ``x0``."""
    x0 = Point(*x0)
    return QcMap.of(Translate(inverse(x0)), Dilate(s), Translate(x0))


_UP = Point(0.0, 0.0, 1.0)
_DOWN = Point(0.0, 0.0, -1.0)
SPHERE_PROJECTION = QcMap.of(Translate(_UP), Invert(), Translate(_DOWN))


def sphere_project(p: PointLike):
    """Stereographic composite ``tau_(0,-1) o J o tau_(0,1)``.

    Sends the sphere of radius ``1/sqrt(2)`` about ``(0, 0, -3/2)`` into the
    plane ``t = 0``; the pole is ``(0, 0, -1)``.
    """
    return apply_map(SPHERE_PROJECTION, p)


# --------------------------------------------------------------------------
# Pansu differential

@dataclass(frozen=True)
class PansuDifferential:
    """Graded automorphism ``(z, t) -> (L z, t_scale * t)``."""

    linear_part: np.ndarray
    t_scale: float

    def apply(self, q: PointLike):
        a = _arr(q)
        out = np.empty_like(a)
        out[..., :2] = a[..., :2] @ self.linear_part.T
        out[..., 2] = self.t_scale * a[..., 2]
        return _ret(out)

    def compose(self, inner: "PansuDifferential") -> "PansuDifferential":
        """``self o inner``."""
        return PansuDifferential(self.linear_part @ inner.linear_part,
                                 self.t_scale * inner.t_scale)


_PROBES = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])


def _quotient(f, p: np.ndarray, fp: np.ndarray, h: float) -> np.ndarray:
    """Rescaled difference quotient at the three probes."""
    moved = f(multiply(p, dilate(h, _PROBES)))
    return dilate(1.0 / h, multiply(-fp, moved))


def _numeric_pansu(f, p: np.ndarray, h: float, tol: float) -> PansuDifferential:
    fp = np.asarray(f(p), dtype=float)
    a = [_quotient(f, p, fp, h / k) for k in (1.0, 2.0, 4.0, 8.0)]

    def extrapolate(a0, a1, a2):
        r0, r1 = 2.0 * a1 - a0, 2.0 * a2 - a1
        return (4.0 * r1 - r0) / 3.0

    coarse = extrapolate(*a[:3])
    est = extrapolate(*a[1:])
    err = np.abs(est - coarse)
    scale = np.maximum(1.0, np.abs(est))
    # the vertical part of a horizontal probe must vanish in the limit
    if np.any(err > tol * scale) or np.any(np.abs(est[:2, 2]) > tol * scale[:2, 2]):
        raise NonConvergent(
            f"Pansu quotients did not settle (max error {float(err.max()):.3g})")
    return PansuDifferential(est[:2, :2].T, float(est[2, 2]))


def pansu_differential(m: QcMap, p: PointLike, h: float = 1e-2, tol: float = 1e-6,
                       numeric: bool = False) -> PansuDifferential:
    """Pansu differential of ``m`` at ``p``.

    Generators with a closed form are chained by the chain rule along the
    orbit of ``p``; the rest (and everything when ``numeric`` is set) use
    Richardson-extrapolated difference quotients: the extrapolants over
    ``(h, h/2, h/4)`` and ``(h/2, h/4, h/8)`` must agree to ``tol``.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    q = _arr(p).copy()
    if numeric:
        return _numeric_pansu(lambda a: apply_map(m, a), q, h, tol)
    total = PansuDifferential(np.eye(2), 1.0)
    for g in m.generators:
        lin = g.pansu(q)
        if lin is None:
            step = _numeric_pansu(g.apply, q, h, tol)
        else:
            step = PansuDifferential(np.asarray(lin, dtype=float), float(np.linalg.det(lin)))
        total = step.compose(total)
        q = _arr(g.apply(q))
    return total


def ball_volume_mc(r: float, n: int = 200_000, seed: int = 0) -> float:
    """Monte-Carlo Lebesgue volume of the Korányi ball ``B(0, r)``.

    Samples the box ``|x|, |y| <= r, |t| <= r^2`` that contains the ball.
    """
    rng = np.random.default_rng(seed)
    u = rng.uniform(-1.0, 1.0, size=(n, 3)) * np.array([r, r, r * r])
    box = 8.0 * r ** 4
    return box * float(np.mean(_norm_arr(u) < r))


# --------------------------------------------------------------------------
# distances between finite point sets

_CHUNK = 2_000_000


def _pair_blocks(a: np.ndarray, b: np.ndarray):
    step = max(1, _CHUNK // max(len(b), 1))
    for i in range(0, len(a), step):
        yield i, dist_h(a[i:i + step, None, :], b[None, :, :])


def set_distance(a: PointLike, b: PointLike) -> float:
    """Smallest ``d_H`` between a point of ``a`` and a point of ``b``."""
    a, b = np.atleast_2d(_arr(a)), np.atleast_2d(_arr(b))
    return float(min(blk.min() for _, blk in _pair_blocks(a, b)))


def set_diameter(a: PointLike) -> float:
    a = np.atleast_2d(_arr(a))
    return float(max(blk.max() for _, blk in _pair_blocks(a, a)))


def nearest_distances(a: PointLike, b: PointLike) -> np.ndarray:
    """For each point of ``a``, the distance to the nearest point of ``b``."""
    a, b = np.atleast_2d(_arr(a)), np.atleast_2d(_arr(b))
    out = np.empty(len(a))
    for i, blk in _pair_blocks(a, b):
        out[i:i + len(blk)] = blk.min(axis=1)
    return out


def hausdorff_distance(a: PointLike, b: PointLike) -> float:
    return float(max(nearest_distances(a, b).max(), nearest_distances(b, a).max()))
