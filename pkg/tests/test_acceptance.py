"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run standalone with ``python3 tests/test_acceptance.py`` for the summary
lines only.
"""

import functools
import math

import numpy as np
import pytest

from h1modlab.boundary import distortion_profile, koebe_cuts, koebe_experiment, lindelof_experiment
from h1modlab.chains import canonical_chain_ball, chain_validate, impression_estimate, map_chain
from h1modlab.curves import geodesic_length, sr_distance_estimate
from h1modlab.families import qc_invariance_check, ring_ray_family, ring_value
from h1modlab.group import (Dilate, Invert, QcMap, RadialStretch, Rotate, Translate, dilate, dist_h,
                            inverse, koranyi_norm, multiply)
from h1modlab.modulus import CurveFamily, GridSpec, discrete_modulus
from h1modlab.polar import (UNIT_BALL_VOLUME, ball_indicator, cartesian_integrate, polar_integrate,
                            rho_one, rho_one_integral, sphere_points)

RESULTS = {}
MODULUS_RUNS = []


def record(n, ok, detail):
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[n] = line
    print(line)
    return ok


def _mod(fam, grid):
    res = discrete_modulus(fam, grid, check_rectifiable=False)
    MODULUS_RUNS.append(res)
    return res


def sigma_points(seed, n):
    rng = np.random.default_rng(seed)
    return sphere_points(rng.uniform(-math.pi / 2, math.pi / 2, n), rng.uniform(0, 2 * math.pi, n))


def _ring_grid(a, dims):
    return GridSpec((dims,) * 3, min_width=(0.2 * a, 0.2 * a, 0.2 * a * a))


# ---------------------------------------------------------------------------

def check_1():
    target = ring_value(1.0, math.e)
    res = _mod(ring_ray_family(1.0, math.e, 32, 64), GridSpec((64, 64, 64)))
    rel = res.value / target - 1
    return record(1, abs(rel) <= 0.15, f"ring value {res.value:.4f} vs {target:.4f} (rel {rel:+.3f}, tol 0.15)")


@functools.lru_cache(None)
def ring_decay_values():
    ratios = (math.e, math.e ** 2, math.e ** 3)
    return ratios, [_mod(ring_ray_family(1.0, q, 32, 64), _ring_grid(1.0, 32)).value for q in ratios]


def check_2():
    ratios, vals = ring_decay_values()
    slope = np.polyfit(np.log(np.log(ratios)), np.log(vals), 1)[0]
    return record(2, abs(slope + 3) <= 0.3, f"slope {slope:.3f} (target -3 +- 0.3)")


def check_3():
    vol = polar_integrate(ball_indicator(1.0), 1.0, 200, 200, 200)
    cart = cartesian_integrate(ball_indicator(1.0), ((-1, 1), (-1, 1), (-1, 1)), 200)
    rho = polar_integrate(lambda q: rho_one(q) ** 4, math.inf, 400, 4, 4)
    ref = 2 * math.pi ** 2 * (4 + 1 / (3 * math.log(2) ** 3))
    e1 = abs(vol / UNIT_BALL_VOLUME - 1)
    e2 = abs(vol / cart - 1)
    e3 = abs(rho / ref - 1)
    assert rho_one_integral() == pytest.approx(ref, rel=1e-12)
    ok = max(e1, e2, e3) <= 1e-3
    return record(3, ok, f"volume rel {e1:.1e}, cartesian rel {e2:.1e}, rho_1^4 rel {e3:.1e} (tol 1e-3)")


def check_4():
    rng = np.random.default_rng(4)
    P = rng.uniform(-2, 2, (10_000, 3))
    Q = rng.uniform(-2, 2, (10_000, 3))
    dH = dist_h(P, Q)
    g = multiply(inverse(P), Q)
    dS = np.array([geodesic_length(complex(x, y), t) for x, y, t in g])
    low = int(np.sum(dS / math.sqrt(math.pi) > dH * (1 + 1e-12)))
    up = int(np.sum(dH > dS + 1e-3))
    sharp = sr_distance_estimate((0, 0, 0), (0, 0, 1), 20).value
    rel = abs(sharp / math.sqrt(math.pi) - 1)
    ok = low == 0 and up == 0 and rel <= 0.02
    return record(4, ok, f"lower violations {low}, upper violations {up}, d_S(0,(0,0,1)) {sharp:.5f} (rel {rel:.1e}, tol 0.02)")


def _image_grid(m, fam):
    img = fam.mapped(m)
    a = float(koranyi_norm(np.vstack([c.nodes for c in img.curves])).min())
    return img, GridSpec((32,) * 3, min_width=(0.2 * a, 0.2 * a, 0.2 * a * a))


def check_5():
    fam = ring_ray_family(1.0, math.e, 32, 64)
    before = _ring_grid(1.0, 32)
    out = []
    for name, m, lo, hi in (("rotate", QcMap.of(Rotate(0.7)), 0.95, 1.05),
                            ("dilate", QcMap.of(Dilate(2.0)), 0.95, 1.05),
                            ("invert", QcMap.of(Invert()), 0.8, 1.25)):
        _, after = _image_grid(m, fam)
        r = qc_invariance_check(m, fam, before, after)["ratio"]
        MODULUS_RUNS.append(discrete_modulus(fam.mapped(m), after, check_rectifiable=False))
        out.append((name, r, lo <= r <= hi))
    ok = all(o[2] for o in out)
    return record(5, ok, ", ".join(f"{n} ratio {r:.4f}" for n, r, _ in out))


def check_6():
    cases = (("translate", QcMap.of(Translate((0.4, -0.3, 0.2))), (0.3, 0.1, -0.2), [1e-1, 1e-2, 1e-3]),
             ("dilate", QcMap.of(Dilate(2.0)), (0.3, 0.1, -0.2), [1e-1, 1e-2, 1e-3]),
             ("rotate", QcMap.of(Rotate(1.1)), (0.3, 0.1, -0.2), [1e-1, 1e-2, 1e-3]),
             ("invert", QcMap.of(Invert()), (2.0, 0.0, 0.0), [1e-3, 3e-4, 1e-4]))
    lims = [(n, distortion_profile(m, p, radii).limsup_estimate) for n, m, p, radii in cases]
    ok = all(abs(h - 1) <= 1e-2 for _, h in lims)
    return record(6, ok, ", ".join(f"{n} H {h:.5f}" for n, h in lims) + " (tol 1e-2)")


def check_7():
    rng = np.random.default_rng(7)
    n = 10_000
    p, q, r = (rng.uniform(-3, 3, (n, 3)) for _ in range(3))
    lam = rng.uniform(0.1, 10, n)
    fails = {}
    lhs, rhs = multiply(multiply(p, q), r), multiply(p, multiply(q, r))
    fails["associativity"] = int(np.sum(np.abs(lhs - rhs) > 1e-12 * (1 + np.abs(lhs)).max(axis=1)[:, None]))
    e = multiply(p, inverse(p))
    fails["inverse"] = int(np.sum(np.abs(e) > 1e-12 * (1 + np.abs(p).max(axis=1) ** 2)[:, None]))
    d0, d1 = dist_h(q, r), dist_h(multiply(p, q), multiply(p, r))
    fails["left_invariance"] = int(np.sum(np.abs(d0 - d1) > 1e-10 * (1 + d0)))
    dl = np.array([dist_h(dilate(l, a), dilate(l, b)) for l, a, b in zip(lam, q, r)])
    fails["homogeneity"] = int(np.sum(np.abs(dl - lam * d0) > 1e-10 * (1 + lam * d0)))
    tri = dist_h(p, r) - dist_h(p, q) - dist_h(q, r)
    fails["triangle"] = int(np.sum(tri > 1e-10))
    ok = sum(fails.values()) == 0
    return record(7, ok, ", ".join(f"{k} {v}" for k, v in fails.items()) + " failures of 1e4")


def check_8():
    ks = list(range(2, 17))
    m = QcMap.of(Rotate(0.8), Dilate(1.5))
    tol = 2 / ks[-1] + 0.01
    worst, bad = 0.0, []
    for i, x0 in enumerate(sigma_points(8, 8)):
        c = canonical_chain_ball(x0, ks)
        mc = map_chain(m, c)
        v0 = chain_validate(c).passed
        v1 = chain_validate(mc).passed
        imp, mimp = impression_estimate(c), impression_estimate(mc)
        e0 = dist_h(imp.center, x0) if imp.center is not None else math.inf
        e1 = dist_h(mimp.center, m(x0)) if mimp.center is not None else math.inf
        worst = max(worst, e0, e1 / 1.5)
        if not (v0 and v1 and e0 <= tol and e1 <= 1.5 * tol):
            bad.append(i)
    return record(8, not bad, f"8 points, failing {bad}, worst impression error {worst:.4f} (tol {tol:.3f})")


def check_9():
    m = QcMap.of(RadialStretch(1.5))
    reps = [lindelof_experiment(m, x0, tol=5e-2) for x0 in sigma_points(9, 10)]
    frac = sum(r.agree for r in reps) / len(reps)
    incl = sum(r.inclusion_ok for r in reps)
    worst = max(r.hausdorff for r in reps)
    ok = frac >= 0.9 and incl == len(reps)
    return record(9, ok, f"agreement {frac:.0%} (max Hausdorff {worst:.4f}, tol 5e-2); "
                         f"contraction inclusion holds at {incl}/10 points")


def check_10():
    cuts = koebe_cuts()
    out = []
    for name, m in (("identity", QcMap.identity()), ("rotate_dilate", QcMap.of(Rotate(0.8), Dilate(1.5))),
                    ("radial_stretch", QcMap.of(RadialStretch(1.5)))):
        rep = koebe_experiment(m, cuts=cuts, tol=1e-2)
        out.append((name, sum(rep.verdicts), len(rep.verdicts)))
    ok = all(a == b == 12 for _, a, b in out)
    return record(10, ok, ", ".join(f"{n} {a}/{b}" for n, a, b in out) + " singleton (tol 1e-2)")


def _fixture_families(rng, n):
    def seg(y, a, b):
        x = np.linspace(a, b, 60)
        return np.column_stack([x, np.full(60, y), 2 * y * (x - 5)])
    out = []
    for _ in range(n):
        a = rng.uniform(0, 6)
        out.append(seg(rng.uniform(-0.45, 0.45), a, a + rng.uniform(2, 4)))
    return out


def check_11():
    ring_decay_values()
    if not MODULUS_RUNS:
        _mod(ring_ray_family(1.0, math.e, 16, 32), _ring_grid(1.0, 24))
    rng = np.random.default_rng(11)
    box = np.array([[0.0, 10.0], [-0.5, 0.5], [-5.0, 5.0]])
    grid = GridSpec((12, 6, 2), bbox=box)
    mono = sub = 0
    for _ in range(20):
        c1, c2 = _fixture_families(rng, 4), _fixture_families(rng, 3)
        m1 = _mod(CurveFamily(c1), grid)
        m2 = _mod(CurveFamily(c2), grid)
        mu = _mod(CurveFamily(c1 + c2), grid)
        mono += m1.value > mu.value * (1 + 1e-9)
        sub += mu.value > (m1.value + m2.value) * (1 + 1e-9)
    runs = [r for r in MODULUS_RUNS if r.converged]
    cert_bad = 0
    for r in runs:
        c = r.certificates()
        cert_bad += not (c["feasible"] and c["active_ok"])
    ok = cert_bad == 0 and mono == 0 and sub == 0
    return record(11, ok, f"{len(runs)} converged runs, certificate failures {cert_bad}; "
                          f"monotonicity failures {mono}/20, subadditivity failures {sub}/20")


CHECKS = {i: globals()[f"check_{i}"] for i in range(1, 12)}


@pytest.mark.parametrize("n", sorted(CHECKS))
def test_criterion(n):
    assert CHECKS[n](), RESULTS.get(n)


if __name__ == "__main__":
    for n in sorted(CHECKS):
        try:
            CHECKS[n]()
        except Exception as exc:  # report and keep going
            record(n, False, f"error: {exc!r}")
