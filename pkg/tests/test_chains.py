import numpy as np
import pytest

from h1modlab.chains import (build_chain, canonical_chain_ball, chain_validate, chains_equivalent,
                             decay_exponent, end_cut_from_point, impression_estimate, map_chain,
                             sphere_chain, uniformity_check)
from h1modlab.domain import ball, cusp, slit_ball, sphere_samples
from h1modlab.errors import InsufficientDepth
from h1modlab.group import Dilate, QcMap, RadialStretch, Rotate, dist_h, multiply
from h1modlab.polar import SphereParam, sphere_point

X0 = np.array(sphere_point(SphereParam(0.4, 1.0)))
X1 = np.array(sphere_point(SphereParam(-0.3, 2.5)))
KS = list(range(2, 17))


@pytest.fixture(scope="module")
def chain():
    return canonical_chain_ball(X0, KS)


@pytest.fixture(scope="module")
def report(chain):
    return chain_validate(chain, mod_budget=32)


def test_canonical_chain_passes(report):
    assert report.cross_set_ok and report.separation_ok
    assert report.diam_trend_ok and report.mod_finite_ok and report.mod_vanish_ok
    assert report.passed


def test_canonical_diameters_shrink(chain):
    d = np.asarray(chain.diameters)
    assert np.all(np.diff(d) < 0)
    assert d[-1] < 0.25 * d[0]


def test_canonical_impression(chain):
    imp = impression_estimate(chain)
    assert imp.singleton
    assert dist_h(imp.center, X0) <= 2 / KS[-1] + chain.domain.resolution + imp.tolerance


def test_canonical_rejects_interior_point():
    with pytest.raises(ValueError):
        canonical_chain_ball((0.5, 0, 0), KS)


def _touching_chain():
    x0 = np.array([1.0, 0.0, 0.0])
    B = ball()
    c = np.asarray(multiply(x0, (-0.2, 0.0, 0.0)))
    specs = []
    # S(c, 0.3) touches S(x0, 0.5) at (0.5, 0, 0)
    for cen, rad in [(x0, 0.6), (x0, 0.5), (c, 0.3), (x0, 0.1)]:
        p = sphere_samples(cen, rad)
        specs.append((lambda q, cc=cen, rr=rad: dist_h(cc, q) - rr, p[B.contains(p)], rad))
    return build_chain(B, specs, x0, [1, 2, 3, 4], strict=False)


def test_touching_cross_sets_not_separated():
    rep = chain_validate(_touching_chain(), mod_budget=0)
    assert not rep.separation_ok


def test_non_shrinking_chain():
    ns = sphere_chain(ball(), X0, [0.3 + 0.2 / k for k in range(1, 9)], list(range(1, 9)))
    rep = chain_validate(ns, mod_budget=32)
    assert not rep.mod_vanish_ok
    assert not rep.diam_trend_ok
    imp = impression_estimate(ns)
    assert not imp.singleton and imp.diameter > 0.3


def test_decay_exponent():
    k = np.arange(1, 20)
    assert decay_exponent(k, k ** -0.5) == pytest.approx(0.5)
    assert decay_exponent(k, np.ones(19)) == pytest.approx(0.0, abs=1e-12)


def test_equivalence(chain):
    even = chain.subchain(list(range(0, len(chain), 2)))
    assert chains_equivalent(chain, even)
    assert chains_equivalent(chain, chain)
    assert not chains_equivalent(chain, canonical_chain_ball(X1, KS))


def test_equivalence_needs_depth(chain):
    with pytest.raises(InsufficientDepth):
        chains_equivalent(chain.subchain([0, 1]), chain, depth=3)


def test_map_chain_rotate_dilate(chain):
    m = QcMap.of(Rotate(0.8), Dilate(1.5))
    mc = map_chain(m, chain)
    np.testing.assert_allclose(mc.separations, 1.5 * np.asarray(chain.separations), rtol=0.05)
    assert chain_validate(mc, mod_budget=32).passed
    imp = impression_estimate(mc)
    assert imp.singleton
    assert dist_h(imp.center, m(X0)) <= imp.tolerance


def test_map_chain_radial_stretch(chain):
    ms = map_chain(QcMap.of(RadialStretch(1.5)), chain)
    rep = chain_validate(ms, mod_budget=0)
    assert rep.diam_trend_ok and rep.separation_ok


def test_map_chain_dilate_scales_separations(chain):
    md = map_chain(QcMap.of(Dilate(2.0)), chain)
    np.testing.assert_allclose(md.separations, 2 * np.asarray(chain.separations), rtol=0.05)


def test_end_cut_ball():
    x = np.array(sphere_point(SphereParam(0.3, 1.0)))
    cut = end_cut_from_point(ball(), x, [0.5 / k for k in range(1, 9)])
    np.testing.assert_allclose(cut.curve.nodes[-1], x, atol=1e-9)
    assert np.all(ball().contains(cut.curve.nodes[:-1]))
    assert chain_validate(cut.chain, mod_budget=32).passed


def test_end_cut_slit_one_side():
    S = slit_ball()
    x = np.array([0.6, 0.02, 0.0])
    cut = end_cut_from_point(S, x, [0.3 / k for k in range(1, 9)])
    ys = cut.curve.nodes[:-1, 1]
    assert np.all(ys > 0) or np.all(ys < 0)
    assert all(e.valid for e in cut.chain.cross_sets)


def test_uniformity_ball(rng):
    B = ball()
    pts = []
    while len(pts) < 20:
        q = rng.uniform(-1, 1, 3)
        if B.contains(q):
            pts.append(q)
    rep = uniformity_check(B, list(zip(pts[::2], pts[1::2])))
    assert np.isfinite(rep.beta_hat) and rep.alpha_hat > 0


def test_uniformity_diameter_pair():
    rep = uniformity_check(ball(), [((-0.9, 0, 0), (0.9, 0, 0))])
    assert rep.beta_hat == pytest.approx(1.0, abs=1e-6)


def test_uniformity_cusp_trend():
    C = cusp()
    inv_alpha = []
    for s in (1.1, 1.2, 1.3, 1.4):
        inv_alpha.append(uniformity_check(C, [((0.5, 0, 0), (s, 0, 0))]).inv_alpha_hat)
    assert all(a < b for a, b in zip(inv_alpha, inv_alpha[1:]))
    betas = []
    for s in (1.1, 1.3, 1.4):
        w = 0.8 * (1.5 - s) ** 2
        betas.append(uniformity_check(C, [((s, 0, 0.05 * w), (s, 0, -0.05 * w))]).beta_hat)
    assert betas[0] < betas[1] < betas[2]
