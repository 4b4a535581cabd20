import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize

from h1modlab.curves import SampledCurve
from h1modlab.errors import GridTooCoarse, NotConverged
from h1modlab.modulus import (CurveFamily, DensityGrid, GridSpec, check_density, discrete_modulus,
                              graded_edges, incidence_matrix)

BOX = np.array([[0.0, 10.0], [-0.5, 0.5], [-5.0, 5.0]])


def hline(x0, x1, y=0.0, n=50):
    # left translate of an x-axis segment by (5, y, 0): horizontal
    x = np.linspace(x0, x1, n)
    return SampledCurve(np.column_stack([x, np.full(n, y), 2 * y * (x - 5)]))


def certified(res):
    c = res.certificates()
    assert c["feasible"] and c["active_ok"], c
    assert c["gap"] <= 1e-6


def test_empty_family_is_zero():
    res = discrete_modulus(CurveFamily([]), GridSpec((4, 4, 4), bbox=BOX))
    assert res.value == 0.0


def test_constant_curve_gives_inf():
    fam = CurveFamily([hline(0, 10), SampledCurve(np.array([[1.0, 0.0, 0.0]]))])
    assert math.isinf(discrete_modulus(fam, GridSpec((4, 4, 4), bbox=BOX)).value)


def test_single_segment_oracle():
    # length L across k equal cells: rho = 1/L there, value = k * vol / L^4
    L, k = 10.0, 10
    res = discrete_modulus(CurveFamily([hline(0, L, n=401)]), GridSpec((k, 1, 1), bbox=BOX))
    vol = res.density.cell_volume
    assert vol == pytest.approx(10.0)
    assert res.value == pytest.approx(k * vol / L ** 4, rel=1e-9)
    np.testing.assert_allclose(res.density.values.ravel(), 1 / L, rtol=1e-6)
    certified(res)


def test_two_curves_vs_generic_solver():
    # partially overlapping segments on a 10-cell strip, solved independently by SLSQP
    fam = CurveFamily([hline(0, 10, n=201), hline(0, 4, n=81)])
    grid = GridSpec((10, 1, 1), bbox=BOX)
    res = discrete_modulus(fam, grid)
    A = incidence_matrix(fam.curves, grid.build(fam)).toarray()
    vol = grid.build(fam).cell_volumes
    sol = minimize(lambda r: vol @ r ** 4, np.full(10, 0.2), jac=lambda r: 4 * vol * r ** 3,
                   constraints=[{"type": "ineq", "fun": lambda r: A @ r - 1, "jac": lambda r: A}],
                   bounds=[(0, None)] * 10, method="SLSQP", options={"ftol": 1e-14, "maxiter": 500})
    assert res.value == pytest.approx(sol.fun, rel=1e-5)
    certified(res)


def test_value_matches_density_integral():
    fam = CurveFamily([hline(0, 10, y) for y in (-0.3, 0.0, 0.3)])
    res = discrete_modulus(fam, GridSpec((8, 4, 2), bbox=BOX))
    assert res.value == pytest.approx(res.density.integral(), rel=1e-12)
    assert np.all(check_density(fam, res.density) >= 1 - 1e-6)


def test_grid_too_coarse():
    fam = CurveFamily([hline(0.1, 0.2)])
    with pytest.raises(GridTooCoarse):
        discrete_modulus(fam, GridSpec((4, 4, 4), bbox=BOX))


def test_not_converged_reports_result():
    fam = CurveFamily([hline(0, 10, y) for y in np.linspace(-0.4, 0.4, 7)])
    with pytest.raises(NotConverged) as info:
        discrete_modulus(fam, GridSpec((16, 8, 2), bbox=BOX), max_iter=1, gap_tol=1e-16)
    assert info.value.result is not None


def _random_family(rng, n):
    curves = []
    for _ in range(n):
        y = rng.uniform(-0.45, 0.45)
        a, b = sorted(rng.uniform(0, 10, 2))
        if b - a < 3:
            b = min(10.0, a + 3)
            a = b - 3
        curves.append(hline(a, b, y, 60))
    return curves


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(1, 6), st.integers(1, 6))
def test_monotone_and_subadditive(seed, n1, n2):
    rng = np.random.default_rng(seed)
    c1, c2 = _random_family(rng, n1), _random_family(rng, n2)
    grid = GridSpec((12, 6, 1), bbox=BOX)
    m1 = discrete_modulus(CurveFamily(c1), grid)
    m2 = discrete_modulus(CurveFamily(c2), grid)
    mu = discrete_modulus(CurveFamily(c1 + c2), grid)
    for r in (m1, m2, mu):
        certified(r)
        assert r.n_dropped == 0
    assert m1.value <= mu.value * (1 + 1e-6) + 1e-12
    assert mu.value <= (m1.value + m2.value) * (1 + 1e-6) + 1e-12


def test_minorization():
    # every curve of the second family contains a curve of the first: Mod(second) <= Mod(first)
    short = CurveFamily([hline(2, 5, y) for y in (-0.2, 0.2)])
    long = CurveFamily([hline(0, 10, y) for y in (-0.2, 0.2)])
    grid = GridSpec((10, 4, 1), bbox=BOX)
    m_long, m_short = discrete_modulus(long, grid).value, discrete_modulus(short, grid).value
    assert 0 < m_long <= m_short


def test_graded_grid_volumes():
    e = graded_edges(-1.0, 1.0, 16, 2.0, 0.0)
    assert e[0] == -1 and e[-1] == 1 and np.all(np.diff(e) > 0)
    w = np.diff(e)
    assert w[7] < w[0]
    g = DensityGrid.from_edges([e, e, e])
    assert g.cell_volumes.sum() == pytest.approx(8.0)


def test_density_export_roundtrip(tmp_path):
    fam = CurveFamily([hline(0, 10)])
    res = discrete_modulus(fam, GridSpec((5, 1, 1), bbox=BOX))
    path = tmp_path / "rho.bin"
    res.density.export(path)
    back = DensityGrid.load(path)
    np.testing.assert_array_equal(back.values, res.density.values)
