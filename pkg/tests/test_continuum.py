import cmath
import math
import random

import numpy as np
import pytest

from dimerlab.continuum import (LAM, BranchPointError, HalfPlaneData, contour_residue, convergence_report,
                                eval_f0, eval_f_halfplane, eval_fminus, eval_fplus, eval_g_halfplane,
                                hm_grid, hm_halfplane, pole_cancellation, s_product, s_weight)

SQUARE = [(0, 0), (1, 0), (1, 1), (0, 1)]
DATA = HalfPlaneData(0.5, (-3, -1, 2, 5), (-2, 4))


# -- harmonic measure ---------------------------------------------------------------

def test_hm_halfplane_values():
    assert hm_halfplane(1j, -1, 1) == pytest.approx(0.5, abs=1e-15)
    assert hm_halfplane(2j, -1, 1) == pytest.approx(2 / math.pi * math.atan(0.5), abs=1e-15)
    assert hm_halfplane(0.3 + 1e-9j, -1, 1) == pytest.approx(1.0, abs=1e-8)
    assert hm_halfplane(3 + 1e-9j, -1, 1) == pytest.approx(0.0, abs=1e-8)


def test_hm_halfplane_rejects_lower_half_plane():
    with pytest.raises(ValueError):
        hm_halfplane(-1j, 0, 1)


def test_hm_grid_symmetry():
    one_side = hm_grid(SQUARE, (0, 0), (1, 0), [(0.5, 0.5)], 1 / 32)
    two_sides = hm_grid(SQUARE, (0, 0), (1, 1), [(0.5, 0.5)], 1 / 32)
    assert one_side[0] == pytest.approx(0.25, abs=1e-6)
    assert two_sides[0] == pytest.approx(0.5, abs=1e-6)


def test_hm_grid_against_conformal_map():
    # half-strip {|x| < pi/2, y > 0} maps to the upper half-plane by sin, with the base to [-1, 1]
    h = math.pi / 80
    top = round(8 / h) * h
    poly = [(-math.pi / 2, 0), (math.pi / 2, 0), (math.pi / 2, top), (-math.pi / 2, top)]
    pts = [(0, 1), (0.5, 0.5), (-1, 2), (1.2, 0.3)]
    got = hm_grid(poly, (-math.pi / 2, 0), (math.pi / 2, 0), pts, h)
    want = [hm_halfplane(cmath.sin(complex(*p)), -1, 1) for p in pts]
    assert np.max(np.abs(np.array(got) - want)) < 1e-3


# -- half-plane functions ---------------------------------------------------------------

def test_f_without_marked_points():
    z = 1.3 + 0.4j
    assert eval_f_halfplane(z, HalfPlaneData()) == pytest.approx(LAM / z, abs=1e-15)
    assert eval_g_halfplane(z, HalfPlaneData()) == pytest.approx(1j / z, abs=1e-15)


def test_f_boundary_conditions_alternate():
    # the condition flips at each marked point; across the simple pole only the sign changes
    cuts = sorted(DATA.marked + [DATA.pole])
    xs = [cuts[0] - 1] + [(a + b) / 2 for a, b in zip(cuts, cuts[1:])] + [cuts[-1] + 1]
    kinds = []
    for x in xs:
        f = eval_f_halfplane(complex(x, 0), DATA, residue=1.0)
        if abs(f.real) <= 1e-12 * abs(f):
            kinds.append("re")
        else:
            assert abs(f.imag) <= 1e-12 * abs(f)
            kinds.append("im")
    for k, cut in enumerate(cuts):
        assert (kinds[k] != kinds[k + 1]) == (cut in DATA.marked)


def test_f_singularity_at_concave_point():
    x = DATA.down[0]
    rs = np.array([1e-3, 1e-4, 1e-5])
    mags = [abs(eval_f_halfplane(complex(x, r), DATA)) for r in rs]
    slope = np.polyfit(np.log(rs), np.log(mags), 1)[0]
    assert abs(slope + 0.5) < 0.05


def test_f_pole_raises():
    with pytest.raises(BranchPointError):
        eval_f_halfplane(0.5, DATA)


def test_f0_residue():
    w = 0.4 + 0.7j
    res = contour_residue(lambda z: eval_f0(z, w, DATA), w)
    assert abs(res - 1 / math.pi) < 1e-8


def test_fplus_fminus_no_marked_points():
    z, w = 1 + 2j, 0.3 + 1j
    assert abs(eval_fplus(z, w) - 2 / (z - w)) < 1e-12
    assert abs(eval_fminus(z, w) - 2 / (z - w.conjugate())) < 1e-12


def test_fplus_closed_form_with_marked_points():
    z, w = 1 + 2j, 0.4 + 0.7j
    s = lambda t: s_weight(t, DATA)
    assert abs(eval_fplus(z, w, DATA) - 2 / (z - w) * s(w) / s(z)) < 1e-12
    assert abs(eval_fminus(z, w, DATA) - 2 / (z - w.conjugate()) * s(w).conjugate() / s(z)) < 1e-12


def test_marked_point_count_validated():
    with pytest.raises(ValueError):
        HalfPlaneData(0.0, (-1, 1), (0,))


def test_s_product_values():
    rng = random.Random(0)
    for _ in range(25):
        m = rng.randint(2, 6)
        zs = [complex(rng.uniform(-3, 3), rng.uniform(0.1, 3)) for _ in range(m)]
        eps = [rng.choice([-1, 1]) for _ in range(m)]
        perm = list(range(m))
        rng.shuffle(perm)
        val = s_product(zs, eps, perm, DATA)
        want = 0 if any(perm[i] == i for i in range(m)) else 1
        if want:
            # telescoping only closes along complete cycles of a derangement
            assert abs(val - 1) < 1e-10
        else:
            assert val == 0


# -- convergence ---------------------------------------------------------------------

def test_convergence_single_point_compact():
    rows = convergence_report(SQUARE, (0.3, 0), (1, 0.6), sizes=(10, 20), K=[(0.5, 0.5)], cauchy=False)
    assert [r.points for r in rows] == [1, 1]
    assert all(math.isfinite(r.sup_error_Eh) for r in rows)


def test_pole_cancellation_bounded():
    rows = pole_cancellation(sizes=(10, 20))
    (n1, d1, c1), (n2, d2, c2) = rows
    assert c2 > 1.5 * c1          # C / delta blows up like 1 / delta
    assert d2 < 2.0 and d1 < 2.0  # the difference stays bounded
