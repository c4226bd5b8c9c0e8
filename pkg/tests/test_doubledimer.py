from fractions import Fraction

import numpy as np
import pytest

from dimerlab.dbar import solve_G
from dimerlab.doubledimer import (CapExceeded, Tiling, TilingSampler, coupling_dbl, coupling_dbl_odd,
                                  coupling_dbl_scan, default_odd_poles, default_poles,
                                  enumerate_double_dimer_expectation, enumerate_odd_expectation,
                                  enumerate_tilings, expected_height, height_of_tiling,
                                  mc_expected_height, sample_tiling, superpose, verify_theorem1)
from dimerlab.exact import as_exact
from dimerlab.kasteleyn import assemble, edge_probability, inverse_matrix, kasteleyn_weight
from dimerlab.lattice import (DomainError, boundary_arcs, build_odd_temperley, build_polyomino,
                              build_rectangle, grid_to_square, is_black)
from dimerlab.primitive import leapfrog_laplacian_vertex, leapfrog_stencil_ok


# -- tilings and heights --------------------------------------------------------------

@pytest.mark.parametrize("w,h,n", [(2, 2, 2), (2, 3, 3), (2, 4, 5), (3, 4, 11)])
def test_enumeration_counts(w, h, n):
    assert len(enumerate_tilings(build_rectangle(w, h), cap=20)) == n


def test_enumeration_cap():
    with pytest.raises(CapExceeded):
        enumerate_tilings(build_rectangle(4, 4), cap=14)


def test_tiling_validation():
    d = build_rectangle(2, 2)
    with pytest.raises(DomainError):
        Tiling(d, frozenset())


def test_domino_heights():
    d = build_rectangle(2, 1)
    t = enumerate_tilings(d)[0]
    h = height_of_tiling(t)
    walk = d.boundary_vertices
    steps = [h[walk[(k + 1) % len(walk)]] - h[walk[k]] for k in range(len(walk))]
    quarter = as_exact(Fraction(1, 4))
    assert all(s in (quarter, -quarter) for s in steps)
    # the interior edge is crossed by the domino
    assert h[(1, 0)] - h[(0, 1)] in (3 * quarter, -3 * quarter)


def test_figure_three_height():
    # 3x3 grid minus one corner cell, tiled by four dominoes; h(z) = -1 at the marked vertex
    cells = [(a, b) for a in range(3) for b in range(3) if not (a == 2 and b == 0)]
    grid = lambda a, b: (a + 1, b)
    d = build_polyomino([grid(*c) for c in cells])
    doms = [((0, 0), (1, 0)), ((1, 1), (2, 1)), ((1, 2), (2, 2)), ((0, 1), (0, 2))]
    edges = set()
    for x, y in doms:
        s1, s2 = grid_to_square(*grid(*x)), grid_to_square(*grid(*y))
        if not is_black(s1):
            s1, s2 = s2, s1
        edges.add((s1, s2))
    t = Tiling(d, frozenset(edges))
    V = lambda a, b: (a - b + 1, a + b)
    h = height_of_tiling(t, V(0, 0))
    assert [h[V(*p)] for p in [(0, 0), (0, 1), (1, 1), (2, 1), (2, 2)]] == \
        [0, Fraction(-1, 4), Fraction(-1, 2), Fraction(-1, 4), -1]


def test_heights_close_around_every_square():
    d = build_rectangle(4, 3)
    for t in enumerate_tilings(d):
        h = height_of_tiling(t)
        for c in d.squares:
            n, m = c
            cs = [(n + 1, m), (n, m + 1), (n - 1, m), (n, m - 1)]
            assert sum(h[cs[(k + 1) % 4]] - h[cs[k]] for k in range(4)) == 0


# -- double-dimer coupling --------------------------------------------------------------

@pytest.fixture(scope="module")
def four():
    d = build_rectangle(4, 4)
    u0, v0 = default_poles(d)
    return d, u0, v0


def test_coupling_factorization_4x4(four):
    d, u0, v0 = four
    rep = coupling_dbl_scan(d, u0, v0)
    assert rep["pairs"] == 64 and rep["failures"] == []
    G = solve_G(d, u0, "mesh-1")
    assert rep["const"] == (as_exact(4) * G[v0]).inverse()


def test_coupling_at_pole_column(four):
    d, u0, v0 = four
    C2 = inverse_matrix(assemble(d.without(u0, v0)))
    for u in d.blacks:
        assert (u, v0) not in C2
        direct, factored, eq = coupling_dbl(d, u0, v0, u, v0)
        assert eq


def test_abs_coupling_difference(four):
    d, u0, v0 = four
    C1 = inverse_matrix(assemble(d))
    C2 = inverse_matrix(assemble(d.without(u0, v0)))
    sys1, sys2 = assemble(d), assemble(d.without(u0, v0))
    for (u, v) in C1:
        if (u[0] - v[0], u[1] - v[1]) not in ((1, 1), (-1, -1), (1, -1), (-1, 1)):
            continue
        if u in (u0,) or v in (v0,):
            continue
        p1 = edge_probability(sys1, u, v, C1)
        p2 = edge_probability(sys2, u, v, C2)
        tau = kasteleyn_weight(u, v)
        assert as_exact(Fraction(p1 - p2)) == tau * (C1[(u, v)] - C2[(u, v)])


def test_expected_height_matches_oracle():
    d = build_rectangle(2, 4)
    u0, v0 = default_poles(d)
    E = expected_height(d, u0, v0)
    O = enumerate_double_dimer_expectation(d, u0, v0)
    assert O.values and all(E[z] == O[z] for z in O.values)
    arcs = boundary_arcs(d, u0, v0)
    assert all(E[z] == 1 for z in arcs.arc_u0v0 if z in E)
    assert all(E[z] == 0 for z in arcs.arc_v0u0 if z in E)


def test_default_poles_failure_is_typed():
    with pytest.raises(DomainError):
        default_poles(build_rectangle(2, 1))


# -- leap-frog harmonicity ---------------------------------------------------------------------

@pytest.mark.parametrize("spec", [(5, 5), (7, 7), (9, 5), (5, 9)])
def test_theorem1_exact(spec):
    rep = verify_theorem1(build_odd_temperley(spec))
    assert rep.ok, rep.summary()


@pytest.mark.parametrize("spec", [(3, 3), (5, 3)])
def test_theorem1_small_has_no_full_stencil(spec):
    # no interior vertex of these shapes has all four (+-2, +-2) neighbours
    rep = verify_theorem1(build_odd_temperley(spec))
    assert rep.violations == [] and rep.checked == 0


def test_theorem1_summary_text():
    rep = verify_theorem1(build_odd_temperley((5, 5)))
    assert rep.summary() == f"0 violations / {rep.checked} interior vertices"


def test_theorem1_float():
    rep = verify_theorem1(build_odd_temperley((9, 9)), backend="float")
    assert rep.ok and rep.max_abs < 1e-9


def test_odd_pipeline_matches_oracle():
    d = build_odd_temperley((3, 5))
    u1, u2 = default_odd_poles(d)
    rep = verify_theorem1(d, u1, u2)
    O = enumerate_odd_expectation(d, u1, u2, cap=30)
    assert all(rep.field[z] == O[z] for z in O.values)
    assert coupling_dbl_odd(d, u1, u2)["failures"] == []


def test_theorem1_negative_control():
    d = build_rectangle(8, 8)
    u0, v0 = default_poles(d)
    E = expected_height(d, u0, v0)
    nonzero = [z for z in d.interior_vertices
               if leapfrog_stencil_ok(E, z) and not leapfrog_laplacian_vertex(E, z).is_zero()]
    assert nonzero


def test_theorem1_rejects_balanced():
    with pytest.raises(DomainError):
        verify_theorem1(build_rectangle(4, 4))


# -- sampling ----------------------------------------------------------------------

def test_sampler_2x2_binomial():
    d = build_rectangle(2, 2)
    s = TilingSampler(d)
    rng = np.random.default_rng(1)
    N = 10_000
    draws = [s.sample_indices(rng) for _ in range(N)]
    assert len(set(draws)) == 2
    hits = sum(1 for x in draws if x == draws[0])
    sigma = np.sqrt(N * 0.25)
    assert abs(hits - N / 2) < 4 * sigma


def test_sampler_exact_backend_valid():
    d = build_rectangle(2, 4)
    t = TilingSampler(d, "exact").sample(np.random.default_rng(3))
    assert len(t.edges) == 4


def test_sample_tiling_seeded():
    d = build_rectangle(4, 4)
    assert sample_tiling(d, 5).edges == sample_tiling(d, 5).edges


def test_mc_expected_height_six_squares():
    d = build_rectangle(2, 3)
    u0, v0 = default_poles(d)
    E = enumerate_double_dimer_expectation(d, u0, v0)
    M = mc_expected_height(d, u0, v0, 4000, seed=7, workers=1)
    for z in E.values:
        se = M.stderr[z]
        if se > 0:
            assert abs(float(E[z]) - M[z]) < 4 * se
        else:
            assert abs(float(E[z]) - M[z]) < 1e-12


def test_mc_is_seed_deterministic():
    d = build_rectangle(2, 3)
    u0, v0 = default_poles(d)
    a = mc_expected_height(d, u0, v0, 200, seed=3, workers=1)
    b = mc_expected_height(d, u0, v0, 200, seed=3, workers=1)
    assert a.values == b.values


# -- superposition --------------------------------------------------------------

def test_superpose_identical():
    t = enumerate_tilings(build_rectangle(2, 4))[0]
    c = superpose(t, t)
    assert len(c.double_edges) == 4 and c.loops == [] and c.interface is None


def test_superpose_2x2_loop():
    t1, t2 = enumerate_tilings(build_rectangle(2, 2))
    c = superpose(t1, t2)
    assert len(c.loops) == 1 and len(c.loops[0]) == 4
    assert c.double_edges == [] and c.interface is None


def test_superpose_interface_endpoints(four):
    d, u0, v0 = four
    t1 = sample_tiling(d, 1)
    t2 = sample_tiling(d.without(u0, v0), 2)
    c = superpose(t1, t2)
    assert {c.interface[0], c.interface[-1]} == {u0, v0}
