"""Property-based checks with hypothesis."""
import random
from fractions import Fraction

import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from dimerlab.continuum import HalfPlaneData, hm_halfplane, s_product
from dimerlab.doubledimer import enumerate_tilings, height_of_tiling, sample_tiling
from dimerlab.exact import ExactScalar
from dimerlab.kasteleyn import assemble, count_tilings, edge_probability, inverse_matrix
from dimerlab.lattice import Domain, find_corners, is_tileable, random_domain

fractions = st.fractions(min_value=-50, max_value=50, max_denominator=30)
scalars = st.builds(ExactScalar, fractions, fractions, fractions, fractions)
seeds = st.integers(min_value=0, max_value=2 ** 32 - 1)

SETTINGS = settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])


@given(scalars, scalars, scalars)
def test_exact_ring_axioms(a, b, c):
    assert (a + b) + c == a + (b + c)
    assert (a * b) * c == a * (b * c)
    assert a * (b + c) == a * b + a * c
    assert a * b == b * a


@given(scalars)
def test_exact_inverse_and_round_trip(a):
    assert ExactScalar.parse(str(a)) == a
    if not a.is_zero():
        assert (a * a.inverse()) == ExactScalar(1)
    r2 = 2 ** 0.5
    want = complex(float(a.a) + float(a.b) * r2, float(a.c) + float(a.d) * r2)
    assert abs(complex(a) - want) < 1e-9 * (1 + abs(want))


def _domain(seed, lo=2, hi=10, tileable=False):
    return random_domain(random.Random(seed), max_squares=hi, min_squares=lo, balanced=True, tileable=tileable)


@SETTINGS
@given(seeds)
def test_determinant_counts_tilings(seed):
    d = _domain(seed)
    n = count_tilings(assemble(d))
    assert n == len(enumerate_tilings(d, cap=12))
    assert (n > 0) == is_tileable(d)


@SETTINGS
@given(seeds)
def test_corner_identities(seed):
    d = _domain(seed, 2, 20)
    rep = find_corners(d)
    assert rep.lemma_holds()


@SETTINGS
@given(seeds)
def test_probabilities_at_each_white_sum_to_one(seed):
    d = _domain(seed, 2, 10, tileable=True)
    sys_ = assemble(d)
    C = inverse_matrix(sys_)
    for v in d.whites:
        tot = Fraction(0)
        for a, b in ((1, 1), (-1, -1), (1, -1), (-1, 1)):
            u = (v[0] + a, v[1] + b)
            if u in d.squares:
                tot += Fraction(edge_probability(sys_, u, v, C))
        assert tot == 1


@SETTINGS
@given(seeds)
def test_sampled_tiling_heights_are_consistent(seed):
    d = _domain(seed, 4, 16, tileable=True)
    t = sample_tiling(d, seed)
    h = height_of_tiling(t)
    assert set(h.values) == set(d.vertex_set)
    for c in d.squares:
        n, m = c
        cs = [(n + 1, m), (n, m + 1), (n - 1, m), (n, m - 1)]
        assert sum((h[cs[(k + 1) % 4]] - h[cs[k]] for k in range(4)), ExactScalar(0)).is_zero()


@SETTINGS
@given(seeds)
def test_domain_json_round_trip(seed):
    d = _domain(seed, 2, 20)
    assert Domain.from_json(d.to_json()) == d


@given(st.floats(-5, 5), st.floats(0.05, 5), st.floats(-4, 4), st.floats(0.01, 3), st.floats(0.01, 3))
def test_harmonic_measure_additive(x, y, a, w1, w2):
    z = complex(x, y)
    b, c = a + w1, a + w1 + w2
    h1, h2, h = hm_halfplane(z, a, b), hm_halfplane(z, b, c), hm_halfplane(z, a, c)
    assert -1e-12 <= h <= 1 + 1e-12
    assert abs(h1 + h2 - h) < 1e-9


@given(st.integers(2, 7), seeds)
def test_s_product_derangements(m, seed):
    rng = np.random.default_rng(seed)
    data = HalfPlaneData(0.0, (-3.0, -1.0, 2.0, 5.0), (-2.0, 4.0))
    zs = list(rng.uniform(-3, 3, m) + 1j * rng.uniform(0.1, 3, m))
    eps = list(rng.choice([-1, 1], m))
    perm = list(rng.permutation(m))
    val = s_product(zs, eps, perm, data)
    if any(perm[i] == i for i in range(m)):
        assert val == 0
    else:
        assert abs(val - 1) < 1e-10
