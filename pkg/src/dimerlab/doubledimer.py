"""Double-dimer heights: enumeration oracle, F/G/H pipeline, sampling, superposition.

Heights follow one fixed orientation rule.  Walk an edge with the square c
on the left.  If c is black the height drops by 1/4, or rises by 3/4 when a
domino crosses the edge; if c is white the signs flip.  This reproduces the
worked example (h = -1 at the marked vertex of the L-shaped picture).

Expected double-dimer heights are reported normalized: 0 on the boundary arc
that carries the reference vertex and 1 on the other arc.
"""
from __future__ import annotations

import os
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional

import numpy as np

from .dbar import solve_F, solve_F_odd, solve_G, solve_G_odd
from .exact import ONE, ZERO, ExactScalar, as_exact
from .kasteleyn import (KasteleynSystem, assemble, coupling_column, inverse_matrix,
                        kasteleyn_weight)
from .lattice import (CORNER_OFFSETS, EDGE_NEIGHBOR, Domain, DomainError, _corner_squares_all_b0,
                      _boundary_run, boundary_arcs, classify_square, is_black, is_tileable, split_boundary)
from .linalg import SingularSystemError
from .primitive import VertexField, integrate_H, leapfrog_laplacian_vertex, leapfrog_stencil_ok

__all__ = [
    "Tiling", "DoubleDimerConfig", "CapExceeded", "height_of_tiling", "enumerate_tilings",
    "enumerate_double_dimer_expectation", "enumerate_odd_expectation", "coupling_dbl",
    "coupling_dbl_scan", "coupling_dbl_odd", "expected_height", "expected_height_odd",
    "verify_theorem1", "Theorem1Report", "sample_tiling", "TilingSampler", "mc_expected_height",
    "superpose", "default_poles", "default_odd_poles",
]

DEFAULT_CAP = 14


class CapExceeded(ValueError):
    """Brute-force enumeration refused: the domain is larger than the cap."""


# -- tilings ------------------------------------------------------------------------

@dataclass(frozen=True)
class Tiling:
    """Perfect matching of a domain, as (black, white) pairs."""
    domain: Domain
    edges: frozenset

    def __post_init__(self):
        seen = set()
        for u, v in self.edges:
            if not is_black(u) or is_black(v):
                raise DomainError(f"edge {(u, v)} is not (black, white)")
            if (u[0] - v[0], u[1] - v[1]) not in ((1, 1), (-1, -1), (1, -1), (-1, 1)):
                raise DomainError(f"squares {u}, {v} are not adjacent")
            seen.add(u)
            seen.add(v)
        if len(seen) != 2 * len(self.edges) or seen != set(self.domain.squares):
            raise DomainError("tiling does not cover every square exactly once")

    def partner(self) -> dict:
        out = {}
        for u, v in self.edges:
            out[u] = v
            out[v] = u
        return out

    def to_json(self) -> list:
        return [[list(u), list(v)] for u, v in sorted(self.edges)]


def enumerate_tilings(d: Domain, cap: int = DEFAULT_CAP) -> list:
    """All domino tilings by backtracking on the smallest uncovered square."""
    if len(d.squares) > cap:
        raise CapExceeded(f"{len(d.squares)} squares exceeds the enumeration cap {cap}")
    order = sorted(d.squares)
    out: list = []
    used: set = set()
    chosen: list = []

    def rec(i):
        while i < len(order) and order[i] in used:
            i += 1
        if i == len(order):
            out.append(Tiling(d, frozenset(chosen)))
            return
        s = order[i]
        used.add(s)
        for dn, dm in EDGE_NEIGHBOR:
            t = (s[0] + dn, s[1] + dm)
            if t in d.squares and t not in used:
                used.add(t)
                chosen.append((s, t) if is_black(s) else (t, s))
                rec(i + 1)
                chosen.pop()
                used.discard(t)
        used.discard(s)

    rec(0)
    return out


def _corners(c):
    return [(c[0] + a, c[1] + b) for a, b in CORNER_OFFSETS]


def _height_increments(d: Domain, crossed: frozenset):
    """Yield (a, b, dh) for every edge of d, each interior edge once."""
    q, tq = Fraction(1, 4), Fraction(3, 4)
    for c in d.squares:
        cs = _corners(c)
        blk = is_black(c)
        for k in range(4):
            dn, dm = EDGE_NEIGHBOR[k]
            nb = (c[0] + dn, c[1] + dm)
            if nb in d.squares and c > nb:
                continue
            hit = frozenset((c, nb)) in crossed
            if blk:
                dh = tq if hit else -q
            else:
                dh = -tq if hit else q
            yield cs[k], cs[(k + 1) % 4], dh


def height_of_tiling(t: Tiling, z0=None) -> VertexField:
    """Thurston height with ``h(z0) = 0``; values are exact quarter-integers."""
    d = t.domain
    crossed = frozenset(frozenset(e) for e in t.edges)
    adj: dict = {}
    for a, b, dh in _height_increments(d, crossed):
        adj.setdefault(a, []).append((b, dh))
        adj.setdefault(b, []).append((a, -dh))
    z0 = tuple(z0) if z0 is not None else d.z0
    if z0 not in adj:
        raise DomainError(f"reference vertex {z0} is not a vertex of the domain")
    h = {z0: Fraction(0)}
    queue = deque([z0])
    while queue:
        a = queue.popleft()
        for b, dh in adj[a]:
            if b not in h:
                h[b] = h[a] + dh
                queue.append(b)
            elif h[b] != h[a] + dh:
                raise DomainError(f"inconsistent tiling: height loop fails at edge {a}->{b}")
    return VertexField(d, {z: as_exact(v) for z, v in h.items()}, "exact", z0)


def _mean_height(d: Domain, z0, cap: int) -> dict:
    tilings = enumerate_tilings(d, cap)
    if not tilings:
        raise SingularSystemError(f"domain with {len(d.squares)} squares is not tileable")
    tot: dict = {}
    for t in tilings:
        for z, v in height_of_tiling(t, z0).values.items():
            tot[z] = tot.get(z, ZERO) + v
    n = as_exact(Fraction(1, len(tilings)))
    return {z: v * n for z, v in tot.items()}


def _normalized_difference(d: Domain, h1: dict, h2: dict, arcs, z0) -> VertexField:
    common = set(h1) & set(h2)
    raw = {z: h1[z] - h2[z] for z in common}
    top = raw[next(z for z in arcs.arc_u0v0 if z in raw)]
    if not (top.is_real() and abs(complex(top).real) == 1):
        raise ArithmeticError(f"double-dimer height jump across the marked squares is {top}, not +-1")
    out = VertexField(d, {z: v / top for z, v in raw.items()}, "exact", z0)
    out.raw_sign = int(complex(top).real)
    return out


def _reference(arcs, doms, z0=None):
    """Default reference vertex: first vertex of the second arc shared by all domains."""
    if z0 is None:
        z0 = next((z for z in arcs.arc_v0u0 if all(z in dd.vertex_set for dd in doms)), None)
    else:
        z0 = tuple(z0)
    if z0 is None or z0 not in arcs.arc_v0u0:
        raise DomainError("reference vertex must lie on the arc ending at the first marked square")
    return z0


def enumerate_double_dimer_expectation(d: Domain, u0, v0, z0=None, cap: int = DEFAULT_CAP) -> VertexField:
    """Brute-force E[h] for the pair (Omega, Omega minus {u0, v0}), normalized to {0, 1}.

    By independence E[h1 - h2] = E[h1] - E[h2], so the cost is the sum of the
    two tiling counts rather than their product.
    """
    arcs = boundary_arcs(d, u0, v0)
    d2 = d.without(u0, v0)
    z0 = _reference(arcs, (d, d2), z0)
    return _normalized_difference(d, _mean_height(d, z0, cap), _mean_height(d2, z0, cap), arcs, z0)


def enumerate_odd_expectation(d: Domain, u1, u2, z0=None, cap: int = DEFAULT_CAP) -> VertexField:
    """Brute-force E[h] for the pair (Omega minus u1, Omega minus u2), normalized to {0, 1}.

    The value 1 sits on the arc running from u1 to u2.
    """
    arcs = split_boundary(d, u1, u2)
    z0 = _reference(arcs, (d.without(u1), d.without(u2)), z0)
    return _normalized_difference(d, _mean_height(d.without(u1), z0, cap),
                                  _mean_height(d.without(u2), z0, cap), arcs, z0)


# -- pole choices ---------------------------------------------------------------------

def _boundary_squares(d: Domain):
    """Boundary squares whose boundary sides form one passage, in walk order."""
    seen = []
    for c, _ in d.boundary_walk:
        if c not in seen:
            seen.append(c)
    for c in seen:
        try:
            _boundary_run(d, c)
        except DomainError:
            continue
        yield c


def _admissible(d: Domain, removed) -> bool:
    """Removing the squares leaves a tileable, connected, simply connected domain."""
    try:
        d2 = Domain(set(d.squares) - set(removed), d.mesh)
    except DomainError:
        return False
    return is_tileable(d2)


def _arcs_survive(d: Domain, arcs, doms) -> bool:
    return all(any(all(z in dd.vertex_set for dd in doms) for z in arc)
               for arc in (arcs.arc_u0v0, arcs.arc_v0u0))


def default_poles(d: Domain):
    """First (B0, W0) pair of single-sided boundary squares with a tileable complement."""
    cands = list(_boundary_squares(d))
    us = [c for c in cands if classify_square(c) == "B0"]
    vs = [c for c in cands if classify_square(c) == "W0"]
    for u0 in us:
        for v0 in vs:
            if _admissible(d, (u0, v0)) and _arcs_survive(d, split_boundary(d, u0, v0), [d.without(u0, v0)]):
                return u0, v0
    raise DomainError("no admissible (u0, v0) pair on this domain")


def default_odd_poles(d: Domain):
    """u1: a B0 boundary square; u2: the farthest other boundary black, both with tileable complements."""
    walk_sq = []
    for c, _ in d.boundary_walk:
        if c not in walk_sq:
            walk_sq.append(c)
    blacks = [c for c in walk_sq if is_black(c)]
    u1 = next((c for c in blacks if classify_square(c) == "B0" and _admissible(d, (c,))), None)
    if u1 is None:
        raise DomainError("no B0 boundary square with a tileable complement")
    i1 = walk_sq.index(u1)
    L = len(walk_sq)
    for step in sorted(range(1, L), key=lambda s: -min(s, L - s)):
        c = walk_sq[(i1 + step) % L]
        if is_black(c) and c != u1 and _admissible(d, (c,)):
            try:
                arcs = split_boundary(d, u1, c)
            except DomainError:
                continue
            if _arcs_survive(d, arcs, [d.without(u1), d.without(c)]):
                return u1, c
    raise DomainError("no admissible u2")


# -- coupling factorization ------------------------------------------------------

def _coupling_pair(d: Domain, u0, v0, backend: str):
    C1 = inverse_matrix(assemble(d, backend))
    C2 = inverse_matrix(assemble(d.without(u0, v0), backend))
    return C1, C2


def coupling_dbl(d: Domain, u0, v0, u, v, backend: str = "exact", _cache=None):
    """(direct, factored, equal) for C_Omega - C_Omega' at (u, v).

    C_Omega' is taken to vanish at u0 and v0.  The factored value uses the
    mesh-1 fields F, G and the constant 1/(4 G(v0)).
    """
    u0, v0, u, v = map(tuple, (u0, v0, u, v))
    if _cache is None:
        if not is_tileable(d) or not is_tileable(d.without(u0, v0)):
            raise DomainError("even-case hypotheses fail: Omega or Omega' is not tileable")
        C1, C2 = _coupling_pair(d, u0, v0, backend)
        F = solve_F(d, v0, "mesh-1", backend)
        G = solve_G(d, u0, "mesh-1", backend)
    else:
        C1, C2, F, G = _cache
    zero = ZERO if backend == "exact" else 0j
    direct = C1[(u, v)] - C2.get((u, v), zero)
    four = as_exact(4) if backend == "exact" else 4.0
    const = (four * G[v0]).inverse() if backend == "exact" else 1 / (4.0 * G[v0])
    factored = const * F[u] * G[v]
    if backend == "exact":
        return direct, factored, (direct - factored).is_zero()
    return direct, factored, abs(direct - factored) <= 1e-9 * max(1.0, abs(direct))


def coupling_dbl_scan(d: Domain, u0, v0, backend: str = "exact") -> dict:
    """Check the factorization at every (u, v); returns a summary dict."""
    u0, v0 = tuple(u0), tuple(v0)
    if not is_tileable(d) or not is_tileable(d.without(u0, v0)):
        raise DomainError("even-case hypotheses fail: Omega or Omega' is not tileable")
    C1, C2 = _coupling_pair(d, u0, v0, backend)
    F = solve_F(d, v0, "mesh-1", backend)
    G = solve_G(d, u0, "mesh-1", backend)
    bad = []
    n = 0
    for u in d.blacks:
        for v in d.whites:
            n += 1
            if not coupling_dbl(d, u0, v0, u, v, backend, (C1, C2, F, G))[2]:
                bad.append((u, v))
    four = as_exact(4) if backend == "exact" else 4.0
    return {"pairs": n, "failures": bad, "const": (four * G[v0]).inverse() if backend == "exact" else 1 / (4 * G[v0])}


def coupling_dbl_odd(d: Domain, u1, u2, backend: str = "exact") -> dict:
    """Fit C_{Omega-u1} - C_{Omega-u2} = c F(u) G(v) and check c is global.

    Removed squares carry coupling zero.  Returns the fitted constant and the
    list of pairs where the fit fails.
    """
    u1, u2 = tuple(u1), tuple(u2)
    F = solve_F_odd(d, u1, backend)
    G = solve_G_odd(d, u1, u2, backend=backend)
    C1 = inverse_matrix(assemble(d.without(u1), backend))
    C2 = inverse_matrix(assemble(d.without(u2), backend))
    zero = ZERO if backend == "exact" else 0j
    const, bad = None, []
    for u in d.blacks:
        for v in d.whites:
            direct = C1.get((u, v), zero) - C2.get((u, v), zero)
            prod = F[u] * G[v]
            if const is None and (not prod.is_zero() if backend == "exact" else abs(prod) > 1e-12):
                const = direct / prod
            fac = zero if const is None else const * prod
            ok = (direct - fac).is_zero() if backend == "exact" else abs(direct - fac) < 1e-9
            if not ok:
                bad.append((u, v))
    return {"const": const, "failures": bad}


# -- expected height via the pipeline ---------------------------------------------------

def _normalize_H(H: VertexField, arcs) -> VertexField:
    base = H[H.gauge_vertex]
    top = H[next(z for z in arcs.arc_u0v0 if z in H.values)] - base
    if H.backend == "exact":
        inv = top.inverse()
    else:
        inv = 1.0 / top
    out = VertexField(H.domain, {z: (h - base) * inv for z, h in H.values.items()}, H.backend,
                      H.gauge_vertex)
    out.arc_value = top
    return out


def expected_height(d: Domain, u0=None, v0=None, z0=None, backend: str = "exact") -> VertexField:
    """E[h] through F, G and their primitive H, scaled to 0 on (v0 u0) and 1 on (u0 v0)."""
    if u0 is None or v0 is None:
        u0, v0 = default_poles(d)
    u0, v0 = tuple(u0), tuple(v0)
    arcs = boundary_arcs(d, u0, v0)
    sys = assemble(d, backend)
    F = solve_F(d, v0, "mesh-1", backend, sys)
    G = solve_G(d, u0, "mesh-1", backend, sys)
    H = integrate_H(F, G, _reference(arcs, (d, d.without(u0, v0)), z0), skip=(u0, v0))
    return _normalize_H(H, arcs)


def expected_height_odd(d: Domain, u1=None, u2=None, z0=None, backend: str = "exact") -> VertexField:
    """E[h] for (Omega - u1, Omega - u2) via the odd-case F, G; 1 on the arc from u1 to u2."""
    if u1 is None or u2 is None:
        u1, u2 = default_odd_poles(d)
    u1, u2 = tuple(u1), tuple(u2)
    if classify_square(u1) != "B0":
        raise DomainError("u1 must be of type B0")
    arcs = split_boundary(d, u1, u2)
    F = solve_F_odd(d, u1, backend)
    G = solve_G_odd(d, u1, u2, backend=backend)
    H = integrate_H(F, G, _reference(arcs, (d.without(u1), d.without(u2)), z0), skip=(u1, u2))
    return _normalize_H(H, arcs)


@dataclass
class Theorem1Report:
    interior: int
    checked: int
    violations: list
    max_abs: float
    u1: tuple
    u2: tuple
    field: VertexField = field(repr=False, default=None)

    @property
    def ok(self) -> bool:
        return not self.violations and self.checked > 0

    def summary(self) -> str:
        return f"{len(self.violations)} violations / {self.checked} interior vertices"


def verify_theorem1(d: Domain, u1=None, u2=None, z0=None, backend: str = "exact",
                    rtol: float = 1e-9) -> Theorem1Report:
    """Leap-frog Laplacian of the normalized E[h] at every interior vertex with a full stencil."""
    if not d.is_odd:
        raise DomainError("the leap-frog harmonicity check needs an odd domain (one extra black square)")
    if not _corner_squares_all_b0(d):
        raise DomainError("not an odd Temperley domain: some corner square is not B0")
    if u1 is None or u2 is None:
        u1, u2 = default_odd_poles(d)
    E = expected_height_odd(d, u1, u2, z0, backend)
    viol, worst, n = [], 0.0, 0
    for z in d.interior_vertices:
        if not leapfrog_stencil_ok(E, z):
            continue
        n += 1
        lap = leapfrog_laplacian_vertex(E, z)
        mag = abs(complex(lap)) if backend == "exact" else abs(lap)
        worst = max(worst, mag)
        if (backend == "exact" and not lap.is_zero()) or (backend != "exact" and mag > rtol):
            viol.append(z)
    return Theorem1Report(len(d.interior_vertices), n, viol, worst, tuple(u1), tuple(u2), E)


# -- sampling -------------------------------------------------------------------------

class _Breakdown(ArithmeticError):
    pass


class TilingSampler:
    """Uniform tilings by sequential conditioning of the coupling function.

    White squares are matched in lexicographic order.  The current white v
    picks its partner u with probability ``|C(u, v)|`` and the inverse is
    updated by the Schur complement ``C'(x, y) = C(x, y) - C(x, v) C(u, y) / C(u, v)``.
    Conditional tables are memoized by the prefix of chosen partners.
    """

    def __init__(self, d: Domain, backend: str = "float", memo_bytes: int = 64 << 20, tol: float = 1e-9):
        self.domain = d
        self.backend = backend
        self.tol = tol
        self.sys = assemble(d, backend)
        if self.sys.singular:
            raise SingularSystemError("domain is not tileable")
        self.whites = list(self.sys.whites)
        self.blacks = list(self.sys.blacks)
        self.adj = [[self.sys.bidx[(v[0] + a, v[1] + b)] for a, b in ((1, 1), (-1, -1), (1, -1), (-1, 1))
                     if (v[0] + a, v[1] + b) in self.sys.bidx] for v in self.whites]
        self._memo: dict = {}
        self._budget = memo_bytes
        self._root = None
        self._exact_fallback = None

    def _root_matrix(self):
        if self._root is None:
            if self.backend == "exact":
                C = inverse_matrix(self.sys)
                self._root = [[C[(u, v)] for v in self.whites] for u in self.blacks]
            else:
                self._root = np.linalg.inv(self.sys.dense())
        return self._root

    def _step(self, prefix: tuple, M, k: int):
        """Candidates and probabilities for white k given the matrix after ``prefix``."""
        hit = self._memo.get(prefix)
        if hit is not None:
            return hit
        used = set(prefix)
        cands = [j for j in self.adj[k] if j not in used]
        if self.backend == "exact":
            probs = [float(abs(complex(M[j][k]))) for j in cands]
            exact_sum = ZERO
            for j in cands:
                exact_sum = exact_sum + _abs_unit(M[j][k])
            if not (exact_sum - ONE).is_zero():
                raise ArithmeticError("conditional probabilities do not sum to one")
        else:
            probs = [abs(M[j, k]) for j in cands]
            if abs(sum(probs) - 1.0) > 1e-6:
                raise _Breakdown("conditional probabilities drifted from one")
        entry = (cands, np.cumsum(probs) / sum(probs))
        return entry

    def _update(self, M, j: int, k: int):
        if self.backend == "exact":
            piv = M[j][k].inverse()
            col = [M[x][k] for x in range(len(M))]
            row = M[j]
            out = []
            for x in range(len(M)):
                cx = col[x]
                if cx.is_zero():
                    out.append(list(M[x]))
                else:
                    f = cx * piv
                    out.append([M[x][y] - f * row[y] for y in range(len(row))])
            return out
        piv = M[j, k]
        if abs(piv) < self.tol:
            raise _Breakdown("pivot below tolerance")
        return M - np.outer(M[:, k], M[j, :]) / piv

    def sample_indices(self, rng: np.random.Generator) -> tuple:
        try:
            return self._sample(rng)
        except _Breakdown:
            if self._exact_fallback is None:
                self._exact_fallback = TilingSampler(self.domain, "exact")
            return self._exact_fallback._sample(rng)

    def _sample(self, rng) -> tuple:
        M = self._root_matrix()
        prefix: tuple = ()
        for k in range(len(self.whites)):
            cached = self._memo.get(prefix)
            if cached is None:
                cands, cum = self._step(prefix, M, k)
                cached = (cands, cum, M)
                size = M.nbytes if self.backend == "float" else 64 * len(M) ** 2
                if self._budget >= size:
                    self._memo[prefix] = cached
                    self._budget -= size
            cands, cum, M = cached
            r = rng.random()
            i = min(int(np.searchsorted(cum, r, side="right")), len(cands) - 1)
            j = cands[i]
            nxt = prefix + (j,)
            hit = self._memo.get(nxt)
            M = hit[2] if hit is not None else self._update(M, j, k)
            prefix = nxt
        return prefix

    def sample(self, rng: np.random.Generator) -> Tiling:
        idx = self.sample_indices(rng)
        return Tiling(self.domain, frozenset((self.blacks[j], self.whites[k]) for k, j in enumerate(idx)))


def _abs_unit(z: ExactScalar) -> ExactScalar:
    # |z| for z a real multiple of a unit in {1, i, lam, lambar} up to sign
    from .exact import I, LAM, LAMBAR
    for unit in (ONE, I, LAMBAR, LAM):
        w = z * unit
        if w.is_real():
            return w if w.real_sign() >= 0 else -w
    raise ArithmeticError("coupling entry is not a unit multiple of a real number")


def sample_tiling(sys_or_domain, rng_seed=None) -> Tiling:
    """One exact uniform sample; accepts a KasteleynSystem or a Domain."""
    d = sys_or_domain.domain if isinstance(sys_or_domain, KasteleynSystem) else sys_or_domain
    backend = sys_or_domain.backend if isinstance(sys_or_domain, KasteleynSystem) else "float"
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    return TilingSampler(d, backend).sample(rng)


def _workers(requested: Optional[int]) -> int:
    env = os.environ.get("DIMERLAB_THREADS")
    cap = int(env) if env else (os.cpu_count() or 1)
    n = requested if requested is not None else 1
    return max(1, min(n, cap))


_BATCHES = 20


def _batch_heights(args):
    d, d2, z0, n, seed, verts = args
    rng = np.random.default_rng(seed)
    s1, s2 = TilingSampler(d), TilingSampler(d2)
    acc = np.zeros(len(verts))
    for _ in range(n):
        h1 = height_of_tiling(s1.sample(rng), z0).values
        h2 = height_of_tiling(s2.sample(rng), z0).values
        acc += np.array([float(h1[z] - h2[z]) for z in verts])
    return acc / max(n, 1)


def mc_expected_height(d: Domain, u0, v0, N: int, seed: int = 0, workers: Optional[int] = None,
                       z0=None) -> VertexField:
    """Monte Carlo E[h] normalized to {0, 1}, with batch-means standard errors.

    The N samples are split into 20 batches, each with its own stream spawned
    from the master seed, so the result depends only on (seed, N).
    """
    u0, v0 = tuple(u0), tuple(v0)
    arcs = boundary_arcs(d, u0, v0)
    z0 = tuple(z0) if z0 is not None else arcs.arc_v0u0[0]
    d2 = d.without(u0, v0)
    verts = sorted(set(d.vertex_set) & set(d2.vertex_set))
    seeds = np.random.SeedSequence(seed).spawn(_BATCHES)
    sizes = [N // _BATCHES + (1 if b < N % _BATCHES else 0) for b in range(_BATCHES)]
    jobs = [(d, d2, z0, sizes[b], seeds[b], verts) for b in range(_BATCHES) if sizes[b]]
    nw = _workers(workers)
    if nw > 1:
        with ProcessPoolExecutor(nw) as ex:
            means = list(ex.map(_batch_heights, jobs))
    else:
        means = [_batch_heights(j) for j in jobs]
    w = np.array([j[3] for j in jobs], dtype=float)
    means = np.array(means)
    mean = (w[:, None] * means).sum(0) / w.sum()
    nb = len(jobs)
    se = np.sqrt(((means - mean) ** 2).sum(0) / (nb * (nb - 1))) if nb > 1 else np.full(len(verts), np.nan)
    idx = {z: i for i, z in enumerate(verts)}
    sign = mean[idx[arcs.arc_u0v0[0]]]
    sign = 1.0 if sign >= 0 else -1.0
    return VertexField(d, {z: float(mean[i]) * sign for z, i in idx.items()}, "float", z0,
                       {z: float(se[i]) for z, i in idx.items()})


# -- superposition ----------------------------------------------------------------------

@dataclass
class DoubleDimerConfig:
    tiling1: Tiling
    tiling2: Tiling
    double_edges: list
    loops: list           # each a cyclic list of squares, t1 edges white->black, t2 black->white
    interface: Optional[list]

    def to_json(self) -> dict:
        return {
            "double_edges": [[list(u), list(v)] for u, v in self.double_edges],
            "loops": [[list(s) for s in loop] for loop in self.loops],
            "interface": None if self.interface is None else [list(s) for s in self.interface],
        }


def superpose(t1: Tiling, t2: Tiling, d1: Optional[Domain] = None, d2: Optional[Domain] = None) -> DoubleDimerConfig:
    """Decompose the union of two tilings into double edges, loops and an interface.

    Loops are listed as square cycles starting at their smallest white
    square; the interface, if any, runs from its white end to its black end.
    """
    d1 = d1 or t1.domain
    d2 = d2 or t2.domain
    sym = set(d1.squares) ^ set(d2.squares)
    if len(sym) not in (0, 2):
        raise DomainError("domains must differ by zero or two squares")
    p1, p2 = t1.partner(), t2.partner()
    doubles = sorted(e for e in t1.edges if e in t2.edges)
    in_double = {s for e in doubles for s in e}

    def walk(start, use1):
        path, s = [start], start
        while True:
            nxt = (p1 if use1 else p2).get(s)
            if nxt is None or nxt == start:
                return path, nxt == start
            path.append(nxt)
            s = nxt
            use1 = not use1

    seen = set(in_double)
    interface = None
    if sym:
        # orientation: t1 edges run white->black, so a white end leaves by t1, a black end by t2
        for e in sorted(sym):
            use1 = not is_black(e)
            if e in (p1 if use1 else p2):
                interface, _ = walk(e, use1)
                break
        if interface is None or interface[-1] not in sym:
            raise DomainError("interface does not join the two marked squares")
        seen |= set(interface)
    loops = []
    for s in sorted(t for t in d1.squares if not is_black(t)):
        if s in seen:
            continue
        path, closed = walk(s, True)
        if not closed:
            raise DomainError("open path found away from the symmetric difference")
        seen |= set(path)
        loops.append(path)
    return DoubleDimerConfig(t1, t2, doubles, loops, interface)
