"""The discrete primitive H of Re[F G dz] and its exact identities.

For adjacent black and white squares u, v with common vertices z, z' the
increment is ``H(z') - H(z) = (z' - z) F(u) G(v)``.  H is integrated along a
breadth-first spanning tree of the vertex graph and every co-tree edge is
checked, so a returned field is certified path independent.

Edges that are boundary sides of the marked squares (u0, v0 in the even
case, u1, u2 in the odd case) are left out: the primitive lives on the domain
with those squares removed.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional

from .dbar import BlackField, NotEvaluable, WhiteField, d_black, d_white, constants
from .exact import I, LAM, LAMBAR, ZERO, ExactScalar, as_exact
from .lattice import BoundaryArcPair, Domain, DomainError, EDGE_NEIGHBOR, classify_square

__all__ = [
    "VertexField", "PathDependenceError", "integrate_H", "leapfrog_laplacian_vertex",
    "leapfrog_stencil_ok", "leapfrog_formula_check", "saddle_check", "nonlinear_identity",
    "boundary_values", "BoundaryValues", "sholomorphic_correspondence", "SHolReport",
    "vertex_step", "increment", "max_principle_holds", "formula_vertices",
]


class PathDependenceError(ArithmeticError):
    """A closed loop of H increments does not sum to zero."""

    def __init__(self, msg, location=None):
        super().__init__(msg)
        self.location = location


@dataclass
class VertexField:
    """Real-valued function on the vertices of a domain."""
    domain: Domain
    values: dict
    backend: str = "exact"
    gauge_vertex: Optional[tuple] = None
    stderr: Optional[dict] = None

    def __getitem__(self, z):
        return self.values[tuple(z)]

    def __contains__(self, z):
        return tuple(z) in self.values

    def shifted(self, c) -> "VertexField":
        return VertexField(self.domain, {z: h - c for z, h in self.values.items()}, self.backend,
                           self.gauge_vertex, self.stderr)

    def scaled(self, c) -> "VertexField":
        err = None if self.stderr is None else {z: e * abs(c) for z, e in self.stderr.items()}
        return VertexField(self.domain, {z: h * c for z, h in self.values.items()}, self.backend,
                           self.gauge_vertex, err)

    def as_floats(self) -> dict:
        return {z: float(h) for z, h in self.values.items()}


def vertex_step(d: Domain, backend: str):
    """Physical displacement per unit of (p, q): delta / sqrt2."""
    if backend == "exact":
        return ExactScalar(0, Fraction(d.mesh) / 2)
    return float(d.mesh) / 2 ** 0.5


def _displacement(d: Domain, a, b, backend: str):
    s = vertex_step(d, backend)
    dp, dq = b[0] - a[0], b[1] - a[1]
    if backend == "exact":
        return s * ExactScalar(dp, 0, dq)
    return s * complex(dp, dq)


def increment(F: BlackField, G: WhiteField, a, b, c, nb):
    """``(b - a) F(u) G(v)`` for the edge a->b separating squares c and nb."""
    u, v = (c, nb) if c[0] % 2 == 0 else (nb, c)
    return _displacement(F.domain, a, b, F.backend) * F[u] * G[v]


def _edges(d: Domain, skip: frozenset):
    for c in d.squares:
        n, m = c
        cs = ((n + 1, m), (n, m + 1), (n - 1, m), (n, m - 1))
        for k in range(4):
            dn, dm = EDGE_NEIGHBOR[k]
            nb = (n + dn, m + dm)
            if nb in d.squares:
                if c > nb:
                    continue   # interior edge: emit once
            elif c in skip:
                continue
            yield cs[k], cs[(k + 1) % 4], c, nb


def _real_part(x, backend):
    return x.real() if backend == "exact" else x.real


def integrate_H(F: BlackField, G: WhiteField, z0=None, skip: Iterable = ()) -> VertexField:
    """Spanning-tree integration of H with ``H(z0) = 0``.

    ``skip`` lists squares whose boundary sides are excluded (defaults to the
    poles of F and G).  Raises ``PathDependenceError`` on a nonzero loop sum
    or a non-real increment (exact backend), naming the offending edge.
    """
    d = F.domain
    if G.domain != d:
        raise DomainError("F and G live on different domains")
    backend = F.backend
    skip = frozenset(tuple(s) for s in skip) or frozenset(p for p in (F.pole, G.pole) if p is not None)
    z0 = tuple(z0) if z0 is not None else d.z0
    adj: dict = {}
    for a, b, c, nb in _edges(d, skip):
        inc = increment(F, G, a, b, c, nb)
        if backend == "exact":
            if not inc.is_real():
                raise PathDependenceError(f"non-real increment on edge {a}->{b}", (a, b))
        adj.setdefault(a, []).append((b, inc))
        adj.setdefault(b, []).append((a, -inc))
    if z0 not in adj:
        raise DomainError(f"reference vertex {z0} is not in the vertex graph")
    zero = ZERO if backend == "exact" else 0j
    H = {z0: zero}
    queue = deque([z0])
    worst = 0.0
    while queue:
        a = queue.popleft()
        ha = H[a]
        for b, inc in adj[a]:
            hb = H.get(b)
            if hb is None:
                H[b] = ha + inc
                queue.append(b)
            else:
                res = hb - ha - inc
                if backend == "exact":
                    if not res.is_zero():
                        raise PathDependenceError(f"nonzero loop residual at edge {a}->{b}", (a, b))
                else:
                    worst = max(worst, abs(res))
    # a corner vertex of a marked corner square touches only skipped sides and is dropped
    if len(H) != len(adj):
        raise PathDependenceError("vertex graph is disconnected after removing marked sides")
    vals = {z: _real_part(h, backend) for z, h in H.items()}
    out = VertexField(d, vals, backend, z0)
    out.max_loop_residual = worst
    return out


# -- leap-frog Laplacian ---------------------------------------------------------

_LEAP = ((2, 2), (-2, 2), (-2, -2), (2, -2))
_NEAR = ((1, 1), (-1, 1), (-1, -1), (1, -1))


def leapfrog_stencil_ok(H: VertexField, z) -> bool:
    z = tuple(z)
    d = H.domain
    if z in d.boundary_vertex_set or z not in H.values:
        return False
    return all((z[0] + a, z[1] + b) in H.values for a, b in _LEAP)


def leapfrog_laplacian_vertex(H: VertexField, z):
    """``(1 / 4 delta^2) sum_s (H(z'_s) - H(z))`` over the four leap neighbours.

    The leap neighbours sit at ``(p +- 2, q +- 2)``, twice the displacement to
    the four nearest vertices.
    """
    z = tuple(z)
    if not leapfrog_stencil_ok(H, z):
        raise NotEvaluable(f"leap-frog stencil at {z} leaves the domain")
    h = H[z]
    tot = sum((H[(z[0] + a, z[1] + b)] - h for a, b in _LEAP), ZERO if H.backend == "exact" else 0.0)
    delta = H.domain.mesh
    if H.backend == "exact":
        return tot * as_exact(Fraction(1, 4) / Fraction(delta) ** 2)
    return tot / (4.0 * float(delta) ** 2)


def _labels(z):
    """(u_minus, u_plus, v_sharp, v_flat, unit) around a vertex.

    For odd p the squares sit as in the defining picture; for even p the
    picture is turned by a quarter turn, which multiplies the formula by -i.
    """
    p, q = z
    if p % 2:
        return (p - 1, q), (p + 1, q), (p, q + 1), (p, q - 1), 1
    return (p, q - 1), (p, q + 1), (p - 1, q), (p + 1, q), -1j


def leapfrog_formula_check(H: VertexField, F: BlackField, G: WhiteField, z):
    """Compare the leap-frog Laplacian with the product formula in dF and dG.

    Returns ``(lhs, rhs, equal)``; equality is exact on the exact backend and
    to 1e-9 relative on the float backend.
    """
    z = tuple(z)
    lhs = leapfrog_laplacian_vertex(H, z)
    um, up, vs, vf, unit = _labels(z)
    lam, lamb, i, _ = constants(F.backend, F.domain.mesh)
    dFs, dFf = d_black(F, vs), d_black(F, vf)
    dGm, dGp = d_white(G, um), d_white(G, up)
    br = lam * dFs * dGm - lamb * dFs * dGp + lamb * dFf * dGm - lam * dFf * dGp
    if F.backend == "exact":
        u = ExactScalar(1) if unit == 1 else ExactScalar(0, 0, -1)
        rhs = u * as_exact(Fraction(F.domain.mesh)) * br
        return lhs, rhs, (rhs - lhs).is_zero()
    rhs = complex(unit) * float(F.domain.mesh) * br
    scale = max(abs(lhs), abs(rhs), 1e-300)
    return lhs, rhs, abs(rhs - lhs) <= 1e-9 * max(1.0, scale)


def formula_vertices(H: VertexField, F: BlackField, G: WhiteField, marked: Iterable = ()) -> list:
    """Interior vertices where the product formula applies.

    The leap stencil must stay in the domain, the four squares at z must be
    free of the marked squares, and the d-stencils at them must be evaluable.
    """
    marked = {tuple(s) for s in marked} | {p for p in (F.pole, G.pole) if p is not None}
    out = []
    d = H.domain
    for z in d.interior_vertices:
        if not leapfrog_stencil_ok(H, z):
            continue
        um, up, vs, vf, _ = _labels(z)
        if marked & {um, up, vs, vf}:
            continue
        try:
            d_black(F, vs), d_black(F, vf), d_white(G, um), d_white(G, up)
        except NotEvaluable:
            continue
        out.append(z)
    return out


# -- saddle structure ---------------------------------------------------------------

def _sign(x, backend):
    if backend == "exact":
        return x.real_sign()
    return (x > 0) - (x < 0)


def saddle_check(H: VertexField, tol: float = 0.0) -> list:
    """Interior vertices where the product of the four neighbour differences is positive."""
    out = []
    for z in H.domain.interior_vertices:
        h = H[z]
        prod = None
        for a, b in _NEAR:
            diff = h - H[(z[0] + a, z[1] + b)]
            prod = diff if prod is None else prod * diff
        if H.backend == "exact":
            if prod.real_sign() > 0:
                out.append(z)
        elif prod > tol:
            out.append(z)
    return out


def nonlinear_identity(H: VertexField, z):
    """``(H - H1)(H - H3) + (H - H2)(H - H4)`` at an interior vertex."""
    z = tuple(z)
    h = H[z]
    hs = [H[(z[0] + a, z[1] + b)] for a, b in _NEAR]
    return (h - hs[0]) * (h - hs[2]) + (h - hs[1]) * (h - hs[3])


def max_principle_holds(H: VertexField) -> bool:
    """Max and min of H are attained at boundary vertices."""
    key = (lambda x: complex(x).real) if H.backend == "exact" else float
    vals = H.values
    allmax = max(key(v) for v in vals.values())
    allmin = min(key(v) for v in vals.values())
    bd = [key(vals[z]) for z in H.domain.boundary_vertex_set if z in vals]
    bmax, bmin = max(bd), min(bd)
    return bmax >= allmax and bmin <= allmin


# -- boundary values ----------------------------------------------------------------

@dataclass
class BoundaryValues:
    value_u0v0: object
    value_v0u0: object
    constant_on_arcs: bool
    via_G: object           # 4 i delta^2 G(v0) dbar F(v0)
    via_F: object           # -4 i delta^2 F(u0) dbar G(u0)
    agree: bool
    gauged: VertexField = None


def boundary_values(H: VertexField, arcs: BoundaryArcPair, F: BlackField, G: WhiteField) -> BoundaryValues:
    """Arc values of H in the gauge ``H = 0`` on the arc (v0 u0)."""
    backend = H.backend
    v_a = {H[z] for z in arcs.arc_u0v0} if backend == "exact" else [H[z] for z in arcs.arc_u0v0]
    v_b = {H[z] for z in arcs.arc_v0u0} if backend == "exact" else [H[z] for z in arcs.arc_v0u0]
    if backend == "exact":
        const = len(v_a) == 1 and len(v_b) == 1
        base = next(iter(v_b))
    else:
        const = (max(v_a) - min(v_a) < 1e-9 * max(1.0, max(map(abs, v_a)))
                 and max(v_b) - min(v_b) < 1e-9 * max(1.0, max(map(abs, v_b))))
        base = v_b[0]
    gauged = H.shifted(base)
    top = gauged[arcs.arc_u0v0[0]]
    from .dbar import dbar_black, dbar_white
    u0, v0 = arcs.u0, arcs.v0
    lam, lamb, i, _ = constants(backend, H.domain.mesh)
    if backend == "exact":
        d2 = as_exact(Fraction(H.domain.mesh) ** 2)
        four = as_exact(4)
    else:
        d2 = float(H.domain.mesh) ** 2
        four = 4.0
    via_G = four * i * d2 * G[v0] * dbar_black(F, v0)
    via_F = -(four * i * d2 * F[u0] * dbar_white(G, u0))
    if backend == "exact":
        agree = (via_G - via_F).is_zero() and (via_G - top).is_zero()
    else:
        agree = abs(complex(via_G) - complex(via_F)) < 1e-9 * max(1.0, abs(complex(via_G))) and \
            abs(complex(via_G) - top) < 1e-9 * max(1.0, abs(top))
    return BoundaryValues(top, gauged[arcs.arc_v0u0[0]], const, via_G, via_F, agree, gauged)


# -- s-holomorphic correspondence -------------------------------------------------

def _tau(s, backend):
    t = classify_square(s)
    if backend == "exact":
        return {"B0": ExactScalar(1), "B1": I, "W0": LAM, "W1": LAMBAR}[t]
    r = 2 ** -0.5
    return {"B0": 1 + 0j, "B1": 1j, "W0": complex(r, r), "W1": complex(r, -r)}[t]


def _proj(tau, z, backend):
    if backend == "exact":
        return tau * (z * tau.conjugate()).real()
    return tau * (z * tau.conjugate()).real


@dataclass
class SHolReport:
    projection_mismatches: list
    F_shol: dict
    G_shol: dict
    H_shol: dict
    match: bool
    checked_squares: int = 0


def _vertex_values(f, d: Domain, offsets):
    out = {}
    for z in d.vertices:
        if z[0] % 2:
            continue
        try:
            out[z] = f[(z[0] + offsets[0][0], z[1] + offsets[0][1])] + f[(z[0] + offsets[1][0], z[1] + offsets[1][1])]
        except NotEvaluable:
            pass
    return out


def sholomorphic_correspondence(F: BlackField, G: WhiteField, H: VertexField, marked: Iterable = ()) -> SHolReport:
    """Build F_shol, G_shol on vertices of even p and squares, integrate H_shol.

    F_shol(z) = F(z + (0,1)) + F(z - (0,1)) and G_shol(z) = G(z + (1,0)) + G(z - (1,0))
    for z with p even; on a square a both are the projection onto tau(a) of
    the vertex value at either even-p corner, and the two corners must agree.
    H_shol lives on odd-p vertices with increments F_shol(a) G_shol(a) dz along
    the diagonal of a.
    """
    d = F.domain
    backend = F.backend
    marked = {tuple(s) for s in marked} | {p for p in (F.pole, G.pole) if p is not None}
    Fz = _vertex_values(F, d, ((0, 1), (0, -1)))
    Gz = _vertex_values(G, d, ((1, 0), (-1, 0)))
    Fa, Ga, mism = {}, {}, []
    for a in d.squares:
        n, m = a
        even_corners = [(n + 1, m), (n - 1, m)] if n % 2 else [(n, m + 1), (n, m - 1)]
        tau = _tau(a, backend)
        for vals, store in ((Fz, Fa), (Gz, Ga)):
            projs = [_proj(tau, vals[z], backend) for z in even_corners if z in vals]
            if not projs:
                continue
            if len(projs) == 2 and a not in marked:
                same = (projs[0] - projs[1]).is_zero() if backend == "exact" else abs(projs[0] - projs[1]) < 1e-9
                if not same:
                    mism.append(a)
            store[a] = projs[0]
    # squares' own values must agree with F on blacks and G on whites
    for a in d.squares:
        if a in marked:
            continue
        own, store = (F[a], Fa) if a[0] % 2 == 0 else (G[a], Ga)
        if a in store:
            ok = (store[a] - own).is_zero() if backend == "exact" else abs(store[a] - own) < 1e-9
            if not ok and a not in mism:
                mism.append(a)
    # integrate H_shol on odd-p vertices
    adj: dict = {}
    for a in d.squares:
        if a in marked or a not in Fa or a not in Ga:
            continue
        n, m = a
        z1, z2 = ((n, m - 1), (n, m + 1)) if n % 2 else ((n - 1, m), (n + 1, m))
        inc = Fa[a] * Ga[a] * _displacement(d, z1, z2, backend)
        adj.setdefault(z1, []).append((z2, inc))
        adj.setdefault(z2, []).append((z1, -inc))
    Hs: dict = {}
    match = True
    for start in sorted(adj):
        if start in Hs:
            continue
        Hs[start] = as_exact(H[start]) if backend == "exact" else complex(H[start])
        queue = deque([start])
        while queue:
            a = queue.popleft()
            for b, inc in adj[a]:
                if b not in Hs:
                    Hs[b] = Hs[a] + inc
                    queue.append(b)
                else:
                    res = Hs[b] - Hs[a] - inc
                    if (backend == "exact" and not res.is_zero()) or (backend == "float" and abs(res) > 1e-9):
                        match = False
    for z, h in Hs.items():
        diff = h - H[z]
        if (backend == "exact" and not diff.is_zero()) or (backend == "float" and abs(diff) > 1e-9):
            match = False
    return SHolReport(mism, Fa, Ga, Hs, match and not mism, len(Fa))
