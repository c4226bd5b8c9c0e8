"""Continuum references: harmonic measure, half-plane closed forms, convergence tables.

Square roots are taken with the cut pointing into the lower half-plane
(``arg`` in (-pi/2, 3pi/2]), and products of roots are formed as sums of
half-logs so that no intermediate product crosses a cut.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional, Sequence

import numpy as np

from .dbar import BlackField, solve_F
from .lattice import Domain, DomainError, build_from_polygon, classify_square, is_tileable, split_boundary
from .primitive import VertexField

__all__ = [
    "HalfPlaneData", "hm_halfplane", "hm_grid", "GridLaplaceProblem", "eval_f_halfplane",
    "eval_g_halfplane", "fitted_constant", "s_weight", "eval_f0", "eval_f1", "eval_fplus",
    "eval_fminus", "s_factor", "s_product", "contour_residue", "convergence_report",
    "ConvergenceRow", "interpolate_F", "NonConvergence", "BranchPointError", "pole_cancellation",
]

LAM = complex(math.sqrt(0.5), math.sqrt(0.5))


class NonConvergence(RuntimeError):
    """The grid solver hit its iteration cap."""


class BranchPointError(ValueError):
    """Evaluation at a pole or branch point."""


# -- branches ---------------------------------------------------------------------------

def _log_up(z: complex) -> complex:
    """log with arg in (-pi/2, 3pi/2]: the cut runs down the negative imaginary axis."""
    a = math.atan2(z.imag, z.real)
    if a <= -math.pi / 2:
        a += 2 * math.pi
    return complex(math.log(abs(z)), a)


def _half_log_sum(z: complex, up: Sequence[float], down: Sequence[float], sign: int = 1) -> complex:
    """log of prod (z - up)^(sign/2) prod (z - down)^(-sign/2)."""
    tot = 0j
    for x in up:
        w = z - x
        if w == 0:
            raise BranchPointError(f"branch point {x}")
        tot += 0.5 * sign * _log_up(w)
    for x in down:
        w = z - x
        if w == 0:
            raise BranchPointError(f"branch point {x}")
        tot -= 0.5 * sign * _log_up(w)
    return tot


# -- half-plane data ---------------------------------------------------------------------

@dataclass(frozen=True)
class HalfPlaneData:
    """Pole and marked points on the real axis.

    ``up`` holds the images of convex corners (n + 1 points), ``down`` those of
    concave corners (n - 1 points).  No marked points at all is the Temperley
    limit and is allowed.
    """
    pole: complex = 0j
    up: tuple = ()
    down: tuple = ()

    def __post_init__(self):
        pts = list(self.up) + list(self.down)
        if any(abs(complex(x).imag) > 0 for x in pts):
            raise ValueError("marked points must be real")
        if len(set(pts)) != len(pts):
            raise ValueError("marked points must be distinct")
        if pts and len(self.up) - len(self.down) != 2:
            raise ValueError("need exactly two more convex than concave marked points")
        object.__setattr__(self, "up", tuple(float(x) for x in self.up))
        object.__setattr__(self, "down", tuple(float(x) for x in self.down))

    @property
    def marked(self) -> list:
        return sorted(self.up + self.down)


def hm_halfplane(z: complex, x1: float, x2: float) -> float:
    """Harmonic measure of the real segment between x1 and x2 seen from z."""
    z = complex(z)
    if z.imag <= 0:
        raise ValueError("z must lie in the open upper half-plane")
    if x1 == x2:
        raise ValueError("x1 and x2 must differ")
    lo, hi = min(x1, x2), max(x1, x2)
    return float(np.angle((z - hi) / (z - lo)) / math.pi)


def _prefactor(z: complex, data: HalfPlaneData) -> complex:
    return complex(np.exp(_half_log_sum(complex(z), data.up, data.down)))


def fitted_constant(data: HalfPlaneData, residue: complex = LAM) -> complex:
    """c with ``c / (z - pole) * prefactor(z)`` having the given residue at the pole."""
    return complex(residue) / _prefactor(complex(data.pole), data)


def eval_f_halfplane(z: complex, data: HalfPlaneData, residue: complex = LAM) -> complex:
    """``c / (z - v0) * prod (z - up)^(1/2) * prod (z - down)^(-1/2)`` with c fitted to the residue."""
    z = complex(z)
    if z == data.pole:
        raise BranchPointError("evaluation at the pole")
    return fitted_constant(data, residue) / (z - data.pole) * _prefactor(z, data)


def eval_g_halfplane(z: complex, data: HalfPlaneData, residue: complex = 1j) -> complex:
    """Same product for g; the pole normalization defaults to ``i / (z - u0)``."""
    return eval_f_halfplane(z, data, residue)


# -- kernels f0, f1, f+- ---------------------------------------------------------------

def s_weight(w: complex, data: HalfPlaneData) -> complex:
    """``s(w) = prod (w - up)^(-1/2) prod (w - down)^(1/2)``."""
    return complex(np.exp(_half_log_sum(complex(w), data.up, data.down, sign=-1)))


def _kernel(z, w, data, sign):
    z, w = complex(z), complex(w)
    if z == w or z == w.conjugate():
        raise BranchPointError("evaluation at the pole")
    s = s_weight(w, data)
    return _prefactor(z, data) * (s / (z - w) + sign * s.conjugate() / (z - w.conjugate()))


def eval_f0(z, w, data: HalfPlaneData = HalfPlaneData()) -> complex:
    """f0 scaled by 1/pi so that its residue at z = w is 1/pi."""
    return _kernel(z, w, data, +1) / math.pi


def eval_f1(z, w, data: HalfPlaneData = HalfPlaneData()) -> complex:
    return _kernel(z, w, data, -1) / math.pi


def eval_fplus(z, w, data: HalfPlaneData = HalfPlaneData()) -> complex:
    """``pi (f0 + f1) = 2 / (z - w) * s(w) / s(z)``."""
    return math.pi * (eval_f0(z, w, data) + eval_f1(z, w, data))


def eval_fminus(z, w, data: HalfPlaneData = HalfPlaneData()) -> complex:
    """``pi (f0 - f1) = 2 / (z - conj w) * conj s(w) / s(z)``."""
    return math.pi * (eval_f0(z, w, data) - eval_f1(z, w, data))


def contour_residue(f, w: complex, r: float = 1e-3, n: int = 256) -> complex:
    """Residue of f at w by the trapezoid rule on a small circle."""
    t = np.arange(n) * (2 * math.pi / n)
    pts = complex(w) + r * np.exp(1j * t)
    vals = np.array([f(p) for p in pts])
    return complex(np.mean(vals * (pts - complex(w))))


def s_factor(zi, zj, ei: int, ej: int, data: HalfPlaneData) -> complex:
    """``s^(ej)(zj) / s^(ei)(zi)`` where ``s^(-1)`` is the conjugate."""
    a = s_weight(zj, data)
    b = s_weight(zi, data)
    if ej < 0:
        a = a.conjugate()
    if ei < 0:
        b = b.conjugate()
    return a / b


def s_product(zs: Sequence[complex], eps: Sequence[int], alpha: Sequence[int], data: HalfPlaneData) -> complex:
    """``prod_i S(z_alpha(i), z_i)``; zero as soon as alpha has a fixed point."""
    out = 1 + 0j
    for i, a in enumerate(alpha):
        if a == i:
            return 0j
        out *= s_factor(zs[a], zs[i], eps[a], eps[i], data)
    return out


# -- grid harmonic measure ----------------------------------------------------------------

@dataclass
class GridLaplaceProblem:
    polygon: list
    h: float
    u0: tuple
    v0: tuple
    tol: float = 1e-10
    max_iter: int = 200000
    values: Optional[np.ndarray] = field(default=None, repr=False)
    origin: tuple = (0.0, 0.0)
    iterations: int = 0
    residual: float = math.inf


def _signed_area(poly) -> float:
    return 0.5 * sum(poly[i][0] * poly[(i + 1) % len(poly)][1] - poly[(i + 1) % len(poly)][0] * poly[i][1]
                     for i in range(len(poly)))


def _snap(v: float, h: float) -> int:
    k = round(v / h)
    if abs(k * h - v) > 1e-9 * max(1.0, abs(v)):
        raise DomainError(f"polygon coordinate {v} is not a multiple of the grid step {h}")
    return int(k)


def _arc_param(poly_idx, pt):
    """Arc-length position of a node on the polygon (in index units), or None."""
    s = 0
    n = len(poly_idx)
    for i in range(n):
        (x1, y1), (x2, y2) = poly_idx[i], poly_idx[(i + 1) % n]
        L = abs(x2 - x1) + abs(y2 - y1)
        if x1 == x2 == pt[0] and min(y1, y2) <= pt[1] <= max(y1, y2):
            return s + abs(pt[1] - y1)
        if y1 == y2 == pt[1] and min(x1, x2) <= pt[0] <= max(x1, x2):
            return s + abs(pt[0] - x1)
        s += L
    return None


def _solve_grid(prob: GridLaplaceProblem) -> GridLaplaceProblem:
    poly = [tuple(map(float, p)) for p in prob.polygon]
    if _signed_area(poly) < 0:
        poly = poly[::-1]
    h = prob.h
    idx = [(_snap(x, h), _snap(y, h)) for x, y in poly]
    for i in range(len(idx)):
        a, b = idx[i], idx[(i + 1) % len(idx)]
        if a[0] != b[0] and a[1] != b[1]:
            raise DomainError("hm_grid needs a rectilinear polygon")
    x0 = min(p[0] for p in idx)
    y0 = min(p[1] for p in idx)
    nx = max(p[0] for p in idx) - x0 + 1
    ny = max(p[1] for p in idx) - y0 + 1
    loc = [(p[0] - x0, p[1] - y0) for p in idx]
    total = sum(abs(loc[(i + 1) % len(loc)][0] - loc[i][0]) + abs(loc[(i + 1) % len(loc)][1] - loc[i][1])
                for i in range(len(loc)))
    su = _arc_param(loc, (_snap(prob.u0[0], h) - x0, _snap(prob.u0[1], h) - y0))
    sv = _arc_param(loc, (_snap(prob.v0[0], h) - x0, _snap(prob.v0[1], h) - y0))
    if su is None or sv is None:
        raise DomainError("u0 and v0 must lie on the polygon boundary")
    # boundary nodes and their data
    U = np.zeros((nx, ny))
    bnd = np.zeros((nx, ny), dtype=bool)
    for i in range(len(loc)):
        (x1, y1), (x2, y2) = loc[i], loc[(i + 1) % len(loc)]
        steps = abs(x2 - x1) + abs(y2 - y1)
        dx = (x2 > x1) - (x2 < x1)
        dy = (y2 > y1) - (y2 < y1)
        for t in range(steps):
            x, y = x1 + dx * t, y1 + dy * t
            s = _arc_param(loc, (x, y))
            rel = (s - su) % total
            span = (sv - su) % total
            if rel == 0 or rel == span:
                val = 0.5
            else:
                val = 1.0 if rel < span else 0.0
            U[x, y] = val
            bnd[x, y] = True
    # interior: node centres inside by even-odd rule
    from .lattice import _inside
    inside = np.zeros((nx, ny), dtype=bool)
    for x in range(nx):
        for y in range(ny):
            if not bnd[x, y] and _inside(loc, x, y):
                inside[x, y] = True
    xs, ys = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    red = inside & ((xs + ys) % 2 == 0)
    black = inside & ((xs + ys) % 2 == 1)
    omega = 2.0 / (1.0 + math.sin(math.pi / max(nx, ny)))
    P = np.zeros((nx + 2, ny + 2))
    P[1:-1, 1:-1] = U

    def nbsum():
        return P[2:, 1:-1] + P[:-2, 1:-1] + P[1:-1, 2:] + P[1:-1, :-2]

    it = 0
    res = math.inf
    while it < prob.max_iter:
        for mask in (red, black):
            core = P[1:-1, 1:-1]
            core[mask] += omega * (0.25 * nbsum()[mask] - core[mask])
        it += 1
        if it % 25 == 0:
            r = np.abs(0.25 * nbsum()[inside] - P[1:-1, 1:-1][inside])
            res = float(r.max()) if r.size else 0.0
            if res < prob.tol:
                break
    else:
        raise NonConvergence(f"grid solve did not reach {prob.tol} in {prob.max_iter} iterations (residual {res})")
    prob.values = P[1:-1, 1:-1].copy()
    prob.values[~(inside | bnd)] = np.nan
    prob.origin = (x0 * h, y0 * h)
    prob.iterations = it
    prob.residual = res
    prob.inside = inside
    return prob


def _bilinear(prob: GridLaplaceProblem, pts) -> np.ndarray:
    V = prob.values
    out = []
    for x, y in pts:
        gx = (x - prob.origin[0]) / prob.h
        gy = (y - prob.origin[1]) / prob.h
        i, j = int(math.floor(gx)), int(math.floor(gy))
        i = min(max(i, 0), V.shape[0] - 2)
        j = min(max(j, 0), V.shape[1] - 2)
        tx, ty = gx - i, gy - j
        val = ((1 - tx) * (1 - ty) * V[i, j] + tx * (1 - ty) * V[i + 1, j]
               + (1 - tx) * ty * V[i, j + 1] + tx * ty * V[i + 1, j + 1])
        if not np.isfinite(val):
            raise DomainError(f"point {(x, y)} is not inside the polygon")
        out.append(val)
    return np.array(out)


def hm_grid(polygon, u0, v0, points, h: float, tol: float = 1e-10, max_iter: int = 200000,
            return_problem: bool = False):
    """Harmonic measure of the counter-clockwise arc from u0 to v0 by a 5-point Laplace solve.

    ``polygon`` is rectilinear with vertices on multiples of h; u0 and v0 are
    boundary nodes.  Returns bilinear interpolants at ``points``.
    """
    prob = _solve_grid(GridLaplaceProblem(list(polygon), h, tuple(u0), tuple(v0), tol, max_iter))
    vals = _bilinear(prob, [tuple(map(float, p)) for p in points])
    return (vals, prob) if return_problem else vals


# -- convergence experiments --------------------------------------------------------------

def _distance_to_boundary(poly, x, y) -> float:
    best = math.inf
    n = len(poly)
    for i in range(n):
        (x1, y1), (x2, y2) = poly[i], poly[(i + 1) % n]
        dx, dy = x2 - x1, y2 - y1
        L2 = dx * dx + dy * dy
        t = 0.0 if L2 == 0 else max(0.0, min(1.0, ((x - x1) * dx + (y - y1) * dy) / L2))
        px, py = x1 + t * dx, y1 + t * dy
        best = min(best, math.hypot(x - px, y - py))
    return best


def _vertex_xy(d: Domain, z, N: int) -> tuple:
    # polygon frame: cell (x, y) covers [x, x+1] x [y, y+1]; vertex_to_grid is centred on cells
    p, q = z
    return ((p + q) / 2 + 0.5) / N, ((q - p) / 2 + 0.5) / N


def _side_midpoint(arcmid, N):
    p, q = arcmid
    return (float(p + q) / 2 + 0.5) / N, (float(q - p) / 2 + 0.5) / N


def _pick_pole(d: Domain, target, kind: str, N: int, exclude=()):
    """Single-sided boundary square of the given type nearest to a continuum point."""
    best = None
    counts: dict = {}
    for c, _ in d.boundary_walk:
        counts[c] = counts.get(c, 0) + 1
    for j, (c, k) in enumerate(d.boundary_walk):
        if counts[c] != 1 or classify_square(c) != kind or c in exclude:
            continue
        a = d.boundary_vertices[j]
        b = d.boundary_vertices[(j + 1) % len(d.boundary_vertices)]
        mid = (Fraction(a[0] + b[0], 2), Fraction(a[1] + b[1], 2))
        x, y = _side_midpoint(mid, N)
        dist = math.hypot(x - target[0], y - target[1])
        if best is None or dist < best[0]:
            best = (dist, c, (x, y))
    if best is None:
        raise DomainError(f"no boundary square of type {kind}")
    return best[1], best[2]


def interpolate_F(F: BlackField, N: int, pts) -> np.ndarray:
    """Re F from the B0 sublattice and Im F from B1, each bilinear on its own lattice."""
    d = F.domain
    tabs = {"B0": {}, "B1": {}}
    for s in F.support:
        t = classify_square(s)
        x, y = (s[0] + s[1]) // 2, (s[1] - s[0]) // 2
        v = complex(F[s])
        tabs[t][(x, y)] = v.real if t == "B0" else v.imag
    out = []
    for X, Y in pts:
        gx, gy = X * N - 0.5, Y * N - 0.5     # cell-centre grid coordinates
        vals = []
        for t, off in (("B0", 0), ("B1", 1)):
            tab = tabs[t]
            i = 2 * math.floor((gx - off) / 2) + off
            j = 2 * math.floor((gy - off) / 2) + off
            tx, ty = (gx - i) / 2, (gy - j) / 2
            corners = [tab.get((i, j)), tab.get((i + 2, j)), tab.get((i, j + 2)), tab.get((i + 2, j + 2))]
            if any(c is None for c in corners):
                raise DomainError(f"point {(X, Y)} is too close to the boundary for interpolation")
            vals.append((1 - tx) * (1 - ty) * corners[0] + tx * (1 - ty) * corners[1]
                        + (1 - tx) * ty * corners[2] + tx * ty * corners[3])
        out.append(complex(vals[0], vals[1]))
    return np.array(out)


@dataclass
class ConvergenceRow:
    mesh: float
    squares_per_side: int
    sup_error_Eh: float
    sup_cauchy_F: float
    points: int
    note: str = ""


def convergence_report(polygon, u0, v0, sizes: Sequence[int] = (20, 40, 80), margin: float = 0.2,
                       K: Optional[Sequence] = None, oracle_refine: int = 4, cauchy: bool = True,
                       F_points: int = 7) -> list:
    """Convergence table for a unit-scale rectilinear polygon.

    ``sizes`` are squares per unit length (mesh 1/N).  The compact set is the
    list ``K`` of points, or else every lattice vertex at distance at least
    ``margin`` from the boundary.  The Cauchy column compares F at mesh 1/N
    with F at mesh 1/(2N) on a fixed point set in the same compact.
    """
    rows = []
    prev_F = None
    xs = [p[0] for p in polygon]
    ys = [p[1] for p in polygon]
    fpts = [(x, y) for x in np.linspace(min(xs), max(xs), F_points + 2)[1:-1]
            for y in np.linspace(min(ys), max(ys), F_points + 2)[1:-1]
            if _distance_to_boundary(polygon, x, y) >= margin and _inside_poly(polygon, x, y)]
    for N in sizes:
        scaled = [(round(x * N), round(y * N)) for x, y in polygon]
        d = build_from_polygon(scaled, mesh=Fraction(1, N))
        try:
            uq, upos = _pick_pole(d, u0, "B0", N)
            vq, vpos = _pick_pole(d, v0, "W0", N)
            if not is_tileable(d) or not is_tileable(d.without(uq, vq)):
                raise DomainError("untileable discretization")
        except DomainError as e:
            rows.append(ConvergenceRow(1.0 / N, N, math.nan, math.nan, 0, f"skipped: {e}"))
            prev_F = None
            continue
        from .doubledimer import expected_height
        E = expected_height(d, uq, vq, backend="float")
        if K is None:
            verts = [z for z in E.values if _distance_to_boundary(polygon, *_vertex_xy(d, z, N)) >= margin
                     and _inside_poly(polygon, *_vertex_xy(d, z, N))]
            pts = [_vertex_xy(d, z, N) for z in verts]
            ehs = np.array([float(E[z]) for z in verts])
        else:
            pts = [tuple(p) for p in K]
            ehs = _interp_vertex_field(E, N, pts)
        h = 1.0 / (N * oracle_refine)
        # snap the marked points to oracle nodes
        uo = (round(upos[0] / h) * h, round(upos[1] / h) * h)
        vo = (round(vpos[0] / h) * h, round(vpos[1] / h) * h)
        hm = hm_grid(polygon, uo, vo, pts, h)
        err = float(np.max(np.abs(ehs - hm))) if len(pts) else math.nan
        cauchy_val = math.nan
        if cauchy and fpts:
            Fd = solve_F(d, vq, backend="float")
            cur = interpolate_F(Fd, N, fpts)
            if prev_F is not None and rows and rows[-1].squares_per_side * 2 == N:
                rows[-1].sup_cauchy_F = float(np.max(np.abs(prev_F - cur)))
            prev_F = cur
        rows.append(ConvergenceRow(1.0 / N, N, err, cauchy_val, len(pts)))
    return rows


def _inside_poly(poly, x, y) -> bool:
    from .lattice import _inside
    return _inside(poly, x, y)


def _interp_vertex_field(E: VertexField, N: int, pts) -> np.ndarray:
    # vertices of the (p, q) lattice sit at half-integer cell corners of the polygon frame
    vals = {}
    for z, v in E.values.items():
        p, q = z
        vals[((p + q) // 2 + 1, (q - p + 1) // 2)] = float(v)
    out = []
    for X, Y in pts:
        gx, gy = X * N, Y * N
        i, j = math.floor(gx), math.floor(gy)
        tx, ty = gx - i, gy - j
        c = [vals.get(k) for k in ((i, j), (i + 1, j), (i, j + 1), (i + 1, j + 1))]
        if any(v is None for v in c):
            raise DomainError(f"point {(X, Y)} is outside the discretized domain")
        out.append((1 - tx) * (1 - ty) * c[0] + tx * (1 - ty) * c[1] + (1 - tx) * ty * c[2] + tx * ty * c[3])
    return np.array(out)


def pole_cancellation(sizes: Sequence[int] = (20, 40, 80), radius: int = 6) -> list:
    """Sup near v of ``|C(u, v) / delta - F_C(u) / 4|`` on N x N squares, v a central W0 square.

    The full-plane kernel has ``dbar F_C(v) = lam / delta^2``, so ``K F_C = (4 / delta) e_v``
    and ``F_C / 4`` carries the same pole as ``C / delta``.  Returns rows
    ``(N, sup difference, sup |C / delta|)``; the first column should stay bounded
    while the last grows like 1/delta.
    """
    from .dbar import kernel_fullplane
    from .kasteleyn import assemble, coupling_column
    from .lattice import build_rectangle, grid_to_square
    rows = []
    for N in sizes:
        d = build_rectangle(N, N, mesh=Fraction(1, N))
        c = N // 2
        v = next(s for s in (grid_to_square(c + a, c + b) for a in range(2) for b in range(2))
                 if classify_square(s) == "W0")
        col = coupling_column(assemble(d, "float"), v)
        Fk = kernel_fullplane(v, R=Fraction(N // 2 - 2, N), mesh=Fraction(1, N))
        near = [u for u in d.blacks if abs(u[0] - v[0]) + abs(u[1] - v[1]) <= radius]
        diff = max(abs(N * col[u] - complex(Fk[u]) / 4) for u in near)
        rows.append((N, float(diff), float(max(abs(N * col[u]) for u in near))))
    return rows
