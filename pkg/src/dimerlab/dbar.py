"""Discrete d and dbar operators, Laplacians and the F/G boundary value problems.

Black fields live on the closed black set (domain blacks plus the outer
boundary layer) and white fields on the closed white set.  Values outside the
stored support but inside the closure are zero; anything further out raises
``NotEvaluable`` so that operator evaluations never silently read a default.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Union

import numpy as np

from .exact import I, LAM, LAMBAR, ONE, ZERO, ExactScalar, as_exact
from .kasteleyn import KasteleynSystem, assemble
from .lattice import Domain, DomainError, build_rectangle, classify_square, is_black, square_to_grid, grid_to_square
from .linalg import SingularSystemError, factorize

__all__ = [
    "BlackField", "WhiteField", "NotEvaluable", "HoloReport", "dbar_black", "d_black",
    "dbar_white", "d_white", "laplacian_black", "laplacian_white", "check_holomorphic",
    "solve_F", "solve_G", "solve_F_odd", "solve_G_odd", "kernel_fullplane", "kernel_halfplane",
    "resolve_normalization", "constants",
]


class NotEvaluable(LookupError):
    """An operator stencil leaves the closed domain."""


@dataclass
class _Field:
    domain: Domain
    values: dict
    backend: str = "exact"
    pole: Optional[tuple] = None
    normalization: object = None
    support: Optional[frozenset] = None   # squares where the field is defined

    def __post_init__(self):
        if self.support is None:
            self.support = self._closure()

    def _closure(self) -> frozenset:
        raise NotImplementedError

    @property
    def zero(self):
        return ZERO if self.backend == "exact" else 0j

    def __getitem__(self, s):
        s = tuple(s)
        v = self.values.get(s)
        if v is not None:
            return v
        if s in self.support:
            return self.zero
        raise NotEvaluable(f"square {s} is outside the closed domain")

    def __contains__(self, s):
        return tuple(s) in self.support

    def items(self):
        for s in sorted(self.support):
            yield s, self[s]

    def scaled(self, c):
        return type(self)(self.domain, {s: c * v for s, v in self.values.items()}, self.backend,
                          self.pole, None, self.support)

    def to_float(self):
        return type(self)(self.domain, {s: complex(v) for s, v in self.values.items()}, "float",
                          self.pole, self.normalization, self.support)


class BlackField(_Field):
    """Function on the closed black squares (real on B0, imaginary on B1)."""

    def _closure(self):
        return self.domain.closed_blacks

    def reality_violations(self) -> list:
        out = []
        for s, v in self.values.items():
            t = classify_square(s)
            if not _respects(v, "real" if t == "B0" else "imag", self.backend):
                out.append(s)
        return out


class WhiteField(_Field):
    """Function on the closed white squares (in lam*R on W0, lambar*R on W1)."""

    def _closure(self):
        return self.domain.closed_whites

    def reality_violations(self) -> list:
        out = []
        for s, v in self.values.items():
            t = classify_square(s)
            rot = LAMBAR if t == "W0" else LAM
            w = v * rot if self.backend == "exact" else complex(v) * complex(rot)
            if not _respects(w, "real", self.backend):
                out.append(s)
        return out


def _respects(v, kind: str, backend: str, tol: float = 1e-9) -> bool:
    if backend == "exact":
        return v.is_real() if kind == "real" else v.is_imag()
    z = complex(v)
    scale = max(1.0, abs(z))
    return abs(z.imag) <= tol * scale if kind == "real" else abs(z.real) <= tol * scale


def constants(backend: str, delta):
    """(lam, lambar, i, 1/(4 delta)) in the requested arithmetic."""
    if backend == "exact":
        if isinstance(delta, float):
            raise DomainError("exact backend needs a rational mesh")
        q = as_exact(Fraction(1, 4) / Fraction(delta))
        return LAM, LAMBAR, I, q
    lam = complex(math.sqrt(0.5), math.sqrt(0.5))
    return lam, lam.conjugate(), 1j, 1.0 / (4.0 * float(delta))


# -- first-order operators ---------------------------------------------------

def _diffs(f: _Field, s):
    n, m = s
    a = f[(n + 1, m + 1)] - f[(n - 1, m - 1)]
    b = f[(n + 1, m - 1)] - f[(n - 1, m + 1)]
    return a, b


def dbar_black(F: BlackField, v):
    """dbar F at a white square v."""
    lam, lamb, _, q = constants(F.backend, F.domain.mesh)
    a, b = _diffs(F, v)
    return q * (lam * a + lamb * b)


def d_black(F: BlackField, v):
    lam, lamb, _, q = constants(F.backend, F.domain.mesh)
    a, b = _diffs(F, v)
    return q * (lamb * a + lam * b)


def dbar_white(G: WhiteField, u):
    lam, lamb, _, q = constants(G.backend, G.domain.mesh)
    a, b = _diffs(G, u)
    return q * (lam * a + lamb * b)


def d_white(G: WhiteField, u):
    lam, lamb, _, q = constants(G.backend, G.domain.mesh)
    a, b = _diffs(G, u)
    return q * (lamb * a + lam * b)


def _laplacian(f: _Field, s):
    n, m = s
    tot = f[(n + 2, m + 2)] + f[(n + 2, m - 2)] + f[(n - 2, m - 2)] + f[(n - 2, m + 2)] - 4 * f[s]
    delta = f.domain.mesh
    if f.backend == "exact":
        return tot * as_exact(Fraction(1, 4) / (Fraction(delta) ** 2))
    return tot / (4.0 * float(delta) ** 2)


def laplacian_black(F: BlackField, u):
    return _laplacian(F, u)


def laplacian_white(G: WhiteField, v):
    return _laplacian(G, v)


@dataclass
class HoloReport:
    max_abs: float
    nonzero: list = field(default_factory=list)   # squares with nonzero residual
    checked: int = 0

    @property
    def exact_zero(self) -> bool:
        return not self.nonzero


def check_holomorphic(f: _Field, exclude=(), tol: float = 0.0) -> HoloReport:
    """Residual of dbar at every domain square of the opposite colour."""
    exclude = {tuple(s) for s in exclude}
    if isinstance(f, BlackField):
        targets, op = f.domain.whites, dbar_black
    else:
        targets, op = f.domain.blacks, dbar_white
    worst, bad, n = 0.0, [], 0
    for s in targets:
        if s in exclude:
            continue
        r = op(f, s)
        n += 1
        a = abs(complex(r))
        worst = max(worst, a)
        if (f.backend == "exact" and not r.is_zero()) or (f.backend == "float" and a > tol):
            bad.append(s)
    return HoloReport(worst, bad, n)


# -- boundary value problems ---------------------------------------------------

def resolve_normalization(normalization, kind: str, backend: str, delta):
    """Pole normalization: a preset name or an explicit scalar.

    Presets: ``"mesh-delta"`` (lam/delta^2 for F, i/delta^2 for G) and
    ``"mesh-1"`` (lam for F, i for G).
    """
    lam, _, i, _ = constants(backend, delta)
    base = lam if kind == "F" else i
    if normalization is None or normalization == "mesh-delta":
        if backend == "exact":
            return base * as_exact(1 / Fraction(delta) ** 2)
        return base / float(delta) ** 2
    if normalization == "mesh-1":
        return base
    if isinstance(normalization, str):
        raise ValueError(f"unknown normalization preset {normalization!r}")
    return as_exact(normalization) if backend == "exact" else complex(normalization)


def _system(d: Domain, backend: str, system: Optional[KasteleynSystem]) -> KasteleynSystem:
    if system is not None:
        if system.domain != d or system.backend != backend:
            raise ValueError("supplied Kasteleyn system does not match domain/backend")
        return system
    return assemble(d, backend)


def solve_F(d: Domain, v0, normalization=None, backend: str = "exact",
            system: Optional[KasteleynSystem] = None) -> BlackField:
    """F = 0 on the outer black layer, holomorphic at every white but v0.

    Since ``K F = (4 delta / lam) dbar F`` this is one solve with the
    Kasteleyn factorization and right-hand side ``4 delta lambar N e_{v0}``.
    """
    v0 = tuple(v0)
    if v0 not in d.whites:
        raise DomainError("v0 must be a white square of the domain")
    if (normalization is None or isinstance(normalization, str)) and classify_square(v0) != "W0":
        raise DomainError("preset normalizations need a W0 pole (lam*R is the dbar range there)")
    sys = _system(d, backend, system)
    N = resolve_normalization(normalization, "F", backend, d.mesh)
    _, lamb, _, q = constants(backend, d.mesh)
    rhs = lamb * N / q
    vals = sys.solve({v0: rhs})
    return BlackField(d, vals, backend, v0, N)


def solve_G(d: Domain, u0, normalization=None, backend: str = "exact",
            system: Optional[KasteleynSystem] = None) -> WhiteField:
    """G = 0 on the outer white layer, holomorphic at every black but u0.

    Uses ``K^T G = -(4 delta / lam) dbar G`` with the same factorization.
    """
    u0 = tuple(u0)
    if u0 not in d.blacks:
        raise DomainError("u0 must be a black square of the domain")
    if (normalization is None or isinstance(normalization, str)) and classify_square(u0) != "B0":
        raise DomainError("preset normalizations need a B0 pole (i*R is the dbar range there)")
    sys = _system(d, backend, system)
    N = resolve_normalization(normalization, "G", backend, d.mesh)
    _, lamb, _, q = constants(backend, d.mesh)
    rhs = -(lamb * N / q)
    vals = sys.solve_transpose({u0: rhs})
    return WhiteField(d, vals, backend, u0, N)


def _kasteleyn_rows(d: Domain, backend: str):
    sys = KasteleynSystem(d, backend)
    return sys


def solve_F_odd(d: Domain, u1, backend: str = "exact") -> BlackField:
    """Odd domain: F = 0 outside, F(u1) = 1, holomorphic at every white."""
    u1 = tuple(u1)
    if not d.is_odd:
        raise DomainError("solve_F_odd needs |black| = |white| + 1")
    if u1 not in d.blacks or u1 not in d.interior_boundary:
        raise DomainError("u1 must be a black square on the interior boundary")
    sys = _kasteleyn_rows(d, backend)
    one = ONE if backend == "exact" else 1.0 + 0j
    rows = list(sys.rows) + [{sys.bidx[u1]: one}]
    lu = factorize(rows, len(sys.blacks), backend)
    x = lu.solve({len(rows) - 1: one})
    vals = {u: x[j] for j, u in enumerate(sys.blacks) if j in x}
    return BlackField(d, vals, backend, u1, one)


def solve_G_odd(d: Domain, u1, u2, normalization=None, backend: str = "exact") -> WhiteField:
    """Odd domain: G = 0 outside, holomorphic except at u1, u2, dbar G(u1) = i."""
    u1, u2 = tuple(u1), tuple(u2)
    if not d.is_odd:
        raise DomainError("solve_G_odd needs |black| = |white| + 1")
    for u in (u1, u2):
        if u not in d.blacks or u not in d.interior_boundary:
            raise DomainError("u1 and u2 must be black squares on the interior boundary")
    if u1 == u2:
        raise DomainError("u1 and u2 must differ")
    sys = _kasteleyn_rows(d, backend)
    # columns of K become rows of K^T
    cols: dict = {j: {} for j in range(len(sys.blacks))}
    for i, row in enumerate(sys.rows):
        for j, val in row.items():
            cols[j][i] = val
    N = resolve_normalization(normalization if normalization is not None else "mesh-1", "G", backend, d.mesh)
    _, lamb, _, q = constants(backend, d.mesh)
    rows, rhs = [], {}
    j1, j2 = sys.bidx[u1], sys.bidx[u2]
    for j in range(len(sys.blacks)):
        if j == j2:
            continue
        if j == j1:
            rhs[len(rows)] = -(lamb * N / q)
        rows.append(cols[j])
    lu = factorize(rows, len(sys.whites), backend)
    y = lu.solve(rhs)
    vals = {v: y[i] for i, v in enumerate(sys.whites) if i in y}
    return WhiteField(d, vals, backend, u1, N)


# -- plane and half-plane kernels ----------------------------------------------

def kernel_fullplane(v0, R=None, mesh=1, box: Optional[Domain] = None) -> BlackField:
    """Full-plane kernel approximated on a square box of radius R.

    F has ``dbar F(v0) = lam / delta^2`` and vanishes outside the box.  The
    box is ``2r x 2r`` grid squares around v0 with ``r = R / delta``
    (default ``R = 40 delta``).
    """
    v0 = tuple(v0)
    if is_black(v0):
        raise DomainError("kernel pole must be a white square")
    if box is None:
        r = 40 if R is None else int(round(float(R) / float(mesh)))
        if r < 3:
            raise DomainError("box radius too small: pole within 2 mesh steps of the box boundary")
        x0, y0 = square_to_grid(v0)
        cells = [(x, y) for x in range(x0 - r, x0 + r) for y in range(y0 - r, y0 + r)]
        box = Domain([grid_to_square(x, y) for x, y in cells], mesh, validate=False)
    return solve_F(box, v0, "mesh-delta", "float")


def kernel_halfplane(v0, R=None, mesh=1):
    """Half-plane kernel ``F_{C,v0} + F_{C,v0 + 2 lambar delta}``.

    The second kernel is computed on the mirror image of the first box in the
    line through the midpoint of v0 and its partner, in direction lam, so the
    sum is exactly reflection symmetric.  Returns ``(values, boundary_row)``
    where ``values`` maps black squares (common support) to complex numbers and
    ``boundary_row`` lists the black squares on that line.
    """
    v0 = tuple(v0)
    v1 = (v0[0] + 2, v0[1] - 2)
    r = 40 if R is None else int(round(float(R) / float(mesh)))
    x0, y0 = square_to_grid(v0)
    cells = [(x, y) for x in range(x0 - r, x0 + r) for y in range(y0 - r, y0 + r)]
    box0 = Domain([grid_to_square(x, y) for x, y in cells], mesh, validate=False)
    # reflection across the line between v0 and v1 swaps (n, m) about it
    c = v0[0] + 1 - (v0[1] - 1)   # the line is n - m = c
    refl = lambda s: (s[1] + c, s[0] - c)
    box1 = Domain([refl(s) for s in box0.squares], mesh, validate=False)
    F0 = kernel_fullplane(v0, box=box0)
    F1 = kernel_fullplane(v1, box=box1)
    common = box0.closed_blacks & box1.closed_blacks
    vals = {u: F0[u] + F1[u] for u in common}
    row = sorted(u for u in common if u[0] - u[1] == c)
    return vals, row
