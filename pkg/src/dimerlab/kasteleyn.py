"""Kasteleyn matrix, tiling counts and the coupling function.

Rows of K are indexed by white squares and columns by black squares, both in
lexicographic order.  The row of a white square ``v`` is the stencil

    K(v, v+(1,1)) = 1,   K(v, v-(1,1)) = -1,
    K(v, v+(1,-1)) = -i, K(v, v-(1,-1)) = i,

so that ``(K F)(v) = (4 delta / lam) * dbar F(v)`` for a function F on black
squares.  The coupling function is ``C = K^{-1}`` (rows black, columns white).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Optional

import numpy as np

from .exact import I, ONE, ZERO, ExactScalar, as_exact
from .lattice import Domain, DomainError, NEIGHBOR_OFFSETS, is_black
from .linalg import SingularSystemError, factorize

__all__ = [
    "KasteleynSystem", "CouplingColumn", "assemble", "count_tilings", "coupling_column",
    "coupling_row", "coupling_entry", "edge_probability", "local_statistic", "kasteleyn_weight",
    "inverse_matrix", "SingularSystemError",
]

# weight K(v, v + offset) for a white square v
_WEIGHT = {(1, 1): ONE, (-1, -1): -ONE, (1, -1): -I, (-1, 1): I}


def kasteleyn_weight(u, v, backend: str = "exact"):
    """The Kasteleyn weight ``tau(u, v) = K(v, u)`` of the domino [uv]."""
    off = (u[0] - v[0], u[1] - v[1])
    if not is_black(u) or is_black(v) or off not in _WEIGHT:
        raise DomainError(f"squares {u} and {v} are not an adjacent black/white pair")
    w = _WEIGHT[off]
    return w if backend == "exact" else complex(w)


@dataclass
class CouplingColumn:
    pole: tuple        # white square v'
    values: dict       # black square -> C(u, v')

    def __getitem__(self, u):
        return self.values[tuple(u)]


class KasteleynSystem:
    """Signed adjacency matrix of a domain with a cached factorization."""

    def __init__(self, domain: Domain, backend: str = "exact"):
        if backend not in ("exact", "float"):
            raise ValueError(f"unknown backend {backend!r}")
        self.domain = domain
        self.backend = backend
        self.whites = domain.whites
        self.blacks = domain.blacks
        self.widx = {w: i for i, w in enumerate(self.whites)}
        self.bidx = {b: j for j, b in enumerate(self.blacks)}
        rows = []
        for v in self.whites:
            row = {}
            for off, w in _WEIGHT.items():
                u = (v[0] + off[0], v[1] + off[1])
                j = self.bidx.get(u)
                if j is not None:
                    row[j] = w if backend == "exact" else complex(w)
            rows.append(row)
        self.rows = rows

    @property
    def balanced(self) -> bool:
        return len(self.whites) == len(self.blacks)

    def entry(self, v, u):
        """K(v, u) for white v and black u (zero when not adjacent)."""
        j = self.bidx.get(tuple(u))
        i = self.widx.get(tuple(v))
        if i is None or j is None:
            raise DomainError("squares not in domain")
        z = ZERO if self.backend == "exact" else 0j
        return self.rows[i].get(j, z)

    def dense(self) -> np.ndarray:
        out = np.zeros((len(self.whites), len(self.blacks)), dtype=complex)
        for i, row in enumerate(self.rows):
            for j, v in row.items():
                out[i, j] = complex(v)
        return out

    @cached_property
    def lu(self):
        if not self.balanced:
            raise DomainError("Kasteleyn factorization needs a balanced domain")
        return factorize(self.rows, len(self.blacks), self.backend)

    @property
    def singular(self) -> bool:
        return (not self.balanced) or self.lu.singular

    def det(self):
        if not self.balanced:
            return ZERO if self.backend == "exact" else 0j
        return self.lu.det()

    # solves in square coordinates ------------------------------------------
    def solve(self, rhs_white: dict) -> dict:
        """Solve ``K F = b`` with b on whites; returns F on blacks."""
        b = {self.widx[tuple(w)]: val for w, val in rhs_white.items()}
        x = self.lu.solve(b)
        zero = ZERO if self.backend == "exact" else 0j
        return {u: x.get(j, zero) for j, u in enumerate(self.blacks)}

    def solve_transpose(self, rhs_black: dict) -> dict:
        """Solve ``K^T G = c`` with c on blacks; returns G on whites."""
        c = {self.bidx[tuple(u)]: val for u, val in rhs_black.items()}
        y = self.lu.solve_transpose(c)
        zero = ZERO if self.backend == "exact" else 0j
        return {v: y.get(i, zero) for i, v in enumerate(self.whites)}


def assemble(d: Domain, backend: str = "exact") -> KasteleynSystem:
    return KasteleynSystem(d, backend)


def count_tilings(sys: KasteleynSystem):
    """Number of domino tilings as ``|det K|``.

    Exact backend: an exact int.  Float backend: the rounded value (an int
    while it is representable, else a float) with a warning when the
    factorization is poorly conditioned.  Unbalanced domains give 0.
    """
    if not sys.balanced:
        return 0
    if sys.backend == "exact":
        det = sys.lu.det()
        if det.is_zero():
            return 0
        if det.is_real():
            val = det.a
        elif det.is_imag():
            val = det.c
        else:
            raise ArithmeticError("Kasteleyn determinant is not a real or imaginary integer")
        if val.denominator != 1:
            raise ArithmeticError("Kasteleyn determinant is not integral")
        return abs(int(val))
    lu = sys.lu
    if lu.singular:
        return 0
    logdet = lu.log_abs_det()
    if logdet < 50 * math.log(10):
        val = math.exp(logdet)
        rounded = round(val)
        if abs(val - rounded) > 1e-6 * max(1.0, val):
            warnings.warn("float Kasteleyn determinant is far from an integer; conditioning is poor")
        return int(rounded)
    return math.exp(logdet) if logdet < 700 else math.inf


def coupling_column(sys: KasteleynSystem, v) -> CouplingColumn:
    """The column ``C(., v)`` of the inverse Kasteleyn matrix."""
    v = tuple(v)
    if sys.singular:
        raise SingularSystemError("domain is not tileable")
    one = ONE if sys.backend == "exact" else 1.0 + 0j
    return CouplingColumn(v, sys.solve({v: one}))


def coupling_row(sys: KasteleynSystem, u) -> dict:
    """The row ``C(u, .)`` of the inverse Kasteleyn matrix, keyed by white squares."""
    u = tuple(u)
    if sys.singular:
        raise SingularSystemError("domain is not tileable")
    one = ONE if sys.backend == "exact" else 1.0 + 0j
    return sys.solve_transpose({u: one})


def coupling_entry(sys: KasteleynSystem, u, v):
    return coupling_column(sys, v)[u]


def inverse_matrix(sys: KasteleynSystem) -> dict:
    """All entries ``C(u, v)`` as a dict keyed by (black, white)."""
    out = {}
    for v in sys.whites:
        col = coupling_column(sys, v)
        for u, val in col.values.items():
            out[(u, v)] = val
    return out


def edge_probability(sys: KasteleynSystem, u, v, C: Optional[dict] = None):
    """Probability that the domino [uv] occurs: ``K(v,u) C(u,v) = |C(u,v)|``."""
    u, v = tuple(u), tuple(v)
    tau = kasteleyn_weight(u, v, sys.backend)
    c = C[(u, v)] if C is not None else coupling_entry(sys, u, v)
    p = tau * c
    if sys.backend == "exact":
        if not p.is_real():
            raise ArithmeticError("edge probability is not real")
        return p.a
    return p.real


def local_statistic(sys: KasteleynSystem, edges: Iterable, C: Optional[dict] = None):
    """Probability that all the given disjoint dominoes occur simultaneously."""
    edges = [(tuple(u), tuple(v)) for u, v in edges]
    us = [u for u, _ in edges]
    vs = [v for _, v in edges]
    if len(set(us)) != len(us) or len(set(vs)) != len(vs):
        raise DomainError("edges must be vertex-disjoint")
    if C is None:
        cols = {v: coupling_column(sys, v) for v in vs}
        get = lambda u, v: cols[v][u]
    else:
        get = lambda u, v: C[(u, v)]
    k = len(edges)
    mat = [[get(us[i], vs[j]) for j in range(k)] for i in range(k)]
    weight = ONE if sys.backend == "exact" else 1.0 + 0j
    for u, v in edges:
        weight = weight * kasteleyn_weight(u, v, sys.backend)
    if sys.backend == "exact":
        det = _exact_det(mat)
        val = weight * det
        return abs(val.a) if val.is_real() else _abs_exact(val)
    return abs(complex(weight) * np.linalg.det(np.array(mat, dtype=complex)))


def _abs_exact(z: ExactScalar):
    # probabilities are real up to a unit; anything else is a bug upstream
    for unit in (ONE, -ONE, I, -I):
        w = z * unit
        if w.is_real() and w.real_sign() >= 0:
            return w.a if not w.b else w
    raise ArithmeticError("local statistic is not a unit multiple of a real number")


def _exact_det(mat: list) -> ExactScalar:
    n = len(mat)
    a = [[as_exact(x) for x in row] for row in mat]
    det = ONE
    for k in range(n):
        p = next((i for i in range(k, n) if not a[i][k].is_zero()), None)
        if p is None:
            return ZERO
        if p != k:
            a[k], a[p] = a[p], a[k]
            det = -det
        det = det * a[k][k]
        inv = a[k][k].inverse()
        for i in range(k + 1, n):
            if a[i][k].is_zero():
                continue
            f = a[i][k] * inv
            for j in range(k, n):
                a[i][j] = a[i][j] - f * a[k][j]
    return det
