"""Sparse LU factorizations shared by the Kasteleyn system and the F/G solvers.

Two backends expose the same small interface (``solve``, ``solve_transpose``,
``det``):

* ``ExactSparseLU`` performs Gaussian elimination over Q(i, sqrt2) on
  dict-of-dict rows.  Columns are eliminated in their natural order and the
  pivot is the candidate row with the fewest nonzeros, which keeps fill-in
  close to the band of the lexicographic ordering.
* ``FloatSparseLU`` wraps SuperLU from SciPy in complex double precision.
"""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from scipy.sparse import csc_matrix
from scipy.sparse.linalg import splu

from .exact import ZERO, ExactScalar, as_exact


class SingularSystemError(ArithmeticError):
    """The matrix is singular (for Kasteleyn systems: the domain is not tileable)."""


class ExactSparseLU:
    """Row-pivoted sparse elimination ``E A = U`` with exact arithmetic."""

    def __init__(self, rows: Sequence[dict], ncols: int):
        n = len(rows)
        if n != ncols:
            raise ValueError(f"matrix must be square, got {n}x{ncols}")
        self.n = n
        work = [{j: as_exact(v) for j, v in r.items() if v} for r in rows]
        col_rows: list[set] = [set() for _ in range(n)]
        for i, r in enumerate(work):
            for j in r:
                col_rows[j].add(i)
        active = [True] * n
        self.pivot_row = [0] * n
        self.U: list[dict] = [None] * n
        self.ops: list[tuple] = []   # (target row, source row, multiplier)
        self.singular = False
        for k in range(n):
            cands = [i for i in col_rows[k] if active[i]]
            if not cands:
                self.singular = True
                return
            r = min(cands, key=lambda i: (len(work[i]), i))
            prow = work[r]
            piv = prow[k]
            inv_piv = piv.inverse()
            for i in cands:
                if i == r:
                    continue
                row = work[i]
                mult = row.pop(k) * inv_piv
                col_rows[k].discard(i)
                self.ops.append((i, r, mult))
                for j, val in prow.items():
                    if j == k:
                        continue
                    new = row.get(j)
                    new = -(mult * val) if new is None else new - mult * val
                    if new.is_zero():
                        if j in row:
                            del row[j]
                            col_rows[j].discard(i)
                    else:
                        if j not in row:
                            col_rows[j].add(i)
                        row[j] = new
            active[r] = False
            for j in prow:
                col_rows[j].discard(r)
            self.pivot_row[k] = r
            self.U[k] = prow
            work[r] = None

    def _check(self):
        if self.singular:
            raise SingularSystemError("singular matrix")

    def det(self) -> ExactScalar:
        if self.singular:
            return ZERO
        out = as_exact(1)
        for k in range(self.n):
            out = out * self.U[k][k]
        if _perm_parity(self.pivot_row):
            out = -out
        return out

    def solve(self, b: dict) -> dict:
        """Solve ``A x = b``; ``b`` maps row index to scalar, result maps column index."""
        self._check()
        y = {i: as_exact(v) for i, v in b.items() if v}
        for tgt, src, mult in self.ops:
            s = y.get(src)
            if s is not None:
                y[tgt] = y.get(tgt, ZERO) - mult * s
        x: dict = {}
        for k in range(self.n - 1, -1, -1):
            acc = y.get(self.pivot_row[k], ZERO)
            for j, val in self.U[k].items():
                if j != k and j in x:
                    acc = acc - val * x[j]
            if not acc.is_zero():
                x[k] = acc / self.U[k][k]
        return x

    def solve_transpose(self, c: dict) -> dict:
        """Solve ``A^T y = c``; ``c`` maps column index, result maps row index."""
        self._check()
        acc = {j: as_exact(v) for j, v in c.items() if v}
        w: dict = {}
        for k in range(self.n):
            a = acc.get(k)
            if a is None or a.is_zero():
                continue
            wk = a / self.U[k][k]
            w[self.pivot_row[k]] = wk
            for j, val in self.U[k].items():
                if j != k:
                    acc[j] = acc.get(j, ZERO) - val * wk
        for tgt, src, mult in reversed(self.ops):
            t = w.get(tgt)
            if t is not None:
                w[src] = w.get(src, ZERO) - mult * t
        return {i: v for i, v in w.items() if not v.is_zero()}


class FloatSparseLU:
    """SuperLU factorization in complex double precision."""

    def __init__(self, rows: Sequence[dict], ncols: int):
        n = len(rows)
        if n != ncols:
            raise ValueError(f"matrix must be square, got {n}x{ncols}")
        self.n = n
        ri, ci, vals = [], [], []
        for i, r in enumerate(rows):
            for j, v in r.items():
                ri.append(i)
                ci.append(j)
                vals.append(complex(v))
        mat = csc_matrix((np.array(vals, dtype=complex), (ri, ci)), shape=(n, n))
        self.matrix = mat
        self.singular = False
        try:
            self._lu = splu(mat)
        except RuntimeError:
            self.singular = True
            self._lu = None
            return
        diag = self._lu.U.diagonal()
        scale = max(1.0, float(np.max(np.abs(vals)))) if vals else 1.0
        if n and float(np.min(np.abs(diag))) < 1e-13 * scale:
            self.singular = True

    def _check(self):
        if self.singular:
            raise SingularSystemError("singular matrix")

    def log_abs_det(self) -> float:
        if self.singular:
            return -math.inf
        return float(np.sum(np.log(np.abs(self._lu.U.diagonal()))))

    def det(self) -> complex:
        if self.singular:
            return 0j
        d = complex(np.prod(self._lu.U.diagonal()))
        sign = (-1) ** (_perm_parity(list(self._lu.perm_r)) + _perm_parity(list(self._lu.perm_c)))
        return sign * d

    def solve_dense(self, b: np.ndarray, transpose: bool = False) -> np.ndarray:
        self._check()
        return self._lu.solve(np.asarray(b, dtype=complex), trans="T" if transpose else "N")

    def solve(self, b: dict) -> dict:
        vec = np.zeros(self.n, dtype=complex)
        for i, v in b.items():
            vec[i] = complex(v)
        x = self.solve_dense(vec)
        return {j: complex(x[j]) for j in range(self.n)}

    def solve_transpose(self, c: dict) -> dict:
        vec = np.zeros(self.n, dtype=complex)
        for j, v in c.items():
            vec[j] = complex(v)
        y = self.solve_dense(vec, transpose=True)
        return {i: complex(y[i]) for i in range(self.n)}


def factorize(rows: Sequence[dict], ncols: int, backend: str = "exact"):
    if backend == "exact":
        return ExactSparseLU(rows, ncols)
    if backend == "float":
        return FloatSparseLU(rows, ncols)
    raise ValueError(f"unknown backend {backend!r}")


def _perm_parity(perm: Sequence[int]) -> int:
    """Parity (0 even, 1 odd) of a permutation given as a list."""
    perm = list(perm)
    seen = [False] * len(perm)
    parity = 0
    for i in range(len(perm)):
        if seen[i]:
            continue
        j = i
        length = 0
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            length += 1
        parity ^= (length - 1) & 1
    return parity
