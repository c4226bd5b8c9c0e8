"""Exact arithmetic in the field Q(i, sqrt2).

An element is stored as four rationals (a, b, c, d) meaning
``a + b*sqrt2 + (c + d*sqrt2) * i``.  The eighth root of unity
``lam = exp(i*pi/4) = (1 + i) / sqrt2`` lives in this field, so all
Kasteleyn data, coupling functions and the solutions F, G, H of the
discrete boundary value problems are representable without rounding.

Rationals are ``gmpy2.mpq``; they are roughly an order of magnitude faster
than ``fractions.Fraction`` for the elimination workloads used here.
"""
from __future__ import annotations

import math
from fractions import Fraction
from numbers import Rational

from gmpy2 import mpq

__all__ = ["ExactScalar", "LAM", "LAMBAR", "I", "ONE", "ZERO", "SQRT2", "as_exact"]

_Q0 = mpq(0)


def _q(x) -> mpq:
    if isinstance(x, Fraction):
        return mpq(x.numerator, x.denominator)
    return mpq(x)


class ExactScalar:
    """Element ``a + b*sqrt2 + i*(c + d*sqrt2)`` of Q(i, sqrt2)."""

    __slots__ = ("a", "b", "c", "d")

    def __init__(self, a=0, b=0, c=0, d=0):
        self.a = _q(a)
        self.b = _q(b)
        self.c = _q(c)
        self.d = _q(d)

    @classmethod
    def _raw(cls, a, b, c, d) -> "ExactScalar":
        # Skips coercion; callers guarantee mpq inputs.
        obj = object.__new__(cls)
        obj.a = a
        obj.b = b
        obj.c = c
        obj.d = d
        return obj

    # -- predicates -------------------------------------------------------
    def is_zero(self) -> bool:
        return not (self.a or self.b or self.c or self.d)

    def __bool__(self) -> bool:
        return not self.is_zero()

    def is_real(self) -> bool:
        return not (self.c or self.d)

    def is_imag(self) -> bool:
        return not (self.a or self.b)

    def is_gaussian(self) -> bool:
        """True when the element lies in Q(i)."""
        return not (self.b or self.d)

    # -- arithmetic -------------------------------------------------------
    def __add__(self, o):
        if not isinstance(o, ExactScalar):
            o = as_exact(o)
        return ExactScalar._raw(self.a + o.a, self.b + o.b, self.c + o.c, self.d + o.d)

    __radd__ = __add__

    def __sub__(self, o):
        if not isinstance(o, ExactScalar):
            o = as_exact(o)
        return ExactScalar._raw(self.a - o.a, self.b - o.b, self.c - o.c, self.d - o.d)

    def __rsub__(self, o):
        return as_exact(o) - self

    def __neg__(self):
        return ExactScalar._raw(-self.a, -self.b, -self.c, -self.d)

    def __mul__(self, o):
        if not isinstance(o, ExactScalar):
            o = as_exact(o)
        a1, b1, c1, d1 = self.a, self.b, self.c, self.d
        a2, b2, c2, d2 = o.a, o.b, o.c, o.d
        if not (b1 or d1 or b2 or d2):
            return ExactScalar._raw(a1 * a2 - c1 * c2, _Q0, a1 * c2 + c1 * a2, _Q0)
        # (x1 + i y1)(x2 + i y2) with x, y in Q(sqrt2)
        xr, xs = _mul2(a1, b1, a2, b2)
        yr, ys = _mul2(c1, d1, c2, d2)
        zr, zs = _mul2(a1, b1, c2, d2)
        wr, ws = _mul2(c1, d1, a2, b2)
        return ExactScalar._raw(xr - yr, xs - ys, zr + wr, zs + ws)

    __rmul__ = __mul__

    def conjugate(self) -> "ExactScalar":
        return ExactScalar._raw(self.a, self.b, -self.c, -self.d)

    def norm2(self) -> "ExactScalar":
        """|z|^2 as a real element of Q(sqrt2)."""
        p, s = _mul2(self.a, self.b, self.a, self.b)
        r, t = _mul2(self.c, self.d, self.c, self.d)
        return ExactScalar._raw(p + r, s + t, _Q0, _Q0)

    def inverse(self) -> "ExactScalar":
        if self.is_zero():
            raise ZeroDivisionError("inverse of exact zero")
        if not (self.b or self.d):
            den = self.a * self.a + self.c * self.c
            return ExactScalar._raw(self.a / den, _Q0, -self.c / den, _Q0)
        n = self.norm2()
        p, s = n.a, n.b
        den = p * p - 2 * s * s
        # 1/(p + s sqrt2) = (p - s sqrt2)/den
        inv_n = ExactScalar._raw(p / den, -s / den, _Q0, _Q0)
        return self.conjugate() * inv_n

    def __truediv__(self, o):
        if not isinstance(o, ExactScalar):
            o = as_exact(o)
        if not (o.b or o.c or o.d):
            if not o.a:
                raise ZeroDivisionError("division by exact zero")
            return ExactScalar._raw(self.a / o.a, self.b / o.a, self.c / o.a, self.d / o.a)
        return self * o.inverse()

    def __rtruediv__(self, o):
        return as_exact(o) / self

    def __pow__(self, k: int):
        if not isinstance(k, int):
            return NotImplemented
        if k < 0:
            return self.inverse() ** (-k)
        out, base = ONE, self
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    # -- comparison and conversion ---------------------------------------
    def __eq__(self, o):
        if not isinstance(o, ExactScalar):
            try:
                o = as_exact(o)
            except TypeError:
                return NotImplemented
        return self.a == o.a and self.b == o.b and self.c == o.c and self.d == o.d

    def __hash__(self):
        return hash((self.a, self.b, self.c, self.d))

    def real(self) -> "ExactScalar":
        return ExactScalar._raw(self.a, self.b, _Q0, _Q0)

    def imag(self) -> "ExactScalar":
        return ExactScalar._raw(self.c, self.d, _Q0, _Q0)

    def real_sign(self) -> int:
        """Exact sign of the real part ``a + b*sqrt2``."""
        return _sign2(self.a, self.b)

    def imag_sign(self) -> int:
        return _sign2(self.c, self.d)

    def __complex__(self):
        r2 = math.sqrt(2.0)
        return complex(float(self.a) + float(self.b) * r2, float(self.c) + float(self.d) * r2)

    def __float__(self):
        if not self.is_real():
            raise TypeError("non-real ExactScalar has no float value")
        return float(self.a) + float(self.b) * math.sqrt(2.0)

    def components(self) -> tuple[Fraction, Fraction, Fraction, Fraction]:
        return tuple(Fraction(int(x.numerator), int(x.denominator)) for x in (self.a, self.b, self.c, self.d))

    def __repr__(self):
        return f"ExactScalar({self})"

    def __str__(self):
        parts = []
        for val, unit in ((self.a, ""), (self.b, "√2"), (self.c, "i"), (self.d, "i√2")):
            if val:
                parts.append(f"{val}{unit}")
        if not parts:
            return "0"
        return "+".join(parts).replace("+-", "-")

    @classmethod
    def parse(cls, text: str) -> "ExactScalar":
        """Inverse of ``str``; accepts the ``a+b√2+ci+di√2`` rendering."""
        text = text.strip()
        if text == "0":
            return ZERO
        comps = {"": _Q0, "√2": _Q0, "i": _Q0, "i√2": _Q0}
        token = ""
        terms = []
        for ch in text:
            if ch in "+-" and token and not token.endswith("/"):
                terms.append(token)
                token = ch
            else:
                token += ch
        terms.append(token)
        for term in terms:
            term = term.lstrip("+")   # mpq rejects an explicit plus sign
            for unit in ("i√2", "√2", "i"):
                if term.endswith(unit):
                    comps[unit] += mpq(term[: -len(unit)])
                    break
            else:
                comps[""] += mpq(term)
        return cls._raw(comps[""], comps["√2"], comps["i"], comps["i√2"])


def _mul2(a1, b1, a2, b2):
    """Product in Q(sqrt2): (a1 + b1 r)(a2 + b2 r)."""
    return a1 * a2 + 2 * b1 * b2, a1 * b2 + b1 * a2


def _sign2(a, b) -> int:
    sa = (a > 0) - (a < 0)
    sb = (b > 0) - (b < 0)
    if sb == 0:
        return sa
    if sa == 0 or sa == sb:
        return sb
    # opposite signs: compare a^2 with 2 b^2
    diff = a * a - 2 * b * b
    return sa if diff > 0 else (sb if diff < 0 else 0)


def as_exact(x) -> ExactScalar:
    """Coerce ints, rationals and Gaussian-integer complex numbers."""
    if isinstance(x, ExactScalar):
        return x
    if isinstance(x, (int, Rational)) or type(x).__name__ == "mpq":
        return ExactScalar._raw(_q(x), _Q0, _Q0, _Q0)
    if isinstance(x, complex):
        if x.real != int(x.real) or x.imag != int(x.imag):
            raise TypeError("only Gaussian-integer complex literals convert exactly")
        return ExactScalar._raw(mpq(int(x.real)), _Q0, mpq(int(x.imag)), _Q0)
    raise TypeError(f"cannot convert {type(x).__name__} to ExactScalar")


ZERO = ExactScalar()
ONE = ExactScalar(1)
I = ExactScalar(0, 0, 1)
SQRT2 = ExactScalar(0, 1)
LAM = ExactScalar(0, Fraction(1, 2), 0, Fraction(1, 2))
LAMBAR = LAM.conjugate()
