"""Exact arithmetic in G_p^+, the primitive integer 2x2 matrices of determinant p^n
taken modulo the sign -1.

Every element is stored in its unique normal form: entries coprime, first nonzero
entry (row-major) positive.  The determinant of a normal form is p^n with n >= 0
and ``n`` is cached on the value as its valuation.  Elements of valuation 0 are
exactly the elements of PSL_2(Z).
"""

from __future__ import annotations

from math import gcd, sqrt
from typing import NamedTuple, Sequence, Union

import numpy as np

from .errors import DeterminantNotPPower, ParseError, PrimeMismatch, ZeroMatrix

__all__ = [
    "ProjMat",
    "normalize",
    "mul",
    "inverse",
    "valuation",
    "in_gamma",
    "identity",
    "sigma",
    "gen_T",
    "gen_T_inv",
    "gen_S",
    "parse_matrix",
    "format_matrix",
    "to_real",
    "is_odd_prime",
]


class ProjMat(NamedTuple):
    """Normal-form element of G_p^+.  Build through :func:`normalize`."""

    a: int
    b: int
    c: int
    d: int
    p: int
    n: int

    def __repr__(self) -> str:
        return f"ProjMat([[{self.a}, {self.b}], [{self.c}, {self.d}]], p={self.p})"

    def __str__(self) -> str:
        return format_matrix(self)

    def __mul__(self, other):  # type: ignore[override]
        if isinstance(other, ProjMat):
            return mul(self, other)
        return NotImplemented

    @property
    def entries(self) -> tuple[int, int, int, int]:
        return (self.a, self.b, self.c, self.d)

    @property
    def det(self) -> int:
        return self.a * self.d - self.b * self.c

    def tolist(self) -> list[list[int]]:
        return [[self.a, self.b], [self.c, self.d]]


def _pow_exponent(value: int, p: int) -> int | None:
    """Return n when ``value == p**n`` (n >= 0), otherwise None."""
    if value <= 0:
        return None
    n = 0
    while value % p == 0:
        value //= p
        n += 1
    return n if value == 1 else None


def _make(a: int, b: int, c: int, d: int, p: int) -> ProjMat:
    """Normalize raw integer entries.  Hot path shared by mul/inverse/normalize."""
    g = gcd(a, b, c, d)
    if g == 0:
        raise ZeroMatrix("the zero matrix has no projective class")
    if g != 1:
        a //= g
        b //= g
        c //= g
        d //= g
    if a < 0 or (a == 0 and (b < 0 or (b == 0 and c < 0))):
        a, b, c, d = -a, -b, -c, -d
    n = _pow_exponent(a * d - b * c, p)
    if n is None:
        raise DeterminantNotPPower(
            f"primitive determinant {a * d - b * c} of [[{a},{b}],[{c},{d}]] is not a power of {p}"
        )
    return ProjMat(a, b, c, d, p, n)


MatrixLike = Union[ProjMat, Sequence[Sequence[int]], Sequence[int]]


def _entries(m: MatrixLike) -> tuple[int, int, int, int]:
    if isinstance(m, ProjMat):
        return m.entries
    m = list(m)
    if len(m) == 4:
        a, b, c, d = m
    elif len(m) == 2:
        (a, b), (c, d) = m
    else:
        raise ValueError(f"cannot read a 2x2 matrix from {m!r}")
    for v in (a, b, c, d):
        if int(v) != v:
            raise ValueError(f"non-integer entry {v!r}")
    return int(a), int(b), int(c), int(d)


def normalize(m: MatrixLike, p: int) -> ProjMat:
    """Projective normal form of an integer matrix.

    >>> normalize([[2, 0], [0, 2]], 3)
    ProjMat([[1, 0], [0, 1]], p=3)
    >>> normalize([[-3, 0], [0, -1]], 3)
    ProjMat([[3, 0], [0, 1]], p=3)
    """
    return _make(*_entries(m), p)


def _check_p(x: ProjMat, y: ProjMat) -> None:
    if x.p != y.p:
        raise PrimeMismatch(f"cannot combine elements for p={x.p} and p={y.p}")


def mul(x: ProjMat, y: ProjMat) -> ProjMat:
    _check_p(x, y)
    return _make(
        x.a * y.a + x.b * y.c,
        x.a * y.b + x.b * y.d,
        x.c * y.a + x.d * y.c,
        x.c * y.b + x.d * y.d,
        x.p,
    )


def mul_all(*xs: ProjMat) -> ProjMat:
    out = xs[0]
    for x in xs[1:]:
        out = mul(out, x)
    return out


def inverse(x: ProjMat) -> ProjMat:
    # the adjugate of a primitive matrix is primitive with the same determinant
    a, b, c, d = x.d, -x.b, -x.c, x.a
    if a < 0 or (a == 0 and (b < 0 or (b == 0 and c < 0))):
        a, b, c, d = -a, -b, -c, -d
    return ProjMat(a, b, c, d, x.p, x.n)


def valuation(x: ProjMat) -> int:
    return x.n


def in_gamma(x: ProjMat) -> bool:
    return x.n == 0


def identity(p: int) -> ProjMat:
    return ProjMat(1, 0, 0, 1, p, 0)


def sigma(p: int, n: int = 1) -> ProjMat:
    """diag(p^n, 1)."""
    return ProjMat(p**n, 0, 0, 1, p, n)


def gen_T(p: int) -> ProjMat:
    return ProjMat(1, 1, 0, 1, p, 0)


def gen_T_inv(p: int) -> ProjMat:
    return ProjMat(1, -1, 0, 1, p, 0)


def gen_S(p: int) -> ProjMat:
    # [[0,-1],[1,0]] in normal form
    return ProjMat(0, 1, -1, 0, p, 0)


def parse_matrix(text: str, p: int) -> ProjMat:
    """Read the literal format ``"a,b;c,d"``."""
    try:
        rows = [r for r in text.strip().split(";")]
        vals = [int(v) for r in rows for v in r.split(",")]
    except ValueError as exc:
        raise ParseError(f"bad matrix literal {text!r}") from exc
    if len(rows) != 2 or len(vals) != 4:
        raise ParseError(f"matrix literal {text!r} must look like 'a,b;c,d'")
    return normalize(vals, p)


def format_matrix(x: ProjMat) -> str:
    return f"{x.a},{x.b};{x.c},{x.d}"


def to_real(x: ProjMat) -> np.ndarray:
    """Determinant-one real matrix with the same Moebius action."""
    s = sqrt(float(x.p) ** x.n)
    return np.array([[x.a, x.b], [x.c, x.d]], dtype=float) / s


def is_odd_prime(p: int) -> bool:
    if not isinstance(p, int) or p < 3 or p % 2 == 0:
        return False
    k = 3
    while k * k <= p:
        if p % k == 0:
            return False
        k += 2
    return True
