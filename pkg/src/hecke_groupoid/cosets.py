"""Left cosets Gamma g, finite-index subgroups of Gamma = PSL_2(Z) and their
transversals, and coset-by-double-coset products.

A left coset Gamma g is stored as the Hermite triple (i, j, b) of the unique
upper triangular representative [[p^i, b], [0, p^j]] with 0 <= b < p^j.  These
representatives are the points of the symbolic fundamental domain: the map
``to_coset`` is the reduction x -> x_1 of a point into that domain, and
``cocycle`` also returns the Gamma element that performed the reduction.
"""

from __future__ import annotations

from collections import Counter, deque
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Hashable, Iterator, NamedTuple, Optional

import numpy as np

from .arith import (
    ProjMat,
    gen_S,
    gen_T,
    gen_T_inv,
    identity,
    inverse,
    mul,
    sigma,
)
from .errors import IndexOverflow, PrimeMismatch

DEFAULT_INDEX_BOUND = 200_000


class CosetRep(NamedTuple):
    """Hermite triple of a left coset: [[p^i, b], [0, p^j]], 0 <= b < p^j."""

    i: int
    j: int
    b: int
    p: int

    @property
    def n(self) -> int:
        return self.i + self.j

    @property
    def lift(self) -> ProjMat:
        return ProjMat(self.p**self.i, self.b, 0, self.p**self.j, self.p, self.i + self.j)

    def key(self) -> tuple[int, int, int]:
        """Deterministic order: by valuation, then i descending, then b."""
        return (self.i + self.j, -self.i, self.b)

    def __repr__(self) -> str:
        return f"CosetRep(i={self.i}, j={self.j}, b={self.b}, p={self.p})"


def lift(s: CosetRep) -> ProjMat:
    return s.lift


def _xgcd(a: int, b: int) -> tuple[int, int, int]:
    """(g, u, v) with u*a + v*b = g = gcd(a, b) >= 0."""
    u0, v0, u1, v1 = 1, 0, 0, 1
    while b:
        q, r = divmod(a, b)
        a, b = b, r
        u0, v0, u1, v1 = u1, v1, u0 - q * u1, v0 - q * v1
    if a < 0:
        return -a, -u0, -v0
    return a, u0, v0


def _hermite(m: ProjMat) -> tuple[CosetRep, ProjMat]:
    """Split m = gamma * H with gamma in Gamma and H in Hermite form."""
    a, b, c, d, p, n = m
    g, u, v = _xgcd(a, c)
    # [[u, v], [-c/g, a/g]] has det 1 and kills the lower-left entry
    top = u * b + v * d
    lower = (a * d - b * c) // g
    k, bb = divmod(top, lower)
    i = 0
    gg = g
    while gg % p == 0:
        gg //= p
        i += 1
    ag, cg = a // g, c // g
    # gamma = ([[u, v], [-c/g, a/g]])^-1 * T^k
    ga, gb, gc, gd = ag, k * ag - v, cg, k * cg + u
    if ga < 0 or (ga == 0 and (gb < 0 or (gb == 0 and gc < 0))):
        ga, gb, gc, gd = -ga, -gb, -gc, -gd
    return CosetRep(i, n - i, bb, p), ProjMat(ga, gb, gc, gd, p, 0)


def to_coset(g: ProjMat) -> CosetRep:
    """Canonical representative of the left coset Gamma g."""
    return _hermite(g)[0]


def cocycle(g: ProjMat, s: CosetRep) -> tuple[ProjMat, CosetRep]:
    """(gamma_1, s_1) with g * lift(s) = gamma_1 * lift(s_1)."""
    s1, gamma = _hermite(mul(g, s.lift))
    return gamma, s1


def coset_action(s: CosetRep, g: ProjMat) -> CosetRep:
    """Gamma s -> Gamma g s."""
    return _hermite(mul(g, s.lift))[0]


def as_matrix(x: ProjMat | CosetRep) -> ProjMat:
    return x.lift if isinstance(x, CosetRep) else x


def identity_coset(p: int) -> CosetRep:
    return CosetRep(0, 0, 0, p)


def enumerate_sphere(n: int, p: int) -> list[CosetRep]:
    """All cosets of valuation n, (p+1)p^(n-1) of them for n >= 1."""
    if n < 0:
        raise ValueError("valuation must be nonnegative")
    out = []
    for i in range(n, -1, -1):
        j = n - i
        for b in range(p**j):
            if i >= 1 and j >= 1 and b % p == 0:
                continue
            out.append(CosetRep(i, j, b, p))
    return out


def sphere_size(n: int, p: int) -> int:
    return 1 if n == 0 else (p + 1) * p ** (n - 1)


def enumerate_ball(radius: int, p: int) -> list[CosetRep]:
    out: list[CosetRep] = []
    for n in range(radius + 1):
        out.extend(enumerate_sphere(n, p))
    return out


# ---------------------------------------------------------------------------
# finite-index subgroups of Gamma


class Subgroup:
    """A finite-index subgroup H of Gamma given by a membership predicate.

    ``coset_key`` returns a hashable invariant of the right coset H*gamma, or
    None when the descriptor has none; transversals then fall back to a
    linear scan with the membership predicate.
    """

    p: int

    def contains(self, g: ProjMat) -> bool:
        raise NotImplementedError

    def coset_key(self, g: ProjMat) -> Optional[Hashable]:
        return None

    def describe(self) -> str:
        raise NotImplementedError

    @property
    def transversal(self) -> "Transversal":
        return right_transversal(self)

    @property
    def index(self) -> int:
        return len(self.transversal)


@dataclass(frozen=True)
class Stabilizer(Subgroup):
    """Gamma_g = Gamma cap g Gamma g^-1."""

    g: ProjMat

    @property
    def p(self) -> int:  # type: ignore[override]
        return self.g.p

    def contains(self, x: ProjMat) -> bool:
        return x.n == 0 and self.contains_entries(x.a, x.b, x.c, x.d)

    def contains_entries(self, xa: int, xb: int, xc: int, xd: int) -> bool:
        """Membership of a determinant-one integer matrix, without normalizing."""
        a, b, c, d, _, n = self.g
        if n == 0:
            return True
        D = self.g.p**n
        # x g, then adj(g) (x g); all entries must vanish mod det g
        u, v = xa * a + xb * c, xa * b + xb * d
        w, z = xc * a + xd * c, xc * b + xd * d
        return (
            (d * u - b * w) % D == 0
            and (d * v - b * z) % D == 0
            and (a * w - c * u) % D == 0
            and (a * z - c * v) % D == 0
        )

    def contains_array(self, xa, xb, xc, xd):
        """Vectorized ``contains_entries`` over integer numpy arrays."""
        a, b, c, d, _, n = self.g
        if n == 0:
            return np.ones(np.shape(xa), dtype=bool)
        D = self.g.p**n
        u, v = xa * a + xb * c, xa * b + xb * d
        w, z = xc * a + xd * c, xc * b + xd * d
        return (
            ((d * u - b * w) % D == 0)
            & ((d * v - b * z) % D == 0)
            & ((a * w - c * u) % D == 0)
            & ((a * z - c * v) % D == 0)
        )

    def coset_key(self, x: ProjMat) -> Hashable:
        # Gamma_g x = Gamma_g y  iff  Gamma g^-1 x = Gamma g^-1 y
        return to_coset(mul(inverse(self.g), x))

    def describe(self) -> str:
        return f"Gamma_[{self.g}]"


@dataclass(frozen=True)
class Congruence(Subgroup):
    """Principal congruence subgroup Gamma(p^k)."""

    p: int
    k: int

    @property
    def level(self) -> int:
        return self.p**self.k

    def contains(self, x: ProjMat) -> bool:
        if x.n != 0:
            return False
        N = self.level
        a, b, c, d = x.a % N, x.b % N, x.c % N, x.d % N
        return b == 0 and c == 0 and (a == d == 1 % N or a == d == N - 1)

    def coset_key(self, x: ProjMat) -> Hashable:
        N = self.level
        pos = (x.a % N, x.b % N, x.c % N, x.d % N)
        neg = (-x.a % N, -x.b % N, -x.c % N, -x.d % N)
        return min(pos, neg)

    def describe(self) -> str:
        return f"Gamma({self.p}^{self.k})"


@dataclass(frozen=True)
class Intersection(Subgroup):
    parts: tuple

    @property
    def p(self) -> int:  # type: ignore[override]
        return self.parts[0].p

    def contains(self, x: ProjMat) -> bool:
        return all(h.contains(x) for h in self.parts)

    def coset_key(self, x: ProjMat) -> Optional[Hashable]:
        keys = tuple(h.coset_key(x) for h in self.parts)
        return None if any(k is None for k in keys) else keys

    def describe(self) -> str:
        return " cap ".join(h.describe() for h in self.parts)


@dataclass(frozen=True)
class Conjugate(Subgroup):
    """{gamma in Gamma : g gamma g^-1 in base}, i.e. Gamma cap g^-1 base g."""

    base: Subgroup
    g: ProjMat

    @property
    def p(self) -> int:  # type: ignore[override]
        return self.g.p

    def contains(self, x: ProjMat) -> bool:
        if x.n != 0:
            return False
        y = mul(mul(self.g, x), inverse(self.g))
        return y.n == 0 and self.base.contains(y)

    def describe(self) -> str:
        return f"[{self.g}]^-1 ({self.base.describe()}) [{self.g}]"


def whole_group(p: int) -> Stabilizer:
    return Stabilizer(identity(p))


def stabilizer(g: ProjMat) -> Stabilizer:
    return Stabilizer(g)


def congruence(p: int, k: int) -> Congruence:
    return Congruence(p, k)


def congruence_index(p: int, k: int) -> int:
    """|PSL_2(Z/p^k)| for odd p."""
    if k == 0:
        return 1
    return p ** (3 * k) * (p * p - 1) // (2 * p * p)


@dataclass
class Transversal:
    """Right transversal Gamma = disjoint union of H r_j, in BFS order."""

    subgroup: Subgroup
    reps: list[ProjMat]
    _lookup: dict = field(default_factory=dict, repr=False)

    def __len__(self) -> int:
        return len(self.reps)

    def __iter__(self) -> Iterator[ProjMat]:
        return iter(self.reps)

    def __getitem__(self, j: int) -> ProjMat:
        return self.reps[j]

    def locate(self, x: ProjMat) -> int:
        """The unique j with x in H r_j."""
        key = self.subgroup.coset_key(x)
        if key is not None:
            return self._lookup[key]
        for j, r in enumerate(self.reps):
            if self.subgroup.contains(mul(x, inverse(r))):
                return j
        raise KeyError(f"{x!r} lies in no coset of {self.subgroup.describe()}")

    def left_reps(self) -> list[ProjMat]:
        """Left transversal Gamma = disjoint union of t H (inverses of the r_j)."""
        return [inverse(r) for r in self.reps]


@lru_cache(maxsize=None)
def _transversal_cached(H: Subgroup, bound: int) -> Transversal:
    p = H.p
    gens = (gen_T(p), gen_T_inv(p), gen_S(p))
    e = identity(p)
    reps = [e]
    key0 = H.coset_key(e)
    keyed = key0 is not None
    lookup = {key0: 0} if keyed else {}
    queue = deque([e])
    while queue:
        r = queue.popleft()
        for x in gens:
            y = mul(r, x)
            if keyed:
                k = H.coset_key(y)
                if k in lookup:
                    continue
                lookup[k] = len(reps)
            else:
                if any(H.contains(mul(y, inverse(q))) for q in reps):
                    continue
            reps.append(y)
            if len(reps) > bound:
                raise IndexOverflow(f"{H.describe()} has index above {bound}")
            queue.append(y)
    return Transversal(H, reps, lookup)


def right_transversal(H: Subgroup, bound: int = DEFAULT_INDEX_BOUND) -> Transversal:
    """Breadth-first enumeration of H\\Gamma under right multiplication by T, T^-1, S."""
    return _transversal_cached(H, bound)


@lru_cache(maxsize=64)
def _schreier_cached(H: Subgroup) -> tuple[ProjMat, ...]:
    return tuple(_schreier(H))


def schreier_generators(H: Subgroup) -> list[ProjMat]:
    """Generators r x rep(r x)^-1 of H, from its transversal and {T, S}."""
    return list(_schreier_cached(H))


def _schreier(H: Subgroup) -> list[ProjMat]:
    tr = right_transversal(H)
    p = H.p
    out = []
    seen = set()
    for r in tr:
        for x in (gen_T(p), gen_S(p)):
            y = mul(r, x)
            s = mul(y, inverse(tr[tr.locate(y)]))
            if s.n == 0 and (s.a, s.b, s.c, s.d) == (1, 0, 0, 1):
                continue
            if s not in seen:
                seen.add(s)
                out.append(s)
    return out


@lru_cache(maxsize=4096)
def is_subgroup(K: Subgroup, H: Subgroup) -> bool:
    """K <= H, decided on the Schreier generators of K."""
    return all(H.contains(s) for s in schreier_generators(K))


# ---------------------------------------------------------------------------
# double cosets


def hecke_cosets(sig: ProjMat) -> list[ProjMat]:
    """Representatives sigma r_j of the left cosets in Gamma sigma Gamma,
    where Gamma = disjoint union of Gamma_{sigma^-1} r_j."""
    tr = right_transversal(Stabilizer(inverse(sig)))
    return [mul(sig, r) for r in tr]


def coset_product(sig: ProjMat, h: ProjMat | CosetRep) -> list[CosetRep]:
    """The left cosets Gamma sigma r_j h of the product [Gamma sigma Gamma][Gamma h]."""
    hm = as_matrix(h)
    return [to_coset(mul(g, hm)) for g in hecke_cosets(sig)]


def double_coset_product(m: int, n: int, p: int) -> Counter:
    """Multiset [Gamma sigma_{p^m} Gamma] * (all left cosets of valuation n)."""
    sig = sigma(p, m)
    out: Counter = Counter()
    for h in enumerate_sphere(n, p):
        out.update(coset_product(sig, h))
    return out


def same_p(*xs) -> int:
    ps = {x.p for x in xs}
    if len(ps) != 1:
        raise PrimeMismatch(f"mixed primes {sorted(ps)}")
    return ps.pop()


def random_gamma(rng, p: int, length: int = 6) -> ProjMat:
    """Random word in T, T^-1, S of the given length."""
    gens = (gen_T(p), gen_T_inv(p), gen_S(p))
    out = identity(p)
    for k in rng.integers(0, 3, size=length):
        out = mul(out, gens[int(k)])
    return out
