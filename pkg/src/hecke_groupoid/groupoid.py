"""Partial transformations x -> x_1 of the coset domain and their calculus.

For a left coset Gamma g the transformation sends a representative s to the
representative s_1 of Gamma g s; the Gamma element gamma_1 with
g s = gamma_1 s_1 is the cocycle.  The composition of two such maps splits
into pieces indexed by a right transversal r_j of Gamma_{g1^-1}; on each piece it
is the single map of Gamma g1 r_j g2.  Every cell test goes through the cocycle
and a subgroup membership predicate, never through set enumeration.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .arith import ProjMat, identity, inverse, mul
from .cosets import (
    CosetRep,
    Stabilizer,
    Subgroup,
    as_matrix,
    cocycle,
    coset_action,
    enumerate_ball,
    hecke_cosets,
    right_transversal,
    to_coset,
)
from .errors import NoCell


@dataclass(frozen=True)
class CellDescriptor:
    """The set {s : translator * s lies in subgroup * coset * S}.

    Equivalently: the cocycle gamma of ``translator`` at s satisfies
    gamma * coset^-1 in subgroup.
    """

    subgroup: Subgroup
    translator: ProjMat
    coset: ProjMat
    side: str = "domain"

    def contains_cocycle(self, gamma: ProjMat) -> bool:
        return self.subgroup.contains(mul(gamma, inverse(self.coset)))

    def describe(self) -> str:
        return (
            f"{{s in F : [{self.translator}] s in {self.subgroup.describe()} [{self.coset}] F}}"
        )


def cell_membership(cell: CellDescriptor, s: CosetRep) -> bool:
    gamma, _ = cocycle(cell.translator, s)
    return cell.contains_cocycle(gamma)


def apply(g: CosetRep | ProjMat, s: CosetRep) -> tuple[ProjMat, CosetRep]:
    """The cocycle value (gamma_1, s_1): g s = gamma_1 s_1 with s_1 in the domain."""
    return cocycle(as_matrix(g), s)


# ---------------------------------------------------------------------------
# composition


@dataclass
class Decomposition:
    """Pieces of the composite map Gamma g1 after Gamma g2."""

    g1: ProjMat
    g2: ProjMat
    subgroup: Stabilizer
    reps: list[ProjMat]
    terms: list[CosetRep]
    cells: list[CellDescriptor]

    def __len__(self) -> int:
        return len(self.terms)

    def locate(self, s: CosetRep) -> int:
        gamma2, _ = cocycle(self.g2, s)
        return self.subgroup.transversal.locate(inverse(gamma2))


def compose_decomposition(g1: CosetRep | ProjMat, g2: CosetRep | ProjMat) -> Decomposition:
    """Terms Gamma g1 r_j g2 with their cells {s : r_j g2 s in Gamma_{g1^-1} S}."""
    m1, m2 = as_matrix(g1), as_matrix(g2)
    H = Stabilizer(inverse(m1))
    reps = list(right_transversal(H))
    e = identity(m1.p)
    terms = [to_coset(mul(mul(m1, r), m2)) for r in reps]
    cells = [CellDescriptor(H, mul(r, m2), e) for r in reps]
    return Decomposition(m1, m2, H, reps, terms, cells)


def cell_index(g1: CosetRep | ProjMat, g2: CosetRep | ProjMat, s: CosetRep) -> int:
    """The unique j with gamma_2^-1 in Gamma_{g1^-1} r_j, where g2 s = gamma_2 s_2."""
    m1 = as_matrix(g1)
    gamma2, _ = cocycle(as_matrix(g2), s)
    try:
        return right_transversal(Stabilizer(inverse(m1))).locate(inverse(gamma2))
    except KeyError as exc:
        raise NoCell(f"no cell of the decomposition contains {s!r}") from exc


def verify_composition(
    dec: Decomposition, points: Iterable[CosetRep], count_cells: bool = True
) -> list[dict]:
    """Check the composition identity pointwise; returns counterexamples.

    For each s: Gamma g1 (Gamma g2 s) equals Gamma (g1 r_j g2) s with j the cell
    of s; the conjugate g1 theta g1^-1 of theta = gamma_2^-1 r_j^-1 lies in Gamma;
    with ``count_cells`` every membership predicate is evaluated and exactly
    one must hold.
    """
    m1, m2 = dec.g1, dec.g2
    inv1 = inverse(m1)
    H = dec.subgroup
    tr = H.transversal
    term_mats = [t.lift for t in dec.terms]
    bad = []
    seen = []
    for s in points:
        gamma2, s2 = cocycle(m2, s)
        lhs = coset_action(s2, m1)
        j = tr.locate(inverse(gamma2))
        rhs = coset_action(s, term_mats[j])
        theta = mul(inverse(gamma2), inverse(dec.reps[j]))
        theta_conj = mul(mul(m1, theta), inv1)
        problems = []
        if lhs != rhs:
            problems.append("composition")
        if not H.contains(mul(dec.reps[j], gamma2)):
            problems.append("cell")
        if theta_conj.n != 0:
            problems.append("conjugate-not-in-Gamma")
        if problems:
            bad.append({"s": s, "j": j, "lhs": lhs, "rhs": rhs, "problems": problems})
        seen.append((s, gamma2))
    if count_cells and seen:
        hits = _cell_hits(H, dec.reps, [g for _, g in seen])
        for (s, _), h in zip(seen, hits):
            if h != 1:
                bad.append({"s": s, "problems": [f"cells={h}"]})
    return bad


# products reach 8 * bound^4, which must stay below 2^63
_INT64_SAFE = 1 << 14


def _cell_hits(H: Stabilizer, reps: list[ProjMat], gammas: list[ProjMat]) -> list[int]:
    """Number of j with r_j gamma in H, for each gamma.

    r_j gamma is the cocycle of r_j g2 at s (s_2 is already reduced), so this
    evaluates every cell predicate of the decomposition at s.
    """
    G = np.array([g.entries for g in gammas], dtype=object)
    R = np.array([r.entries for r in reps], dtype=object)
    big = max(int(np.abs(G).max()), int(np.abs(R).max()), max(abs(v) for v in H.g.entries))
    dtype = np.int64 if big < _INT64_SAFE else object
    G = G.astype(dtype)
    R = R.astype(dtype)
    ga, gb, gc, gd = (G[:, k][None, :] for k in range(4))
    ra, rb, rc, rd = (R[:, k][:, None] for k in range(4))
    inside = H.contains_array(
        ra * ga + rb * gc, ra * gb + rb * gd, rc * ga + rd * gc, rc * gb + rd * gd
    )
    return [int(v) for v in inside.sum(axis=0)]


# ---------------------------------------------------------------------------
# bijectivity atlas


@dataclass(frozen=True)
class PartialMap:
    """Gamma g restricted to one domain of bijectivity, with its inverse chart."""

    coset: CosetRep
    domain: CellDescriptor
    range: CellDescriptor
    inverse_coset: CosetRep
    chart: int = 0

    def __call__(self, s: CosetRep) -> CosetRep:
        return coset_action(s, self.coset.lift)

    def inverse(self) -> "PartialMap":
        return PartialMap(
            self.inverse_coset,
            CellDescriptor(self.range.subgroup, self.range.translator, self.range.coset, "domain"),
            CellDescriptor(self.domain.subgroup, self.domain.translator, self.domain.coset, "range"),
            self.coset,
            self.chart,
        )

    def in_domain(self, s: CosetRep) -> bool:
        return cell_membership(self.domain, s)

    def in_range(self, s: CosetRep) -> bool:
        return cell_membership(self.range, s)


def bijectivity_atlas(g: CosetRep | ProjMat) -> list[PartialMap]:
    """One chart per alpha_i, Gamma = disjoint union of Gamma_g alpha_i.

    Domain {s : g s in Gamma_g alpha_i S}; range {s : g^-1 alpha_i s in Gamma_{g^-1} S};
    inverse map Gamma g^-1 alpha_i.
    """
    gm = as_matrix(g)
    gi = inverse(gm)
    Hg = Stabilizer(gm)
    Hgi = Stabilizer(gi)
    e = identity(gm.p)
    coset = to_coset(gm)
    charts = []
    for i, alpha in enumerate(right_transversal(Hg)):
        dom = CellDescriptor(Hg, gm, alpha, "domain")
        back = mul(gi, alpha)
        rng = CellDescriptor(Hgi, back, e, "range")
        charts.append(PartialMap(coset, dom, rng, to_coset(back), i))
    return charts


@dataclass
class AtlasReport:
    coset: CosetRep
    radius: int
    charts: int
    points: int
    partition_violations: list = field(default_factory=list)
    injectivity_violations: list = field(default_factory=list)
    range_violations: list = field(default_factory=list)
    inverse_violations: list = field(default_factory=list)
    surjectivity_violations: list = field(default_factory=list)
    observation_violations: list = field(default_factory=list)
    range_overlaps: int = 0

    @property
    def ok(self) -> bool:
        return not (
            self.partition_violations
            or self.injectivity_violations
            or self.range_violations
            or self.inverse_violations
            or self.surjectivity_violations
            or self.observation_violations
        )


def _distinct_cosets(H: Stabilizer, reps: list[ProjMat]) -> bool:
    """No two representatives share a right coset of H."""
    inv = [inverse(r) for r in reps]
    return all(
        not H.contains(mul(reps[a], inv[b]))
        for a in range(len(reps))
        for b in range(len(reps))
        if a != b
    )


def _unique_cell(H: Stabilizer, tr, gamma: ProjMat) -> int:
    """Number of representatives r with gamma r^-1 in H.

    The key lookup finds the only candidate; once the representatives are
    known to lie in distinct cosets, one exact membership test settles the
    count."""
    try:
        k = tr.locate(gamma)
    except KeyError:
        return 0
    return 1 if H.contains(mul(gamma, inverse(tr[k]))) else 0


def verify_atlas(g: CosetRep | ProjMat, radius: int) -> AtlasReport:
    """Exhaustive check of the atlas of Gamma g on the ball of the given radius.

    Domain cells must partition the ball, each chart must be injective, land in
    its range cell, be undone by its inverse chart, and hit every point of its
    range cell whose preimage is inside the ball.  Also checks the disjointness
    pattern for the translates g r_j.
    """
    gm = as_matrix(g)
    p = gm.p
    n = gm.n
    gi = inverse(gm)
    atlas = bijectivity_atlas(gm)
    ball = enumerate_ball(radius, p)
    inner = [s for s in ball if s.n <= radius - n]
    rep = AtlasReport(to_coset(gm), radius, len(atlas), len(ball))
    Hg = Stabilizer(gm)
    Hgi = Stabilizer(gi)
    tr_g = right_transversal(Hg)
    tr_gi = right_transversal(Hgi)
    alphas = list(tr_g)
    rjs = list(tr_gi)
    if not (_distinct_cosets(Hg, alphas) and _distinct_cosets(Hgi, rjs)):
        rep.partition_violations.append(("transversal", None))
        return rep

    images: list[dict] = [dict() for _ in atlas]
    for s in ball:
        gamma, t = cocycle(gm, s)
        if _unique_cell(Hg, tr_g, gamma) != 1:
            rep.partition_violations.append((s, gamma))
            continue
        k = tr_g.locate(gamma)
        ch = atlas[k]
        if not ch.in_domain(s) or ch(s) != t:
            rep.partition_violations.append((s, k))
            continue
        if t in images[k]:
            rep.injectivity_violations.append((k, s, images[k][t], t))
        images[k][t] = s
        if not ch.in_range(t):
            rep.range_violations.append((k, s, t))
        if coset_action(t, ch.inverse_coset.lift) != s:
            rep.inverse_violations.append((k, s, t))

    covered: Counter = Counter()
    for k, ch in enumerate(atlas):
        inv = ch.inverse()
        for t in inner:
            if not ch.in_range(t):
                continue
            covered[t] += 1
            s = inv(t)
            if not ch.in_domain(s) or ch(s) != t:
                rep.surjectivity_violations.append((k, t, s))
    rep.range_overlaps = sum(1 for v in covered.values() if v > 1)

    # translates g r_j: domains disjoint over i, ranges disjoint over j
    for s in ball:
        for r in rjs:
            gamma, _ = cocycle(mul(gm, r), s)
            if _unique_cell(Hg, tr_g, gamma) != 1:
                rep.observation_violations.append(("domain", s, r))
        for a in alphas:
            gamma, _ = cocycle(mul(gi, a), s)
            if _unique_cell(Hgi, tr_gi, gamma) != 1:
                rep.observation_violations.append(("range", s, a))
    return rep


# ---------------------------------------------------------------------------
# multiplicity census


@dataclass
class CensusReport:
    coset: CosetRep
    radius: int
    expected_images: int
    expected_preimages: int
    image_counts: Counter
    preimage_counts: Counter
    domain_counts: Counter

    @property
    def ok(self) -> bool:
        return (
            all(v == self.expected_images for v in self.image_counts.values())
            and all(v == self.expected_preimages for v in self.preimage_counts.values())
            and all(v == self.expected_preimages for v in self.domain_counts.values())
        )


def _image_census(maps: list[ProjMat], ball: list[CosetRep], interior: set) -> Counter:
    counts: Counter = Counter({x: 0 for x in interior})
    for s in ball:
        for h in maps:
            x = coset_action(s, h)
            if x in interior:
                counts[x] += 1
    return counts


def multiplicity_census(g: CosetRep | ProjMat, ball_radius: int) -> CensusReport:
    """Count how often each interior point is hit by the maps of the cosets in
    Gamma g Gamma.

    Interior means valuation <= ball_radius - valuation(g); every preimage of an
    interior point then lies in the ball.  Images are expected [Gamma:Gamma_g]
    times.  Preimage counts are taken for the maps of Gamma g^-1 Gamma (expected
    [Gamma:Gamma_{g^-1}]), and ``domain_counts`` records the number of maps of
    Gamma g Gamma defined at each point, also [Gamma:Gamma_{g^-1}].
    """
    gm = as_matrix(g)
    n = gm.n
    ball = enumerate_ball(ball_radius, gm.p)
    interior = {s for s in ball if s.n <= ball_radius - n}
    maps = hecke_cosets(gm)
    inv_maps = hecke_cosets(inverse(gm))
    return CensusReport(
        to_coset(gm),
        ball_radius,
        Stabilizer(gm).index,
        Stabilizer(inverse(gm)).index,
        _image_census(maps, ball, interior),
        _image_census(inv_maps, ball, interior),
        Counter({x: len(maps) for x in interior}),
    )
