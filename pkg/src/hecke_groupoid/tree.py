"""The coset space Gamma \\ G_p^+ as the (p+1)-regular tree.

Two cosets are adjacent when one lies in [Gamma sigma_p Gamma] applied to the
other.  A breadth-first edge labeling with the p+1 letters a_k^{+-1},
k = 1..(p+1)/2, identifies the tree with the Cayley graph of the free group on
(p+1)/2 generators; following the labels glues pieces of the coset maps into
p+1 total bijections of the interior.  Radial sums of these bijections are
compared with the Hecke operators of the double cosets Gamma sigma_{p^n} Gamma.

Letters are nonzero ints: +k is a_k and -k its inverse.
"""

from __future__ import annotations

import csv
from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
from scipy import sparse

from .arith import ProjMat, sigma
from .cosets import (
    CosetRep,
    coset_action,
    coset_product,
    double_coset_product,
    enumerate_ball,
    enumerate_sphere,
    hecke_cosets,
    identity_coset,
    to_coset,
)
from .errors import LabelingObstruction
from .groupoid import apply, bijectivity_atlas

Word = tuple[int, ...]


def letters(p: int) -> list[int]:
    k = (p + 1) // 2
    out = []
    for i in range(1, k + 1):
        out += [i, -i]
    return out


def is_reduced(w: Sequence[int]) -> bool:
    return all(w[t] != -w[t + 1] for t in range(len(w) - 1))


def reduced_words(p: int, length: int) -> Iterator[Word]:
    """All reduced words of the given length, (p+1) p^(length-1) of them."""
    alphabet = letters(p)

    def rec(prefix: Word) -> Iterator[Word]:
        if len(prefix) == length:
            yield prefix
            return
        for x in alphabet:
            if prefix and x == -prefix[-1]:
                continue
            yield from rec(prefix + (x,))

    return rec(())


def format_word(w: Sequence[int]) -> str:
    if not w:
        return "e"
    return " ".join(f"a{x}" if x > 0 else f"a{-x}^-1" for x in w)


@dataclass
class TreeBall:
    p: int
    radius: int
    vertices: list[CosetRep]
    adjacency: dict[CosetRep, list[CosetRep]]
    full_degree: dict[CosetRep, int]
    labels: dict[tuple[CosetRep, CosetRep], int] = field(default_factory=dict)

    @property
    def origin(self) -> CosetRep:
        return identity_coset(self.p)

    def interior(self) -> list[CosetRep]:
        return [v for v in self.vertices if v.n < self.radius]

    def edge_count(self) -> int:
        return sum(len(a) for a in self.adjacency.values()) // 2

    def is_connected(self) -> bool:
        seen = {self.origin}
        queue = deque([self.origin])
        while queue:
            u = queue.popleft()
            for v in self.adjacency[u]:
                if v not in seen:
                    seen.add(v)
                    queue.append(v)
        return len(seen) == len(self.vertices)

    def is_tree(self) -> bool:
        return self.edge_count() == len(self.vertices) - 1 and self.is_connected()

    def interior_regular(self) -> bool:
        return all(
            len(self.adjacency[v]) == self.p + 1 and self.full_degree[v] == self.p + 1
            for v in self.interior()
        )

    def neighbor_labels(self, u: CosetRep) -> list[tuple[CosetRep, int]]:
        return [(v, self.labels[(u, v)]) for v in self.adjacency[u] if (u, v) in self.labels]


def build_ball(radius: int, p: int) -> TreeBall:
    """All cosets of valuation <= radius, joined along [Gamma sigma_p Gamma]."""
    if radius < 1:
        raise ValueError("radius must be at least 1")
    vertices = enumerate_ball(radius, p)
    vset = set(vertices)
    sig = sigma(p)
    adjacency = {}
    full_degree = {}
    for u in vertices:
        nb = coset_product(sig, u)
        full_degree[u] = len(set(nb))
        adjacency[u] = sorted((v for v in set(nb) if v in vset), key=CosetRep.key)
    return TreeBall(p, radius, vertices, adjacency, full_degree)


@dataclass
class PsiLabeling:
    """Length-preserving bijection between reduced words and ball vertices."""

    ball: TreeBall
    word_of: dict[CosetRep, Word]
    vertex_of: dict[Word, CosetRep]

    def __call__(self, w: Sequence[int]) -> CosetRep:
        return self.vertex_of[tuple(w)]

    def inverse(self, v: CosetRep) -> Word:
        return self.word_of[v]


def psi_labeling(ball: TreeBall) -> PsiLabeling:
    """Breadth-first edge labeling from the origin.

    The origin's p+1 edges get the p+1 letters; every later vertex keeps the
    inverse of the letter it was reached by for its parent edge and hands the
    remaining p letters to its children in canonical order.  Raises
    LabelingObstruction if the ball is not a (p+1)-regular tree.
    """
    p = ball.p
    alphabet = letters(p)
    origin = ball.origin
    word_of: dict[CosetRep, Word] = {origin: ()}
    parent: dict[CosetRep, CosetRep | None] = {origin: None}
    labels = ball.labels
    labels.clear()
    queue = deque([origin])
    while queue:
        u = queue.popleft()
        w = word_of[u]
        if u.n >= ball.radius:
            continue
        nbrs = ball.adjacency[u]
        if len(nbrs) != p + 1 or ball.full_degree[u] != p + 1:
            raise LabelingObstruction(f"interior vertex {u!r} has degree {len(nbrs)}")
        par = parent[u]
        if par is None:
            free = list(alphabet)
            children = list(nbrs)
        else:
            back = -w[-1]
            free = [x for x in alphabet if x != back]
            children = [v for v in nbrs if v != par]
            if len(children) != p:
                raise LabelingObstruction(f"parent of {u!r} is not among its neighbours")
        for x, v in zip(free, children):
            if v in word_of:
                raise LabelingObstruction(f"cycle through {u!r} and {v!r}")
            labels[(u, v)] = x
            labels[(v, u)] = -x
            parent[v] = u
            word_of[v] = w + (x,)
            queue.append(v)
    if len(word_of) != len(ball.vertices):
        raise LabelingObstruction("ball is not connected")
    vertex_of = {w: v for v, w in word_of.items()}
    return PsiLabeling(ball, word_of, vertex_of)


@dataclass
class GluedGenerators:
    """p+1 bijections of the interior, one per letter, with edge provenance.

    ``provenance[(x, u)]`` is (coset, chart): the edge u -> x(u) is the coset
    map of ``coset`` (a coset inside Gamma sigma_p Gamma) restricted to its
    chart number ``chart``.
    """

    ball: TreeBall
    maps: dict[int, dict[CosetRep, CosetRep]]
    provenance: dict[tuple[int, CosetRep], tuple[CosetRep, int]]

    @property
    def labels(self) -> list[int]:
        return sorted(self.maps, key=lambda x: (abs(x), -x))

    def step(self, x: int, u: CosetRep) -> CosetRep:
        return self.maps[x][u]

    def evaluate(self, w: Sequence[int], v: CosetRep) -> CosetRep:
        """Follow the letters of w from v, first letter first."""
        for x in w:
            v = self.maps[x][v]
        return v

    def closed_under_inverse(self) -> bool:
        interior = set(self.ball.interior())
        for x, m in self.maps.items():
            if -x not in self.maps:
                return False
            inv = self.maps[-x]
            for u, v in m.items():
                if v in interior and inv[v] != u:
                    return False
        return True


def glue_generators(ball: TreeBall) -> GluedGenerators:
    if not ball.labels:
        psi_labeling(ball)
    p = ball.p
    sig_cosets = hecke_cosets(sigma(p))
    atlases = {}
    for g in sig_cosets:
        c = to_coset(g)
        atlases[c] = bijectivity_atlas(c)
    maps: dict[int, dict[CosetRep, CosetRep]] = {x: {} for x in letters(p)}
    provenance = {}
    for u in ball.interior():
        for v in ball.adjacency[u]:
            x = ball.labels[(u, v)]
            maps[x][u] = v
            for g in sig_cosets:
                c = to_coset(g)
                if apply(c, u)[1] == v:
                    chart = next(k for k, ch in enumerate(atlases[c]) if ch.in_domain(u))
                    provenance[(x, u)] = (c, chart)
                    break
    return GluedGenerators(ball, maps, provenance)


def verify_provenance(glued: GluedGenerators) -> list:
    """Every edge must be the coset map of its recorded coset, from inside the
    recorded chart, and that coset must lie in Gamma sigma_p Gamma."""
    bad = []
    for x, m in glued.maps.items():
        for u, v in m.items():
            rec = glued.provenance.get((x, u))
            if rec is None:
                bad.append((x, u, "missing"))
                continue
            c, chart = rec
            ch = bijectivity_atlas(c)[chart]
            if c.n != 1 or apply(c, u)[1] != v or not ch.in_domain(u) or ch(u) != v:
                bad.append((x, u, c, chart))
    return bad


@dataclass
class RelationVerdict:
    max_length: int
    words_checked: int
    failures: list

    @property
    def ok(self) -> bool:
        return not self.failures


def no_relation_check(glued: GluedGenerators, max_length: int) -> RelationVerdict:
    """Evaluate every reduced word of length <= max_length at the origin; each
    must land at tree distance equal to its length (so never back at the origin
    unless empty)."""
    ball = glued.ball
    if max_length > ball.radius:
        raise ValueError("words longer than the ball radius cannot be evaluated")
    origin = ball.origin
    alphabet = letters(ball.p)
    failures = []
    checked = 0
    stack: list[tuple[Word, CosetRep]] = [((), origin)]
    while stack:
        w, v = stack.pop()
        checked += 1
        if v.n != len(w):
            failures.append((w, v))
            continue
        if len(w) == max_length:
            continue
        for x in alphabet:
            if w and x == -w[-1]:
                continue
            stack.append((w + (x,), glued.maps[x][v]))
    return RelationVerdict(max_length, checked, failures)


def free_rank(p: int) -> float:
    """Generators-with-inverses p+1 give a free group of rank (p+1)/2."""
    return (p + 1) / 2


# ---------------------------------------------------------------------------
# operators


def _index(ball: TreeBall) -> dict[CosetRep, int]:
    return {v: k for k, v in enumerate(ball.vertices)}


def radial_operator(glued: GluedGenerators, n: int, rows: Sequence[CosetRep]) -> sparse.csr_matrix:
    """chi_n: sum over reduced words of length n of the glued permutations,
    assembled on the given rows (each row's words must stay inside the ball)."""
    ball = glued.ball
    idx = _index(ball)
    alphabet = letters(ball.p)
    ri, ci = [], []
    for v in rows:
        stack: list[tuple[int, int, CosetRep]] = [(0, 0, v)]
        while stack:
            depth, last, u = stack.pop()
            if depth == n:
                ri.append(idx[v])
                ci.append(idx[u])
                continue
            for x in alphabet:
                if x == -last:
                    continue
                stack.append((depth + 1, x, glued.maps[x][u]))
    size = len(ball.vertices)
    data = np.ones(len(ri), dtype=np.int64)
    return sparse.csr_matrix((data, (ri, ci)), shape=(size, size))


def hecke_operator(ball: TreeBall, n: int, rows: Sequence[CosetRep]) -> sparse.csr_matrix:
    """T_{sigma_{p^n}}: v -> sum of Gamma h v over the cosets Gamma h in
    Gamma sigma_{p^n} Gamma."""
    idx = _index(ball)
    maps = hecke_cosets(sigma(ball.p, n))
    ri, ci = [], []
    for v in rows:
        for h in maps:
            ri.append(idx[v])
            ci.append(idx[coset_action(v, h)])
    size = len(ball.vertices)
    data = np.ones(len(ri), dtype=np.int64)
    return sparse.csr_matrix((data, (ri, ci)), shape=(size, size))


def structure_constants(m: int, n: int, p: int) -> dict[int, int]:
    """Coefficients c_k in [Gamma sigma_{p^m} Gamma][Gamma sigma_{p^n} Gamma] =
    sum_k c_k [Gamma sigma_{p^k} Gamma], read off the brute-force coset product
    (each coset of valuation k must occur exactly c_k times)."""
    prod = double_coset_product(m, n, p)
    out: dict[int, int] = {}
    by_val: dict[int, set] = {}
    for c, mult in prod.items():
        by_val.setdefault(c.n, set()).add(mult)
    for k, mults in by_val.items():
        if len(mults) != 1 or len(enumerate_sphere(k, p)) != sum(
            1 for c in prod if c.n == k
        ):
            raise AssertionError(f"coset product not a sum of double cosets at valuation {k}")
        out[k] = mults.pop()
    return dict(sorted(out.items()))


def _row_mismatches(A: sparse.csr_matrix, B: sparse.csr_matrix, rows: list[int]) -> int:
    D = (A - B).tocsr()
    return sum(1 for r in rows if D.getrow(r).count_nonzero())


@dataclass
class OperatorReport:
    p: int
    n: int
    radius: int
    rows_compared: int
    hecke_mismatches: int
    recursion_rows: int
    recursion_mismatches: int
    structure_constants: dict
    expected_constant: int

    @property
    def ok(self) -> bool:
        return (
            self.hecke_mismatches == 0
            and self.recursion_mismatches == 0
            and self.structure_constants.get(self.n - 1, self.expected_constant)
            == self.expected_constant
        )


def radial_vs_hecke(n: int, ball: TreeBall, glued: GluedGenerators | None = None) -> OperatorReport:
    """Compare chi_n with T_{sigma_{p^n}} on boundary-safe rows and check
    chi_1 chi_n = chi_{n+1} + c chi_{n-1} with c taken from the coset product
    oracle (c = p+1 for n = 1, p for n >= 2)."""
    if n > ball.radius - 1:
        raise ValueError("n must be at most radius - 1")
    glued = glued or glue_generators(ball)
    p = ball.p
    idx = _index(ball)
    safe = [v for v in ball.vertices if v.n <= ball.radius - n]
    chi_n = radial_operator(glued, n, safe)
    hecke = hecke_operator(ball, n, safe)
    mismatches = _row_mismatches(chi_n, hecke, [idx[v] for v in safe])

    rec_rows: list[CosetRep] = []
    rec_bad = 0
    consts: dict[int, int] = {}
    expected = p + 1 if n == 1 else p
    if n >= 1:
        rec_rows = [v for v in ball.vertices if v.n <= ball.radius - n - 1]
        consts = structure_constants(1, n, p)
        c = consts.get(n - 1, 0)
        chi_1 = radial_operator(glued, 1, [v for v in ball.vertices if v.n <= ball.radius - 1])
        chi_up = radial_operator(glued, n + 1, rec_rows)
        chi_down = radial_operator(glued, n - 1, rec_rows)
        lhs = (chi_1 @ chi_n).tocsr()
        rhs = (chi_up + c * chi_down).tocsr()
        rows = [idx[v] for v in rec_rows]
        P = sparse.csr_matrix(
            (np.ones(len(rows), dtype=np.int64), (rows, rows)), shape=lhs.shape
        )
        rec_bad = _row_mismatches(P @ lhs, P @ rhs, rows)
    return OperatorReport(
        p, n, ball.radius, len(safe), mismatches, len(rec_rows), rec_bad, consts, expected
    )


def export_coo_csv(op: sparse.spmatrix, ball: TreeBall, path) -> int:
    """Write the nonzero entries as CSV rows (row coset, column coset, value)."""
    coo = op.tocoo()
    verts = ball.vertices
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row_i", "row_j", "row_b", "col_i", "col_j", "col_b", "value"])
        for r, c, val in zip(coo.row, coo.col, coo.data):
            u, v = verts[r], verts[c]
            w.writerow([u.i, u.j, u.b, v.i, v.j, v.b, int(val)])
    return coo.nnz
