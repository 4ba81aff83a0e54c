"""Cylinder sets over coset closures at a finite congruence level.

A cylinder is a finite list of factors (g, c, H) and stands for the set
{x in F : g x in c H F for every factor}.  Since g x = gamma_1 x_1 with x_1 in
F, membership of a point is the exact test c^-1 gamma_1 in H on the cocycle.
Measures are Monte Carlo estimates through the continuous model.

The chart of the coset map Gamma g on {x : g x in Gamma_g alpha_i F} is
split along a principal congruence subgroup Gamma_1 = Gamma(p^k) inside
Gamma_g: with Gamma_g = union r_j Gamma_1 and u = r_j alpha_i, the piece
{x : g x in u Gamma_1 F} is carried bijectively onto
{x_1 : g^-1 u x_1 in (g^-1 Gamma_1 g) F}, and each further factor
(g_l, c_l, H_l) becomes (g_l g^-1 u, c_l, H_l) provided every conjugate
(g_l g^-1) t (g_l g^-1)^-1, t in Gamma_1, lies in c_l H_l c_l^-1.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .arith import ProjMat, format_matrix, identity, inverse, mul, parse_matrix
from .cosets import (
    Congruence,
    Conjugate,
    CosetRep,
    Intersection,
    Stabilizer,
    Subgroup,
    as_matrix,
    is_subgroup,
    right_transversal,
    schreier_generators,
    whole_group,
)
from .errors import ParseError, SubgroupTooCoarse
from .haar import EstimatorSettings, FrameBatch, apply_gen, mean_stderr

K_MAX = {3: 3, 5: 2}


@dataclass(frozen=True)
class Factor:
    g: ProjMat
    c: ProjMat
    H: Subgroup

    def describe(self) -> str:
        return f"[{format_matrix(self.g)}] x in [{format_matrix(self.c)}] {self.H.describe()} F"

    def constant(self) -> bool | None:
        """For g in Gamma the condition does not depend on x."""
        if self.g.n != 0:
            return None
        return self.H.contains(mul(inverse(self.c), self.g))

    def same_as(self, other: "Factor") -> bool:
        return (
            self.g == other.g
            and self.H == other.H
            and self.H.contains(mul(inverse(self.c), other.c))
        )


@dataclass(frozen=True)
class Cylinder:
    p: int
    factors: tuple[Factor, ...] = ()

    def __add__(self, other: Factor | Sequence[Factor]) -> "Cylinder":
        extra = (other,) if isinstance(other, Factor) else tuple(other)
        return Cylinder(self.p, self.factors + extra)

    def __len__(self) -> int:
        return len(self.factors)

    def describe(self) -> str:
        if not self.factors:
            return "full F, measure 1"
        return " and ".join(f.describe() for f in self.factors)

    def contains(self, pts: FrameBatch) -> np.ndarray:
        inside = np.ones(len(pts), dtype=bool)
        for f in self.factors:
            (a, b, c, d), _ = apply_gen(f.g, pts)
            # c^-1 gamma_1, with c^-1 its adjugate
            ci = inverse(f.c)
            ea, eb = ci.a * a + ci.b * c, ci.a * b + ci.b * d
            ec, ed = ci.c * a + ci.d * c, ci.c * b + ci.d * d
            inside &= _contains_array(f.H, ea, eb, ec, ed, self.p)
        return inside

    def simplify(self) -> "Cylinder | None":
        """Drop factors that hold everywhere; None if some factor never holds."""
        kept = []
        for f in self.factors:
            const = f.constant()
            if const is None:
                kept.append(f)
            elif not const:
                return None
        return Cylinder(self.p, tuple(kept))

    def same_as(self, other: "Cylinder") -> bool:
        a, b = self.simplify(), other.simplify()
        if a is None or b is None:
            return a is None and b is None
        if len(a) != len(b):
            return False
        return all(any(f.same_as(h) for h in b.factors) for f in a.factors) and all(
            any(h.same_as(f) for f in a.factors) for h in b.factors
        )


def _contains_array(H: Subgroup, a, b, c, d, p: int) -> np.ndarray:
    if isinstance(H, Stabilizer):
        return H.contains_array(a, b, c, d)
    if isinstance(H, Congruence):
        N = H.level
        am, bm, cm, dm = a % N, b % N, c % N, d % N
        return (bm == 0) & (cm == 0) & (((am == 1 % N) & (dm == 1 % N)) | ((am == N - 1) & (dm == N - 1)))
    if isinstance(H, Intersection):
        out = np.ones(np.shape(a), dtype=bool)
        for part in H.parts:
            out &= _contains_array(part, a, b, c, d, p)
        return out
    if isinstance(H, Conjugate):
        # g x adj(g) must be det(g) times an element of the base group
        g, D = H.g, H.g.p**H.g.n
        ga, gb, gc, gd = g.a * a + g.b * c, g.a * b + g.b * d, g.c * a + g.d * c, g.c * b + g.d * d
        ya, yb = ga * g.d - gb * g.c, -ga * g.b + gb * g.a
        yc, yd = gc * g.d - gd * g.c, -gc * g.b + gd * g.a
        whole = (ya % D == 0) & (yb % D == 0) & (yc % D == 0) & (yd % D == 0)
        return whole & _contains_array(H.base, ya // D, yb // D, yc // D, yd // D, p)
    from .arith import normalize

    return np.array(
        [H.contains(normalize((int(w), int(x), int(y), int(z)), p)) for w, x, y, z in zip(a, b, c, d)],
        dtype=bool,
    )


# ---------------------------------------------------------------------------
# measure

_CACHE: dict = {}


def nu_F(cyl: Cylinder, settings: EstimatorSettings | None = None) -> tuple[float, float]:
    """nu_F of the cylinder with its standard error; the empty cylinder is
    exactly 1.  Values are cached on (cylinder, samples, seed, workers)."""
    if not cyl.factors:
        return 1.0, 0.0
    st = settings or EstimatorSettings()
    key = (cyl, st.samples, st.seed, st.workers)
    if key not in _CACHE:
        _CACHE[key] = mean_stderr(cyl.contains(st.draw()))
    return _CACHE[key]


def clear_cache() -> None:
    _CACHE.clear()


# ---------------------------------------------------------------------------
# action of a chart


def chart_transversal(g: ProjMat) -> list[ProjMat]:
    """alpha_i with Gamma = union Gamma_g alpha_i."""
    return list(right_transversal(Stabilizer(g)))


def level_transversal(g: ProjMat, k: int) -> list[ProjMat]:
    return list(_level_transversal(g, k))


@lru_cache(maxsize=1024)
def _level_transversal(g: ProjMat, k: int) -> tuple[ProjMat, ...]:
    """r_j with Gamma_g = union r_j Gamma(p^k); requires Gamma(p^k) inside Gamma_g."""
    G1 = Congruence(g.p, k)
    Gg = Stabilizer(g)
    if not is_subgroup(G1, Gg):
        raise SubgroupTooCoarse(f"Gamma({g.p}^{k}) is not contained in {Gg.describe()}")
    return tuple(r for r in right_transversal(G1) if Gg.contains(r))


def _condition_holds(gens: list[ProjMat], m: ProjMat, f: Factor) -> bool:
    mi = inverse(m)
    ci = inverse(f.c)
    for t in gens:
        conj = mul(mul(m, t), mi)
        if conj.n != 0 or not f.H.contains(mul(mul(ci, conj), f.c)):
            return False
    return True


@dataclass
class ChartImage:
    g: ProjMat
    i: int
    j: int
    k: int
    u: ProjMat
    domain: Cylinder
    image: Cylinder


def act_on_cylinder(g: ProjMat | CosetRep, i: int, j: int, cyl: Cylinder, k: int) -> ChartImage:
    """Image of cyl restricted to the piece (i, j) of the chart of Gamma g.

    Raises SubgroupTooCoarse when Gamma(p^k) is not inside Gamma_g or the
    conjugation condition fails for some factor (tested on Schreier
    generators of Gamma(p^k))."""
    g = as_matrix(g)
    p = g.p
    alphas = chart_transversal(g)
    reps = level_transversal(g, k)
    u = mul(reps[j], alphas[i])
    G1 = Congruence(p, k)
    gens = schreier_generators(G1)
    ginv = inverse(g)
    out = [Factor(mul(ginv, u), identity(p), Conjugate(G1, g))]
    for f in cyl.factors:
        m = mul(f.g, ginv)
        if not _condition_holds(gens, m, f):
            raise SubgroupTooCoarse(f"level {p}^{k} too shallow for factor {f.describe()}")
        out.append(Factor(mul(m, u), f.c, f.H))
    domain = cyl + Factor(g, u, G1)
    return ChartImage(g, i, j, k, u, domain, Cylinder(p, tuple(out)))


def piece_of(g: ProjMat | CosetRep, k: int, x) -> tuple[int, int]:
    """The branch (i, j) whose domain piece contains the point x."""
    g = as_matrix(g)
    gamma, _ = apply_gen(g, x)
    tr = right_transversal(Stabilizer(g))
    i = tr.locate(gamma)
    G1 = Congruence(g.p, k)
    full = right_transversal(G1)
    target = full[full.locate(mul(gamma, inverse(tr[i])))]
    return i, level_transversal(g, k).index(target)


def find_level(g: ProjMat | CosetRep, cyl: Cylinder, k_max: int | None = None, i: int = 0,
               j: int = 0) -> ChartImage:
    """Search k upward from val(g) for a level where act_on_cylinder applies."""
    g = as_matrix(g)
    top = k_max if k_max is not None else K_MAX.get(g.p, 2)
    last = None
    for k in range(max(1, g.n), top + 1):
        try:
            return act_on_cylinder(g, i, j, cyl, k)
        except SubgroupTooCoarse as exc:
            last = exc
    raise SubgroupTooCoarse(f"no level up to {g.p}^{top} works: {last}")


def pullback(ch: ChartImage, cyl: Cylinder) -> Cylinder:
    """Pull a cylinder on the image side back through the inverse chart:
    factor (h, c, H) becomes (h u^-1 g, c, H), with the same conjugation
    condition checked."""
    G1 = Congruence(ch.g.p, ch.k)
    gens = schreier_generators(G1)
    ui = inverse(ch.u)
    out = [Factor(ch.g, ch.u, G1)]
    for f in cyl.factors:
        m = mul(f.g, ui)
        if not _condition_holds(gens, m, f):
            raise SubgroupTooCoarse(f"level too shallow to pull back {f.describe()}")
        out.append(Factor(mul(m, ch.g), f.c, f.H))
    return Cylinder(ch.g.p, tuple(out))


def refine(cyl: Cylinder, index: int, finer: Subgroup) -> list[Cylinder]:
    """Split factor ``index`` along H' inside H: c H = union c s H' over a
    left transversal s of H' in H."""
    f = cyl.factors[index]
    if not is_subgroup(finer, f.H):
        raise ValueError(f"{finer.describe()} is not inside {f.H.describe()}")
    reps = [r for r in right_transversal(finer) if f.H.contains(r)]
    out = []
    for r in reps:
        sub = Factor(f.g, mul(f.c, inverse(r)), finer)
        facs = list(cyl.factors)
        facs[index] = sub
        out.append(Cylinder(cyl.p, tuple(facs)))
    return out


@dataclass
class AdditivityReport:
    parent: float
    parent_stderr: float
    children_sum: float
    children_stderr: float
    pieces: int
    partition_violations: int

    @property
    def ok(self) -> bool:
        comb = math.hypot(self.parent_stderr, self.children_stderr)
        return self.partition_violations == 0 and abs(self.parent - self.children_sum) <= 3 * comb + 1e-12


def additivity_check(cyl: Cylinder, index: int, finer: Subgroup,
                     settings: EstimatorSettings | None = None) -> AdditivityReport:
    """Parent and children on independent streams, plus an exact per-sample
    check that the children partition the parent."""
    st = settings or EstimatorSettings()
    kids = refine(cyl, index, finer)
    pts = st.draw()
    par = cyl.contains(pts)
    hits = np.zeros(len(pts), dtype=np.int64)
    for c in kids:
        hits += c.contains(pts)
    bad = int((hits != par).sum())
    st2 = EstimatorSettings(st.samples, st.seed + 1, st.workers, st.budget)
    pts2 = st2.draw()
    tot = np.zeros(len(pts2), dtype=np.int64)
    for c in kids:
        tot += c.contains(pts2)
    a, sa = mean_stderr(par)
    b, sb = mean_stderr(tot)
    return AdditivityReport(a, sa, b, sb, len(kids), bad)


# ---------------------------------------------------------------------------
# JSON form


def subgroup_from_json(obj: dict, p: int) -> Subgroup:
    try:
        kind = obj["type"]
        if kind == "whole":
            return whole_group(p)
        if kind == "stabilizer":
            return Stabilizer(parse_matrix(obj["g"], p))
        if kind == "congruence":
            return Congruence(p, int(obj["k"]))
        if kind == "intersection":
            return Intersection(tuple(subgroup_from_json(o, p) for o in obj["parts"]))
        if kind == "conjugate":
            return Conjugate(subgroup_from_json(obj["base"], p), parse_matrix(obj["g"], p))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ParseError):
            raise
        raise ParseError(f"bad subgroup spec {obj!r}") from exc
    raise ParseError(f"unknown subgroup type {obj.get('type')!r}")


def subgroup_to_json(H: Subgroup) -> dict:
    if isinstance(H, Stabilizer):
        return {"type": "whole"} if H.g.n == 0 else {"type": "stabilizer", "g": format_matrix(H.g)}
    if isinstance(H, Congruence):
        return {"type": "congruence", "k": H.k}
    if isinstance(H, Intersection):
        return {"type": "intersection", "parts": [subgroup_to_json(h) for h in H.parts]}
    if isinstance(H, Conjugate):
        return {"type": "conjugate", "base": subgroup_to_json(H.base), "g": format_matrix(H.g)}
    raise TypeError(f"cannot serialize {H!r}")


def cylinder_from_json(text: str | dict, p: int) -> Cylinder:
    """Parse {"factors": [{"g": "a,b;c,d", "c": "...", "H": {...}}, ...]}."""
    try:
        obj = json.loads(text) if isinstance(text, str) else text
        items = obj.get("factors", []) if isinstance(obj, dict) else obj
        facs = []
        for it in items:
            g = parse_matrix(it["g"], p)
            c = parse_matrix(it.get("c", "1,0;0,1"), p)
            if c.n != 0:
                raise ParseError(f"coset representative {it['c']!r} is not in Gamma")
            facs.append(Factor(g, c, subgroup_from_json(it.get("H", {"type": "whole"}), p)))
    except json.JSONDecodeError as exc:
        raise ParseError(f"cylinder spec is not valid JSON: {exc}") from exc
    except (KeyError, TypeError, AttributeError) as exc:
        raise ParseError(f"bad cylinder spec: {exc}") from exc
    return Cylinder(p, tuple(facs))


def cylinder_to_json(cyl: Cylinder) -> dict:
    return {
        "p": cyl.p,
        "factors": [
            {"g": format_matrix(f.g), "c": format_matrix(f.c), "H": subgroup_to_json(f.H)}
            for f in cyl.factors
        ],
    }
