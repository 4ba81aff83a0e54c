import json
import math

import numpy as np
import pytest

from hecke_groupoid.arith import gen_S, gen_T, identity, inverse, mul, normalize, sigma
from hecke_groupoid.cosets import Congruence, Conjugate, Intersection, Stabilizer, random_gamma, whole_group
from hecke_groupoid.errors import ParseError, SubgroupTooCoarse
from hecke_groupoid.haar import EstimatorSettings, FrameBatch, apply_gen, sample_F
from hecke_groupoid.profinite import (
    Cylinder,
    Factor,
    _contains_array,
    act_on_cylinder,
    additivity_check,
    chart_transversal,
    cylinder_from_json,
    cylinder_to_json,
    level_transversal,
    nu_F,
    piece_of,
    pullback,
    refine,
)

P = 3
ST = EstimatorSettings(20_000, 17, 4)


def test_empty_and_constant_cylinders():
    assert nu_F(Cylinder(P)) == (1.0, 0.0)
    T = gen_T(P)
    inside = Cylinder(P, (Factor(T, T, Congruence(P, 1)),))
    outside = Cylinder(P, (Factor(T, identity(P), Congruence(P, 1)),))
    assert nu_F(inside, ST) == (1.0, 0.0)
    assert nu_F(outside, ST) == (0.0, 0.0)
    assert inside.simplify() == Cylinder(P) and outside.simplify() is None


def test_cosets_of_level_subgroup_partition_F():
    G1 = Congruence(P, 1)
    pts = ST.draw()
    total = np.zeros(len(pts), dtype=int)
    for c in G1.transversal:
        total += Cylinder(P, (Factor(sigma(P), c, G1),)).contains(pts)
    assert (total == 1).all()


@pytest.mark.parametrize("H", [
    Conjugate(Congruence(3, 2), sigma(3)),
    Conjugate(Stabilizer(sigma(3)), normalize([[1, 2], [0, 9]], 3)),
    Intersection((Congruence(3, 1), Stabilizer(inverse(sigma(3))))),
])
def test_vectorized_membership_matches_scalar(H):
    rng = np.random.default_rng(5)
    gs = [random_gamma(rng, 3, 12) for _ in range(1500)] + list(Congruence(3, 1).transversal)
    arr = np.array([g.entries for g in gs], dtype=np.int64).T
    fast = _contains_array(H, *arr, 3)
    slow = np.array([H.contains(g) for g in gs])
    assert (fast == slow).all() and slow.any()


def test_transversals():
    g = sigma(P)
    assert len(chart_transversal(g)) == P + 1
    reps = level_transversal(g, 1)
    assert len(reps) * Stabilizer(g).index == Congruence(P, 1).index
    with pytest.raises(SubgroupTooCoarse):
        level_transversal(sigma(P, 2), 1)


def test_chart_pieces_partition_F():
    g = normalize([[1, 1], [0, 3]], P)
    pts = sample_F(np.random.default_rng(0), 3000)
    hits = np.zeros(len(pts), dtype=int)
    for i in range(len(chart_transversal(g))):
        for j in range(len(level_transversal(g, 1))):
            hits += act_on_cylinder(g, i, j, Cylinder(P), 1).domain.contains(pts)
    assert (hits == 1).all()


def test_point_lands_in_image():
    rng = np.random.default_rng(1)
    g = sigma(P)
    tail = Cylinder(P, (Factor(sigma(P, 2), identity(P), Congruence(P, 1)),))
    pts = sample_F(rng, 300)
    moved = 0
    for k in range(len(pts)):
        x = pts[k]
        i, j = piece_of(g, 2, x)
        ch = act_on_cylinder(g, i, j, tail, 2)
        _, x1 = apply_gen(g, x)
        inside = ch.domain.contains(FrameBatch.of([x]))[0]
        assert inside == ch.image.contains(FrameBatch.of([x1]))[0]
        moved += 1
    assert moved == len(pts)


def test_coarse_level_raises():
    tail = Cylinder(P, (Factor(sigma(P, 2), identity(P), Congruence(P, 2)),))
    with pytest.raises(SubgroupTooCoarse):
        act_on_cylinder(sigma(P), 0, 0, tail, 1)


def test_measure_preserved_and_round_trip():
    g = sigma(P)
    ch = act_on_cylinder(g, 1, 0, Cylinder(P), 1)
    a, sa = nu_F(ch.domain, ST)
    b, sb = nu_F(ch.image, EstimatorSettings(20_000, 18, 4))
    assert a > 0 and abs(a - b) <= 3 * math.hypot(sa, sb)
    assert pullback(ch, ch.image).same_as(ch.domain)
    tail = Cylinder(P, (Factor(sigma(P, 2), gen_S(P), Congruence(P, 1)),))
    ch = act_on_cylinder(g, 2, 1, tail, 2)
    assert pullback(ch, ch.image).same_as(ch.domain)


def test_refinement_additivity():
    cyl = Cylinder(P, (Factor(sigma(P), identity(P), whole_group(P)),))
    kids = refine(cyl, 0, Congruence(P, 1))
    assert len(kids) == 12
    rep = additivity_check(cyl, 0, Congruence(P, 1), ST)
    assert rep.ok and rep.partition_violations == 0
    with pytest.raises(ValueError):
        refine(Cylinder(P, (Factor(sigma(P), identity(P), Congruence(P, 1)),)), 0, Stabilizer(sigma(P)))


def test_json_round_trip():
    cyl = Cylinder(P, (
        Factor(sigma(P), gen_S(P), Congruence(P, 2)),
        Factor(sigma(P, 2), identity(P), Intersection((Stabilizer(sigma(P)), Congruence(P, 1)))),
        Factor(gen_T(P), identity(P), Conjugate(Congruence(P, 1), sigma(P)))),
    )
    text = json.dumps(cylinder_to_json(cyl))
    assert cylinder_from_json(text, P) == cyl
    assert cylinder_from_json('{"factors": []}', P) == Cylinder(P)


@pytest.mark.parametrize("text", [
    "{not json", '{"factors": [{"c": "1,0;0,1"}]}', '{"factors": [{"g": "3,0;0,1", "H": {"type": "blob"}}]}',
    '{"factors": [{"g": "3,0;0,1", "c": "3,0;0,1"}]}',
])
def test_json_errors(text):
    with pytest.raises(ParseError):
        cylinder_from_json(text, P)
