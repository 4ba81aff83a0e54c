import numpy as np
import pytest

from hecke_groupoid.arith import gen_T, identity, inverse, mul, sigma
from hecke_groupoid.cosets import (
    CosetRep,
    Stabilizer,
    coset_action,
    enumerate_ball,
    enumerate_sphere,
    identity_coset,
    random_gamma,
    to_coset,
)
from hecke_groupoid.groupoid import (
    apply,
    bijectivity_atlas,
    cell_index,
    cell_membership,
    compose_decomposition,
    multiplicity_census,
    verify_atlas,
    verify_composition,
)

P = 3
SIG = to_coset(sigma(P))


def test_apply_examples():
    s = CosetRep(0, 1, 2, P)
    gamma, s1 = apply(identity_coset(P), s)
    assert s1 == s and gamma == identity(P)
    assert apply(SIG, identity_coset(P)) == (identity(P), SIG)
    gamma, s1 = apply(SIG, CosetRep(0, 1, 1, P))
    assert s1 == identity_coset(P) and gamma == gen_T(P)


def test_cocycle_identity_exact():
    for g in enumerate_ball(2, P):
        for s in enumerate_ball(3, P):
            gamma, s1 = apply(g, s)
            assert gamma.n == 0
            assert mul(g.lift, s.lift) == mul(gamma, s1.lift)


def test_composition_small_examples():
    dec = compose_decomposition(identity_coset(P), SIG)
    assert dec.terms == [SIG]
    dec = compose_decomposition(SIG, SIG)
    assert len(dec) == 4
    assert dec.terms.count(identity_coset(P)) == 1
    # the identity coset sits in the cell of the representative in H itself
    j = cell_index(SIG, SIG, identity_coset(P))
    assert dec.reps[j] == identity(P)


def test_partition_valuation_one_pairs():
    ball = enumerate_ball(3, P)
    for g1 in enumerate_sphere(1, P):
        for g2 in enumerate_sphere(1, P):
            dec = compose_decomposition(g1, g2)
            assert verify_composition(dec, ball) == []
            for s in ball:
                inside = [k for k, c in enumerate(dec.cells) if cell_membership(c, s)]
                assert inside == [cell_index(g1, g2, s)]


def brute_composite(g1, g2, s):
    return coset_action(coset_action(s, g2.lift), g1.lift)


def test_composition_against_direct_evaluation():
    for g1 in enumerate_ball(2, 5):
        for g2 in enumerate_sphere(1, 5):
            dec = compose_decomposition(g1, g2)
            for s in enumerate_ball(2, 5):
                j = dec.locate(s)
                assert coset_action(s, dec.terms[j].lift) == brute_composite(g1, g2, s)


def test_decomposition_independent_of_representative():
    rng = np.random.default_rng(3)
    for g2 in enumerate_sphere(2, P):
        moved = mul(random_gamma(rng, P, 8), g2.lift)
        a = compose_decomposition(SIG, g2)
        b = compose_decomposition(SIG, moved)
        assert sorted(a.terms) == sorted(b.terms)


def test_atlas_identity_and_sigma():
    charts = bijectivity_atlas(identity_coset(P))
    assert len(charts) == 1
    assert all(charts[0](s) == s for s in enumerate_ball(3, P))
    charts = bijectivity_atlas(SIG)
    assert len(charts) == 4
    for ch in charts:
        inv = ch.inverse()
        assert inv.inverse() == ch
        for s in enumerate_ball(3, P):
            if ch.in_domain(s):
                t = ch(s)
                assert ch.in_range(t)
                assert inv(t) == s
    rep = verify_atlas(SIG, 3)
    assert rep.ok and rep.charts == 4


@pytest.mark.parametrize("p", [3, 5])
def test_atlas_valuation_one(p):
    for g in enumerate_sphere(1, p):
        assert verify_atlas(g, 3).ok


def test_census_examples():
    rep = multiplicity_census(identity_coset(P), 3)
    assert rep.ok and set(rep.image_counts.values()) == {1}
    rep = multiplicity_census(SIG, 4)
    assert rep.ok and set(rep.image_counts.values()) == {4}
    g = CosetRep(1, 1, 1, P)
    rep = multiplicity_census(g, 4)
    assert rep.expected_images == Stabilizer(g.lift).index
    assert rep.expected_preimages == Stabilizer(inverse(g.lift)).index
    assert rep.ok
