import numpy as np
import pytest

from hecke_groupoid.cosets import enumerate_sphere, identity_coset
from hecke_groupoid.errors import LabelingObstruction
from hecke_groupoid.groupoid import apply
from hecke_groupoid.tree import (
    build_ball,
    export_coo_csv,
    format_word,
    free_rank,
    glue_generators,
    hecke_operator,
    is_reduced,
    letters,
    no_relation_check,
    psi_labeling,
    radial_operator,
    radial_vs_hecke,
    reduced_words,
    structure_constants,
    verify_provenance,
)


def test_ball_examples():
    ball = build_ball(2, 3)
    assert len(ball.vertices) == 17
    star = build_ball(1, 3)
    assert len(star.vertices) == 5 and len(star.adjacency[star.origin]) == 4
    assert ball.is_tree() and ball.is_connected() and ball.interior_regular()
    assert ball.edge_count() == len(ball.vertices) - 1


def test_ball_neighbours_are_adjacent_valuations():
    ball = build_ball(4, 5)
    for u in ball.interior():
        vals = sorted(v.n for v in ball.adjacency[u])
        assert len(vals) == 6
        if u.n > 0:
            assert vals == [u.n - 1] + [u.n + 1] * 5


def test_labeling_and_words():
    ball = build_ball(4, 3)
    psi = psi_labeling(ball)
    assert psi(()) == identity_coset(3)
    for v in ball.vertices:
        w = psi.inverse(v)
        assert len(w) == v.n and is_reduced(w) and psi(w) == v
    assert letters(3) == [1, -1, 2, -2]
    assert sum(1 for _ in reduced_words(3, 3)) == 4 * 3**2
    assert format_word(()) == "e"


def test_labeling_obstruction_on_broken_ball():
    ball = build_ball(2, 3)
    u = enumerate_sphere(1, 3)[0]
    v = enumerate_sphere(1, 3)[1]
    ball.adjacency[u].append(v)
    ball.adjacency[v].append(u)
    with pytest.raises(LabelingObstruction):
        psi_labeling(ball)


def test_glued_generators():
    ball = build_ball(4, 3)
    psi_labeling(ball)
    glued = glue_generators(ball)
    assert sorted(glued.maps) == sorted(letters(3))
    assert glued.closed_under_inverse()
    for u in [v for v in ball.vertices if v.n <= 2]:
        for x in letters(3):
            assert glued.step(-x, glued.step(x, u)) == u
    # each edge step is realized by a coset map from the double coset of sigma
    assert verify_provenance(glued) == []
    for (x, u), (coset, _) in list(glued.provenance.items())[:30]:
        assert coset.n == 1 and apply(coset, u)[1] == glued.step(x, u)


def test_no_relations_and_cost():
    ball = build_ball(6, 3)
    psi_labeling(ball)
    verdict = no_relation_check(glue_generators(ball), 6)
    assert verdict.ok and verdict.words_checked == 1 + sum(4 * 3 ** (n - 1) for n in range(1, 7))
    assert free_rank(3) == 2 and free_rank(5) == 3


@pytest.mark.parametrize("p,radius", [(3, 5), (5, 4)])
def test_radial_equals_hecke(p, radius):
    ball = build_ball(radius, p)
    psi_labeling(ball)
    glued = glue_generators(ball)
    for n in range(radius - 1):
        assert radial_vs_hecke(n, ball, glued).ok


def test_degree_one_operator_is_adjacency():
    ball = build_ball(3, 3)
    psi_labeling(ball)
    rows = [v for v in ball.vertices if v.n <= 2]
    chi1 = radial_operator(glue_generators(ball), 1, rows).toarray()
    t1 = hecke_operator(ball, 1, rows).toarray()
    idx = {v: k for k, v in enumerate(ball.vertices)}
    adj = np.zeros_like(chi1)
    for u in rows:
        for v in ball.adjacency[u]:
            adj[idx[u], idx[v]] = 1
    assert (chi1 == adj).all() and (t1 == adj).all()
    chi0 = radial_operator(glue_generators(ball), 0, rows).toarray()
    assert all(chi0[idx[v], idx[v]] == 1 for v in rows) and chi0.sum() == len(rows)


def test_structure_constants():
    for p in (3, 5):
        assert structure_constants(1, 1, p) == {0: p + 1, 2: 1}
        assert structure_constants(1, 3, p) == {2: p, 4: 1}


def test_export_csv(tmp_path):
    ball = build_ball(3, 3)
    rows = [v for v in ball.vertices if v.n <= 1]
    op = hecke_operator(ball, 2, rows)
    path = tmp_path / "t2.csv"
    nnz = export_coo_csv(op, ball, path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("row_i") and len(lines) == nnz + 1
    assert nnz == 12 + 4 * 12
