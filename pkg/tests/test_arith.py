import pytest
from hypothesis import given, settings, strategies as st

from hecke_groupoid.arith import (
    format_matrix,
    gen_S,
    gen_T,
    identity,
    in_gamma,
    inverse,
    is_odd_prime,
    mul,
    normalize,
    parse_matrix,
    sigma,
    to_real,
    valuation,
)
from hecke_groupoid.errors import DeterminantNotPPower, ParseError, PrimeMismatch, ZeroMatrix

import numpy as np

P = 3


def test_normalize_examples():
    assert normalize([[2, 0], [0, 2]], P) == identity(P)
    assert normalize([[-3, 0], [0, -1]], P) == sigma(P)
    assert normalize([[3, 3], [0, 3]], P) == normalize([[1, 1], [0, 1]], P)
    assert normalize([[0, -1], [1, 0]], P).entries == (0, 1, -1, 0)


@pytest.mark.parametrize("m", [[[1, 0], [0, -1]], [[2, 0], [0, 1]], [[1, 0], [0, 15]]])
def test_normalize_rejects_outside_group(m):
    with pytest.raises(DeterminantNotPPower):
        normalize(m, P)


def test_zero_matrix():
    with pytest.raises(ZeroMatrix):
        normalize([[0, 0], [0, 0]], P)


def test_mul_examples():
    s = sigma(P)
    assert mul(s, inverse(s)) == identity(P)
    assert mul(s, s) == sigma(P, 2) == normalize([[9, 0], [0, 1]], P)
    assert mul(s, normalize([[1, 0], [0, 3]], P)) == identity(P)
    with pytest.raises(PrimeMismatch):
        mul(sigma(3), sigma(5))


def test_inverse_and_valuation_examples():
    assert inverse(identity(P)) == identity(P)
    assert inverse(normalize([[1, 1], [0, 3]], P)).entries == (3, -1, 0, 1)
    assert valuation(identity(P)) == 0
    assert valuation(sigma(P)) == 1
    assert valuation(normalize([[1, 2], [0, 9]], P)) == 2
    assert in_gamma(gen_T(P)) and in_gamma(gen_S(P)) and not in_gamma(sigma(P))


def test_parse_and_format():
    m = parse_matrix("3,1;0,3", P)
    assert format_matrix(m) == "3,1;0,3"
    for bad in ("3,1,0,3", "a,b;c,d", "1,2;3"):
        with pytest.raises(ParseError):
            parse_matrix(bad, P)


def test_is_odd_prime():
    assert [q for q in range(20) if is_odd_prime(q)] == [3, 5, 7, 11, 13, 17, 19]


# random elements of valuation <= 3 as products of generators
gens = st.sampled_from(["T", "Ti", "S", "s", "si"])


def word_to_matrix(word, p=P):
    table = {"T": gen_T(p), "Ti": inverse(gen_T(p)), "S": gen_S(p), "s": sigma(p), "si": inverse(sigma(p))}
    m = identity(p)
    for w in word:
        m = mul(m, table[w])
    return m


@settings(max_examples=300, deadline=None)
@given(st.lists(gens, max_size=12))
def test_inverse_involution(word):
    x = word_to_matrix(word)
    assert inverse(inverse(x)) == x
    assert mul(x, inverse(x)) == identity(P)
    assert valuation(inverse(x)) == valuation(x)


@settings(max_examples=200, deadline=None)
@given(st.lists(gens, max_size=8), st.lists(gens, max_size=8), st.lists(gens, max_size=8))
def test_associativity_and_real_model(u, v, w):
    x, y, z = word_to_matrix(u), word_to_matrix(v), word_to_matrix(w)
    assert mul(mul(x, y), z) == mul(x, mul(y, z))
    # the real det-one model is a homomorphism up to sign
    lhs, rhs = to_real(mul(x, y)), to_real(x) @ to_real(y)
    assert np.allclose(lhs, rhs, rtol=1e-9) or np.allclose(lhs, -rhs, rtol=1e-9)


@settings(max_examples=200, deadline=None)
@given(st.integers(-30, 30), st.integers(-30, 30), st.integers(-30, 30), st.integers(-30, 30),
       st.integers(1, 5))
def test_normalize_is_projective_class(a, b, c, d, k):
    try:
        m = normalize([[a, b], [c, d]], P)
    except (ZeroMatrix, DeterminantNotPPower):
        return
    assert normalize([[k * a, k * b], [k * c, k * d]], P) == m
    assert normalize([[-k * a, -k * b], [-k * c, -k * d]], P) == m
    assert m.det == P**m.n
