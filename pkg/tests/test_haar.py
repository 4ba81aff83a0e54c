import math
from math import gcd

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from hecke_groupoid.arith import gen_T, identity, inverse, mul, normalize, sigma, to_real
from hecke_groupoid.cosets import enumerate_sphere, to_coset
from hecke_groupoid.errors import EstimatorBudgetExceeded
from hecke_groupoid.haar import (
    ACCEPT_RATE,
    EstimatorSettings,
    FrameBatch,
    FramePoint,
    alpha_kernel,
    apply_gen,
    chi_tilde,
    cross_model_check,
    gram_matrix,
    hecke_pair_check,
    in_F,
    mass_F,
    nu_overlap,
    reduce,
    reduce_image,
    sample_F,
)

P = 3


def moebius(m, z):
    a, b, c, d = m
    return (a * z + b) / (c * z + d)


def test_reduce_examples():
    g, pt = reduce(FramePoint(5.0, 1.0))
    assert g == (1, -5, 0, 1) and abs(pt.z - 1j) < 1e-12
    g, pt = reduce(FramePoint(0.0, 0.1))
    assert g == (0, 1, -1, 0) and abs(pt.z - 10j) < 1e-9
    g, pt = reduce(FramePoint(0.1, 2.0, 1.0))
    assert g == (1, 0, 0, 1) and pt == FramePoint(0.1, 2.0, 1.0)


def test_fiber_angle_transforms():
    # S at z = iy rotates the frame by -2 arg(cz + d) = -pi
    _, pt = reduce(FramePoint(0.0, 0.5, 0.25))
    assert math.isclose(pt.theta, (0.25 - 2 * math.atan2(0.5, 0.0)) % (2 * math.pi))


@settings(max_examples=200, deadline=None)
@given(st.floats(-20, 20), st.floats(1e-3, 10))
def test_reduce_lands_in_F_with_exact_gamma(x, y):
    g, pt = reduce(FramePoint(x, y))
    a, b, c, d = g
    assert a * d - b * c == 1
    assert pt.is_reduced()
    w = moebius(g, complex(x, y))
    assert abs(w - pt.z) <= 1e-7 * max(1.0, abs(w))


def test_boundary_points_escalate():
    eps = 1e-13
    pts = FrameBatch(
        np.array([0.5 - eps, 0.3, -0.5 + eps]),
        np.array([2.0, math.sqrt(1 - 0.09) + eps, 1.5]),
        np.zeros(3),
    )
    red = reduce_image((3, 0, 0, 1), pts)
    assert red.escalated >= 1
    assert in_F(red.points.x, red.points.y).all()


def test_sampler_in_F_and_acceptance():
    pts = sample_F(np.random.default_rng(0), 50_000)
    assert in_F(pts.x, pts.y).all()
    assert ((pts.theta >= 0) & (pts.theta < 2 * math.pi)).all()
    assert math.isclose(ACCEPT_RATE, math.pi * math.sqrt(3) / 6)
    assert math.isclose(mass_F(), math.pi / 3)


def test_sampler_quadrature_oracle():
    pts = EstimatorSettings(200_000, 7, 4).draw()
    # E[1/y]; the mean of y itself diverges under dx dy / y^2
    inner = lambda x: 1.0 / (2.0 * (1.0 - x * x))
    want, _ = integrate.quad(inner, -0.5, 0.5)
    want /= mass_F()
    v = 1.0 / pts.y
    se = v.std(ddof=1) / math.sqrt(v.size)
    assert abs(v.mean() - want) <= 3 * se
    # mass of {y > 2}
    want2, _ = integrate.dblquad(lambda y, x: y**-2, -0.5, 0.5, 2.0, np.inf)
    want2 /= mass_F()
    assert math.isclose(want2, 3 / (2 * math.pi), rel_tol=1e-8)
    hit = pts.y > 2
    assert abs(hit.mean() - want2) <= 3 * hit.std(ddof=1) / math.sqrt(hit.size)


def test_streams_are_deterministic():
    a = EstimatorSettings(1000, 5, 3).draw()
    b = EstimatorSettings(1000, 5, 3).draw()
    c = EstimatorSettings(1000, 6, 3).draw()
    assert np.array_equal(a.x, b.x) and not np.array_equal(a.x, c.x)
    with pytest.raises(EstimatorBudgetExceeded):
        EstimatorSettings(10, 1, 1, budget=5).draw()


def test_apply_gen_matches_symbolic_cocycle():
    pts = sample_F(np.random.default_rng(2), 2000)
    for g in enumerate_sphere(2, P):
        (a, b, c, d), x1 = apply_gen(g, pts)
        assert in_F(x1.x, x1.y).all()
        gz = moebius(to_real(g.lift).ravel(), pts.x + 1j * pts.y)
        w = moebius((a, b, c, d), x1.x + 1j * x1.y)
        assert np.allclose(gz, w, rtol=1e-8, atol=1e-8)
    gamma, x1 = apply_gen(identity(P), pts[0])
    assert gamma == identity(P) and x1 == pts[0]


def test_nu_overlap_examples():
    assert nu_overlap(identity(P), samples=5000, seed=1) == (1.0, 0.0)
    assert nu_overlap(gen_T(P), samples=5000, seed=1) == (0.0, 0.0)
    est, se = nu_overlap(to_real(sigma(P)), samples=20_000, seed=1)
    assert 0 < est < 1 and se > 0


def gamma_box(M):
    """PSL2(Z) elements with entries bounded by M, one sign per class."""
    out = []
    for a in range(-M, M + 1):
        for c in range(-M, M + 1):
            if gcd(a, c) != 1 or a < 0 or (a == 0 and c < 0):
                continue
            for b in range(-M, M + 1):
                # a d - b c = 1
                if a != 0:
                    if (1 + b * c) % a == 0 and abs((1 + b * c) // a) <= M:
                        out.append((a, b, c, (1 + b * c) // a))
                elif b * c == -1:
                    out.extend((a, b, c, d) for d in range(-M, M + 1))
    return out


def test_chi_tilde_brute_force_oracle():
    box = np.array(gamma_box(25), dtype=float).T
    pts = sample_F(np.random.default_rng(11), 60)
    pts = FrameBatch(pts.x, np.minimum(pts.y, 3.0), pts.theta)
    for s1, s2 in [(identity(P), sigma(P)), (sigma(P), sigma(P)),
                   (normalize([[1, 1], [0, 3]], P), sigma(P, 2))]:
        counts, _ = chi_tilde(s2, pts, pre=s1)
        pre = to_real(s1).ravel()
        post = to_real(inverse(s2)).ravel()
        for k in range(len(pts)):
            z = moebius(pre, complex(pts.x[k], pts.y[k]))
            a, b, c, d = box
            w = (a * z + b) / (c * z + d)
            w = moebius(post, w)
            assert in_F(w.real, w.imag).sum() == counts[k]


def test_chi_tilde_identity_coset_is_one():
    pts = sample_F(np.random.default_rng(4), 5000)
    counts, dropped = chi_tilde(identity(P), pts)
    assert (counts == 1).all() and (dropped == 0).all()


def test_alpha_examples():
    st_ = EstimatorSettings(20_000, 3, 4)
    rep = alpha_kernel(identity(P), sigma(P, 2), settings=st_)
    assert rep.within(1.0)
    rep = alpha_kernel(gen_T(P), identity(P), settings=EstimatorSettings(5000, 3, 4))
    assert rep.estimate == 1.0
    rep = alpha_kernel(sigma(P), sigma(P), settings=st_)
    assert rep.estimate >= 1 and rep.min_count >= 1
    assert set(rep.to_json()) >= {"estimate", "stderr", "samples", "truncation", "seed", "tail_indicator"}


def test_truncation_only_removes_terms():
    st_ = EstimatorSettings(5000, 9, 1)
    pts = st_.draw()
    full, d0 = chi_tilde(sigma(P), pts, pre=sigma(P))
    cut, d1 = chi_tilde(sigma(P), pts, pre=sigma(P), truncation=3.0)
    assert (cut <= full).all() and (d0 == 0).all()
    assert ((full - cut) == d1).all()


def test_hecke_pair_examples():
    st_ = EstimatorSettings(20_000, 5, 4)
    chk = hecke_pair_check(sigma(P), identity(P), identity(P), st_)
    assert chk.terms == P + 1
    assert abs(chk.route_a - (P + 1)) <= 3 * chk.stderr_a + 1e-12
    assert chk.ok
    chk = hecke_pair_check(gen_T(P), sigma(P), sigma(P), st_)
    assert chk.ok and chk.terms == 1


def test_small_gram_is_symmetric_and_positive():
    cosets = [identity(P), sigma(P)]
    rep = gram_matrix(cosets, EstimatorSettings(20_000, 8, 4))
    assert rep.matrix[0, 0] == 1.0
    assert rep.symmetric and rep.positive


def test_cross_model_small():
    rep = cross_model_check(sigma(P), to_coset(normalize([[1, 2], [0, 3]], P)).lift, samples=20_000)
    assert rep.ok
    assert math.isclose(sum(rep.cell_frequencies), 1.0)
