import numpy as np
import pytest
from scipy.optimize import brentq

from intermap.map_core import (
    DomainError,
    ParamBox,
    ParamPoint,
    SingularityError,
    X_field,
    X_field_derivs,
    X_param_deriv,
    X_param_deriv_prime,
    branch_deriv,
    branch_eval,
    inverse_branch,
    inverse_branch_deriv,
    inverse_branch_third_deriv,
    ladder_envelopes,
    map_deriv,
    map_eval,
    map_second_deriv,
    preimage_ladder,
)

P = ParamPoint(0.5, 1.5)
P1 = ParamPoint(0.5, 1.0)


def test_param_validation():
    with pytest.raises(DomainError):
        ParamPoint(0.0, 1.2)
    with pytest.raises(DomainError):
        ParamPoint(0.5, 0.9)
    with pytest.raises(DomainError):
        ParamPoint(0.9, 1.2)  # alpha*beta >= 1
    assert ParamPoint(0.2, 1.2) <= ParamPoint(0.5, 1.5)
    with pytest.raises(DomainError):
        ParamBox(0.5, 0.9, 1.2)
    box = ParamBox(0.2, 0.5, 1.5)
    assert box.contains(ParamPoint(0.3, 1.2))
    assert not box.contains(ParamPoint(0.1, 1.2))
    assert box.upper == ParamPoint(0.5, 1.5)


def test_map_fixed_points_and_continuity():
    assert map_eval(P, 0.0) == 0.0
    assert map_eval(P, 1.0) == 1.0
    # left branch limit at 1/2 is 1, right branch value at 1/2 is 0
    assert branch_eval(P, 1, 0.5) == pytest.approx(1.0, abs=1e-15)
    assert map_eval(P, 0.5) == 0.0
    # neutral fixed point: T'(0) = 1
    assert map_deriv(P, 0.0) == pytest.approx(1.0)
    # critical point for beta > 1
    assert map_deriv(P, 0.5) == 0.0
    # no critical point for beta = 1: right branch is linear with slope 2
    assert map_deriv(P1, 0.75) == pytest.approx(2.0)


def test_branch_derivs_match_fd():
    ys = np.linspace(0.05, 0.45, 7)
    h = 1e-6
    for i, pts in ((1, ys), (2, ys + 0.5)):
        f = lambda t: branch_eval(P, i, t)
        fd1 = (f(pts + h) - f(pts - h)) / (2 * h)
        assert branch_deriv(P, i, pts, 1) == pytest.approx(fd1, rel=1e-8)
        fd2 = (f(pts + h) - 2 * f(pts) + f(pts - h)) / h ** 2
        assert branch_deriv(P, i, pts, 2) == pytest.approx(fd2, rel=1e-3)


def test_second_deriv_singularity_guard():
    with pytest.raises(SingularityError):
        map_second_deriv(P, 0.5)
    # beta = 2 is fine at the joint
    map_second_deriv(ParamPoint(0.4, 2.0), 0.5)


def test_left_inverse_against_bisection_oracle():
    a = P.alpha
    c = 2.0 ** a
    for x in (1e-12, 1e-6, 1e-3, 0.11, 0.5, 0.77, 1.0):
        # bracket [x/2, x] keeps brentq's absolute xtol meaningful at tiny x
        oracle = brentq(lambda y: y * (1 + c * y ** a) - x, x / 2, x,
                        xtol=x * 1e-15, rtol=8.9e-16)
        got = inverse_branch(P, 1, x)
        assert got == pytest.approx(oracle, rel=1e-12, abs=1e-300)
        # round trip
        assert branch_eval(P, 1, got) == pytest.approx(x, rel=1e-12, abs=1e-15)


def test_right_inverse_closed_form():
    xs = np.linspace(0.0, 1.0, 11)
    g = inverse_branch(P, 2, xs)
    assert np.allclose(g, 0.5 * (xs ** (1 / P.beta) + 1.0))
    assert branch_eval(P, 2, g[3]) == pytest.approx(xs[3], rel=1e-12)


def test_inverse_derivs_match_fd():
    xs = np.linspace(0.1, 0.9, 9)
    h = 1e-6
    for i in (1, 2):
        gp, gpp = inverse_branch_deriv(P, i, xs)
        fd1 = (inverse_branch(P, i, xs + h) - inverse_branch(P, i, xs - h)) / (2 * h)
        assert gp == pytest.approx(fd1, rel=1e-7)
        h2 = 1e-5  # wider step: second differences lose ~6 digits to cancellation
        fd2 = (inverse_branch(P, i, xs + h2) - 2 * inverse_branch(P, i, xs)
               + inverse_branch(P, i, xs - h2)) / h2 ** 2
        assert gpp == pytest.approx(fd2, rel=1e-3, abs=1e-6)
        gp_p = inverse_branch_deriv(P, i, xs + h)[0]
        gp_m = inverse_branch_deriv(P, i, xs - h)[0]
        fd3 = (inverse_branch_deriv(P, i, xs + h)[1]
               - inverse_branch_deriv(P, i, xs - h)[1]) / (2 * h)
        assert inverse_branch_third_deriv(P, i, xs) == pytest.approx(fd3, rel=1e-5)
        del gp_p, gp_m


def test_X2_exact_formula():
    xs = np.array([1e-8, 1e-3, 0.2, 0.7, 1.0])
    expect = np.where(xs > 0, xs * np.log(xs), 0.0) / P.beta
    assert X_field(P, 2, xs) == pytest.approx(expect, rel=1e-14)
    assert X_field(P, 2, 0.0) == 0.0
    xp, xpp = X_field_derivs(P, 2, 0.3)
    assert xp == pytest.approx((np.log(0.3) + 1) / P.beta)
    assert xpp == pytest.approx(1 / (P.beta * 0.3))


def test_X_fields_match_parameter_fd():
    """X_i(x) = d/dparam f_i(g_i(x)) with the inverse frozen: equivalently,
    the parameter velocity of the branch at the preimage."""
    xs = np.linspace(0.05, 0.95, 10)
    d = 1e-6
    # X_1: velocity of branch 1 in alpha at y = g_1(x)
    y = inverse_branch(P, 1, xs)
    va = (branch_eval(ParamPoint(P.alpha + d, P.beta), 1, y)
          - branch_eval(ParamPoint(P.alpha - d, P.beta), 1, y)) / (2 * d)
    assert X_field(P, 1, xs) == pytest.approx(va, rel=1e-7)
    # X_2: velocity of branch 2 in beta at y = g_2(x)
    y2 = inverse_branch(P, 2, xs)
    vb = (branch_eval(ParamPoint(P.alpha, P.beta + d), 2, y2)
          - branch_eval(ParamPoint(P.alpha, P.beta - d), 2, y2)) / (2 * d)
    assert X_field(P, 2, xs) == pytest.approx(vb, rel=1e-7)


def test_X_derivs_match_spatial_fd():
    xs = np.linspace(0.1, 0.9, 9)
    h = 1e-6
    for i in (1, 2):
        xp, xpp = X_field_derivs(P, i, xs)
        fd1 = (X_field(P, i, xs + h) - X_field(P, i, xs - h)) / (2 * h)
        assert xp == pytest.approx(fd1, rel=1e-7)
        fd2 = (X_field(P, i, xs + h) - 2 * X_field(P, i, xs)
               + X_field(P, i, xs - h)) / h ** 2
        assert xpp == pytest.approx(fd2, rel=1e-3, abs=1e-7)


def test_X_param_deriv_matches_parameter_fd():
    xs = np.linspace(0.1, 0.9, 9)
    d = 1e-6
    fd1 = (X_field(ParamPoint(P.alpha + d, P.beta), 1, xs)
           - X_field(ParamPoint(P.alpha - d, P.beta), 1, xs)) / (2 * d)
    assert X_param_deriv(P, 1, xs) == pytest.approx(fd1, rel=1e-6)
    fd2 = (X_field(ParamPoint(P.alpha, P.beta + d), 2, xs)
           - X_field(ParamPoint(P.alpha, P.beta - d), 2, xs)) / (2 * d)
    assert X_param_deriv(P, 2, xs) == pytest.approx(fd2, rel=1e-6)
    # spatial derivative of the mixed partial
    h = 1e-6
    for i in (1, 2):
        fd = (X_param_deriv(P, i, xs + h) - X_param_deriv(P, i, xs - h)) / (2 * h)
        assert X_param_deriv_prime(P, i, xs) == pytest.approx(fd, rel=1e-5)


def test_ladder_values_and_relation():
    lad = preimage_ladder(P, 50)
    assert lad.b[0] == 0.5
    # b_1 from an independent bisection
    a, c = P.alpha, 2.0 ** P.alpha
    oracle = brentq(lambda y: y * (1 + c * y ** a) - 0.5, 0.0, 0.5, xtol=1e-16)
    assert lad.b[1] == pytest.approx(oracle, rel=1e-13)
    # right ladder defect relation
    assert lad.bhat_defect[1:] == pytest.approx(0.5 * lad.b[:-1] ** (1 / P.beta))
    assert lad.bhat[0] == 1.0
    assert lad.ok
    lo, hi, bl, bh = ladder_envelopes(P, 50)
    assert np.all(lo[1:] <= lad.b[1:]) and np.all(lad.b[1:] <= hi[1:])


def test_ladder_monotone_decay():
    lad = preimage_ladder(P1, 200)
    assert np.all(np.diff(lad.b) < 0)
    assert np.all(np.diff(lad.bhat_defect[1:]) < 0)
    # asymptotic scale: b_n ~ n**(-1/alpha)
    ratio = lad.b[200] / lad.b[100]
    assert ratio == pytest.approx(0.5 ** (1 / P1.alpha), rel=0.1)


def test_domain_guard():
    with pytest.raises(DomainError):
        map_eval(P, 1.5)
    with pytest.raises(DomainError):
        map_eval(P, -0.1)
    # round-off slack is tolerated
    assert map_eval(P, 1.0 + 1e-14) == 1.0
