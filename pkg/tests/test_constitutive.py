"""Material-law machinery: truncation, enthalpy inversion, split, exponents.

Expected values tagged as derived were computed with independent oracles
(closed forms or scipy.integrate.quad) and frozen here; the oracles are
re-run next to the frozen numbers where they are cheap.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from thermodamage.constitutive import (
    ConstitutiveError,
    EnthalpyModel,
    growth_ratio_bound,
    h2_bootstrap_iterations,
    k_hat_M_bound_constant,
    make_function,
    split_convex_concave,
    theta_ratio_bound,
    truncate,
    validate_exponents,
)


# ---------------------------------------------------------------------------
# model fixtures
# ---------------------------------------------------------------------------

def cube_model(level=math.inf):
    """c(theta) = 3 theta^2, so c_hat(theta) = theta^3 and Theta(w) = w^{1/3}."""
    c = make_function("affine_power", base=0.0, coef=3.0, power=2.0)
    k = make_function("poly", coeffs=[1.0, 0.0, 1.0])  # K(w) = w^2 + 1
    return EnthalpyModel.from_heat_capacity(c, k, truncation_level=level, theta_table_max=20.0)


def lipschitz_model(level=math.inf):
    """c(theta) = 1 + 3 theta^2: strictly positive, so Theta is Lipschitz."""
    c = make_function("poly", coeffs=[1.0, 0.0, 3.0])
    k = make_function("poly", coeffs=[1.0, 0.0, 1.0])
    return EnthalpyModel.from_heat_capacity(c, k, truncation_level=level, theta_table_max=20.0)


# ---------------------------------------------------------------------------
# truncation
# ---------------------------------------------------------------------------

def test_truncate_clamps_both_sides():
    assert truncate(7.0, 5.0) == 5.0
    assert truncate(3.0, 5.0) == 3.0
    assert truncate(-8.0, 5.0) == -5.0


def test_truncate_idempotent_and_vectorized():
    x = np.linspace(-10, 10, 101)
    once = truncate(x, 4.0)
    assert np.array_equal(truncate(once, 4.0), once)
    assert np.all(np.abs(once) <= 4.0)


def test_truncate_rejects_bad_input():
    with pytest.raises(ConstitutiveError):
        truncate(float("nan"), 5.0)
    with pytest.raises(ConstitutiveError):
        truncate(1.0, 0.0)


@given(st.floats(-1e6, 1e6), st.floats(1e-3, 1e6))
def test_truncate_band_property(x, m):
    y = truncate(x, m)
    assert -m <= y <= m
    if abs(x) <= m:
        assert y == x


# ---------------------------------------------------------------------------
# enthalpy inversion and truncated maps
# ---------------------------------------------------------------------------

def test_theta_inverts_cubic_primitive():
    model = cube_model(level=1000.0)
    # derived by Newton inversion of c_hat(theta) = theta^3 against w = 8
    assert model.theta_M(8.0) == pytest.approx(2.0, abs=1e-10)


def test_theta_vanishes_on_nonpositive_w():
    model = cube_model()
    assert model.theta_M(-4.0) == 0.0
    assert model.theta(0.0) == 0.0


def test_theta_truncation_engages():
    model = cube_model(level=1.0)
    # Theta(T_1(8)) = Theta(1) = 1 by the closed form
    assert model.theta_M(8.0) == pytest.approx(1.0, abs=1e-12)


def test_theta_roundtrip_on_sampled_temperatures():
    model = lipschitz_model()
    thetas = np.linspace(0.0, 12.0, 57)
    w = model.c_hat(thetas)
    back = model.theta(w)
    assert np.max(np.abs(back - thetas)) < 1e-9


def test_theta_monotone_and_lipschitz():
    model = lipschitz_model()
    w = np.sort(np.concatenate([np.linspace(-2, 30, 301), [0.0]]))
    th = model.theta(w)
    assert np.all(np.diff(th) >= -1e-14)
    lip = model.lipschitz_estimate()
    assert lip <= 1.0 + 1e-9  # c >= 1 makes Theta 1-Lipschitz
    rng = np.random.default_rng(7)
    w1 = rng.uniform(-1, 25, 500)
    w2 = rng.uniform(-1, 25, 500)
    lhs = np.abs(model.theta(w1) - model.theta(w2))
    assert np.all(lhs <= (lip + 1e-9) * np.abs(w1 - w2) + 1e-12)


def test_truncation_compatibility_identities():
    model = lipschitz_model(level=3.0)
    w = np.linspace(-5, 9, 401)
    assert np.array_equal(model.theta_M(w), model.theta(truncate(w, 3.0)))
    assert np.array_equal(model.k_M(w), model.k_of_w(truncate(w, 3.0)))


def test_k_M_values():
    model = cube_model(level=10.0)
    assert model.k_M(2.0) == pytest.approx(5.0)
    assert model.k_M(0.0) == pytest.approx(1.0)
    model1 = cube_model(level=1.0)
    assert model1.k_M(2.0) == pytest.approx(2.0)


def test_k_hat_M_matches_quadrature_oracle():
    model = cube_model(level=1.0)
    oracle, err = quad(lambda w: w**2 + 1.0, 0.0, 0.5)
    assert err < 1e-12
    assert oracle == pytest.approx(0.5**3 / 3 + 0.5, abs=1e-12)
    assert model.k_hat_M(0.5) == pytest.approx(oracle, abs=1e-6)
    assert model.k_hat_M(0.5) == pytest.approx(0.5416666666666666, abs=1e-6)


def test_k_hat_M_piecewise_identity_and_continuity():
    model = cube_model(level=1.0)
    # beyond the truncation height the primitive grows with unit slope
    assert model.k_hat_M(2.0) == pytest.approx(7.0 / 3.0, rel=1e-12)
    assert model.k_hat_M(0.0) == 0.0
    eps = 1e-9
    below = model.k_hat_M(1.0 - eps)
    above = model.k_hat_M(1.0 + eps)
    assert abs(above - below) < 1e-7
    x = np.linspace(0.0, 4.0, 801)
    vals = model.k_hat_M(x)
    assert np.all(np.diff(vals) >= -1e-14)


def test_k_hat_M_rejects_negative_argument():
    with pytest.raises(ConstitutiveError):
        cube_model(level=2.0).k_hat_M(-0.5)


def test_k_hat_M_growth_bound():
    q0 = 1.0
    c2 = 1.0  # K(w) = w^2 + 1 <= c2 (w^{2 q0} + 1) with equality
    const = k_hat_M_bound_constant(c2, q0)
    model = cube_model(level=3.0)
    x = np.linspace(0.0, 50.0, 2001)
    lhs = model.k_hat_M(x)
    rhs = const * (truncate(x, 3.0) ** (2 * q0 + 1) + 1.0) + x
    assert np.all(lhs <= rhs + 1e-10)


def test_theta_ratio_bound_for_cubic_instance():
    # Theta(y) = y^{1/3}: sup y^{1/3} / (y+1)^{1/3} -> 1 as y -> inf
    model = cube_model(level=1e6)
    assert theta_ratio_bound(model, alpha=1.0 / 3.0) == pytest.approx(1.0, abs=1e-3)


def test_growth_ratio_bound_matches_maximization_oracle():
    # oracle: maximize (y^{1/3}+1)/(y+1)^{1/3}; calculus gives max at y = 1
    from scipy.optimize import minimize_scalar

    res = minimize_scalar(
        lambda y: -(y ** (1 / 3) + 1.0) / (y + 1.0) ** (1 / 3), bounds=(0.0, 50.0), method="bounded"
    )
    oracle = -res.fun
    assert oracle == pytest.approx(2.0 ** (2.0 / 3.0), abs=1e-7)
    got = growth_ratio_bound(1.0, sigma=3.0, alpha=1.0 / 3.0)
    assert got == pytest.approx(oracle, rel=1e-6)
    assert got <= 2.0  # the crude envelope constant


def test_zero_coupling_model_is_admissible():
    k = make_function("constant", value=1.0)
    model = EnthalpyModel.zero_coupling(k)
    w = np.linspace(-3, 40, 97)
    assert np.all(model.theta_M(w) == 0.0)
    assert model.lipschitz_estimate() == 0.0


# ---------------------------------------------------------------------------
# convex-concave split
# ---------------------------------------------------------------------------

def test_split_convex_modulus_is_pure_b1():
    b = make_function("poly", coeffs=[0.5, 0.0, 1.0])  # eta + x^2, already convex
    sp = split_convex_concave(b)
    r = np.linspace(0.0, 1.0, 101)
    assert np.max(np.abs(sp.b1(r) - b(r))) < 1e-12
    assert np.max(np.abs(sp.b2(r))) < 1e-13


def test_split_one_plus_sin_closed_form():
    # b'' = -sin <= 0 on [0,1]: b1(r) = 1 + r and b2(r) = sin(r) - r
    b = make_function("sin", offset=1.0, amp=1.0, freq=1.0)
    sp = split_convex_concave(b)
    assert sp.b1(1.0) == pytest.approx(2.0, abs=1e-10)
    assert sp.b2(1.0) == pytest.approx(math.sin(1.0) - 1.0, abs=1e-10)
    assert sp.b2(1.0) == pytest.approx(-0.15852901519210349, abs=1e-9)


def test_split_nested_quadrature_oracle():
    # independent slow oracle with scipy.integrate.quad, sign-changing b''
    b = make_function("sin_mix", a0=0.5, a2=1.0, amp=0.3, freq=3.0)
    inner = lambda s: quad(lambda m: max(-0.3 * 9.0 * math.sin(3.0 * m) + 2.0, 0.0), 0.0, s)[0]
    b1_oracle = b(np.asarray(0.0)) + quad(lambda s: b.deriv(np.asarray(0.0)) + inner(s), 0.0, 0.7)[0]
    sp = split_convex_concave(b)
    assert sp.b1(0.7) == pytest.approx(float(b1_oracle), abs=1e-7)


@pytest.mark.parametrize(
    "family, params",
    [
        ("poly", {"coeffs": [0.5, 0.0, 1.0]}),
        ("sin", {"offset": 1.0, "amp": 1.0, "freq": 1.0}),
        ("sin_mix", {"a0": 0.5, "a2": 1.0, "amp": 0.3, "freq": 3.0}),
    ],
)
def test_split_identity_and_curvature_signs(family, params):
    b = make_function(family, **params)
    sp = split_convex_concave(b)
    r = np.linspace(0.0, 1.0, 1001)
    scale = np.max(np.abs(b(r))) + 1.0
    assert np.max(np.abs(sp.b1(r) + sp.b2(r) - b(r))) < 1e-12 * scale
    second = lambda v: v[:-2] - 2 * v[1:-1] + v[2:]
    # sign conditions up to the interpolation error of the tabulated split
    assert np.min(second(sp.b1(r))) >= -1e-13
    assert np.max(second(sp.b2(r))) <= 1e-13


def test_split_derivatives_consistent_with_values():
    b = make_function("sin_mix", a0=0.5, a2=1.0, amp=0.3, freq=3.0)
    sp = split_convex_concave(b)
    r = np.linspace(0.01, 0.99, 50)
    h = 1e-6
    fd = (sp.b1(r + h) - sp.b1(r - h)) / (2 * h)
    assert np.max(np.abs(fd - sp.b1_prime(r))) < 1e-7


# ---------------------------------------------------------------------------
# exponent algebra and the regularity bootstrap
# ---------------------------------------------------------------------------

def test_validate_exponents_reference_values():
    rep = validate_exponents(3.0, 1.0, 1.0)
    assert rep.admissible
    assert rep.r == pytest.approx(4.0 / 3.0)
    assert rep.s == pytest.approx(4.0 / 3.0)
    rep2 = validate_exponents(3.0, 0.7, 1.1)
    assert rep2.admissible
    assert rep2.r == pytest.approx(3.4 / 3.2)
    assert rep2.s == pytest.approx(10.2 / 7.0)


def test_validate_exponents_rejects_small_sigma():
    rep = validate_exponents(2.0, 1.0, 1.0)
    assert not rep.admissible
    assert any("sigma >= 3" in v for v in rep.violations)
    assert rep.r is None


def test_validate_exponents_names_each_clause():
    assert any("2q - 1" in v for v in validate_exponents(3.0, 0.55, 0.56).violations)
    assert any("q <= q0" in v for v in validate_exponents(3.0, 1.0, 0.9).violations)
    assert any("q0 < q + 1/2" in v for v in validate_exponents(3.0, 1.0, 1.5).violations)


def test_validate_exponents_r_in_unit_band_randomized():
    rng = np.random.default_rng(12345)
    n = 10_000
    count = 0
    while count < n:
        sigma = rng.uniform(3.0, 12.0)
        q = rng.uniform(0.5 * (1.0 + 1.0 / sigma), 6.0)
        q0 = rng.uniform(q, q + 0.5 - 1e-9)
        rep = validate_exponents(sigma, q, q0)
        if not rep.admissible:
            continue
        assert 1.0 < rep.r < 2.0
        count += 1


def test_h2_bootstrap_reference_traces():
    count, trace = h2_bootstrap_iterations(4.0)
    assert count == 3
    assert trace == pytest.approx((4.0 / 3.0, 1.5, 12.0 / 7.0, 2.0))
    count6, trace6 = h2_bootstrap_iterations(6.0)
    assert count6 == 1
    assert trace6 == pytest.approx((1.5, 2.0))


def test_h2_bootstrap_near_threshold_terminates_increasing():
    count, trace = h2_bootstrap_iterations(3.0001)
    assert count == len(trace) - 1
    assert all(b > a for a, b in zip(trace, trace[1:]))
    assert trace[-1] == 2.0


def test_h2_bootstrap_rejects_small_p():
    with pytest.raises(ConstitutiveError):
        h2_bootstrap_iterations(3.0)


@settings(max_examples=200)
@given(st.floats(3.0001, 50.0))
def test_h2_bootstrap_monotone_property(p):
    _, trace = h2_bootstrap_iterations(p)
    assert all(b > a for a, b in zip(trace, trace[1:]))
    assert trace[-1] == 2.0
