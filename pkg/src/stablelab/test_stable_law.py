"""Stable-law numerics against closed forms, finite differences, and symmetry identities."""

import math

import numpy as np
import pytest

from stablelab.errors import ExcludedCaseError
from stablelab.quadrature import integrate
from stablelab.stable_law import (
    StableLawParams,
    StepCDF,
    b_rho_branch,
    c_const,
    char_fn,
    corr_A_rho,
    corr_B_rho,
    corr_J,
    correction_M,
    correction_M_with_error,
    correction_N,
    correction_profile,
    d_const,
    esseen_gap,
    h_l1_bound,
    log_char_fn,
    operator_C,
    stable_cdf,
    stable_density,
    stable_density_with_error,
    stable_table,
    z_const,
)

CAUCHY = StableLawParams(alpha=1.0, p=0.5, c=1.0)
LEVY = StableLawParams(alpha=0.5, p=1.0, c=1.0)


# --- Constants -----------------------------------------------------------------


def test_d_const_known_values():
    assert d_const(1.0) == pytest.approx(math.pi / 2, abs=1e-15)
    assert d_const(0.5) == pytest.approx(math.sqrt(math.pi / 2), rel=1e-14)


@pytest.mark.parametrize("a", [0.25, 0.75, 1.5])
def test_d_const_matches_the_defining_integral(a):
    head, _ = integrate(lambda x: x**-a * math.sin(x), 0.0, 1.0, tol=1e-13)
    tail, _ = integrate(lambda x: x**-a, 1.0, np.inf, weight="sin", wvar=1.0, tol=1e-13)
    assert head + tail == pytest.approx(d_const(a), abs=1e-6)


def test_d_const_is_continuous_through_one():
    assert d_const(1 - 1e-7) == pytest.approx(d_const(1 + 1e-7), abs=1e-6)
    assert d_const(1 - 2e-6) == pytest.approx(d_const(1 - 5e-7), abs=1e-5)


@pytest.mark.parametrize("a", [0.3, 0.6, 1.4])
def test_z_const_is_minus_the_derivative_of_d(a):
    h = 1e-5
    derivative = (d_const(a + h) - d_const(a - h)) / (2 * h)
    assert z_const(a) == pytest.approx(-derivative, abs=1e-5)


def test_z_const_smoothness_and_limit_at_one():
    assert abs(z_const(0.5 + 1e-6) - z_const(0.5)) <= 1e-4
    assert z_const(1.0) == pytest.approx(-np.euler_gamma * math.pi / 2, abs=1e-15)
    assert z_const(1 + 1e-3) == pytest.approx(z_const(1.0), abs=1e-2)


def test_c_const_is_assembled_from_z_and_d():
    assert c_const(1.5) == pytest.approx(z_const(0.5) / 0.5 + d_const(0.5) / 0.25, rel=1e-15)


@pytest.mark.parametrize("fn,a", [(d_const, 2.0), (d_const, 0.0), (z_const, -0.1), (c_const, 0.9)])
def test_constants_reject_their_domain_boundaries(fn, a):
    with pytest.raises(ValueError):
        fn(a)


# --- Characteristic function ---------------------------------------------------


def test_char_fn_values():
    assert char_fn(CAUCHY, 0.0) == 1.0
    assert char_fn(CAUCHY, 1.0) == pytest.approx(math.exp(-math.pi / 2), abs=1e-15)


def test_char_fn_is_hermitian_and_bounded():
    for params in (CAUCHY, LEVY, StableLawParams(alpha=1.5, p=0.2, c=2.0)):
        t = np.array([0.3, 1.7, 8.0])
        np.testing.assert_allclose(char_fn(params, -t), np.conj(char_fn(params, t)), atol=1e-15)
        assert np.all(np.abs(char_fn(params, t)) <= 1.0)


def test_char_fn_modulus_decays_at_the_stated_rate():
    params = StableLawParams(alpha=1.5, p=0.9, c=0.7)
    t = np.array([0.5, 2.0, 3.0])
    np.testing.assert_allclose(np.abs(char_fn(params, t)), np.exp(-params.decay_rate * t**1.5), rtol=1e-13)


def test_operator_C_reproduces_log_char_fn():
    params = StableLawParams(alpha=0.6, p=0.8, c=1.3)
    for t in (-2.0, 0.5, 4.0):
        assert operator_C(params, t) * abs(t) ** 0.6 == pytest.approx(log_char_fn(params, t), abs=1e-12)
    with pytest.raises(ValueError):
        operator_C(CAUCHY, 1.0)


def test_params_reject_out_of_range_values():
    with pytest.raises(ValueError):
        StableLawParams(alpha=2.0, p=0.5)
    with pytest.raises(ValueError):
        StableLawParams(alpha=1.0, p=0.5, rho=0.1)


# --- Density and CDF -----------------------------------------------------------


@pytest.mark.parametrize("s", [-10.0, -3.0, -0.5, 0.0, 0.7, 4.0, 10.0])
def test_cauchy_closed_form(s):
    gamma = math.pi / 2
    assert stable_density(CAUCHY, s) == pytest.approx(gamma / (math.pi * (gamma**2 + s**2)), abs=1e-8)
    assert stable_cdf(CAUCHY, s) == pytest.approx(0.5 + math.atan(s / gamma) / math.pi, abs=1e-8)


@pytest.mark.parametrize("s", [0.5, 1.0, 3.0])
def test_totally_skewed_half_stable_is_levy(s):
    gamma = math.pi / 2
    density = math.sqrt(gamma / (2 * math.pi)) * s**-1.5 * math.exp(-gamma / (2 * s))
    assert stable_density(LEVY, s) == pytest.approx(density, abs=1e-7)
    assert stable_cdf(LEVY, s) == pytest.approx(math.erfc(math.sqrt(gamma / (2 * s))), abs=1e-7)


def test_totally_skewed_half_stable_has_no_left_mass():
    assert stable_density(LEVY, -1.0) == pytest.approx(0.0, abs=1e-7)
    assert stable_cdf(LEVY, -1.0) == pytest.approx(0.0, abs=1e-7)


def test_cdf_is_monotone_with_limits():
    params = StableLawParams(alpha=0.75, p=0.3)
    values = [stable_cdf(params, s) for s in np.linspace(-20, 20, 41)]
    assert all(b >= a - 1e-10 for a, b in zip(values, values[1:]))
    assert values[0] < 0.1 and values[-1] > 0.9


def test_cdf_agrees_with_integrated_density():
    params = StableLawParams(alpha=1.5, p=0.7)
    mass, _ = integrate(lambda s: stable_density(params, s), -1.0, 2.0, tol=1e-10)
    assert stable_cdf(params, 2.0) - stable_cdf(params, -1.0) == pytest.approx(mass, abs=1e-6)


def test_looser_tolerance_stays_within_its_error_estimate():
    params = StableLawParams(alpha=1.5, p=0.7)
    coarse, err = stable_density_with_error(params, 0.8, tol=1e-6)
    fine, _ = stable_density_with_error(params, 0.8, tol=1e-11)
    assert abs(coarse - fine) <= err + 1e-6


# --- Corrections ---------------------------------------------------------------


def test_b_rho_branch_table():
    assert b_rho_branch(1.5, -0.25) == 1
    assert b_rho_branch(1.5, 0.0) == 2
    assert b_rho_branch(1.0, -0.5) == 3
    assert b_rho_branch(0.75, -0.5) == 4
    assert b_rho_branch(0.75, -0.1) is None


def test_corrections_vanish_at_zero_and_have_parity():
    params = StableLawParams(alpha=1.5, p=0.7, rho=-0.25)
    assert corr_A_rho(params, 0.0) == 0.0
    assert corr_B_rho(params, 0.0) == 0.0
    t = np.linspace(0.1, 5.0, 20)
    np.testing.assert_allclose(corr_A_rho(params, -t), corr_A_rho(params, t), rtol=1e-15)
    np.testing.assert_allclose(corr_B_rho(params, -t), -corr_B_rho(params, t), rtol=1e-15)


def test_first_branch_matches_hand_composed_expression():
    alpha, rho, p, t = 1.5, -0.25, 0.7, 2.0
    params = StableLawParams(alpha=alpha, p=p, rho=rho)
    e = 1 - (alpha - rho - 1)
    d = math.gamma(e) * math.sin(math.pi * e / 2)
    expected = ((2 * p - 1) / rho) * d / (alpha - rho - 1) * t ** (alpha - rho)
    assert corr_B_rho(params, t) == pytest.approx(expected, rel=1e-13)
    e = 1 - (alpha - rho)
    expected_A = (1 / rho) * math.gamma(e) * math.sin(math.pi * e / 2) * t ** (alpha - rho)
    assert corr_A_rho(params, t) == pytest.approx(expected_A, rel=1e-13)


def test_pure_power_A_uses_z_and_d():
    params = StableLawParams(alpha=0.75, p=0.5, rho=0.0)
    assert corr_A_rho(params, 1.0) == pytest.approx(z_const(0.75), rel=1e-15)


def test_B_rho_outside_every_branch_is_excluded():
    with pytest.raises(ExcludedCaseError):
        corr_B_rho(StableLawParams(alpha=0.75, p=0.5, rho=-0.1), 1.0)


def test_J_branches():
    above = StableLawParams(alpha=1.5, p=0.7, rho=-0.25)
    assert corr_J(above, 1.3).real == pytest.approx(corr_A_rho(above, 1.3), rel=1e-15)
    assert corr_J(above, 1.3).imag == pytest.approx(corr_B_rho(above, 1.3), rel=1e-15)

    below = StableLawParams(alpha=0.6, p=0.8, rho=-1.0)
    assert corr_J(below, 0.0) == 0.0
    for t in (-1.5, 0.4, 3.0):
        expected = operator_C(below, t) ** 2 * abs(t) ** 1.2 / 2
        assert corr_J(below, t) == pytest.approx(expected, abs=1e-12)

    with pytest.raises(ExcludedCaseError):
        corr_J(StableLawParams(alpha=0.6, p=0.8, rho=-0.6), 1.0)


def test_M_and_N_are_scale_derivatives_of_the_cdf():
    # For rho < -alpha, J h = (c^2/2) d^2 h/dc^2 and log(h) h = c dh/dc.
    base = dict(alpha=0.5, p=0.7, rho=-1.0)
    c = 1.0

    def H(scale: float, s: float) -> float:
        return stable_cdf(StableLawParams(c=scale, **base), s)

    params = StableLawParams(c=c, **base)
    for s in (-1.0, 0.5, 2.0):
        h = 2e-3
        second = (H(c + h, s) - 2 * H(c, s) + H(c - h, s)) / h**2
        assert correction_M(params, s) == pytest.approx(-(c**2) / 2 * second, abs=2e-5)
        h = 1e-4
        first = (H(c + h, s) - H(c - h, s)) / (2 * h)
        assert correction_N(params, s) == pytest.approx(c * first, abs=1e-6)


def test_N_flips_with_the_skew():
    left = StableLawParams(alpha=1.5, p=0.3)
    right = StableLawParams(alpha=1.5, p=0.7)
    for s in (-2.0, 0.3, 1.5):
        assert correction_N(left, s) == pytest.approx(-correction_N(right, -s), abs=1e-8)


def test_M_decays_in_the_tails():
    params = StableLawParams(alpha=1.5, p=0.7, rho=-2.0)
    assert abs(correction_M(params, 50.0)) <= 1e-3
    assert abs(correction_M(params, -50.0)) <= 1e-3


def test_M_error_estimate_covers_a_loose_evaluation():
    params = StableLawParams(alpha=1.5, p=0.7, rho=-0.25)
    coarse, err = correction_M_with_error(params, 0.5, tol=1e-6)
    fine, _ = correction_M_with_error(params, 0.5, tol=1e-11)
    assert abs(coarse - fine) <= err + 1e-6


def test_correction_profile_writes_csv(tmp_path):
    params = StableLawParams(alpha=1.5, p=0.7, rho=-2.0)
    profile = correction_profile(params, [-1.0, 0.0, 1.0])
    assert len(profile.quadrature_error) == 3
    path = profile.to_csv(tmp_path / "corrections.csv")
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "s,M,N,err_M,err_N"
    assert len(lines) == 4


def test_correction_profile_needs_a_sorted_grid():
    with pytest.raises(ValueError):
        correction_profile(StableLawParams(alpha=1.5, p=0.7, rho=-2.0), [1.0, 0.0])


# --- Tables and the smoothing inequality ---------------------------------------


def test_table_interpolates_the_cdf():
    params = StableLawParams(alpha=1.5, p=0.7)
    table = stable_table(params)
    for s in (-3.3, -0.41, 0.0, 0.77, 5.2):
        assert float(table.cdf(s)) == pytest.approx(stable_cdf(params, s), abs=1e-4)
    u = np.array([0.01, 0.3, 0.5, 0.9, 0.999])
    np.testing.assert_allclose(table.cdf(table.ppf(u)), u, atol=1e-4)
    np.testing.assert_array_equal(table.sample(100, seed=1), table.sample(100, seed=1))


def test_step_cdf_is_right_continuous():
    F = StepCDF.from_samples(np.array([0.0, 1.0, 1.0, 2.0]))
    assert F(1.0) == 0.75
    assert F.left_limit(1.0) == 0.25
    assert F(-1.0) == 0.0 and F(2.0) == 1.0


def test_esseen_gap_is_zero_for_identical_laws():
    params = StableLawParams(alpha=1.5, p=0.7)
    table = stable_table(params)
    f = lambda t: char_fn(params, t)  # noqa: E731
    gap = esseen_gap(table.cdf, f, table.cdf, f, 50.0, derivative_bound=h_l1_bound(params), x_grid=np.linspace(-10, 10, 101))
    assert gap.lhs == 0.0
    assert gap.lhs <= gap.rhs


def test_esseen_gap_holds_for_an_empirical_cdf():
    params = StableLawParams(alpha=1.5, p=0.7)
    table = stable_table(params)
    F1 = StepCDF.from_samples(table.sample(1000, seed=11))
    gap = esseen_gap(
        F1, F1.char_fn, table.cdf, lambda t: char_fn(params, t), 50.0, derivative_bound=h_l1_bound(params)
    )
    assert 0.0 < gap.lhs <= gap.rhs


def test_esseen_gap_rejects_a_non_hermitian_correction():
    params = StableLawParams(alpha=1.5, p=0.7)
    table = stable_table(params)
    f = lambda t: char_fn(params, t)  # noqa: E731
    with pytest.raises(ValueError, match="conjugate-symmetric"):
        esseen_gap(
            table.cdf, f, table.cdf, f, 10.0,
            derivative_bound=1.0,
            G=lambda x: np.zeros_like(x),
            g=lambda t: 1j,
            x_grid=np.linspace(-1, 1, 11),
        )
