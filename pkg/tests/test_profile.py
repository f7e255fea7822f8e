import dataclasses
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from artifact.potential import PotentialSpec
from artifact.profile import (
    c2_route_a,
    c2_route_b,
    check_difference_bound,
    check_log_asymptotics,
    coefficient_routes,
    coefficient_table,
    difference_integral,
    regularized_psi,
    second_order_coefficient,
    solve_profile,
    verify_decay_bounds,
)

from .conftest import C2_ZERO

mpmath.mp.dps = 30


def c2_mpmath(alpha):
    """int_0^inf 2 t sech^4(t + artanh alpha) dt at 30 digits."""
    t0 = mpmath.atanh(alpha)
    return float(mpmath.quad(lambda t: 2 * t * mpmath.sech(t + t0) ** 4, [0, 1, 5, mpmath.inf]))


def test_closed_form_c2_confirmed_by_high_precision_quadrature():
    assert c2_mpmath(0) == pytest.approx(C2_ZERO, abs=1e-15)


@pytest.mark.parametrize("alpha", [0.0, 0.2])
def test_profile_is_shifted_tanh(quartic, alpha):
    prof = solve_profile(quartic, alpha)
    t = np.linspace(0.0, 10.0, 2001)
    assert np.max(np.abs(prof(t) - np.tanh(t + math.atanh(alpha)))) <= 1e-8


def test_profile_near_b_is_nearly_constant(quartic):
    alpha = 1 - 1e-6
    prof = solve_profile(quartic, alpha)
    assert np.max(np.abs(prof(prof.t) - 1.0)) <= 1 - alpha + 1e-15


def test_translation_identity(quartic):
    base = solve_profile(quartic, -0.9)
    t = np.linspace(0, 8, 401)
    for alpha in (-0.7, 0.0, 0.3, 0.8):
        t0 = math.atanh(alpha) - math.atanh(-0.9)  # time for z_(-0.9) to reach alpha
        assert np.max(np.abs(solve_profile(quartic, alpha)(t) - base(t + t0))) <= 1e-8
    with pytest.raises(ValueError):
        base(np.array([-0.1]))


@pytest.mark.parametrize("alpha", [0.0, 0.2, 0.5, -0.5, 0.9])
def test_c2_routes_match_mpmath(quartic, alpha):
    ra, rb = coefficient_routes(quartic, alpha)
    ref = c2_mpmath(alpha)
    assert ra == pytest.approx(ref, abs=1e-9)
    assert rb == pytest.approx(ref, abs=1e-9)


def test_c2_at_b_is_zero(quartic):
    assert second_order_coefficient(quartic, 1.0) == 0.0
    assert c2_route_a(quartic, 1.0) == c2_route_b(quartic, 1.0) == 0.0


def test_dual_routes_and_monotone_on_grid(quartic):
    alphas = np.linspace(-0.95, 1.0, 20)
    rows = coefficient_table(quartic, alphas, tol=1e-10)
    assert all(r["discrepancy"] <= 1e-9 for r in rows)
    col = np.array([r["c2_routeB"] for r in rows])
    assert np.all(np.diff(col) < 0)
    assert col[-1] == 0.0


def test_c2_generic_plugin_matches_quartic():
    p = np.polynomial.Polynomial([1, 0, -2, 0, 1])
    spec = PotentialSpec.from_callables(p, p.deriv(), p.deriv(2), -1.0, 1.0)
    assert c2_route_b(spec, 0.0) == pytest.approx(C2_ZERO, abs=1e-8)


def test_decay_bounds_hold(quartic):
    prof = solve_profile(quartic, 0.0, sigma=1 / 3)
    rep = verify_decay_bounds(prof, 1 / 3)
    assert rep.passed and rep.lower_margin >= 0 and rep.upper_margin >= 0
    # at t = 0 both envelopes are bracketed by b - alpha <= b - a
    lo, hi = prof.gap_bounds(np.array([0.0]))
    assert lo[0] == pytest.approx(1.0) and hi[0] == pytest.approx(2.0)


def test_decay_bounds_negative_control(quartic):
    prof = solve_profile(quartic, 0.0, sigma=1 / 3)
    shifted = dataclasses.replace(prof, gap=prof.gap - 0.1)
    assert not verify_decay_bounds(shifted, 1 / 3).passed


def test_regularized_time_bounded_over_ladder(quartic):
    ratios = []
    for eps in (0.1, 0.05, 0.02, 0.01, 0.005):
        rp = regularized_psi(quartic, 0.0, eps**2, eps)
        assert math.isfinite(rp.t_eps)
        ratios.append(rp.t_eps / (eps * abs(math.log(eps**2))))
    assert max(ratios) < 2 * min(ratios)
    # T_eps / eps against the exact quadrature of eps / sqrt(delta + W)
    eps = 0.01
    ref = integrate.quad(lambda s: 1 / math.sqrt(eps**2 + (1 - s * s) ** 2), 0, 1, limit=400, epsabs=1e-13)[0]
    assert regularized_psi(quartic, 0.0, eps**2, eps).t_eps / eps == pytest.approx(ref, rel=1e-9)


def test_regularized_time_degenerate_cases(quartic):
    assert regularized_psi(quartic, 1.0, 1e-4, 0.01).t_eps == 0.0
    assert regularized_psi(quartic, 0.0, 1e8, 0.01).t_eps < 1e-5


def test_psi_inverse_round_trip(quartic):
    rp = regularized_psi(quartic, 0.0, 1e-4, 0.01)
    inv = rp.inverse()
    r = np.linspace(0.0, 1.0 - 1e-6, 500)
    assert np.max(np.abs(inv(rp(r)) - r)) < 1e-8


def test_log_bounds_hold(quartic):
    rep = check_log_asymptotics(quartic, [1e-2, 1e-4, 1e-6], 0.0, 1.0, 1 / 3)
    assert rep.passed
    for row, delta in zip(rep.rows, (1e-2, 1e-4, 1e-6)):
        ref = integrate.quad(lambda s: 1 / math.sqrt(delta + (1 - s * s) ** 2), 0, 1, limit=400, epsabs=1e-12)[0]
        assert row.integral == pytest.approx(ref, rel=1e-8)
    # the slope against -(1/2) log delta tends to W''(b)^{-1/2} = 1/2
    last = rep.rows[-1]
    prev = rep.rows[-2]
    slope = (last.integral - prev.integral) / (-0.5 * math.log(1e-6) + 0.5 * math.log(1e-4))
    assert slope == pytest.approx(0.5, abs=1e-3)


def test_log_bounds_edge_cases(quartic):
    assert check_log_asymptotics(quartic, [1e-3], 0.5, 0.5, 1 / 3).passed
    assert check_log_asymptotics(quartic, [3.0], 0.0, 1.0, 1 / 3).passed
    with pytest.raises(ValueError):
        check_log_asymptotics(quartic, [4.0], 0.0, 1.0, 1 / 3)


def test_difference_bound(quartic):
    deltas = [10.0**-k for k in range(1, 9)]
    rep = check_difference_bound(quartic, deltas, -1.0, 1.0, 1 / 3)
    assert rep.passed and rep.sup <= rep.bound
    # independent high-precision oracle at one delta
    delta = 1e-3
    f = lambda s: 2 / (mpmath.sqrt(delta + (1 - s * s) ** 2) + (1 - s * s)) - 1 / mpmath.sqrt(delta + (1 - s * s) ** 2)
    ref = float(mpmath.quad(f, [-1, -0.99, -0.9, 0, 0.9, 0.99, 1]))
    assert difference_integral(quartic, delta, -1.0, 1.0) == pytest.approx(ref, rel=1e-8)
    assert check_difference_bound(quartic, deltas, 0.3, 0.3, 1 / 3).sup == 0.0


def test_difference_vanishes_when_w_dominates(quartic):
    assert difference_integral(quartic, 1e-12, -0.5, 0.5) < 1e-10


@given(st.floats(-0.95, 0.99), st.floats(0.01, 0.2))
def test_c2_monotone_pairs(alpha, step):
    spec = PotentialSpec.quartic()
    hi = min(alpha + step, 1.0)
    assert second_order_coefficient(spec, hi) < second_order_coefficient(spec, alpha)


@given(st.floats(-0.9, 0.95))
def test_dual_route_property(alpha):
    spec = PotentialSpec.quartic()
    ra, rb = coefficient_routes(spec, alpha, tol=1e-10)
    assert abs(ra - rb) <= 1e-9
