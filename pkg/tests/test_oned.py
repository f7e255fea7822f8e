import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from artifact.asymptotics import run_oned_ladder
from artifact.errors import HypothesisError
from artifact.oned import (
    Discretization,
    GridSpec,
    PropertyConstants,
    Solution1D,
    StepFunction,
    Weight,
    WeightedProblem1D,
    breakdown_from_energy,
    brute_force_g1_minimizer,
    check_minimizer_properties,
    check_regime,
    energy_g,
    first_order_energy,
    graded_grid,
    ladder_constants_stable,
    minimize_bvp,
    rescaled_profile,
    second_order_value,
    solve_refined,
)
from artifact.potential import PotentialSpec, geodesic_distance
from artifact.recovery import build_recovery_1d

from .conftest import C2_ZERO

TARGET = -0.25 * C2_ZERO


def dirichlet(spec, weight, eps, alpha, beta):
    return WeightedProblem1D(weight, eps, alpha, beta, alpha, beta)


def test_grid_resolves_the_layer():
    t = graded_grid(0.01, 0.25)
    assert t[0] == 0.0 and t[-1] == 0.25 and np.all(np.diff(t) > 0)
    assert np.count_nonzero(t <= 5 * 0.01) >= 30
    fine = graded_grid(0.01, 0.25, GridSpec().refined(2))
    assert np.all(np.isin(t, fine) | np.isclose(t[:, None], fine[None, :], atol=1e-13).any(axis=1))


def test_constant_b_energy_tiers(quartic, layer_problem):
    prob = layer_problem.with_eps(0.02, quartic)
    prob = WeightedProblem1D(prob.weight, 0.02, 0.0, None, 0.0, None)  # free end, so v = b is admissible there
    t = graded_grid(0.02, 0.25, far_layer=False)
    sol = Solution1D(t, np.zeros_like(t), 0.02, 0.0, quartic.b)
    br = energy_g(sol, prob, quartic)
    assert br.g == 0.0 and br.g1 == 0.0
    assert br.g2 == pytest.approx(-geodesic_distance(quartic, 0.0, 1.0) / 0.02)
    assert br.boundary_mismatch


def test_constant_a_energy_is_zero_but_flagged(quartic):
    prob = dirichlet(quartic, Weight.linear(1.0, 0.0), 0.05, 0.0, 1.0)
    t = np.linspace(0, 1, 101)
    with pytest.warns(RuntimeWarning, match="fewer than 20 nodes"):
        br = energy_g(Solution1D(t, np.full_like(t, 2.0), 0.05, 0.0, 1.0), prob, quartic)
    assert br.g1 == 0.0 and br.boundary_mismatch


def test_recovery_first_order_energy_close_to_distance(quartic, layer_problem):
    prob = layer_problem.with_eps(0.02, quartic)
    cand = build_recovery_1d(prob, spec=quartic)
    g1 = cand.energy(prob.weight) / 0.02
    assert abs(g1 - geodesic_distance(quartic, 0.0, 1.0)) <= 0.02 * 3


def test_gradient_term_vanishes_like_eps_squared(quartic):
    weight = Weight.linear(1.0, -0.25)
    t = np.linspace(0, 1, 4001)
    v = np.sin(2 * t)
    disc = Discretization.on(t, weight)
    pot_ref = integrate.quad(lambda s: (1 - math.sin(2 * s) ** 2) ** 2 * (1 - 0.25 * s), 0, 1)[0]
    grad_ref = integrate.quad(lambda s: 4 * math.cos(2 * s) ** 2 * (1 - 0.25 * s), 0, 1)[0]
    for eps in (0.1, 0.01, 0.001):
        grad, pot = disc.energy_parts(1.0 - v, eps, quartic)
        assert pot == pytest.approx(pot_ref, rel=1e-6)
        assert grad / eps**2 == pytest.approx(grad_ref, rel=1e-6)


def test_constant_data_gives_constant_minimizer(quartic):
    prob = dirichlet(quartic, Weight.linear(0.25, -0.25), 0.02, 1.0, 1.0)
    sol = minimize_bvp(prob, quartic)
    assert np.all(sol.gap == 0.0) and sol.newton_steps == 0


def test_boundary_layer_then_b(quartic):
    prob = dirichlet(quartic, Weight.linear(0.25, -0.25), 0.02, 0.0, 1.0)
    sol = minimize_bvp(prob, quartic)
    assert float(np.interp(0.125, sol.grid, sol.values)) > 1 - 1e-3
    assert sol.residual_norm < 1e-8


def test_unweighted_minimizer_is_the_profile(quartic):
    # omega = 1: the Euler-Lagrange equation reduces to eps v' = W^{1/2}(v) up to an
    # exponentially small constant, so v(t) = tanh(t/eps)
    eps = 0.02
    prob = dirichlet(quartic, Weight.linear(0.5, 0.0), eps, 0.0, 1.0)
    sol = minimize_bvp(prob, quartic)
    assert np.max(np.abs(sol.values - np.tanh(sol.grid / eps))) < 1e-4


def test_first_order_energy_examples(quartic, layer_problem):
    w = layer_problem.weight
    assert first_order_energy(StepFunction(1.0), layer_problem, quartic) == pytest.approx(4 / 3)
    assert first_order_energy(StepFunction(-1.0), layer_problem, quartic) == pytest.approx(4 / 3 + 8 / 3 * w(0.25))
    one = first_order_energy(StepFunction(1.0, (0.1,)), layer_problem, quartic)
    two = first_order_energy(StepFunction(1.0, (0.1, 0.2)), layer_problem, quartic)
    # ending at a costs d_W(a, b) at T; each jump costs C_W omega(t_jump)
    assert one == pytest.approx(4 / 3 + 8 / 3 * w(0.1) + 8 / 3 * w(0.25))
    assert two == pytest.approx(4 / 3 + 8 / 3 * (w(0.1) + w(0.2)))


def test_brute_force_constant_b_wins(quartic, layer_problem):
    res = brute_force_g1_minimizer(layer_problem, quartic, max_jumps=2, n_nodes=200)
    assert res.constant_b_strict and res.regime_holds
    omega0 = layer_problem.weight.drop()
    assert res.margin >= 8 / 3 * (1 - omega0) - 4 / 3


def test_brute_force_deep_dip_dethrones_b(quartic):
    # alpha near a and a weight that nearly vanishes at T: staying at a and
    # paying the mismatch at T is cheaper than the constant b
    prob = WeightedProblem1D.boundary_layer(quartic, Weight.linear(0.25, -3.8), 0.04, -0.9, 1.5)
    res = brute_force_g1_minimizer(prob, quartic, max_jumps=2, n_nodes=200)
    assert not res.regime_holds
    assert not res.constant_b_strict and res.best.start == -1.0
    assert res.value == pytest.approx(first_order_energy(res.best, prob, quartic))


def test_brute_force_trivial_data(quartic):
    prob = dirichlet(quartic, Weight.linear(0.25, -0.25), 0.04, 1.0, 1.0)
    res = brute_force_g1_minimizer(prob, quartic)
    assert res.best == StepFunction(1.0) and res.value == 0.0


def test_regime_threshold(quartic, layer_problem):
    ok, omega0, thr = check_regime(layer_problem, quartic)
    assert ok and omega0 == pytest.approx(0.0625) and thr == pytest.approx(0.078125)


@pytest.fixture(scope="module")
def ladder_solutions(quartic, layer_problem):
    out = []
    for eps in (0.04, 0.02, 0.01, 0.005):
        prob = layer_problem.with_eps(eps, quartic)
        out.append((prob, minimize_bvp(prob, quartic)))
    return out


def test_minimizer_properties_on_ladder(quartic, ladder_solutions):
    prob0, sol0 = ladder_solutions[0]
    ref = check_minimizer_properties(sol0, prob0, quartic).constants
    fitted = []
    for prob, sol in ladder_solutions:
        diag = check_minimizer_properties(sol, prob, quartic, constants=ref)
        assert diag.passed, diag.checks
        fitted.append(diag.constants)
    assert all(ladder_constants_stable(fitted).values())


def test_minimizer_properties_vacuous_for_b(quartic):
    prob = WeightedProblem1D(Weight.linear(0.25, -0.25), 0.02, 1.0, None, 1.0, None)
    sol = minimize_bvp(prob, quartic)
    assert check_minimizer_properties(sol, prob, quartic).passed


def test_minimizer_properties_negative_control(quartic, ladder_solutions):
    prob, sol = ladder_solutions[1]
    ref = check_minimizer_properties(sol, prob, quartic).constants
    noisy = Solution1D(sol.grid, sol.gap - 0.05 * np.sin(50 * sol.grid), sol.eps, 0.0, sol.b)
    diag = check_minimizer_properties(noisy, prob, quartic, constants=ref)
    assert not diag.checks["equipartition"]


def test_ladder_stability_flags_growth():
    base = PropertyConstants(1.0, 1.0, 1.0, 1.0, 1.0)
    grown = PropertyConstants(5.0, 1.0, 1.0, 1.0, 1.0)
    out = ladder_constants_stable([base, base, grown, grown])
    assert not out["gradient_c0"] and out["diam_c"]


def test_rescaled_profile_converges(quartic, layer_problem):
    dists = []
    for eps in (0.04, 0.02, 0.01):
        prob = layer_problem.with_eps(eps, quartic)
        dists.append(rescaled_profile(minimize_bvp(prob, quartic), quartic, 5.0).sup_distance)
    assert dists[0] > dists[1] > dists[2] and dists[-1] <= 0.02


def test_rescaled_profile_edge_cases(quartic, ladder_solutions):
    _, sol = ladder_solutions[0]
    with pytest.warns(RuntimeWarning, match="clipped"):
        rp = rescaled_profile(sol, quartic, 100.0)
    assert rp.clipped
    t = np.linspace(0, 1, 11)
    flat = rescaled_profile(Solution1D(t, np.zeros_like(t), 0.01, 0.0, 1.0), quartic)
    assert np.all(flat.w == 1.0)


def test_second_order_limit_decreasing_weight(quartic, layer_problem):
    rep = run_oned_ladder(layer_problem, quartic, (0.04, 0.02, 0.01, 0.005, 0.002))
    assert rep.target == pytest.approx(TARGET, abs=1e-12)
    assert rep.rel_error <= 0.05 and rep.sandwich


def test_second_order_limit_increasing_weight(quartic):
    prob = WeightedProblem1D.boundary_layer(quartic, Weight.linear(0.25, 0.25), 0.04, 0.0, 1.5)
    rep = run_oned_ladder(prob, quartic, (0.04, 0.02, 0.01, 0.005))
    assert rep.target == pytest.approx(-TARGET, abs=1e-12)
    assert rep.rel_error <= 0.05


def test_second_order_value_flat_weight(quartic):
    prob = WeightedProblem1D.boundary_layer(quartic, Weight.linear(0.25, 0.0), 0.01, 0.0, 1.5)
    ref = solve_refined(prob, quartic)
    g2 = second_order_value(ref.solution, prob, quartic, energy=ref.extrapolated)
    assert abs(g2) < 5e-3


def test_second_order_value_refused_outside_regime(quartic):
    prob = WeightedProblem1D.boundary_layer(quartic, Weight.linear(0.25, -3.0), 0.02, 0.0, 1.5)
    sol = Solution1D(np.linspace(0, 0.25, 5), np.zeros(5), 0.02, 0.0, 1.0)
    with pytest.raises(HypothesisError):
        second_order_value(sol, prob, quartic)


def test_grid_refinement_changes_g2_by_under_one_percent(quartic, layer_problem):
    # the reported G2 is the h-extrapolated one; halve every spacing and re-extrapolate
    prob = layer_problem.with_eps(0.002, quartic)
    g2 = [breakdown_from_energy(solve_refined(prob, quartic, gs).extrapolated, prob, quartic).g2
          for gs in (GridSpec(), GridSpec().refined(2))]
    assert abs(g2[1] - g2[0]) <= 0.01 * abs(g2[1])


def test_minimizer_below_recovery_and_squeeze(quartic, ladder_solutions):
    for prob, sol in ladder_solutions:
        cand = build_recovery_1d(prob, spec=quartic, grid=sol.grid)
        assert sol.energy <= cand.discrete_energy(prob.weight) + 1e-9


@given(st.floats(0.005, 0.05), st.floats(-0.3, 0.3))
def test_minimizer_stays_in_wells_interval(eps, slope):
    spec = PotentialSpec.quartic()
    prob = WeightedProblem1D.boundary_layer(spec, Weight.linear(0.25, slope), eps, 0.0, 1.5)
    sol = minimize_bvp(prob, spec)
    assert np.all(sol.gap >= -1e-12) and np.all(sol.gap <= 2 + 1e-12)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert sol.energy <= build_recovery_1d(prob, spec=spec, grid=sol.grid).discrete_energy(prob.weight) + 1e-9
