import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from artifact.asymptotics import recovery_limit
from artifact.errors import HypothesisError
from artifact.geometry import BoundaryData, Circle, Ellipse
from artifact.oned import Weight, WeightedProblem1D, minimize_bvp, breakdown_from_energy
from artifact.potential import PotentialSpec, compute_cw, compute_sigma, default_thresholds
from artifact.profile import moment_tail_bound, regularized_psi
from artifact.recovery import (
    DeltaSchedule,
    LayerMap,
    build_recovery_1d,
    build_recovery_2d,
    evaluate_limsup_bound,
    ladder_limsup_ok,
    multi_transition_recovery,
    recovery_g2_limit,
)

from .conftest import C2_ZERO

TARGET = -0.25 * C2_ZERO
LADDER = (0.04, 0.02, 0.01, 0.005)


def natural(weight, eps, alpha):
    return WeightedProblem1D(weight, eps, alpha, None, alpha, None)


def test_schedules():
    assert DeltaSchedule().delta(0.1) == pytest.approx(0.01)
    assert DeltaSchedule("log", 2).delta(0.01) == pytest.approx(0.01 / math.log(0.01) ** 2)
    assert DeltaSchedule("power", 2).check_decay() and DeltaSchedule("log", 2).check_decay()
    assert not DeltaSchedule("linear").check_decay() and not DeltaSchedule("linear").conforming
    with pytest.raises(HypothesisError):
        DeltaSchedule("power", 1.5)
    with pytest.raises(ValueError):
        DeltaSchedule("cubic")


def test_linear_schedule_rejected(quartic, layer_problem):
    with pytest.raises(HypothesisError, match="schedule"):
        build_recovery_1d(layer_problem, DeltaSchedule("linear"), quartic)


def test_candidate_is_monotone_and_solves_the_ode(quartic, layer_problem):
    prob = layer_problem.with_eps(0.01, quartic)
    cand = build_recovery_1d(prob, spec=quartic)
    t = np.linspace(0, prob.weight.T, 5001)
    v = cand(t)
    assert np.all(np.diff(v) >= -1e-15) and cand.sign == 1.0
    assert v[0] == 0.0 and v[-1] == pytest.approx(prob.beta_eps, abs=1e-15)
    assert cand.ode_residual() <= 1e-8


def test_layer_duration_matches_time_map(quartic, layer_problem):
    ratios = []
    for eps in LADDER:
        prob = layer_problem.with_eps(eps, quartic)
        cand = build_recovery_1d(prob, spec=quartic)
        assert cand.t_eps == pytest.approx(cand.profile.time_to(prob.beta_eps), rel=1e-10)
        ratios.append(cand.t_eps / (eps * abs(math.log(eps))))
    assert max(ratios) < 2 * min(ratios)


def test_layer_duration_by_quadrature(quartic):
    eps, delta = 0.01, 1e-4
    layer = LayerMap.build(quartic, eps, delta, 0.0, 0.99)
    ref = integrate.quad(lambda r: eps / math.sqrt(delta + (1 - r * r) ** 2), 0.0, 0.99, epsabs=1e-14, limit=200)[0]
    assert layer.duration == pytest.approx(ref, rel=1e-11)


def test_constant_candidate(quartic):
    prob = WeightedProblem1D(Weight.linear(0.25, -0.25), 0.02, 0.5, 0.5, 0.5, 0.5)
    cand = build_recovery_1d(prob, spec=quartic)
    assert cand.t_eps == 0.0 and np.all(cand(np.linspace(0, 0.25, 11)) == 0.5)


def test_decreasing_branch(quartic):
    prob = WeightedProblem1D(Weight.linear(0.25, -0.25), 0.02, 0.9, 0.2, 0.9, 0.2)
    cand = build_recovery_1d(prob, spec=quartic)
    assert cand.sign == -1.0 and cand.profile is None
    v = cand(np.linspace(0, 0.25, 1001))
    assert np.all(np.diff(v) <= 1e-15) and v[-1] == pytest.approx(0.2)
    assert cand.ode_residual() <= 1e-8


def test_layer_wider_than_interval_rejected(quartic):
    prob = natural(Weight.linear(0.01, 0.0), 0.05, 0.0)
    with pytest.raises(HypothesisError, match="wider"):
        build_recovery_1d(prob, spec=quartic)


def test_energy_quadrature_agrees_with_discrete_energy(quartic, layer_problem):
    prob = layer_problem.with_eps(0.02, quartic)
    t = np.linspace(0, prob.weight.T, 200_001)
    cand = build_recovery_1d(prob, spec=quartic, grid=t)
    assert cand.energy(prob.weight) == pytest.approx(cand.discrete_energy(prob.weight), rel=1e-7)


def test_candidates_dominate_minimizers(quartic, layer_problem):
    for eps in LADDER:
        prob = layer_problem.with_eps(eps, quartic)
        sol = minimize_bvp(prob, quartic)
        cand = build_recovery_1d(prob, spec=quartic)
        g2_min = breakdown_from_energy(sol.energy, prob, quartic).g2
        assert cand.g2(prob) >= g2_min - 1e-9


def test_limsup_bound_along_ladder(quartic, layer_problem):
    reports = []
    for eps in LADDER + (0.002, 0.001):
        prob = layer_problem.with_eps(eps, quartic)
        l_grid = [l for l in (1, 2, 4, 8, 16) if l * eps <= prob.weight.T]
        reports.append(evaluate_limsup_bound(build_recovery_1d(prob, spec=quartic), prob, l_grid, quartic))
    assert all(r.bounded and r.target == pytest.approx(TARGET) for r in reports)
    g2 = [r.g2 for r in reports]
    assert all(b < a for a, b in zip(g2, g2[1:]))  # approaching the target from above
    assert ladder_limsup_ok(reports, 0.05 * abs(TARGET))
    assert recovery_g2_limit(reports) == pytest.approx(TARGET, rel=0.05)


def test_limsup_saturation_and_tail(quartic):
    eps = 0.001
    prob = natural(Weight.linear(0.25, -0.25), eps, 0.0)
    rep = evaluate_limsup_bound(build_recovery_1d(prob, spec=quartic), prob, [5, 10, 20, 40], quartic)
    # leading term -> omega'(0) int_0^inf 2 W(z) s ds, up to the certified tail and the regularisation
    assert abs(rep.saturation - TARGET) <= rep.tail_bound + 0.02 * abs(TARGET)
    assert rep.tail_bound == pytest.approx(0.25 * moment_tail_bound(quartic, compute_sigma(quartic, *default_thresholds(quartic)), 40.0))


def test_flat_weight_g2_vanishes(quartic):
    vals = []
    for eps in (0.01, 0.001):
        prob = WeightedProblem1D.boundary_layer(quartic, Weight.linear(0.25, 0.0), eps, 0.0, 1.5)
        rep = evaluate_limsup_bound(build_recovery_1d(prob, spec=quartic), prob, [1, 2, 4], quartic)
        assert rep.target == 0.0 and np.allclose(rep.leading, 0.0)
        vals.append(abs(rep.g2))
    assert vals[1] < vals[0]


def test_schedule_independent_limit(quartic, layer_problem):
    ladder = [1e-2 * 0.5**k for k in range(9)]
    _, power = recovery_limit(layer_problem, quartic, DeltaSchedule("power", 2), ladder)
    _, log = recovery_limit(layer_problem, quartic, DeltaSchedule("log", 2), ladder)
    assert abs(power - log) <= 0.05 * abs(TARGET)


def test_multi_transition_single_jump(quartic):
    prob = WeightedProblem1D(Weight.linear(1.0, 0.0), 0.005, -1.0, 1.0, -1.0, 1.0)
    res = multi_transition_recovery([0.5], prob, quartic)
    assert res.step.start == -1.0
    assert res.limit == pytest.approx(compute_cw(quartic))
    assert res.g1 == pytest.approx(8 / 3, rel=1e-3)
    t = np.linspace(0, 1, 2001)
    v = res(t)
    assert v[0] == -1.0 and v[-1] == pytest.approx(1.0)


def test_multi_transition_no_jumps(quartic):
    prob = WeightedProblem1D(Weight.linear(1.0, 0.0), 0.005, 0.0, 1.0, 0.0, 1.0)
    res = multi_transition_recovery([], prob, quartic)
    assert res.limit == pytest.approx(4 / 3)
    assert res.g1 == pytest.approx(4 / 3, rel=1e-3)


def test_multi_transition_two_jumps_converge(quartic):
    weight = Weight(1.0, lambda t: 1 + np.asarray(t, dtype=float), lambda t: 1 + 0 * np.asarray(t, dtype=float))
    limit = compute_cw(quartic) * (1.3 + 1.7)
    errs = []
    for eps in (0.01, 0.005, 0.0025):
        prob = natural(weight, eps, -1.0)
        res = multi_transition_recovery([0.3, 0.7], prob, quartic)
        assert res.limit == pytest.approx(limit)
        errs.append(abs(res.g1 - limit))
    assert errs[0] > errs[1] > errs[2] and errs[-1] < 1e-3


def test_multi_transition_overlap_reports_admissible_eps(quartic):
    prob = natural(Weight.linear(1.0, 0.0), 0.05, -1.0)
    with pytest.raises(HypothesisError, match="largest admissible"):
        multi_transition_recovery([0.5, 0.52], prob, quartic)


def test_recovery_2d_constant_data_matches_1d_fibres(quartic):
    disk, data, eps = Circle(1.0), BoundaryData(0.2), 0.02
    th = np.linspace(0, 2 * np.pi, 7)
    depth = np.linspace(0, 0.5, 101)
    foot, dd = np.meshgrid(th, depth, indexing="ij")
    rec = build_recovery_2d(disk, data, eps, DeltaSchedule(), quartic, foot, dd)
    assert rec.tangential.energy == 0.0
    cand = build_recovery_1d(natural(Weight.radial(1.0), eps, 0.2), spec=quartic)
    for row in rec.gap:
        assert np.max(np.abs(row - (1.0 - cand(depth)))) <= 1e-8


def test_recovery_2d_tangential_term_decays(quartic):
    disk, data = Circle(1.0), BoundaryData(0.2, 0.05, 1)
    scaled = []
    for eps in (0.04, 0.02, 0.01, 0.005):
        rec = build_recovery_2d(disk, data, eps, DeltaSchedule(), quartic, np.zeros(1), np.zeros(1))
        assert rec.tangential.finite
        scaled.append(rec.tangential.scaled)
    assert all(b < a for a, b in zip(scaled, scaled[1:]))
    # the scaled term behaves like C/|log eps|
    logs = [abs(math.log(e)) for e in (0.04, 0.02, 0.01, 0.005)]
    prod = np.array(scaled) * np.array(logs)
    assert prod.max() < 1.5 * prod.min()


def test_recovery_2d_rejects_layers_wider_than_tube(quartic):
    with pytest.raises(HypothesisError, match="exceeds the tube"):
        build_recovery_2d(Circle(1.0), BoundaryData(0.2), 0.3, DeltaSchedule(), quartic, np.zeros(1), np.zeros(1),
                          tube=0.2)
    with pytest.raises(HypothesisError, match="not admissible"):
        build_recovery_2d(Circle(1.0), BoundaryData(0.2), 0.01, DeltaSchedule(), quartic, np.zeros(1), np.zeros(1),
                          tube=0.95)


def test_recovery_2d_nonconstant_fibre_interpolation(quartic):
    ell, data, eps = Ellipse(2.0, 1.0), BoundaryData(0.2, 0.05, 3), 0.02
    th = np.linspace(0, 2 * np.pi, 700, endpoint=False)
    depth = np.full_like(th, 0.03)
    fine = build_recovery_2d(ell, data, eps, DeltaSchedule(), quartic, th, depth)
    interp = build_recovery_2d(ell, data, eps, DeltaSchedule(), quartic, th, depth, max_fibers=10)
    assert np.max(np.abs(fine.gap - interp.gap)) < 1e-8


@given(st.floats(-0.45, 0.95), st.sampled_from([0.04, 0.01, 0.003]))
def test_layer_ode_residual_property(alpha, eps):
    spec = PotentialSpec.quartic()
    layer = LayerMap.build(spec, eps, eps**2, alpha, 1.0)
    assert layer.ode_residual() <= 1e-8
    psi = regularized_psi(spec, alpha, eps**2, eps)
    assert layer.duration == pytest.approx(psi.t_eps, rel=1e-9)
