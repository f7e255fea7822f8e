"""Explicit recovery sequences built from the regularised time map.

A layer travels from a level r0 to a level r1 along eps v' = +-(delta + W(v))^{1/2}.
Its time map tau(r) = int_{r0}^{r} eps / (delta + W)^{1/2} |ds| is finite because
delta > 0, so every layer has a finite width and can be glued to constants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.interpolate import BarycentricInterpolator, BPoly
from scipy.optimize import nnls

from .errors import HypothesisError
from .geometry import BoundaryData, BoundaryGeometry, max_tubular_radius
from .oned import StepFunction, Weight, WeightedProblem1D, breakdown_from_energy, first_order_energy, Discretization
from .potential import PotentialSpec, compute_sigma, default_thresholds, geodesic_distance
from .profile import RegularizedProfile, _geometric_edges, moment_tail_bound, regularized_psi

_GL_X, _GL_W = np.polynomial.legendre.leggauss(10)


# ---------------------------------------------------------------------------
# Regularisation schedules


@dataclass(frozen=True)
class DeltaSchedule:
    """delta_eps = eps^m (power), eps / |log eps|^m (log) or eps (linear)."""

    kind: str = "power"
    m: float = 2.0

    def __post_init__(self):
        if self.kind not in ("power", "log", "linear"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.kind in ("power", "log") and self.m < 2:
            raise HypothesisError("power and log schedules need m >= 2")

    def delta(self, eps: float) -> float:
        if not 0 < eps < 1:
            raise ValueError("eps must lie in (0, 1)")
        if self.kind == "power":
            return eps**self.m
        if self.kind == "log":
            return eps / abs(math.log(eps)) ** self.m
        return eps

    @property
    def conforming(self) -> bool:
        """delta_eps / eps -> 0, the decay needed for the second-order remainder."""
        return self.kind != "linear"

    def check_decay(self, eps_grid=(1e-2, 1e-3, 1e-4, 1e-5)) -> bool:
        ratios = [self.delta(e) / e for e in eps_grid]
        return all(r2 < r1 for r1, r2 in zip(ratios, ratios[1:])) and ratios[-1] < 0.5

    @property
    def label(self) -> str:
        return "linear" if self.kind == "linear" else f"{self.kind}(m={self.m:g})"


# ---------------------------------------------------------------------------
# Layers


def _travel_edges(spec: PotentialSpec, r0: float, r1: float, delta: float, ratio: float) -> np.ndarray:
    """Panel edges from r0 to r1, graded geometrically in the distance to the nearest well."""
    lo, hi = min(r0, r1), max(r0, r1)
    if lo == hi:
        return np.array([r0])
    floor = 1e-7 * math.sqrt(delta)
    right = spec.b - _geometric_edges(spec.b - spec.c, floor, ratio)
    left = spec.a + _geometric_edges(spec.c - spec.a, floor, ratio)
    pts = np.concatenate([left, right, [lo, hi]])
    edges = np.unique(pts[(pts >= lo) & (pts <= hi)])
    return edges if r1 > r0 else edges[::-1]


@dataclass(frozen=True)
class LayerMap:
    """Time map of one monotone layer r0 -> r1 and its quintic Hermite inverse."""

    spec: PotentialSpec = field(repr=False)
    eps: float
    delta: float
    r0: float
    r1: float
    edges: np.ndarray = field(repr=False)  # levels in travel order
    tau: np.ndarray = field(repr=False)  # elapsed time at the edges
    _inverse: object = field(repr=False, default=None)

    @classmethod
    def build(cls, spec: PotentialSpec, eps: float, delta: float, r0: float, r1: float, ratio: float = 0.97) -> "LayerMap":
        edges = _travel_edges(spec, r0, r1, delta, ratio)
        if edges.size < 2:
            return cls(spec, eps, delta, r0, r1, edges, np.zeros(1), None)
        f = lambda r: eps / np.sqrt(delta + spec.W(r))
        lo, hi = edges[:-1], edges[1:]
        half = 0.5 * (hi - lo)
        x = 0.5 * (hi + lo)[:, None] + half[:, None] * _GL_X
        pieces = np.abs((f(x) * _GL_W).sum(axis=1) * half)
        tau = np.concatenate([[0.0], np.cumsum(pieces)])
        sign = 1.0 if r1 > r0 else -1.0
        d1 = sign * np.sqrt(delta + spec.W(edges)) / eps
        d2 = spec.dW(edges) / (2 * eps**2)
        inverse = BPoly.from_derivatives(tau, np.column_stack([edges, d1, d2]))
        return cls(spec, eps, delta, r0, r1, edges, tau, inverse)

    @property
    def duration(self) -> float:
        return float(self.tau[-1])

    @property
    def sign(self) -> float:
        return 1.0 if self.r1 > self.r0 else -1.0 if self.r1 < self.r0 else 0.0

    def value(self, elapsed, nu: int = 0) -> np.ndarray:
        """Level reached after ``elapsed`` time (clamped at both ends)."""
        s = np.asarray(elapsed, dtype=float)
        if self._inverse is None:
            return np.full_like(s, self.r0) if nu == 0 else np.zeros_like(s)
        inside = np.clip(s, 0.0, self.duration)
        out = self._inverse(inside, nu)
        if nu == 0:
            return np.where(s >= self.duration, self.r1, np.where(s <= 0, self.r0, out))
        return np.where((s < 0) | (s > self.duration), 0.0, out)

    def integrate(self, integrand) -> float:
        """int over the travelled levels of integrand(r, tau(r)) |dr|; tau is evaluated exactly."""
        if self.edges.size < 2:
            return 0.0
        eps, delta, spec = self.eps, self.delta, self.spec
        lo, hi = self.edges[:-1], self.edges[1:]
        half = 0.5 * (hi - lo)
        x = 0.5 * (hi + lo)[:, None] + half[:, None] * _GL_X
        sub = lo[:, None, None] + (x - lo[:, None])[:, :, None] * (0.5 * (1 + _GL_X))
        part = np.abs((eps / np.sqrt(delta + spec.W(sub)) * _GL_W).sum(-1) * 0.5 * (x - lo[:, None]))
        tau_x = self.tau[:-1, None] + part
        vals = integrand(x, tau_x)
        return float(np.abs((vals * _GL_W).sum(axis=1) * half).sum())

    def energy(self, omega, t0: float = 0.0, direction: float = 1.0) -> float:
        """int (W + eps^2 v'^2) omega dt over the layer placed at t0 (running forward or backward)."""
        eps, delta, spec = self.eps, self.delta, self.spec
        return self.integrate(lambda r, tau: eps * (2 * spec.W(r) + delta) / np.sqrt(delta + spec.W(r))
                              * omega(t0 + direction * tau))

    def ode_residual(self, n: int = 4001) -> float:
        """sup |eps v' - sign (delta + W(v))^{1/2}| on the layer."""
        if self._inverse is None:
            return 0.0
        s = np.linspace(0.0, self.duration, n)
        v, dv = self._inverse(s), self._inverse(s, 1)
        return float(np.max(np.abs(self.eps * dv - self.sign * np.sqrt(self.delta + self.spec.W(v)))))


# ---------------------------------------------------------------------------
# One-dimensional recovery candidate


@dataclass
class RecoveryCandidate1D:
    """v_eps = layer on [0, T_eps], glued to the constant beta_eps afterwards."""

    layer: LayerMap
    profile: RegularizedProfile | None  # increasing branch only; independent check of T_eps
    alpha_eps: float
    beta_eps: float
    T: float
    schedule: DeltaSchedule
    grid: np.ndarray | None = field(default=None, repr=False)
    gap: np.ndarray | None = field(default=None, repr=False)  # b - v at the grid nodes

    @property
    def eps(self) -> float:
        return self.layer.eps

    @property
    def delta(self) -> float:
        return self.layer.delta

    @property
    def t_eps(self) -> float:
        return self.layer.duration

    @property
    def sign(self) -> float:
        return self.layer.sign

    def __call__(self, t) -> np.ndarray:
        return self.layer.value(t)

    def derivative(self, t) -> np.ndarray:
        return self.layer.value(t, 1)

    def ode_residual(self, n: int = 4001) -> float:
        return self.layer.ode_residual(n)

    def energy(self, weight: Weight) -> float:
        """Exact G_eps of the candidate: layer part plus W(beta_eps) times the remaining weight."""
        spec = self.layer.spec
        val = self.layer.energy(weight.omega)
        w_end = float(spec.W(self.beta_eps))
        if w_end > 0 and self.t_eps < self.T:
            val += w_end * integrate.quad(lambda s: float(weight(s)), self.t_eps, self.T, limit=200)[0]
        return val

    def discrete_energy(self, weight: Weight, grid: np.ndarray | None = None) -> float:
        grid = self.grid if grid is None else grid
        gap = self.layer.spec.b - self(grid)
        return Discretization.on(grid, weight).energy(gap, self.eps, self.layer.spec)

    def g2(self, problem: WeightedProblem1D) -> float:
        return breakdown_from_energy(self.energy(problem.weight), problem, self.layer.spec).g2

    def csv_rows(self, n: int = 401) -> list[dict]:
        t = np.linspace(0.0, self.T, n) if self.grid is None else self.grid
        return [{"t": float(s), "v": float(v)} for s, v in zip(t, self(t))]


def build_recovery_1d(
    problem: WeightedProblem1D,
    schedule: DeltaSchedule = DeltaSchedule(),
    spec: PotentialSpec | None = None,
    grid: np.ndarray | None = None,
) -> RecoveryCandidate1D:
    """Candidate of the one-dimensional limsup construction (natural end: travel to b)."""
    if spec is None:
        raise ValueError("a potential spec is required")
    alpha_minus, _ = default_thresholds(spec)
    beta_eps = spec.b if problem.beta_eps is None else problem.beta_eps
    if not (alpha_minus <= problem.alpha_eps <= spec.b and alpha_minus <= beta_eps <= spec.b):
        raise HypothesisError("boundary values must lie in [alpha_-, b]")
    if not schedule.check_decay():
        raise HypothesisError(f"schedule {schedule.label} violates delta_eps / eps -> 0")
    eps = problem.eps
    delta = schedule.delta(eps)
    layer = LayerMap.build(spec, eps, delta, problem.alpha_eps, beta_eps)
    profile = regularized_psi(spec, problem.alpha_eps, delta, eps) if beta_eps > problem.alpha_eps else None
    if layer.duration > problem.weight.T:
        raise HypothesisError("layer wider than the interval; decrease eps")
    cand = RecoveryCandidate1D(layer, profile, problem.alpha_eps, beta_eps, problem.weight.T, schedule)
    if grid is not None:
        cand.grid = np.asarray(grid, dtype=float)
        cand.gap = spec.b - cand(cand.grid)
    return cand


# ---------------------------------------------------------------------------
# Limsup bound along l


@dataclass
class LimsupReport:
    eps: float
    g2: float
    target: float
    l_grid: np.ndarray
    leading: np.ndarray
    residual: np.ndarray
    coefficients: tuple[float, float, float]  # A, B, C of the remainder model
    misfit: float
    saturation: float  # leading term at the largest l
    tail_bound: float  # certified bound on the omitted tail at the largest l

    @property
    def bounded(self) -> bool:
        return all(math.isfinite(c) for c in self.coefficients) and math.isfinite(self.misfit)


def _moment_integral(candidate: RecoveryCandidate1D, upto: float) -> float:
    """int_0^upto 2 W(v(t)) t dt, for upto in the t variable."""
    spec = candidate.layer.spec
    T_e = candidate.t_eps
    edges = candidate.layer.tau
    stop = min(upto, T_e)
    e = np.append(edges[edges < stop], stop)
    total = 0.0
    if e.size >= 2:
        lo, hi = e[:-1], e[1:]
        half = 0.5 * (hi - lo)
        x = 0.5 * (hi + lo)[:, None] + half[:, None] * _GL_X
        total = float(((2 * spec.W(candidate(x)) * x) * _GL_W).sum(axis=1) @ half)
    if upto > T_e:
        total += float(spec.W(candidate.beta_eps)) * (upto**2 - T_e**2)
    return total


def evaluate_limsup_bound(
    candidate: RecoveryCandidate1D,
    problem: WeightedProblem1D,
    l_grid,
    spec: PotentialSpec,
    target: float | None = None,
) -> LimsupReport:
    """G2 of the candidate against omega'(0) int_0^l 2W(p(s)) s ds with p(s) = v(eps s)."""
    eps = candidate.eps
    l_grid = np.asarray(l_grid, dtype=float)
    slope0 = float(problem.weight.domega(0.0))
    g2 = candidate.g2(problem)
    leading = np.array([slope0 * _moment_integral(candidate, l * eps) / eps**2 for l in l_grid])
    residual = g2 - leading
    sigma = compute_sigma(spec, *default_thresholds(spec))
    basis = np.column_stack([
        np.exp(-2 * sigma * l_grid) * (2 * sigma * l_grid + 1),
        eps ** (2 * problem.gamma) * l_grid,
        np.full_like(l_grid, eps * abs(math.log(eps))),
    ])
    coef, misfit = nnls(basis, np.maximum(residual, 0.0))
    if target is None:
        from .profile import second_order_coefficient

        target = slope0 * second_order_coefficient(spec, problem.alpha)
    tail = abs(slope0) * moment_tail_bound(spec, sigma, float(l_grid[-1]))
    return LimsupReport(eps, g2, target, l_grid, leading, residual, tuple(float(c) for c in coef),
                        float(misfit), float(leading[-1]), float(tail))


def recovery_g2_limit(reports: list[LimsupReport]) -> float:
    """Limit of G2 along the ladder, fitted with the basis (1, eps |log eps|, eps).

    The regularised layer overshoots the optimal profile by O(eps |log eps|)
    for power schedules, so the raw finite-eps values sit well above the limit.
    """
    e = np.array([r.eps for r in reports])
    X = np.column_stack([np.ones_like(e), e * np.abs(np.log(e)), e])
    return float(np.linalg.lstsq(X, np.array([r.g2 for r in reports]), rcond=None)[0][0])


def ladder_limsup_ok(reports: list[LimsupReport], tol: float) -> bool:
    """The extrapolated G2 of the candidates stays below the target plus tol."""
    if len(reports) < 3:
        raise ValueError("need >= 3 ladder entries to extrapolate")
    return recovery_g2_limit(reports) <= reports[0].target + tol


# ---------------------------------------------------------------------------
# Multi-transition recovery


@dataclass
class PlacedLayer:
    layer: LayerMap
    anchor: float
    direction: float  # +1 runs forward from anchor, -1 backward

    @property
    def span(self) -> tuple[float, float]:
        w = self.layer.duration
        return (self.anchor, self.anchor + w) if self.direction > 0 else (self.anchor - w, self.anchor)


@dataclass
class MultiTransitionResult:
    step: StepFunction
    eps: float
    delta: float
    layers: list[PlacedLayer]
    energy: float
    limit: float
    T: float
    a: float
    b: float

    @property
    def g1(self) -> float:
        return self.energy / self.eps

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        levels = np.asarray(_alternating_levels(self.step, self.b, self.a))
        out = levels[np.searchsorted(np.asarray(self.step.jumps), t, side="right")]
        for pl in self.layers:
            lo, hi = pl.span
            mask = (t >= lo) & (t <= hi)
            out[mask] = pl.layer.value(pl.direction * (t[mask] - pl.anchor))
        return out


def _alternating_levels(step: StepFunction, b: float, a: float) -> list[float]:
    levels = [step.start]
    for _ in step.jumps:
        levels.append(a if levels[-1] == b else b)
    return levels


def _assemble(step, problem, spec, eps, delta) -> list[PlacedLayer]:
    levels = _alternating_levels(step, spec.b, spec.a)
    layers = [PlacedLayer(LayerMap.build(spec, eps, delta, problem.alpha_eps, step.start), 0.0, 1.0)]
    for k, tk in enumerate(step.jumps):
        left, right = levels[k], levels[k + 1]
        layers.append(PlacedLayer(LayerMap.build(spec, eps, delta, spec.c, left), tk, -1.0))
        layers.append(PlacedLayer(LayerMap.build(spec, eps, delta, spec.c, right), tk, 1.0))
    if problem.beta_eps is not None:
        layers.append(PlacedLayer(LayerMap.build(spec, eps, delta, problem.beta_eps, levels[-1]), problem.weight.T, -1.0))
    return layers


def _fits(layers: list[PlacedLayer], T: float) -> bool:
    spans = [pl.span for pl in layers if pl.layer.duration > 0]
    spans.sort()
    if spans and (spans[0][0] < 0 or spans[-1][1] > T):
        return False
    return all(s1[1] <= s2[0] + 1e-15 for s1, s2 in zip(spans, spans[1:]) if not (s1[1] == s2[0]))


def multi_transition_recovery(
    jump_times,
    problem: WeightedProblem1D,
    spec: PotentialSpec,
    schedule: DeltaSchedule = DeltaSchedule(),
    start: float | None = None,
) -> MultiTransitionResult:
    """Glue boundary layers and heteroclinic layers (centred on spec.c at each jump)."""
    jumps = tuple(sorted(float(t) for t in jump_times))
    T = problem.weight.T
    if any(not 0 < t < T for t in jumps) or len(set(jumps)) != len(jumps):
        raise HypothesisError("jump times must be distinct points of (0, T)")
    if start is None:
        d_a = geodesic_distance(spec, spec.a, problem.alpha)
        d_b = geodesic_distance(spec, problem.alpha, spec.b)
        start = spec.a if d_a < d_b else spec.b
    step = StepFunction(start, jumps)
    eps = problem.eps
    delta = schedule.delta(eps)
    layers = _assemble(step, problem, spec, eps, delta)
    if not _fits(layers, T):
        trial = eps
        for _ in range(40):
            trial /= 2
            if _fits(_assemble(step, problem, spec, trial, schedule.delta(trial)), T):
                break
        raise HypothesisError(f"layers overlap at eps={eps:g}; largest admissible dyadic eps is about {trial:.3g}")
    omega = problem.weight.omega
    energy = sum(pl.layer.energy(omega, pl.anchor, pl.direction) for pl in layers)
    limit = first_order_energy(step, problem, spec)
    return MultiTransitionResult(step, eps, delta, layers, energy, limit, T, spec.a, spec.b)


# ---------------------------------------------------------------------------
# Two-dimensional recovery field


@dataclass
class TangentialReport:
    energy: float  # E_tau = int eps^2 |grad_tau u|^2 over the tube
    grad_g_sq: float  # int |d_s g|^2 ds
    second_order_share: float  # E_tau / eps^2
    scaled: float  # E_tau / (eps^3 |log eps| int |d_s g|^2)

    @property
    def finite(self) -> bool:
        return math.isfinite(self.energy)


@dataclass
class Recovery2D:
    gap: np.ndarray  # b - u at the requested points
    eps: float
    delta: float
    tube: float
    t_eps_max: float
    tangential: TangentialReport
    fibers: dict = field(repr=False, default_factory=dict)

    def values(self, b: float) -> np.ndarray:
        return b - self.gap


def _tangential_report(geometry, data, spec, eps, delta, n_theta: int = 64) -> TangentialReport:
    if data.constant:
        return TangentialReport(0.0, 0.0, 0.0, 0.0)
    theta = geometry.arclength_grid(n_theta)
    speed = geometry.speed(theta)
    g = data(theta)
    gs = data.dtheta(theta) / speed
    total, grad_sq = 0.0, 0.0
    for th, sp, gv, gsv in zip(theta, speed, g, gs):
        layer = LayerMap.build(spec, eps, delta, float(gv), spec.b)
        inner = layer.integrate(lambda r, tau: eps**3 * np.sqrt(delta + spec.W(r))
                                / geometry.jacobian(np.full_like(tau, th), tau))
        total += sp * gsv**2 / (delta + float(spec.W(gv))) * inner
        grad_sq += sp * gsv**2
    dth = 2 * math.pi / n_theta
    total *= dth
    grad_sq *= dth
    scaled = total / (eps**3 * abs(math.log(eps)) * grad_sq) if grad_sq > 0 else 0.0
    return TangentialReport(float(total), float(grad_sq), float(total / eps**2), float(scaled))


def build_recovery_2d(
    geometry: BoundaryGeometry,
    data: BoundaryData,
    eps: float,
    schedule: DeltaSchedule,
    spec: PotentialSpec,
    foot: np.ndarray,
    depth: np.ndarray,
    tube: float | None = None,
    max_fibers: int = 512,
) -> Recovery2D:
    """u_eps = v_eps(y, dist) in the tube, b beyond; ``foot``/``depth`` locate the sample points."""
    limit = max_tubular_radius(geometry)
    tube = limit if tube is None else tube
    if not 0 < tube <= limit:
        raise HypothesisError(f"tube radius {tube:g} not admissible (max {limit:g})")
    alpha_minus, _ = default_thresholds(spec)
    if data.g_min < alpha_minus or data.g_max > spec.b:
        raise HypothesisError("boundary data must take values in [alpha_-, b]")
    delta = schedule.delta(eps)
    foot = np.asarray(foot, dtype=float)
    depth = np.asarray(depth, dtype=float)
    alphas = data(foot)
    uniq, inv = np.unique(np.round(alphas, 13), return_inverse=True)
    gap = np.zeros_like(depth)
    fibers = {}
    if uniq.size <= max_fibers:
        for k, al in enumerate(uniq):
            layer = LayerMap.build(spec, eps, delta, float(al), spec.b)
            fibers[float(al)] = layer
            sel = inv.ravel() == k
            gap.ravel()[sel] = spec.b - layer.value(depth.ravel()[sel])
        t_max = max(l.duration for l in fibers.values())
    else:
        nodes = 0.5 * (data.g_min + data.g_max) + 0.5 * (data.g_max - data.g_min) * np.cos(np.pi * (np.arange(25) + 0.5) / 25)
        layers = [LayerMap.build(spec, eps, delta, float(al), spec.b) for al in nodes]
        table = np.array([spec.b - l.value(depth.ravel()) for l in layers])
        interp = BarycentricInterpolator(nodes, table, axis=0)
        flat = np.array([interp(a)[i] for i, a in enumerate(alphas.ravel())]) if depth.size < 2000 else \
            _diag_interp(nodes, table, alphas.ravel())
        gap = np.clip(flat, 0.0, spec.width).reshape(depth.shape)
        t_max = max(l.duration for l in layers)
    if t_max > tube:
        raise HypothesisError(f"layer width {t_max:.3g} exceeds the tube radius {tube:.3g}; decrease eps")
    report = _tangential_report(geometry, data, spec, eps, delta)
    return Recovery2D(gap, eps, delta, tube, t_max, report, fibers)


def _diag_interp(nodes: np.ndarray, table: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Column-wise barycentric interpolation: value of column j at abscissa x[j]."""
    w = np.ones(nodes.size)
    for j in range(nodes.size):
        w[j] = 1.0 / np.prod(nodes[j] - np.delete(nodes, j))
    diff = x[None, :] - nodes[:, None]
    exact = np.isclose(diff, 0.0, atol=1e-15)
    diff[exact] = 1.0
    coef = w[:, None] / diff
    out = (coef * table).sum(0) / coef.sum(0)
    hit = exact.any(0)
    if hit.any():
        out[hit] = table[np.argmax(exact[:, hit], axis=0), np.where(hit)[0]]
    return out
