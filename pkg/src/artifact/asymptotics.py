"""Epsilon ladders, coefficient extraction and the predicted expansion
F_eps = eps c1 + eps^2 c2 + o(eps^2)."""

from __future__ import annotations

import math
import pickle
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import ConfigError, HypothesisError
from .geometry import BoundaryData, BoundaryGeometry, Circle, boundary_integral
from .oned import GridSpec, WeightedProblem1D, breakdown_from_energy, solve_refined
from .potential import PotentialSpec, compute_alpha_bar, geodesic_distance
from .profile import c2_route_b, second_order_coefficient
from .recovery import DeltaSchedule, LayerMap, build_recovery_1d

DEFAULT_LADDER_2D = (0.08, 0.04, 0.02, 0.01, 0.005)
DEFAULT_LADDER_1D = (0.04, 0.02, 0.01, 0.005, 0.002)


@dataclass(frozen=True)
class EpsilonLadder:
    eps: tuple[float, ...] = DEFAULT_LADDER_2D

    def __post_init__(self):
        e = tuple(float(x) for x in self.eps)
        object.__setattr__(self, "eps", e)
        if len(e) < 4:
            raise ConfigError(f"need >= 4 ladder entries, got {len(e)}")
        if any(x <= 0 for x in e) or any(b >= a for a, b in zip(e, e[1:])):
            raise ConfigError("ladder must be positive and strictly decreasing")

    def __iter__(self):
        return iter(self.eps)

    def __len__(self):
        return len(self.eps)


# ---------------------------------------------------------------------------
# Predicted coefficients


def _check_regime(data: BoundaryData, spec: PotentialSpec) -> None:
    if data.g_max >= spec.b and data.constant and data.g0 == spec.b:
        return
    alpha_bar = compute_alpha_bar(spec)
    if data.g_min <= alpha_bar:
        raise HypothesisError(f"min g = {data.g_min:g} must exceed the balance level {alpha_bar:.6g}")


def theory_c1(geometry: BoundaryGeometry, data: BoundaryData, spec: PotentialSpec, n: int = 256) -> float:
    """int over the boundary of d_W(g, b)."""
    _check_regime(data, spec)
    if data.constant:
        return geodesic_distance(spec, data.g0, spec.b) * boundary_integral(geometry, lambda t: np.ones_like(t))
    dist = np.vectorize(lambda g: geodesic_distance(spec, float(g), spec.b))
    return boundary_integral(geometry, lambda t: dist(data(t)), n=n)


def theory_c2(geometry: BoundaryGeometry, data: BoundaryData, spec: PotentialSpec, n: int = 256) -> float:
    """int over the boundary of kappa(y) c2(g(y))."""
    _check_regime(data, spec)
    if data.constant:
        c2 = 0.0 if data.g0 == spec.b else second_order_coefficient(spec, data.g0)
        return c2 * boundary_integral(geometry, geometry.curvature)
    coef = np.vectorize(lambda g: 0.0 if g >= spec.b else c2_route_b(spec, float(g)))
    return boundary_integral(geometry, lambda t: geometry.curvature(t) * coef(data(t)), n=n)


# ---------------------------------------------------------------------------
# Extrapolation


@dataclass(frozen=True)
class RichardsonResult:
    limit: float
    order: float
    uncertainty: float
    monotone: bool


def _fit_order(e: np.ndarray, x: np.ndarray) -> float | None:
    """Exponent p with x = L + A e^p through three points, or None."""
    d1, d2 = x[0] - x[1], x[1] - x[2]
    if d1 == 0 or d2 == 0 or d1 * d2 < 0:
        return None
    target = d1 / d2

    def f(p):
        return (e[0] ** p - e[1] ** p) / (e[1] ** p - e[2] ** p) - target

    lo, hi = 0.05, 6.0
    if f(lo) * f(hi) > 0:
        return None
    return brentq(f, lo, hi, xtol=1e-12)


def _limit_with_order(e, x, p) -> float:
    a = (x[-2] - x[-1]) / (e[-2] ** p - e[-1] ** p)
    return float(x[-1] - a * e[-1] ** p)


def richardson_limit(eps, values, order: float | None = None) -> RichardsonResult:
    """Limit of values(eps) = L + A eps^p; p fitted on the three finest points unless given."""
    e = np.asarray(eps, dtype=float)
    x = np.asarray(values, dtype=float)
    idx = np.argsort(-e)
    e, x = e[idx], x[idx]
    diffs = np.diff(x)
    monotone = bool(np.all(diffs >= 0) or np.all(diffs <= 0))
    p = order
    if p is None:
        p = _fit_order(e[-3:], x[-3:])
        if p is None:
            p = 1.0
            monotone = False
    limit = _limit_with_order(e, x, p)
    # spread between this estimate and the one from the next-coarser window
    if e.size >= 4:
        q = order if order is not None else (_fit_order(e[-4:-1], x[-4:-1]) or p)
        prev = _limit_with_order(e[:-1], x[:-1], q)
        unc = abs(limit - prev)
    else:
        unc = abs(limit - x[-1])
    return RichardsonResult(limit, float(p), float(unc), monotone)


@dataclass
class ExpansionReport:
    eps: list[float]
    energies: list[float]
    c1_theory: float
    c2_theory: float | None
    c2_sequence: list[float]
    c2_hat: float
    c2_uncertainty: float
    order: float
    c1_hat: float
    c2_hat_lsq: float
    c2_lsq_uncertainty: float
    flags: list[str] = field(default_factory=list)

    @property
    def c1_rel_error(self) -> float:
        return abs(self.c1_hat - self.c1_theory) / abs(self.c1_theory) if self.c1_theory else abs(self.c1_hat)

    @property
    def c2_rel_error(self) -> float:
        if self.c2_theory in (None, 0.0):
            return abs(self.c2_hat)
        return abs(self.c2_hat - self.c2_theory) / abs(self.c2_theory)

    @property
    def estimators_agree(self) -> bool:
        return abs(self.c2_hat - self.c2_hat_lsq) <= 3 * (self.c2_uncertainty + self.c2_lsq_uncertainty) + 1e-9

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(c1_rel_error=self.c1_rel_error, c2_rel_error=self.c2_rel_error, estimators_agree=self.estimators_agree)
        return d

    def table(self) -> str:
        lines = [f"{'eps':>10} {'F_eps':>22} {'c2_hat(eps)':>22}"]
        for e, f, c in zip(self.eps, self.energies, self.c2_sequence):
            lines.append(f"{e:>10.4g} {f:>22.15g} {c:>22.15g}")
        lines.append(f"c1: theory {self.c1_theory:.10g}  fitted {self.c1_hat:.10g}  rel.err {self.c1_rel_error:.3g}")
        th = "n/a" if self.c2_theory is None else f"{self.c2_theory:.10g}"
        lines.append(f"c2: theory {th}  extrapolated {self.c2_hat:.10g} (+-{self.c2_uncertainty:.2g}, p={self.order:.3g})"
                     f"  least squares {self.c2_hat_lsq:.10g} (+-{self.c2_lsq_uncertainty:.2g})")
        if self.flags:
            lines.append("flags: " + "; ".join(self.flags))
        return "\n".join(lines)


def extract_coefficients(eps, energies, c1_theory: float, c2_theory: float | None = None) -> ExpansionReport:
    """c2_hat(eps) = (F - eps c1) / eps^2 extrapolated in eps, plus a least-squares cross-check."""
    e = np.asarray(eps, dtype=float)
    F = np.asarray(energies, dtype=float)
    if e.size < 4:
        raise ConfigError(f"need >= 4 ladder entries, got {e.size}")
    seq = (F - e * c1_theory) / e**2
    rich = richardson_limit(e, seq)
    flags = [] if rich.monotone else ["pre-asymptotic ladder"]
    X = np.column_stack([e, e**2, e**3])
    coef, rss, _, _ = np.linalg.lstsq(X, F, rcond=None)
    dof = e.size - 3
    resid = F - X @ coef
    s2 = float(resid @ resid) / dof if dof > 0 else 0.0
    cov = s2 * np.linalg.inv(X.T @ X)
    # model sensitivity: refit without the coarsest entry
    order = np.argsort(-e)
    keep = order[1:]
    spread = 0.0
    if keep.size >= 3:
        spread = abs(float(np.linalg.lstsq(X[keep], F[keep], rcond=None)[0][1]) - float(coef[1]))
    lsq_unc = max(math.sqrt(max(cov[1, 1], 0.0)), spread)
    report = ExpansionReport(
        list(map(float, e)), list(map(float, F)), float(c1_theory), c2_theory, list(map(float, seq)),
        rich.limit, rich.uncertainty, rich.order, float(coef[0]), float(coef[1]), lsq_unc,
        flags,
    )
    if not report.estimators_agree:
        report.flags.append("estimators disagree")
    return report


# ---------------------------------------------------------------------------
# One-dimensional ladder


@dataclass
class OneDLadderRow:
    eps: float
    g2_coarse: float
    g2_fine: float
    g2_extrapolated: float
    g2_recovery: float
    nodes: int


@dataclass
class OneDLadderReport:
    rows: list[OneDLadderRow]
    limit: RichardsonResult
    target: float

    @property
    def rel_error(self) -> float:
        return abs(self.limit.limit - self.target) / abs(self.target)

    @property
    def sandwich(self) -> bool:
        return all(r.g2_recovery >= r.g2_extrapolated - 1e-9 for r in self.rows)


def run_oned_ladder(
    template: WeightedProblem1D,
    spec: PotentialSpec,
    ladder=DEFAULT_LADDER_1D,
    grid_spec: GridSpec = GridSpec(),
    schedule: DeltaSchedule = DeltaSchedule(),
) -> OneDLadderReport:
    rows = []
    for eps in ladder:
        prob = template.with_eps(eps, spec)
        ref = solve_refined(prob, spec, grid_spec)
        g2 = lambda e: breakdown_from_energy(e, prob, spec).g2
        cand = build_recovery_1d(prob, schedule, spec)
        rows.append(OneDLadderRow(eps, g2(ref.coarse), g2(ref.fine), g2(ref.extrapolated), cand.g2(prob),
                                  int(ref.solution.grid.size)))
    e = [r.eps for r in rows]
    limit = richardson_limit(e, [r.g2_extrapolated for r in rows])
    target = float(template.weight.domega(0.0)) * second_order_coefficient(spec, template.alpha)
    return OneDLadderReport(rows, limit, target)


def recovery_limit(
    template: WeightedProblem1D, spec: PotentialSpec, schedule: DeltaSchedule, ladder
) -> tuple[list[float], float]:
    """G2 of recovery candidates along a ladder and their extrapolated limit.

    The log schedule leaves an error of order 1/log^2 eps, so the limit is fitted
    with the basis (1, 1/log^2 eps, eps) rather than a power of eps.
    """
    vals = [build_recovery_1d(template.with_eps(e, spec), schedule, spec).g2(template.with_eps(e, spec)) for e in ladder]
    e = np.asarray(ladder, dtype=float)
    X = np.column_stack([np.ones_like(e), 1.0 / np.log(e) ** 2, e])
    coef = np.linalg.lstsq(X, np.asarray(vals), rcond=None)[0]
    return vals, float(coef[0])


# ---------------------------------------------------------------------------
# Two-dimensional ladder


def recovery_energy_2d(geometry: BoundaryGeometry, data: BoundaryData, eps: float, spec: PotentialSpec,
                       schedule: DeltaSchedule = DeltaSchedule(), n_theta: int = 64) -> float:
    """Exact energy of the fibre-wise recovery field (normal part plus tangential report)."""
    from .recovery import _tangential_report

    delta = schedule.delta(eps)
    shortcut = data.constant and isinstance(geometry, Circle)  # every fibre identical
    if shortcut:
        theta = np.zeros(1)
    else:
        theta = geometry.arclength_grid(n_theta)
    normal = []
    for th in theta:
        layer = LayerMap.build(spec, eps, delta, float(data(th)), spec.b)
        normal.append(layer.energy(lambda t, th=th: geometry.jacobian(np.full_like(t, th), t)))
    if shortcut:
        total = normal[0] * boundary_integral(geometry, lambda t: np.ones_like(t))
    else:
        total = boundary_integral(geometry, np.asarray(normal))
    return total + _tangential_report(geometry, data, spec, eps, delta).energy


@dataclass
class LadderEntry2D:
    eps: float
    energy_coarse: float
    energy_fine: float
    energy: float  # h-extrapolated
    energy_recovery: float
    diagnostics: dict
    oracle_gap: float | None
    flags: list[str]


def solve_entry_2d(args) -> LadderEntry2D:
    """One ladder entry: refined solve, recovery energy, diagnostics (picklable for process pools)."""
    from . import pde2d

    geometry, data, eps, spec, grid_spec, n_theta = args
    ref = pde2d.solve_refined_2d(geometry, data, eps, spec, grid_spec, n_theta)
    fld = ref.fine
    lam = 0.5
    conf_delta = 5 * eps * abs(math.log(eps))
    decay_delta = 2 * eps
    diags = {
        "maximum_principle": pde2d.check_maximum_principle(fld, spec),
        "exponential_decay": pde2d.check_exponential_decay(fld, decay_delta, spec),
        "gradient_bound": pde2d.check_gradient_bound(fld),
        "level_set": pde2d.check_level_set_confinement(fld, lam, conf_delta),
    }
    diag_dict = {k: {"passed": v.passed, **v.values} for k, v in diags.items()}
    oracle = None
    if isinstance(geometry, Circle) and data.constant:
        rep = pde2d.radial_reduction_oracle(geometry, data, eps, spec, grid_spec, field=fld)
        oracle = rep.relative_gap
        diag_dict["symmetry_defect"] = pde2d.radial_symmetry_defect(fld)
    rec = recovery_energy_2d(geometry, data, eps, spec)
    return LadderEntry2D(eps, ref.coarse.energy, fld.energy, ref.extrapolated, rec, diag_dict, oracle,
                         ref.coarse.flags + fld.flags)


def _picklable(obj) -> bool:
    try:
        pickle.dumps(obj)
    except (pickle.PicklingError, AttributeError, TypeError):
        return False
    return True


@dataclass
class VerifyReport:
    entries: list[LadderEntry2D]
    expansion: ExpansionReport
    recovery_expansion: ExpansionReport
    verdict: dict[str, bool]

    @property
    def passed(self) -> bool:
        return all(self.verdict.values())


def verify_expansion(
    geometry: BoundaryGeometry,
    data: BoundaryData,
    spec: PotentialSpec,
    ladder: EpsilonLadder = EpsilonLadder(),
    grid_spec: GridSpec = GridSpec(),
    n_theta: int = 32,
    jobs: int = 1,
    c1_tol: float = 0.01,
    c2_tol: float = 0.10,
    oracle_tol: float = 0.005,
) -> VerifyReport:
    c1 = theory_c1(geometry, data, spec)
    c2 = theory_c2(geometry, data, spec)
    args = [(geometry, data, e, spec, grid_spec, n_theta) for e in ladder]
    if jobs > 1 and not _picklable(spec):
        warnings.warn("potential cannot be sent to worker processes; running serially", RuntimeWarning, stacklevel=2)
        jobs = 1
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            entries = list(pool.map(solve_entry_2d, args))
    else:
        entries = [solve_entry_2d(a) for a in args]
    entries.sort(key=lambda en: -en.eps)
    eps = [en.eps for en in entries]
    exp = extract_coefficients(eps, [en.energy for en in entries], c1, c2)
    rec = extract_coefficients(eps, [en.energy_recovery for en in entries], c1, c2)
    verdict = verdict_2d(entries, exp, rec, c1_tol, c2_tol, oracle_tol)
    return VerifyReport(entries, exp, rec, verdict)


def verdict_2d(entries, exp: ExpansionReport, rec: ExpansionReport, c1_tol, c2_tol, oracle_tol) -> dict[str, bool]:
    from .pde2d import ladder_stable

    mus = [en.diagnostics["exponential_decay"].get("mu_fit", math.nan) for en in entries]
    grads = [en.diagnostics["gradient_bound"]["scaled_max_interior"] for en in entries]
    finite_mus = [m for m in mus if math.isfinite(m)]
    verdict = {
        "c1": exp.c1_rel_error <= c1_tol,
        "c2": exp.c2_rel_error <= c2_tol,
        "radial_oracle": all(en.oracle_gap is None or en.oracle_gap <= oracle_tol for en in entries),
        "maximum_principle": all(en.diagnostics["maximum_principle"]["passed"] for en in entries),
        "decay": all(en.diagnostics["exponential_decay"]["passed"] for en in entries)
        and (len(finite_mus) < 2 or ladder_stable(finite_mus, 0.25)),
        "gradient": all(np.isfinite(grads)) and max(grads) <= 2 * min(g for g in grads if g > 0) if any(grads) else True,
        "level_sets": all(en.diagnostics["level_set"]["passed"] for en in entries),
        "squeeze": all(m <= r + 1e-9 * abs(r) for m, r in zip(exp.c2_sequence, rec.c2_sequence)),
    }
    return verdict
