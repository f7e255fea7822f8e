"""Heteroclinic transition profiles, the curvature coefficient c2 and the
regularised time maps used by the recovery constructions.

The profile z' = W^{1/2}(z), z(0) = alpha approaches the right well
exponentially, so every integration here runs in the gap variable
``d = b - z``.  That keeps full relative precision deep into the tail.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import integrate
from scipy.interpolate import BPoly, CubicHermiteSpline, PchipInterpolator

from .errors import HypothesisError, SolverError
from .potential import PotentialSpec, compute_sigma, default_thresholds

_GL_X, _GL_W = np.polynomial.legendre.leggauss(10)


def _gauss_panels(f, edges: np.ndarray) -> np.ndarray:
    """Integral of ``f`` over each consecutive panel of ``edges`` (10-point Gauss)."""
    lo, hi = edges[:-1], edges[1:]
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    x = mid[:, None] + half[:, None] * _GL_X[None, :]
    return (f(x) * _GL_W[None, :]).sum(axis=1) * half


def _geometric_edges(top: float, floor: float, ratio: float) -> np.ndarray:
    """Decreasing edges top, top*ratio, ... down to ``floor``, then 0."""
    if top <= 0:
        return np.array([0.0])
    n = max(1, int(math.ceil(math.log(floor / top) / math.log(ratio)))) if floor < top else 1
    edges = top * ratio ** np.arange(n + 1)
    return np.append(edges[edges > floor * 0.999], 0.0)


def gap_time_integral(spec: PotentialSpec, d_hi: float, d_lo: float, delta: float, ratio: float = 0.9) -> float:
    """int_{b-d_hi}^{b-d_lo} ds / (delta + W(s))^{1/2} for delta > 0."""
    if d_hi <= d_lo:
        return 0.0
    floor = max(d_lo, 1e-6 * math.sqrt(delta))
    edges = _geometric_edges(d_hi, floor, ratio)
    edges = np.maximum(edges, d_lo)
    edges = np.unique(edges)[::-1]
    vals = _gauss_panels(lambda d: 1.0 / np.sqrt(delta + spec.w_gap(d)), edges[::-1])
    return float(vals.sum())


# ---------------------------------------------------------------------------
# Transition profile


@dataclass(frozen=True)
class TransitionProfile:
    """Samples of z_alpha on [0, t_max]; beyond t_max only the decay bounds are kept."""

    spec: PotentialSpec = field(repr=False)
    alpha: float
    t: np.ndarray = field(repr=False)
    gap: np.ndarray = field(repr=False)  # b - z at the samples
    sigma: float
    moment: float = field(default=math.nan)  # int_0^t_max 2 W(z) s ds
    tail_bound: float = field(default=math.nan)
    _dense: object = field(default=None, repr=False, compare=False)

    @property
    def t_max(self) -> float:
        return float(self.t[-1])

    @property
    def values(self) -> np.ndarray:
        return self.spec.b - self.gap

    def gap_at(self, t) -> np.ndarray:
        """b - z_alpha(t); zero (the asymptote) past the integration window."""
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ValueError("the profile is defined for t >= 0 only")
        out = np.zeros_like(t)
        inside = t <= self.t_max
        if self._dense is None:
            out[inside] = np.exp(np.interp(t[inside], self.t, np.log(np.maximum(self.gap, 1e-300))))
        else:
            out[inside] = np.exp(self._dense(t[inside])[0])
        return out

    def __call__(self, t) -> np.ndarray:
        return self.spec.b - self.gap_at(t)

    def gap_bounds(self, t) -> tuple[np.ndarray, np.ndarray]:
        """(lower, upper) exponential envelope for b - z_alpha(t)."""
        t = np.asarray(t, dtype=float)
        lower = (self.spec.b - self.alpha) * np.exp(-t / self.sigma)
        upper = self.spec.width * np.exp(-self.sigma * t)
        return lower, upper


def _profile_sigma(spec: PotentialSpec, sigma: float | None) -> float:
    return compute_sigma(spec) if sigma is None else float(sigma)


def moment_tail_bound(spec: PotentialSpec, sigma: float, t0: float) -> float:
    """Bound on int_{t0}^inf 2 W(z) s ds using W <= (b-z)^2/sigma^2 and the upper decay envelope."""
    k = 2 * sigma
    return 2 * spec.width**2 / sigma**2 * math.exp(-k * t0) * (k * t0 + 1) / k**2


def _window_for(spec: PotentialSpec, sigma: float, tol: float) -> float:
    t = 10.0
    while moment_tail_bound(spec, sigma, t) > 0.1 * tol:
        t *= 1.1
    return t


def solve_profile(
    spec: PotentialSpec,
    alpha: float,
    t_max: float | None = None,
    tol: float = 1e-10,
    sigma: float | None = None,
    samples_per_unit: int = 20,
) -> TransitionProfile:
    """Integrate z' = W^{1/2}(z) from alpha and cross-check against the inverse time map."""
    if not spec.a < alpha <= spec.b:
        raise ValueError("alpha must lie in (a, b]")
    if tol > 1e-8:
        raise ValueError("tol must be at most 1e-8")
    sig = _profile_sigma(spec, sigma)
    if t_max is None:
        t_max = _window_for(spec, sig, tol)
    n = max(2, int(samples_per_unit * t_max) + 1)
    t = np.linspace(0.0, t_max, n)
    d0 = spec.b - alpha
    if d0 == 0.0:
        return TransitionProfile(spec, alpha, t, np.zeros_like(t), sig, 0.0, 0.0)

    # state: log(gap), moment.  d(log d)/dt = -W^{1/2}(b-d)/d
    def rhs(s, y):
        d = math.exp(y[0])
        return [-float(spec.sqrt_w_gap(d)) / d, 2.0 * float(spec.w_gap(d)) * s]

    sol = integrate.solve_ivp(
        rhs,
        (0.0, t_max),
        [math.log(d0), 0.0],
        method="DOP853",
        rtol=1e-13,
        atol=[1e-13, 1e-3 * tol],
        dense_output=True,
        t_eval=t,
    )
    if sol.status != 0:
        last = float(sol.t[-1]) if sol.t.size else 0.0
        raise SolverError(f"profile integration stalled at t={last:.6g}: {sol.message}", {"t_last": last})
    gap = np.exp(sol.y[0])

    # Inverse route: t(z_i) = int_alpha^{z_i} dr / W^{1/2}(r), in u = log(gap).
    logs = np.log(gap)
    steps = _gauss_panels(lambda u: np.exp(u) / spec.sqrt_w_gap(np.exp(u)), logs[::-1])[::-1]
    t_inverse = np.concatenate([[0.0], np.cumsum(steps)])
    speed = spec.sqrt_w_gap(gap)
    mismatch = np.abs(speed * (t_inverse - t))
    if np.max(mismatch) > 10 * tol:
        i = int(np.argmax(mismatch))
        raise SolverError(
            f"forward and inverse profile routes disagree by {mismatch[i]:.2e} at t={t[i]:.4g}",
            {"t": float(t[i]), "mismatch": float(mismatch[i])},
        )
    dense = sol.sol
    return TransitionProfile(
        spec,
        float(alpha),
        t,
        gap,
        sig,
        moment=float(sol.y[1, -1]),
        tail_bound=moment_tail_bound(spec, sig, t_max),
        _dense=lambda s: dense(s),
    )


@dataclass
class DecayReport:
    passed: bool
    lower_margin: float  # min over samples of log(gap) - log(lower envelope)
    upper_margin: float  # min over samples of log(upper envelope) - log(gap)
    failures: list[tuple[float, str]]


def verify_decay_bounds(profile: TransitionProfile, sigma: float | None = None) -> DecayReport:
    """Check (b-alpha) e^{-t/sigma} <= b - z(t) <= (b-a) e^{-sigma t} at every sample."""
    sig = profile.sigma if sigma is None else sigma
    lo, hi = replace(profile, sigma=sig).gap_bounds(profile.t)
    gap = profile.gap
    slack = 1e-12
    failures: list[tuple[float, str]] = []
    bad_lo = gap < lo * (1 - slack)
    bad_hi = gap > hi * (1 + slack)
    failures += [(float(x), "below lower envelope") for x in profile.t[bad_lo]]
    failures += [(float(x), "above upper envelope") for x in profile.t[bad_hi]]
    with np.errstate(divide="ignore", invalid="ignore"):
        lg = np.log(np.where(gap > 0, gap, np.nan))
        lower_margin = float(np.nanmin(lg - np.log(lo))) if np.any(gap > 0) else -math.inf
        upper_margin = float(np.nanmin(np.log(hi) - lg)) if np.any(gap > 0) else -math.inf
    if np.any(gap <= 0) and profile.alpha < profile.spec.b:
        failures += [(float(x), "left the open interval (a, b)") for x in profile.t[gap <= 0]]
    return DecayReport(not failures, lower_margin, upper_margin, failures)


# ---------------------------------------------------------------------------
# Second-order coefficient


def c2_route_a(spec: PotentialSpec, alpha: float, tol: float = 1e-10, sigma: float | None = None) -> float:
    """First moment of the layer energy density, accumulated along the profile ODE."""
    if alpha == spec.b:
        return 0.0
    return solve_profile(spec, alpha, tol=tol, sigma=sigma).moment


def c2_route_b(spec: PotentialSpec, alpha: float) -> float:
    """Same coefficient by quadrature in the value variable only.

    int_alpha^b 2 W^{1/2}(r) t(r) dr integrated by parts becomes
    int_alpha^b d_W(r, b) / W^{1/2}(r) dr, whose integrand is bounded.
    """
    if alpha == spec.b:
        return 0.0

    def dist_to_b(d):
        return 2.0 * integrate.quad(lambda e: float(spec.sqrt_w_gap(e)), 0.0, d, epsabs=1e-15, epsrel=1e-13)[0]

    def integrand(d):
        if d == 0.0:
            return 0.0
        return dist_to_b(d) / float(spec.sqrt_w_gap(d))

    pts = [spec.b - spec.c] if 0 < spec.b - spec.c < spec.b - alpha else None
    val, _ = integrate.quad(integrand, 0.0, spec.b - alpha, points=pts, epsabs=1e-14, epsrel=1e-13, limit=200)
    return val


def coefficient_routes(spec: PotentialSpec, alpha: float, tol: float = 1e-10, sigma: float | None = None):
    """(route A, route B) values of c2(alpha)."""
    if not spec.a < alpha <= spec.b:
        raise ValueError("alpha must lie in (a, b]")
    return c2_route_a(spec, alpha, tol, sigma), c2_route_b(spec, alpha)


def second_order_coefficient(spec: PotentialSpec, alpha: float, tol: float = 1e-10, sigma: float | None = None) -> float:
    """c2(alpha), returned from the quadrature route after the dual-route check."""
    ra, rb = coefficient_routes(spec, alpha, tol, sigma)
    if abs(ra - rb) > 10 * tol:
        raise SolverError(f"c2 routes disagree at alpha={alpha}: {ra!r} vs {rb!r}", {"route_a": ra, "route_b": rb})
    return rb


def coefficient_table(spec: PotentialSpec, alphas, tol: float = 1e-10) -> list[dict]:
    sigma = compute_sigma(spec)
    rows = []
    for al in alphas:
        ra, rb = coefficient_routes(spec, float(al), tol, sigma)
        rows.append({"alpha": float(al), "c2_routeA": ra, "c2_routeB": rb, "discrepancy": abs(ra - rb)})
    return rows


# ---------------------------------------------------------------------------
# Regularised time map


@dataclass(frozen=True)
class RegularizedProfile:
    """Psi(r) = int_{alpha_eps}^r eps / (delta + W)^{1/2}, tabulated up to b."""

    spec: PotentialSpec = field(repr=False)
    alpha_eps: float
    delta_eps: float
    eps: float
    gap: np.ndarray = field(repr=False)  # decreasing gaps b - r at the table nodes
    psi: np.ndarray = field(repr=False)  # increasing Psi at the table nodes
    t_eps: float
    c0_fit: float

    @property
    def r(self) -> np.ndarray:
        return self.spec.b - self.gap

    def slope(self, r) -> np.ndarray:
        """dPsi/dr = eps / (delta + W(r))^{1/2}."""
        d = self.spec.b - np.asarray(r, dtype=float)
        return self.eps / np.sqrt(self.delta_eps + self.spec.w_gap(d))

    def __call__(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if self.psi.size < 2:
            return np.zeros_like(r)
        return CubicHermiteSpline(self.r, self.psi, self.slope(self.r))(r)

    def time_to(self, r: float) -> float:
        """Psi at a level r in [alpha_eps, b], by direct quadrature."""
        d_lo = self.spec.b - r
        return self.eps * gap_time_integral(self.spec, self.spec.b - self.alpha_eps, d_lo, self.delta_eps, 0.95)

    def inverse(self):
        """Inverse t -> r of Psi as a quintic Hermite interpolant.

        Slopes and curvatures at the table nodes are exact: r' = (delta+W)^{1/2}/eps
        and r'' = W'(r)/(2 eps^2).  Monotonicity is verified at interval
        midpoints; a PCHIP interpolant is used if that check ever fails.
        """
        t, r = self.psi, self.r
        if t.size < 2:
            return lambda s, nu=0: np.full_like(np.asarray(s, dtype=float), r[0] if nu == 0 else 0.0)
        d1 = 1.0 / self.slope(r)
        d2 = -self.spec.dw_gap(self.gap) / (2 * self.eps**2)
        poly = BPoly.from_derivatives(t, np.column_stack([r, d1, d2]))
        mid = 0.5 * (t[1:] + t[:-1])
        if np.all(poly(mid, 1) > 0) and np.all(np.diff(poly(np.sort(np.concatenate([t, mid])))) >= 0):
            return poly
        return PchipInterpolator(t, r)


def regularized_psi(
    spec: PotentialSpec,
    alpha_eps: float,
    delta_eps: float,
    eps: float,
    ratio: float = 0.97,
) -> RegularizedProfile:
    """Tabulate Psi on a gap grid refined geometrically toward the right well."""
    if not delta_eps > 0:
        raise ValueError("delta_eps must be positive")
    alpha_minus, _ = default_thresholds(spec)
    if not spec.a <= alpha_eps <= spec.b:
        raise ValueError("alpha_eps must lie in [a, b]")
    d0 = spec.b - alpha_eps
    if d0 == 0.0:
        return RegularizedProfile(spec, alpha_eps, delta_eps, eps, np.array([0.0]), np.array([0.0]), 0.0, 0.0)
    floor = 1e-7 * math.sqrt(delta_eps)
    edges = _geometric_edges(d0, floor, ratio)  # decreasing, ends at 0
    pieces = eps * _gauss_panels(lambda d: 1.0 / np.sqrt(delta_eps + spec.w_gap(d)), edges[::-1])[::-1]
    psi = np.concatenate([[0.0], np.cumsum(pieces)])
    t_eps = float(psi[-1])
    log_delta = abs(math.log(delta_eps)) if delta_eps != 1.0 else math.nan
    c0 = t_eps / (eps * log_delta) if log_delta and math.isfinite(log_delta) else math.nan
    return RegularizedProfile(spec, float(alpha_eps), float(delta_eps), float(eps), edges, psi, t_eps, c0)


# ---------------------------------------------------------------------------
# Structural estimates on the regularised integrals


def _exact_shell(r: float, lo_gap: float, hi_gap: float) -> float:
    """int over gaps [lo_gap, hi_gap] of (r + d^2)^{-1/2}."""
    return math.asinh(hi_gap / math.sqrt(r)) - math.asinh(lo_gap / math.sqrt(r))


@dataclass
class LogBoundRow:
    delta: float
    integral: float
    lower: float
    upper: float | None  # None when delta > sigma^2 (the simplified bound needs it)
    sharp_lower: float
    sharp_upper: float
    holds: bool
    printed_lower: float
    printed_upper: float
    printed_holds: bool


@dataclass
class LogBoundReport:
    sigma: float
    rows: list[LogBoundRow]

    @property
    def passed(self) -> bool:
        return all(r.holds for r in self.rows)

    @property
    def printed_form_passed(self) -> bool:
        return all(r.printed_holds for r in self.rows)

    def slope_ratios(self) -> list[float]:
        """integral / (-(1/2) log delta); tends to the local constant near b."""
        return [r.integral / (-0.5 * math.log(r.delta)) for r in self.rows]


def check_log_asymptotics(
    spec: PotentialSpec,
    delta_grid,
    alpha: float,
    beta: float,
    sigma: float | None = None,
) -> LogBoundReport:
    """Compare int_alpha^beta (delta + W)^{-1/2} with its logarithmic sandwich.

    Comparing W with (b-s)^2 gives
        sigma   * A(sigma^2 delta)  <=  I  <=  A(delta / sigma^2) / sigma,
    with A(r) = int (r + (b-s)^2)^{-1/2} ds in closed form ("sharp" columns),
    which simplifies for delta <= sigma^2 to
        -(sigma/2) log(sigma^2 delta) + sigma log(b-alpha) - sigma log(1 + 2(b-beta)/(sigma delta^{1/2}))
            <= I <= -(1/(2 sigma)) log(delta/sigma^2) + (1/sigma) log(1 + 2(b-a)).
    The columns ``printed_*`` hold the same expressions with sigma and 1/sigma
    interchanged; that variant is evaluated for reference only.
    """
    sig = compute_sigma(spec) if sigma is None else float(sigma)
    alpha_minus, _ = default_thresholds(spec)
    if not (alpha <= beta <= spec.b):
        raise ValueError("need alpha <= beta <= b")
    b, L = spec.b, spec.width
    rows = []
    for delta in delta_grid:
        delta = float(delta)
        if not 0 < delta <= 1 / sig:
            raise ValueError("each delta must lie in (0, 1/sigma]")
        integral = gap_time_integral(spec, b - alpha, b - beta, delta)
        sharp_lo = sig * _exact_shell(sig**2 * delta, b - beta, b - alpha)
        sharp_hi = _exact_shell(delta / sig**2, b - beta, b - alpha) / sig
        lower = -(sig / 2) * math.log(sig**2 * delta) - sig * math.log1p(2 * (b - beta) / (sig * math.sqrt(delta)))
        lower += sig * math.log(b - alpha) if beta > alpha else -math.inf
        upper = None
        if delta <= sig**2:
            upper = -(0.5 / sig) * math.log(delta / sig**2) + math.log1p(2 * L) / sig
        p_lower = -(0.5 / sig) * math.log(delta / sig**2) - math.log1p(2 * (b - beta) / (sig * math.sqrt(delta))) / sig
        p_lower += math.log(b - alpha) / sig if beta > alpha else -math.inf
        p_upper = -(sig / 2) * math.log(sig**2 * delta) + sig * math.log1p(2 * L)
        slack = 1e-12 * max(1.0, abs(integral))
        holds = sharp_lo - slack <= integral <= sharp_hi + slack and lower - slack <= integral
        if upper is not None:
            holds = holds and integral <= upper + slack
        printed = p_lower - slack <= integral <= p_upper + slack
        rows.append(LogBoundRow(delta, integral, lower, upper, sharp_lo, sharp_hi, holds, p_lower, p_upper, printed))
    return LogBoundReport(sig, rows)


def _difference_integrand(spec: PotentialSpec, delta: float, w):
    root = np.sqrt(delta + w)
    return delta / ((root + np.sqrt(w)) ** 2 * root)


def difference_integral(spec: PotentialSpec, delta: float, lo: float, hi: float) -> float:
    """int_lo^hi [2/((delta+W)^{1/2} + W^{1/2}) - 1/(delta+W)^{1/2}] ds, evaluated in its positive form."""
    if hi <= lo:
        return 0.0
    total = 0.0
    c = spec.c
    # right part in the gap to b, left part in the distance to a
    if hi > c:
        d_hi, d_lo = spec.b - max(lo, c), spec.b - hi
        edges = np.unique(np.maximum(_geometric_edges(d_hi, max(d_lo, 1e-6 * math.sqrt(delta)), 0.9), d_lo))
        total += float(_gauss_panels(lambda d: _difference_integrand(spec, delta, spec.w_gap(d)), edges).sum())
    if lo < c:
        e_hi, e_lo = min(hi, c) - spec.a, lo - spec.a
        edges = np.unique(np.maximum(_geometric_edges(e_hi, max(e_lo, 1e-6 * math.sqrt(delta)), 0.9), e_lo))
        total += float(_gauss_panels(lambda e: _difference_integrand(spec, delta, spec.W(spec.a + e)), edges).sum())
    return total


@dataclass
class DifferenceReport:
    deltas: list[float]
    values: list[float]
    bound: float  # delta-uniform constant 1/sigma from the quadratic comparison

    @property
    def sup(self) -> float:
        return max(self.values) if self.values else 0.0

    @property
    def passed(self) -> bool:
        if not self.values:
            return True
        bounded = self.sup <= self.bound
        # no divergence: the small-delta half of the grid does not exceed the rest by more than noise
        half = len(self.values) // 2
        tail = max(self.values[half:]) if half else self.sup
        head = max(self.values[: max(half, 1)])
        return bounded and tail <= head * 1.05 + 1e-12


def check_difference_bound(
    spec: PotentialSpec,
    delta_grid,
    alpha_eps: float,
    beta_eps: float,
    sigma: float | None = None,
) -> DifferenceReport:
    if not spec.a <= alpha_eps <= beta_eps <= spec.b:
        raise ValueError("need a <= alpha_eps <= beta_eps <= b")
    sig = compute_sigma(spec) if sigma is None else float(sigma)
    deltas = [float(d) for d in delta_grid]
    if any(not 0 < d < 1 for d in deltas):
        raise ValueError("each delta must lie in (0, 1)")
    vals = [difference_integral(spec, d, alpha_eps, beta_eps) for d in deltas]
    return DifferenceReport(deltas, vals, 1.0 / sig)
