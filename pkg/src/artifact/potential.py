"""Double-well potentials, their structural checks and well constants.

A potential is stored as three vectorised callables (W, W', W'') plus the
wells ``a < b`` and the interior critical point ``c``.  Everything that needs
precision close to the right well goes through the *gap* variable
``d = b - s``, for which :meth:`PotentialSpec.w_gap` and friends avoid the
cancellation in ``W(b - d)`` when ``d`` is tiny.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, optimize

from .errors import HypothesisError

ArrayFn = Callable[[np.ndarray], np.ndarray]

# Gauss-Legendre nodes on [0, 1] for the Taylor remainder of W near the well.
_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


@dataclass(frozen=True)
class PotentialSpec:
    """A double-well potential with wells ``a < b`` and saddle ``c`` of W'."""

    a: float
    b: float
    c: float
    w: ArrayFn = field(repr=False)
    dw: ArrayFn = field(repr=False)
    d2w: ArrayFn = field(repr=False)
    scale: float | None = None  # set for the builtin quartic only
    name: str = "custom"

    # -- constructors -----------------------------------------------------
    @classmethod
    def quartic(cls, scale: float = 1.0, a: float = -1.0, b: float = 1.0) -> "PotentialSpec":
        """W(s) = scale * (s - a)^2 (s - b)^2."""
        if not a < b:
            raise HypothesisError("degenerate wells: need a < b")
        if not scale > 0:
            raise HypothesisError("quartic scale must be positive")
        lam = float(scale)
        return cls(
            a=float(a),
            b=float(b),
            c=0.5 * (a + b),
            w=lambda s: lam * (s - a) ** 2 * (s - b) ** 2,
            dw=lambda s: 2 * lam * (s - a) * (s - b) * (2 * s - a - b),
            d2w=lambda s: 2 * lam * ((s - b) ** 2 + 4 * (s - a) * (s - b) + (s - a) ** 2),
            scale=lam,
            name="quartic",
        )

    @classmethod
    def from_callables(
        cls,
        w: ArrayFn,
        dw: ArrayFn,
        d2w: ArrayFn,
        a: float,
        b: float,
        c: float | None = None,
        name: str = "custom",
    ) -> "PotentialSpec":
        """Wrap a user potential; ``c`` defaults to the root of W' in (a, b)."""
        if not a < b:
            raise HypothesisError("degenerate wells: need a < b")
        if c is None:
            lo, hi = a + 1e-9 * (b - a), b - 1e-9 * (b - a)
            try:
                c = optimize.brentq(lambda s: float(dw(np.float64(s))), lo, hi, xtol=1e-14)
            except ValueError as exc:
                raise HypothesisError("W' has no sign change in (a, b)") from exc
        return cls(a=float(a), b=float(b), c=float(c), w=w, dw=dw, d2w=d2w, name=name)

    def __reduce__(self):
        # the quartic closes over lambdas; rebuild it from its parameters
        if self.scale is not None:
            return (PotentialSpec.quartic, (self.scale, self.a, self.b))
        return super().__reduce__()

    # -- evaluation -------------------------------------------------------
    def W(self, s):
        return self.w(np.asarray(s, dtype=float))

    def dW(self, s):
        return self.dw(np.asarray(s, dtype=float))

    def d2W(self, s):
        return self.d2w(np.asarray(s, dtype=float))

    def sqrt_w(self, s):
        """W^{1/2}, exact for the quartic so that it stays accurate at the wells."""
        s = np.asarray(s, dtype=float)
        if self.scale is not None:
            return math.sqrt(self.scale) * np.abs((s - self.a) * (s - self.b))
        return np.sqrt(np.maximum(self.w(s), 0.0))

    @property
    def width(self) -> float:
        return self.b - self.a

    def w_gap(self, d):
        """W(b - d), accurate in relative terms for small |d|."""
        d = np.asarray(d, dtype=float)
        if self.scale is not None:
            return self.scale * d**2 * (self.width - d) ** 2
        # W(b-d) = d^2 * int_0^1 (1-t) W''(b - t d) dt  for the small-gap branch
        small = np.abs(d) < 1e-3 * self.width
        taylor = d**2 * np.tensordot(
            _GL_W * (1 - _GL_X), self.d2w(self.b - np.multiply.outer(_GL_X, d)), axes=1
        )
        return np.where(small, taylor, self.w(self.b - d))

    def dw_gap(self, d):
        """d/dd W(b - d) = -W'(b - d)."""
        d = np.asarray(d, dtype=float)
        if self.scale is not None:
            L = self.width
            return 2 * self.scale * d * (L - d) * (L - 2 * d)
        small = np.abs(d) < 1e-3 * self.width
        taylor = d * np.tensordot(_GL_W, self.d2w(self.b - np.multiply.outer(_GL_X, d)), axes=1)
        return np.where(small, taylor, -self.dw(self.b - d))

    def d2w_gap(self, d):
        d = np.asarray(d, dtype=float)
        return self.d2w(self.b - d)

    def sqrt_w_gap(self, d):
        d = np.asarray(d, dtype=float)
        if self.scale is not None:
            return math.sqrt(self.scale) * np.abs(d * (self.width - d))
        return np.sqrt(np.maximum(self.w_gap(d), 0.0))

    def max_abs_d2w(self, n: int = 4001) -> float:
        """max |W''| over [a, b] on a sampling grid (stabilisation constant)."""
        s = np.linspace(self.a, self.b, n)
        return float(np.max(np.abs(self.d2W(s))))


# ---------------------------------------------------------------------------
# Hypothesis validation


@dataclass
class CheckResult:
    name: str
    passed: bool
    witness: float | None = None
    detail: str = ""


@dataclass
class ValidationReport:
    checks: list[CheckResult]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[CheckResult]:
        return [c for c in self.checks if not c.passed]

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "checks": [
                {"name": c.name, "passed": c.passed, "witness": c.witness, "detail": c.detail}
                for c in self.checks
            ],
        }


def validate_hypotheses(spec: PotentialSpec, grid_size: int = 4000) -> ValidationReport:
    """Grid checks of the structural hypotheses on W.

    Returns one entry per hypothesis; failing entries carry a witnessing point.
    """
    if grid_size < 1000:
        raise ValueError("grid_size must be at least 1000")
    if not spec.a < spec.b:
        raise HypothesisError("degenerate wells: need a < b")
    a, b, c, L = spec.a, spec.b, spec.c, spec.width
    checks: list[CheckResult] = []
    tol = 1e-12 * max(1.0, float(np.max(np.abs(spec.W(np.array([a - L, b + L]))))))

    def add(name, ok, witness=None, detail=""):
        checks.append(CheckResult(name, bool(ok), None if ok else witness, detail))

    wa, wb = float(spec.W(a)), float(spec.W(b))
    add("W has a zero at a", abs(wa) <= tol, a, f"W(a)={wa:.3e}")
    add("W has a zero at b", abs(wb) <= tol, b, f"W(b)={wb:.3e}")

    s = np.linspace(a - L, b + L, grid_size)
    s = s[(np.abs(s - a) > 1e-6 * L) & (np.abs(s - b) > 1e-6 * L)]
    ws = spec.W(s)
    bad = np.flatnonzero(ws <= 0)
    add("W positive away from the wells", bad.size == 0, float(s[bad[0]]) if bad.size else None)

    add("W''(a) > 0", spec.d2W(a) > 0, a)
    add("W''(b) > 0", spec.d2W(b) > 0, b)
    add("a < c < b", a < c < b, c)
    add("W''(c) < 0", a < c < b and spec.d2W(c) < 0, c)

    inner = np.linspace(a, b, grid_size)[1:-1]
    dws = spec.dW(inner)
    left = inner < c - 1e-9 * L
    right = inner > c + 1e-9 * L
    bad_l = np.flatnonzero(left & (dws <= 0))
    bad_r = np.flatnonzero(right & (dws >= 0))
    add("W' > 0 on (a, c)", bad_l.size == 0, float(inner[bad_l[0]]) if bad_l.size else None)
    add("W' < 0 on (c, b)", bad_r.size == 0, float(inner[bad_r[0]]) if bad_r.size else None)

    # W' -> -inf / +inf at -inf / +inf, sampled at growing offsets.
    offsets = 10 * L * np.array([1.0, 2.0, 4.0])
    lo_vals = spec.dW(a - offsets)
    hi_vals = spec.dW(b + offsets)
    add(
        "W' -> -inf at -inf",
        bool(np.all(lo_vals < 0) and np.all(np.diff(lo_vals) < 0)),
        float(a - offsets[0]),
    )
    add(
        "W' -> +inf at +inf",
        bool(np.all(hi_vals > 0) and np.all(np.diff(hi_vals) > 0)),
        float(b + offsets[0]),
    )
    outer = np.concatenate([np.linspace(a - L, a, grid_size // 4)[:-1], np.linspace(b, b + L, grid_size // 4)[1:]])
    d_out = spec.dW(outer)
    bad_o = np.flatnonzero(((outer < a) & (d_out >= 0)) | ((outer > b) & (d_out <= 0)))
    add("W' has no zeros outside [a, b]", bad_o.size == 0, float(outer[bad_o[0]]) if bad_o.size else None)
    return ValidationReport(checks)


def require_valid(spec: PotentialSpec) -> None:
    report = validate_hypotheses(spec, 2000)
    if not report.passed:
        first = report.failures()[0]
        raise HypothesisError(f"{first.name} (witness {first.witness})")


# ---------------------------------------------------------------------------
# Geodesic distance and well constants


def _sqrt_w_integral(spec: PotentialSpec, lo: float, hi: float) -> float:
    if hi <= lo:
        return 0.0
    pts = [p for p in (spec.a, spec.c, spec.b) if lo < p < hi]
    val, _ = integrate.quad(
        lambda s: float(spec.sqrt_w(s)), lo, hi, points=pts or None, epsabs=1e-13, epsrel=1e-13, limit=200
    )
    return val


def geodesic_distance(spec: PotentialSpec, r: float, s: float) -> float:
    """d_W(r, s) = 2 |int_r^s W^{1/2}|; infinite unless one end sits in a well."""
    if r not in (spec.a, spec.b) and s not in (spec.a, spec.b):
        return math.inf
    lo, hi = min(r, s), max(r, s)
    return 2.0 * _sqrt_w_integral(spec, lo, hi)


def compute_cw(spec: PotentialSpec) -> float:
    return geodesic_distance(spec, spec.a, spec.b)


def phi_balance(spec: PotentialSpec, alpha: float) -> float:
    """d_W(a, alpha) - d_W(alpha, b); strictly increasing on [a, b]."""
    return geodesic_distance(spec, spec.a, alpha) - geodesic_distance(spec, alpha, spec.b)


def compute_alpha_bar(spec: PotentialSpec) -> float:
    """The balanced value where the two wells are equally far away."""
    lo, hi = spec.a, spec.b
    # bisection keeps the guarantee of a bracketing root at every step
    flo = phi_balance(spec, lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = phi_balance(spec, mid)
        if fm == 0.0 or hi - lo < 1e-15 * spec.width:
            return mid
        if (fm < 0) == (flo < 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def check_b_unique_minimizer(spec: PotentialSpec, g_min: float) -> bool:
    """Sufficient condition for the constant b to minimise the first-order limit."""
    if not spec.a < g_min <= spec.b:
        raise ValueError("g_min must lie in (a, b]")
    if g_min == spec.b:
        return True
    return g_min > compute_alpha_bar(spec)


def default_thresholds(spec: PotentialSpec) -> tuple[float, float]:
    """Separation thresholds a + L/4 and b - L/4."""
    return spec.a + 0.25 * spec.width, spec.b - 0.25 * spec.width


def check_thresholds(spec: PotentialSpec, alpha_minus: float, beta_minus: float) -> None:
    mid = 0.5 * (spec.a + spec.b)
    if not (spec.a < alpha_minus < min(spec.c, mid) and max(spec.c, mid) < beta_minus < spec.b):
        raise HypothesisError(
            f"thresholds ({alpha_minus}, {beta_minus}) must separate the wells from c and (a+b)/2"
        )


def _sigma_holds(q_near_b: np.ndarray, q_near_a: np.ndarray, sigma: float) -> bool:
    s2 = sigma * sigma
    return bool(
        np.all(q_near_b >= s2) and np.all(q_near_b <= 1 / s2) and np.all(q_near_a >= s2) and np.all(q_near_a <= 1 / s2)
    )


def sigma_quotients(spec: PotentialSpec, alpha_minus: float, beta_minus: float, per_unit: int = 10_000):
    """W(s)/(b-s)^2 on [alpha_-, b+1] and W(s)/(s-a)^2 on [a-1, beta_-]."""
    nb = max(1000, int(per_unit * (spec.b + 1 - alpha_minus)))
    na = max(1000, int(per_unit * (beta_minus - spec.a + 1)))
    d_b = spec.b - np.linspace(alpha_minus, spec.b + 1, nb)
    d_b = d_b[np.abs(d_b) > 1e-12]
    q_b = spec.w_gap(d_b) / d_b**2
    s_a = np.linspace(spec.a - 1, beta_minus, na)
    e = s_a - spec.a
    keep = np.abs(e) > 1e-12
    s_a, e = s_a[keep], e[keep]
    if spec.scale is not None:
        q_a = spec.scale * (s_a - spec.b) ** 2
    else:
        q_a = spec.W(s_a) / e**2
    # include the exact limits at the wells
    q_b = np.append(q_b, 0.5 * float(spec.d2W(spec.b)))
    q_a = np.append(q_a, 0.5 * float(spec.d2W(spec.a)))
    return q_b, q_a


def compute_sigma(
    spec: PotentialSpec,
    alpha_minus: float | None = None,
    beta_minus: float | None = None,
    per_unit: int = 10_000,
) -> float:
    """Largest sigma in (0, 1] with sigma^2 d^2 <= W <= d^2 / sigma^2 near both wells.

    Certified on the sampling grid only (bisection to 1e-6, keeping the
    admissible end of the bracket).
    """
    dam, dbm = default_thresholds(spec)
    alpha_minus = dam if alpha_minus is None else alpha_minus
    beta_minus = dbm if beta_minus is None else beta_minus
    check_thresholds(spec, alpha_minus, beta_minus)
    q_b, q_a = sigma_quotients(spec, alpha_minus, beta_minus, per_unit)
    if _sigma_holds(q_b, q_a, 1.0):
        return 1.0
    lo, hi = 0.0, 1.0
    while hi - lo > 1e-6:
        mid = 0.5 * (lo + hi)
        if _sigma_holds(q_b, q_a, mid):
            lo = mid
        else:
            hi = mid
    if lo <= 1e-8:
        raise HypothesisError("no admissible sigma: W is not quadratic near its wells")
    return lo


def decay_rate_mu(spec: PotentialSpec, rho: float, n: int = 20_001) -> float:
    """Barrier decay rate: mu^2 = 1/2 * inf over [b-rho, b) of (W'(b) - W'(s))/(b - s).

    Uses the infimum; the comparison argument needs the smallest slope.
    """
    if not 0 < rho < spec.b - spec.c:
        raise ValueError("rho must lie in (0, b - c)")
    d = np.linspace(0.0, rho, n)[1:]
    # (W'(b) - W'(s))/(b - s) with s = b - d, written through the gap derivative
    quotient = spec.dw_gap(d) / d
    quotient = np.append(quotient, float(spec.d2W(spec.b)))
    low = float(np.min(quotient))
    if low <= 0:
        raise HypothesisError("difference quotient of W' is not positive near b")
    return math.sqrt(0.5 * low)


@dataclass(frozen=True)
class WellConstants:
    sigma: float
    cW: float
    alpha_bar: float
    alpha_minus: float
    beta_minus: float
    mu_rho: dict[float, float]

    def to_dict(self) -> dict:
        return {
            "sigma": self.sigma,
            "cW": self.cW,
            "alpha_bar": self.alpha_bar,
            "alpha_minus": self.alpha_minus,
            "beta_minus": self.beta_minus,
            "mu_rho": {repr(k): v for k, v in self.mu_rho.items()},
        }


def well_constants(
    spec: PotentialSpec,
    alpha_minus: float | None = None,
    beta_minus: float | None = None,
    rhos: tuple[float, ...] | None = None,
) -> WellConstants:
    require_valid(spec)
    dam, dbm = default_thresholds(spec)
    alpha_minus = dam if alpha_minus is None else alpha_minus
    beta_minus = dbm if beta_minus is None else beta_minus
    if rhos is None:
        span = spec.b - spec.c
        rhos = tuple(round(f * span, 12) for f in (0.01, 0.1, 0.25, 0.5, 0.9))
    return WellConstants(
        sigma=compute_sigma(spec, alpha_minus, beta_minus),
        cW=compute_cw(spec),
        alpha_bar=compute_alpha_bar(spec),
        alpha_minus=alpha_minus,
        beta_minus=beta_minus,
        mu_rho={r: decay_rate_mu(spec, r) for r in rhos},
    )
