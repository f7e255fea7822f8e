"""Planar boundary geometry in tubular coordinates.

Curves are parametrised counter-clockwise by theta in [0, 2 pi).  The map
Phi(theta, t) = y(theta) + t nu(theta) uses the inward unit normal nu, and the
curvature is *defined* as kappa = d/dt det J_Phi at t = 0 (Jacobian taken
with respect to arclength and depth).  Under this convention a disk of
radius R has kappa = -1/R: inward shells shrink.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import HypothesisError

TWO_PI = 2.0 * math.pi


class BoundaryGeometry(ABC):
    kind: str = "curve"
    closed: bool = True

    @abstractmethod
    def point(self, theta) -> np.ndarray:
        """Boundary points, shape (..., 2)."""

    @abstractmethod
    def d1(self, theta) -> np.ndarray: ...

    @abstractmethod
    def d2(self, theta) -> np.ndarray: ...

    def speed(self, theta) -> np.ndarray:
        return np.linalg.norm(self.d1(theta), axis=-1)

    def tangent(self, theta) -> np.ndarray:
        d = self.d1(theta)
        return d / np.linalg.norm(d, axis=-1)[..., None]

    def inward_normal(self, theta) -> np.ndarray:
        tx, ty = np.moveaxis(self.tangent(theta), -1, 0)
        return np.stack([-ty, tx], axis=-1)

    def curvature(self, theta) -> np.ndarray:
        """kappa = d/dt det J_Phi(theta, 0); negative on convex arcs."""
        p1, p2 = self.d1(theta), self.d2(theta)
        cross = p1[..., 0] * p2[..., 1] - p1[..., 1] * p2[..., 0]
        return -cross / self.speed(theta) ** 3

    def phi(self, theta, t) -> np.ndarray:
        theta, t = np.broadcast_arrays(np.asarray(theta, float), np.asarray(t, float))
        return self.point(theta) + t[..., None] * self.inward_normal(theta)

    def jacobian(self, theta, t) -> np.ndarray:
        """det J_Phi in (arclength, depth) coordinates: exactly 1 + kappa t for plane curves."""
        return 1.0 + self.curvature(theta) * np.asarray(t, dtype=float)

    def numeric_jacobian(self, theta, t, h: float = 1e-6) -> np.ndarray:
        """Finite-difference det J_Phi, normalised by the parametrisation speed."""
        theta = np.asarray(theta, dtype=float)
        t = np.asarray(t, dtype=float)
        d_theta = (self.phi(theta + h, t) - self.phi(theta - h, t)) / (2 * h)
        d_t = (self.phi(theta, t + h) - self.phi(theta, t - h)) / (2 * h)
        # orientation: (tangent, inward normal) is positively oriented
        det = d_theta[..., 0] * d_t[..., 1] - d_theta[..., 1] * d_t[..., 0]
        return det / self.speed(theta)

    def arclength_grid(self, n: int) -> np.ndarray:
        return np.linspace(0.0, TWO_PI, n, endpoint=False)

    def closest_point(self, x: np.ndarray, iters: int = 30) -> tuple[np.ndarray, np.ndarray]:
        """Foot parameter and distance to the boundary for points x of shape (..., 2)."""
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, 2)
        samples = self.arclength_grid(1024)
        pts = self.point(samples)
        theta = np.empty(flat.shape[0])
        for start in range(0, flat.shape[0], 4096):
            chunk = flat[start:start + 4096]
            d2 = ((chunk[:, None, :] - pts[None, :, :]) ** 2).sum(axis=-1)
            theta[start:start + 4096] = samples[np.argmin(d2, axis=1)]
        for _ in range(iters):
            diff = self.point(theta) - flat
            p1, p2 = self.d1(theta), self.d2(theta)
            f = (diff * p1).sum(-1)
            fp = (p1 * p1).sum(-1) + (diff * p2).sum(-1)
            step = np.where(np.abs(fp) > 1e-14, f / fp, 0.0)
            step = np.clip(step, -0.1, 0.1)
            theta = theta - step
            if np.max(np.abs(step)) < 1e-14:
                break
        theta = np.mod(theta, TWO_PI)
        dist = np.linalg.norm(self.point(theta) - flat, axis=-1)
        return theta.reshape(x.shape[:-1]), dist.reshape(x.shape[:-1])


@dataclass(frozen=True)
class Circle(BoundaryGeometry):
    R: float = 1.0
    kind = "circle"

    def __post_init__(self):
        if not self.R > 0:
            raise HypothesisError("radius must be positive")

    def point(self, theta):
        theta = np.asarray(theta, dtype=float)
        return self.R * np.stack([np.cos(theta), np.sin(theta)], axis=-1)

    def d1(self, theta):
        theta = np.asarray(theta, dtype=float)
        return self.R * np.stack([-np.sin(theta), np.cos(theta)], axis=-1)

    def d2(self, theta):
        return -self.point(theta)

    def curvature(self, theta):
        return np.full_like(np.asarray(theta, dtype=float), -1.0 / self.R)

    def jacobian(self, theta, t):
        return np.broadcast_to(1.0 - np.asarray(t, dtype=float) / self.R, np.broadcast(np.asarray(theta), np.asarray(t)).shape).copy()

    def closest_point(self, x, iters: int = 0):
        x = np.asarray(x, dtype=float)
        theta = np.mod(np.arctan2(x[..., 1], x[..., 0]), TWO_PI)
        return theta, np.abs(self.R - np.linalg.norm(x, axis=-1))


@dataclass(frozen=True)
class Ellipse(BoundaryGeometry):
    p: float = 2.0  # semi-axis along x
    q: float = 1.0  # semi-axis along y
    kind = "ellipse"

    def __post_init__(self):
        if not (self.p > 0 and self.q > 0):
            raise HypothesisError("semi-axes must be positive")

    def point(self, theta):
        theta = np.asarray(theta, dtype=float)
        return np.stack([self.p * np.cos(theta), self.q * np.sin(theta)], axis=-1)

    def d1(self, theta):
        theta = np.asarray(theta, dtype=float)
        return np.stack([-self.p * np.sin(theta), self.q * np.cos(theta)], axis=-1)

    def d2(self, theta):
        theta = np.asarray(theta, dtype=float)
        return np.stack([-self.p * np.cos(theta), -self.q * np.sin(theta)], axis=-1)


@dataclass(frozen=True)
class Segment(BoundaryGeometry):
    """Straight boundary piece (flat limit), for test harnesses only."""

    length: float = 1.0
    kind = "segment"
    closed = False

    def point(self, theta):
        theta = np.asarray(theta, dtype=float)
        return np.stack([self.length * theta / TWO_PI, np.zeros_like(theta)], axis=-1)

    def d1(self, theta):
        theta = np.asarray(theta, dtype=float)
        return np.stack([np.full_like(theta, self.length / TWO_PI), np.zeros_like(theta)], axis=-1)

    def d2(self, theta):
        theta = np.asarray(theta, dtype=float)
        return np.zeros(theta.shape + (2,))


class SampledCurve(BoundaryGeometry):
    """Closed curve through counter-clockwise samples (periodic cubic spline)."""

    kind = "sampled"

    def __init__(self, points: np.ndarray):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 8:
            raise HypothesisError("need at least 8 boundary samples of shape (n, 2)")
        area2 = np.sum(pts[:, 0] * np.roll(pts[:, 1], -1) - np.roll(pts[:, 0], -1) * pts[:, 1])
        if area2 <= 0:
            raise HypothesisError("samples must be ordered counter-clockwise")
        closed = np.vstack([pts, pts[:1]])
        theta = np.linspace(0.0, TWO_PI, closed.shape[0])
        self._spline = CubicSpline(theta, closed, bc_type="periodic")

    def point(self, theta):
        return self._spline(np.mod(theta, TWO_PI))

    def d1(self, theta):
        return self._spline(np.mod(theta, TWO_PI), 1)

    def d2(self, theta):
        return self._spline(np.mod(theta, TWO_PI), 2)


# ---------------------------------------------------------------------------


def tubular_jacobian(geometry: BoundaryGeometry, theta, t) -> np.ndarray:
    """omega(y, t): closed form for circles, finite-difference determinant otherwise."""
    t_arr = np.asarray(t, dtype=float)
    if geometry.closed and np.any(t_arr >= max_tubular_radius(geometry) / 0.9):
        raise HypothesisError("depth beyond the tubular injectivity radius")
    if isinstance(geometry, Circle):
        return geometry.jacobian(theta, t)
    return geometry.numeric_jacobian(theta, t)


def curvature(geometry: BoundaryGeometry, theta) -> np.ndarray:
    return geometry.curvature(theta)


def _reach_ok(geometry: BoundaryGeometry, delta: float, n_theta: int = 256, n_t: int = 8) -> bool:
    """Every sampled Phi(theta, t), t <= delta, has its own foot as nearest boundary point."""
    theta = geometry.arclength_grid(n_theta)
    ts = np.linspace(0.0, delta, n_t + 1)[1:]
    pts = geometry.phi(theta[:, None], ts[None, :]).reshape(-1, 2)
    depth = np.repeat(ts[None, :], n_theta, axis=0).ravel()
    bnd = geometry.point(geometry.arclength_grid(4 * n_theta))
    dmin = np.sqrt(((pts[:, None, :] - bnd[None, :, :]) ** 2).sum(-1).min(axis=1))
    spacing = float(np.max(geometry.speed(theta))) * TWO_PI / (4 * n_theta)
    return bool(np.all(dmin >= depth - spacing**2 - 1e-12))


def max_tubular_radius(geometry: BoundaryGeometry, n: int = 2048) -> float:
    """Largest depth with a nonvanishing Jacobian, reduced by 10 % and checked for overlap."""
    if not geometry.closed:
        return math.inf
    if isinstance(geometry, Circle):
        return 0.9 * geometry.R
    kappa = geometry.curvature(geometry.arclength_grid(n))
    worst = float(np.max(-kappa))
    delta = 0.9 / worst if worst > 0 else 0.9 * _diameter(geometry)
    for _ in range(40):
        if _reach_ok(geometry, delta):
            return delta
        delta *= 0.9
    return delta


def _diameter(geometry: BoundaryGeometry) -> float:
    pts = geometry.point(geometry.arclength_grid(256))
    return float(np.max(np.linalg.norm(pts[:, None] - pts[None, :], axis=-1)))


def admissible_radius(geometry: BoundaryGeometry, delta: float) -> bool:
    return 0 < delta < max_tubular_radius(geometry)


def boundary_integral(geometry: BoundaryGeometry, f, n: int | None = None, rtol: float = 1e-13) -> float:
    """Arclength integral of f over the closed boundary (periodic trapezoid rule).

    ``f`` is either a vectorised callable of the parameter theta or an array of
    samples on the uniform theta grid.
    """
    if not callable(f):
        vals = np.asarray(f, dtype=float)
        theta = geometry.arclength_grid(vals.size)
        return float(np.sum(vals * geometry.speed(theta)) * TWO_PI / vals.size)

    def rule(m):
        theta = geometry.arclength_grid(m)
        return float(np.sum(np.asarray(f(theta), dtype=float) * geometry.speed(theta)) * TWO_PI / m)

    if n is not None:
        return rule(n)
    m = 64
    prev = rule(m)
    while m < 1 << 16:
        m *= 2
        cur = rule(m)
        if abs(cur - prev) <= rtol * max(1.0, abs(cur)):
            return cur
        prev = cur
    return prev


# ---------------------------------------------------------------------------
# Boundary data


@dataclass(frozen=True)
class BoundaryData:
    """Dirichlet data g(theta) = g0 + amplitude * cos(mode * theta)."""

    g0: float
    amplitude: float = 0.0
    mode: int = 1

    @property
    def constant(self) -> bool:
        return self.amplitude == 0.0

    def __call__(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        return self.g0 + self.amplitude * np.cos(self.mode * theta)

    def dtheta(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        return -self.amplitude * self.mode * np.sin(self.mode * theta)

    @property
    def g_min(self) -> float:
        return self.g0 - abs(self.amplitude)

    @property
    def g_max(self) -> float:
        return self.g0 + abs(self.amplitude)
