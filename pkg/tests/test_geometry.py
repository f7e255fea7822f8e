import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import special

from artifact.errors import HypothesisError
from artifact.geometry import (
    BoundaryData,
    Circle,
    Ellipse,
    SampledCurve,
    Segment,
    admissible_radius,
    boundary_integral,
    curvature,
    max_tubular_radius,
    tubular_jacobian,
)

THETA = np.linspace(0, 2 * np.pi, 37)


def ellipse_curvature(p, q, theta):
    """Signed so that convex boundaries have negative curvature."""
    s, c = np.sin(theta), np.cos(theta)
    return -p * q / (p**2 * s**2 + q**2 * c**2) ** 1.5


def ellipse_perimeter(p, q):
    return 4 * p * special.ellipe(1 - (q / p) ** 2)


def test_circle_jacobian_closed_form():
    disk = Circle(1.0)
    assert tubular_jacobian(disk, 0.4, 0.3) == pytest.approx(0.7, abs=1e-14)
    assert np.allclose(disk.numeric_jacobian(THETA, 0.3), 0.7, atol=1e-8)
    assert np.max(np.abs(tubular_jacobian(disk, THETA, 0.25) - 0.75)) <= 1e-14


@pytest.mark.parametrize("geom", [Circle(1.0), Ellipse(2.0, 1.0), Ellipse(1.0, 3.0)])
def test_jacobian_is_one_on_the_boundary(geom):
    assert np.allclose(geom.numeric_jacobian(THETA, 0.0), 1.0, atol=1e-8)


@pytest.mark.parametrize("R", [1.0, 2.0])
def test_circle_curvature(R):
    assert np.all(curvature(Circle(R), THETA) == -1.0 / R)


def test_segment_is_flat():
    assert np.allclose(curvature(Segment(3.0), THETA), 0.0)


def test_ellipse_curvature_closed_form_and_fd():
    geom = Ellipse(2.0, 1.0)
    kappa = curvature(geom, THETA)
    assert np.allclose(kappa, ellipse_curvature(2.0, 1.0, THETA), rtol=1e-12)
    h = 1e-5
    fd = (geom.numeric_jacobian(THETA, h) - geom.numeric_jacobian(THETA, 0.0)) / h
    assert np.allclose(fd, kappa, atol=1e-4)


def test_fd_jacobian_slope_matches_curvature_at_every_h():
    # the tube Jacobian is affine in t for planar curves, so the difference
    # quotient has no O(h) term; only the determinant's own FD error remains
    geom = Ellipse(2.0, 1.0)
    theta = np.array([0.0, 0.7, 1.5])
    for h in (1e-2, 5e-3, 2.5e-3):
        fd = (geom.numeric_jacobian(theta, h) - geom.numeric_jacobian(theta, 0.0)) / h
        assert np.max(np.abs(fd - geom.curvature(theta))) < 1e-5


def test_max_tubular_radius():
    assert max_tubular_radius(Circle(1.0)) <= 0.9
    assert max_tubular_radius(Circle(1.0)) == pytest.approx(0.9)
    # tightest radius of curvature of the (2, 1) ellipse is q^2/p = 0.5
    assert max_tubular_radius(Ellipse(2.0, 1.0)) == pytest.approx(0.45, rel=1e-3)
    assert not admissible_radius(Circle(1.0), 0.95)
    assert admissible_radius(Circle(1.0), 0.5)
    with pytest.raises(HypothesisError):
        tubular_jacobian(Circle(1.0), 0.0, 1.0)


def test_tube_is_injective_at_half_radius():
    geom = Ellipse(2.0, 1.0)
    delta = 0.5 * max_tubular_radius(geom)
    th = np.linspace(0, 2 * np.pi, 64, endpoint=False)
    ts = np.linspace(0, delta, 5)
    pts = geom.phi(th[:, None], ts[None, :]).reshape(-1, 2)
    fibre = np.repeat(np.arange(th.size), ts.size)
    dist = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
    distinct = fibre[:, None] != fibre[None, :]
    assert dist[distinct].min() > 0


@pytest.mark.parametrize(
    "geom, f, expected",
    [
        (Circle(1.0), lambda th: np.ones_like(th), 2 * np.pi),
        (Circle(1.0), lambda th: np.cos(th) ** 2, np.pi),
        (Circle(2.0), lambda th: np.ones_like(th), 4 * np.pi),
        (Ellipse(2.0, 1.0), lambda th: np.ones_like(th), ellipse_perimeter(2.0, 1.0)),
    ],
)
def test_boundary_integral(geom, f, expected):
    assert boundary_integral(geom, f) == pytest.approx(expected, rel=1e-12)


def test_ellipse_perimeter_value():
    assert boundary_integral(Ellipse(2.0, 1.0), lambda th: np.ones_like(th)) == pytest.approx(9.688448220547675, abs=1e-9)


def test_boundary_integral_from_samples():
    geom = Circle(1.0)
    th = geom.arclength_grid(64)
    assert boundary_integral(geom, np.cos(th) ** 2) == pytest.approx(np.pi, rel=1e-12)


def test_closest_point_recovers_fibres():
    geom = Ellipse(2.0, 1.0)
    th = np.array([0.1, 1.0, 2.5, 4.0])
    t = np.array([0.05, 0.2, 0.3, 0.1])
    foot, depth = geom.closest_point(geom.phi(th, t))
    assert np.allclose(foot, th, atol=1e-9)
    assert np.allclose(depth, t, atol=1e-9)


def test_sampled_circle_matches_circle():
    th = np.linspace(0, 2 * np.pi, 400, endpoint=False)
    geom = SampledCurve(np.column_stack([np.cos(th), np.sin(th)]))
    assert np.allclose(curvature(geom, THETA), -1.0, atol=1e-4)  # spline error O(h^2)
    with pytest.raises(HypothesisError):
        SampledCurve(np.column_stack([np.cos(th), -np.sin(th)]))


def test_boundary_data():
    g = BoundaryData(0.2, 0.05, 1)
    assert not g.constant and BoundaryData(0.2).constant
    assert g.g_min == pytest.approx(0.15) and g.g_max == pytest.approx(0.25)
    th = np.linspace(0, 2 * np.pi, 9)
    assert np.allclose(g.dtheta(th), -0.05 * np.sin(th))


@given(st.floats(0.3, 3.0), st.floats(0.3, 3.0))
def test_total_curvature_is_minus_two_pi(p, q):
    geom = Ellipse(p, q)
    assert boundary_integral(geom, lambda th: geom.curvature(th), n=2048) == pytest.approx(-2 * np.pi, rel=1e-9)


@given(st.floats(0.5, 3.0), st.floats(0.5, 3.0), st.floats(0, 2 * np.pi), st.floats(0.0, 0.4))
def test_jacobian_affine_in_depth(p, q, theta, frac):
    geom = Ellipse(p, q)
    t = frac * max_tubular_radius(geom)
    assert geom.numeric_jacobian(theta, t) == pytest.approx(1 + t * float(geom.curvature(theta)), abs=1e-7)
