"""Two-dimensional Dirichlet problem on a disk or an ellipse.

Mesh: logical polar coordinates (rho, theta) with x = (p rho cos theta,
q rho sin theta); a disk of radius R is p = q = R.  Nodes sit on rings
rho_1 < ... < rho_M = 1 (graded toward the boundary) plus one centre node.

Energy: the Dirichlet integral is written with the metric A = J G^{-1} of the
map, so int |grad u|^2 dx = int grad u . A grad u d rho d theta.  Radial edges
use the exact rho-integral of A_rr, angular edges a trapezoid dual width,
the (ellipse-only) cross term sits at cell centres, and the potential uses
nodal trapezoid masses.  For radial data on a disk the discrete energy equals
the one-dimensional natural-end scheme with omega = 2 pi (R - t) exactly.

Unknowns are gaps b - u.  A stabilised semi-implicit gradient flow brings the
recovery field into the basin; damped Newton with a sparse LU finishes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import HypothesisError, SolverError
from .geometry import BoundaryData, BoundaryGeometry, Circle, Ellipse, boundary_integral
from .oned import GridSpec, Weight, WeightedProblem1D, graded_grid, minimize_bvp
from .potential import PotentialSpec, default_thresholds, geodesic_distance
from .recovery import DeltaSchedule, build_recovery_2d

DirichletData = BoundaryData


# ---------------------------------------------------------------------------
# Mesh


def _axes(geometry: BoundaryGeometry) -> tuple[float, float]:
    if isinstance(geometry, Circle):
        return geometry.R, geometry.R
    if isinstance(geometry, Ellipse):
        return geometry.p, geometry.q
    raise HypothesisError("the 2D solver supports disks and ellipses only")


@dataclass(frozen=True)
class PolarMesh:
    geometry: BoundaryGeometry
    rho: np.ndarray  # ring radii, rho[0] = 0 is the centre
    n_theta: int
    depth: np.ndarray = field(repr=False)  # distance to the boundary per node
    foot: np.ndarray = field(repr=False)  # boundary parameter of the nearest point per node

    @property
    def n_rings(self) -> int:
        return self.rho.size - 1

    @property
    def n_nodes(self) -> int:
        return 1 + self.n_rings * self.n_theta

    @property
    def theta(self) -> np.ndarray:
        return np.linspace(0.0, 2 * np.pi, self.n_theta, endpoint=False)

    def index(self, ring, k):
        return 1 + (np.asarray(ring) - 1) * self.n_theta + np.mod(k, self.n_theta)

    @property
    def boundary_nodes(self) -> np.ndarray:
        return self.index(self.n_rings, np.arange(self.n_theta))

    @property
    def free_nodes(self) -> np.ndarray:
        return np.arange(self.n_nodes - self.n_theta)

    def coordinates(self) -> np.ndarray:
        p, q = _axes(self.geometry)
        rr = np.repeat(self.rho[1:], self.n_theta)
        tt = np.tile(self.theta, self.n_rings)
        xy = np.column_stack([p * rr * np.cos(tt), q * rr * np.sin(tt)])
        return np.vstack([[0.0, 0.0], xy])


def build_mesh(geometry: BoundaryGeometry, eps: float, grid_spec: GridSpec = GridSpec(), n_theta: int = 32) -> PolarMesh:
    """Rings graded toward rho = 1 so that the thinnest part of the layer gets the requested resolution."""
    p, q = _axes(geometry)
    big, small = max(p, q), min(p, q)
    gs = replace(grid_spec, layer_widths=grid_spec.layer_widths * big / small)
    s = graded_grid(eps / big, 1.0, gs, far_layer=False)  # logical depth 1 - rho
    rho = (1.0 - s)[::-1]
    rho[0] = 0.0
    rho[-1] = 1.0
    theta = np.linspace(0.0, 2 * np.pi, n_theta, endpoint=False)
    if isinstance(geometry, Circle):
        depth = np.concatenate([[geometry.R], np.repeat(geometry.R * (1 - rho[1:]), n_theta)])
        foot = np.concatenate([[0.0], np.tile(theta, rho.size - 1)])
    else:
        rr = np.repeat(rho[1:], n_theta)
        tt = np.tile(theta, rho.size - 1)
        xy = np.column_stack([p * rr * np.cos(tt), q * rr * np.sin(tt)])
        foot_r, depth_r = geometry.closest_point(xy)
        depth_r[-n_theta:] = 0.0
        foot_r[-n_theta:] = theta
        depth = np.concatenate([[small], depth_r])
        foot = np.concatenate([[0.0], foot_r])
    return PolarMesh(geometry, rho, n_theta, depth, foot)


@dataclass(frozen=True)
class Operator2D:
    """Stiffness K (u^T K u = int |grad u|^2) and nodal masses."""

    K: sp.csr_matrix
    mass: np.ndarray
    area: np.ndarray  # dual-cell areas, used to scale residuals

    @classmethod
    def on(cls, mesh: PolarMesh) -> "Operator2D":
        p, q = _axes(mesh.geometry)
        pq = p * q
        N, M, rho = mesh.n_theta, mesh.n_rings, mesh.rho
        dth = 2 * np.pi / N
        th = mesh.theta
        th_mid = th + 0.5 * dth
        f_rr = (p**2 * np.sin(th) ** 2 + q**2 * np.cos(th) ** 2) / pq
        f_tt = (p**2 * np.cos(th_mid) ** 2 + q**2 * np.sin(th_mid) ** 2) / pq
        drho = np.diff(rho)
        dual = np.empty(M + 1)
        dual[0] = 0.5 * drho[0]
        dual[1:M] = 0.5 * (drho[:-1] + drho[1:])
        dual[M] = 0.5 * drho[-1]

        rows, cols, vals = [], [], []

        def add_edges(i, j, c):
            rows.extend([i, j, i, j])
            cols.extend([i, j, j, i])
            vals.extend([c, c, -c, -c])

        k = np.arange(N)
        # radial edges, ring j -> j + 1 (ring 0 is the centre)
        for j in range(M):
            c = dth * f_rr * (rho[j + 1] ** 2 - rho[j] ** 2) / (2 * drho[j] ** 2)
            inner = np.zeros(N, dtype=int) if j == 0 else mesh.index(j, k)
            add_edges(inner, mesh.index(j + 1, k), c)
        # angular edges on every ring
        for j in range(1, M + 1):
            c = dual[j] * f_tt / (rho[j] * dth)
            add_edges(mesh.index(j, k), mesh.index(j, k + 1), c)
        n = mesh.n_nodes
        K = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)).tocsr()

        if p != q:
            # cross term 2 A_rt u_r u_t at cell centres (rings j..j+1, j >= 1)
            a_rt = (p**2 - q**2) * np.cos(th_mid) * np.sin(th_mid) / pq
            cr, cc, va, vb, cw = [], [], [], [], []
            cell = 0
            for j in range(1, M):
                for kk in range(N):
                    n00, n01 = mesh.index(j, kk), mesh.index(j, kk + 1)
                    n10, n11 = mesh.index(j + 1, kk), mesh.index(j + 1, kk + 1)
                    for node, sa, sb in ((n00, -1, -1), (n01, -1, 1), (n10, 1, -1), (n11, 1, 1)):
                        cr.append(cell)
                        cc.append(node)
                        va.append(sa / (2 * drho[j]))
                        vb.append(sb / (2 * dth))
                    cw.append(a_rt[kk] * drho[j] * dth)
                    cell += 1
            Da = sp.coo_matrix((va, (cr, cc)), shape=(cell, n)).tocsr()
            Db = sp.coo_matrix((vb, (cr, cc)), shape=(cell, n)).tocsr()
            C = sp.diags(np.asarray(cw))
            K = (K + Da.T @ C @ Db + Db.T @ C @ Da).tocsr()

        mass = np.concatenate([[0.0], np.repeat(dth * dual[1:] * pq * rho[1:], N)])
        area = mass.copy()
        area[0] = np.pi * (0.5 * rho[1]) ** 2 * pq
        return cls(K, mass, area)

    def energy_parts(self, gap, eps, spec) -> tuple[float, float]:
        return eps**2 * float(gap @ (self.K @ gap)), float(self.mass @ spec.w_gap(gap))

    def energy(self, gap, eps, spec) -> float:
        g, w = self.energy_parts(gap, eps, spec)
        return g + w

    def gradient(self, gap, eps, spec) -> np.ndarray:
        return 2 * eps**2 * (self.K @ gap) + self.mass * spec.dw_gap(gap)

    def hessian(self, gap, eps, spec) -> sp.csr_matrix:
        return (2 * eps**2 * self.K + sp.diags(self.mass * spec.d2w_gap(gap))).tocsr()


# ---------------------------------------------------------------------------
# Field and solver


@dataclass
class Field2D:
    mesh: PolarMesh
    gap: np.ndarray  # b - u at the nodes
    eps: float
    b: float
    energy: float
    energy_grad: float
    energy_pot: float
    residual: float = math.nan
    flow_steps: int = 0
    newton_steps: int = 0
    flags: list[str] = field(default_factory=list)

    @property
    def values(self) -> np.ndarray:
        return self.b - self.gap

    def ring_values(self) -> np.ndarray:
        """Gaps on rings 1..M as a (rings, n_theta) array."""
        return self.gap[1:].reshape(self.mesh.n_rings, self.mesh.n_theta)


def _residual(op: Operator2D, gap, eps, spec, free) -> float:
    g = op.gradient(gap, eps, spec)[free]
    return float(np.max(np.abs(g) / op.area[free])) if g.size else 0.0


def gradient_flow(op, gap, eps, spec, free, tau=10.0, max_steps=400, rtol=1e-12):
    """Semi-implicit stabilised flow; energy descent is asserted at every accepted step."""
    s = spec.max_abs_d2w()
    gap = gap.copy()
    energy = op.energy(gap, eps, spec)
    Kff = op.K[free][:, free]
    Mf = op.mass[free]
    lu = splu((sp.diags((1.0 / tau + s) * Mf) + 2 * eps**2 * Kff).tocsc())
    steps = 0
    while steps < max_steps:
        grad = op.gradient(gap, eps, spec)[free]
        trial = gap.copy()
        trial[free] -= lu.solve(grad)
        e_new = op.energy(trial, eps, spec)
        if not np.isfinite(e_new) or e_new > energy + 1e-14 * abs(energy):
            tau *= 0.5
            if tau < 1e-8:
                raise SolverError("gradient flow cannot decrease the energy", {"steps": steps})
            lu = splu((sp.diags((1.0 / tau + s) * Mf) + 2 * eps**2 * Kff).tocsc())
            continue
        steps += 1
        decrement = energy - e_new
        gap, energy = trial, e_new
        if decrement <= rtol * abs(energy):
            break
    return gap, energy, steps


def newton_2d(op, gap, eps, spec, free, tol=1e-10, max_steps=60):
    gap = gap.copy()
    energy = op.energy(gap, eps, spec)
    for step in range(max_steps):
        res = _residual(op, gap, eps, spec, free)
        if res <= tol:
            for _ in range(3):  # polish: keeps tiny tail gaps accurate
                trial = gap.copy()
                H = op.hessian(gap, eps, spec)[free][:, free]
                trial[free] -= splu(H.tocsc()).solve(op.gradient(gap, eps, spec)[free])
                r2 = _residual(op, trial, eps, spec, free)
                if not np.isfinite(r2) or r2 > 10 * res:
                    break
                gap, res = trial, r2
            return gap, res, step
        grad = op.gradient(gap, eps, spec)[free]
        H = op.hessian(gap, eps, spec)[free][:, free]
        try:
            delta = -splu(H.tocsc()).solve(grad)
        except RuntimeError:
            delta = -grad / np.maximum(op.mass[free], 1e-300)
        if float(delta @ grad) >= 0:
            delta = -grad / np.maximum(op.area[free], 1e-300)
        lam = 1.0
        while lam > 1e-8:
            trial = gap.copy()
            trial[free] += lam * delta
            e_trial = op.energy(trial, eps, spec)
            if np.isfinite(e_trial) and e_trial <= energy + 1e-13 * abs(energy):
                break
            lam *= 0.5
        else:
            raise SolverError("line search failed", {"step": step, "residual": res})
        gap, energy = trial, e_trial
    raise SolverError("Newton did not converge", {"residual": _residual(op, gap, eps, spec, free)})


def minimize_f_epsilon(
    geometry: BoundaryGeometry,
    data: BoundaryData,
    eps: float,
    spec: PotentialSpec,
    grid_spec: GridSpec = GridSpec(),
    n_theta: int = 32,
    mesh: PolarMesh | None = None,
    initial: np.ndarray | None = None,
    tol: float = 1e-10,
) -> Field2D:
    alpha_minus, _ = default_thresholds(spec)
    if data.g_min < alpha_minus or data.g_max > spec.b:
        raise HypothesisError("boundary data must take values in [alpha_-, b]")
    mesh = build_mesh(geometry, eps, grid_spec, n_theta) if mesh is None else mesh
    _check_resolution(mesh, eps)
    op = Operator2D.on(mesh)
    free = mesh.free_nodes
    boundary_gap = spec.b - data(mesh.theta)
    if initial is None:
        if np.all(boundary_gap == 0.0):
            gap = np.zeros(mesh.n_nodes)
            return Field2D(mesh, gap, eps, spec.b, 0.0, 0.0, 0.0, 0.0)
        rec = build_recovery_2d(geometry, data, eps, DeltaSchedule("power", 2.0), spec, mesh.foot, mesh.depth,
                                tube=None)
        gap = np.clip(rec.gap, 0.0, spec.width)
    else:
        gap = np.clip(np.asarray(initial, dtype=float).copy(), 0.0, spec.width)
    gap[mesh.boundary_nodes] = boundary_gap
    flags: list[str] = []
    gap, _, flow_steps = gradient_flow(op, gap, eps, spec, free)
    try:
        gap, res, newton_steps = newton_2d(op, gap, eps, spec, free, tol)
    except SolverError:
        flags.append("newton failed; gradient-flow iterate returned")
        res, newton_steps = _residual(op, gap, eps, spec, free), 0
    eg, ew = op.energy_parts(gap, eps, spec)
    return Field2D(mesh, gap, eps, spec.b, eg + ew, eg, ew, res, flow_steps, newton_steps, flags)


def _check_resolution(mesh: PolarMesh, eps: float, required: int = 20) -> None:
    p, q = _axes(mesh.geometry)
    depth_scale = max(p, q)
    within = np.count_nonzero((1.0 - mesh.rho) * depth_scale <= 5 * eps)
    if within < required:
        raise HypothesisError(f"only {within} rings within 5 eps of the boundary (need {required})")


def energy_f(field: Field2D) -> float:
    return field.energy


def f2_epsilon(field: Field2D, data: BoundaryData, spec: PotentialSpec, energy: float | None = None) -> float:
    """(F/eps - min F^(1)) / eps with min F^(1) = int d_W(b, g)."""
    from .asymptotics import theory_c1

    e = field.energy if energy is None else energy
    c1 = theory_c1(field.mesh.geometry, data, spec)
    return (e / field.eps - c1) / field.eps


@dataclass(frozen=True)
class RefinedField:
    coarse: Field2D
    fine: Field2D

    @property
    def extrapolated(self) -> float:
        return (4.0 * self.fine.energy - self.coarse.energy) / 3.0


def solve_refined_2d(geometry, data, eps, spec, grid_spec: GridSpec = GridSpec(), n_theta: int = 32) -> RefinedField:
    """Solve on two radially nested meshes and combine the energies (h^2 Richardson)."""
    coarse = minimize_f_epsilon(geometry, data, eps, spec, grid_spec, n_theta)
    fine_mesh = build_mesh(geometry, eps, grid_spec.refined(2), n_theta)
    guess = _prolong(coarse, fine_mesh)
    fine = minimize_f_epsilon(geometry, data, eps, spec, grid_spec.refined(2), n_theta, mesh=fine_mesh, initial=guess)
    return RefinedField(coarse, fine)


def _prolong(field: Field2D, mesh: PolarMesh) -> np.ndarray:
    """Interpolate ring values linearly in rho onto a mesh with the same angles."""
    rings = np.vstack([np.full(field.mesh.n_theta, field.gap[0]), field.ring_values()])
    out = np.empty((mesh.rho.size, mesh.n_theta))
    for k in range(mesh.n_theta):
        out[:, k] = np.interp(mesh.rho, field.mesh.rho, rings[:, k])
    return np.concatenate([[out[0].mean()], out[1:].ravel()])


# ---------------------------------------------------------------------------
# Diagnostics


@dataclass
class CheckReport:
    name: str
    passed: bool
    values: dict


def check_maximum_principle(field: Field2D, spec: PotentialSpec, tol: float = 1e-10) -> CheckReport:
    u = field.values
    ok = bool(np.all(field.gap >= -tol) and np.all(field.gap <= spec.width + tol))
    return CheckReport("maximum_principle", ok, {"u_min": float(u.min()), "u_max": float(u.max())})


def check_exponential_decay(field: Field2D, delta: float, spec: PotentialSpec | None = None) -> CheckReport:
    """Fit log(b - u) against dist / eps on nodes deeper than 2 delta."""
    mask = field.mesh.depth >= 2 * delta
    gap = field.gap[mask]
    x = field.mesh.depth[mask] / field.eps
    usable = gap > 1e-280
    if np.count_nonzero(usable) < 3:
        return CheckReport("exponential_decay", True, {"note": "decayed below float floor", "mu_fit": math.nan})
    if np.any(gap[usable] > 1e-15) and np.ptp(x[usable]) == 0:
        return CheckReport("exponential_decay", False, {"mu_fit": math.nan})
    slope, intercept = np.polyfit(x[usable], np.log(gap[usable]), 1)
    vals = {"mu_fit": float(-slope), "slope": float(slope), "intercept": float(intercept),
            "n_points": int(np.count_nonzero(usable))}
    return CheckReport("exponential_decay", bool(slope < 0), vals)


def _cell_gradients(field: Field2D) -> tuple[np.ndarray, np.ndarray]:
    """Physical |grad u| at quad-cell centres and the cell depths."""
    mesh = field.mesh
    p, q = _axes(mesh.geometry)
    N, M = mesh.n_theta, mesh.n_rings
    rings = field.ring_values()
    drho = np.diff(mesh.rho)[1:]
    dth = 2 * np.pi / N
    u00 = rings[:-1]
    u01 = np.roll(rings[:-1], -1, axis=1)
    u10 = rings[1:]
    u11 = np.roll(rings[1:], -1, axis=1)
    u_r = (u10 + u11 - u00 - u01) / (2 * drho[:, None])
    u_t = (u01 + u11 - u00 - u10) / (2 * dth)
    rho_c = 0.5 * (mesh.rho[1:-1] + mesh.rho[2:])[:, None]
    th_c = (mesh.theta + 0.5 * dth)[None, :]
    c, s = np.cos(th_c), np.sin(th_c)
    # inverse metric G^{-1} = A / J
    J = p * q * rho_c
    g_rr = rho_c * (p**2 * s**2 + q**2 * c**2) / (p * q) / J
    g_tt = (p**2 * c**2 + q**2 * s**2) / (p * q * rho_c) / J
    g_rt = (p**2 - q**2) * c * s / (p * q) / J
    grad2 = g_rr * u_r**2 + 2 * g_rt * u_r * u_t + g_tt * u_t**2
    d = mesh.depth[1:].reshape(M, N)
    depth_c = 0.25 * (d[:-1] + d[1:] + np.roll(d[:-1], -1, 1) + np.roll(d[1:], -1, 1))
    return np.sqrt(np.maximum(grad2, 0.0)), depth_c


def check_gradient_bound(field: Field2D, exclude_depth: float | None = None, bound: float = 2.0) -> CheckReport:
    """eps * max |grad u| over all cells and over cells deeper than ``exclude_depth`` (default eps)."""
    grad, depth = _cell_gradients(field)
    cut = field.eps if exclude_depth is None else exclude_depth
    all_max = field.eps * float(grad.max()) if grad.size else 0.0
    deep = grad[depth >= cut]
    interior = field.eps * float(deep.max()) if deep.size else 0.0
    return CheckReport("gradient_bound", bool(np.isfinite(all_max) and all_max <= bound),
                       {"scaled_max": all_max, "scaled_max_interior": interior})


def check_level_set_confinement(field: Field2D, lam: float, delta: float) -> CheckReport:
    """{u <= lam} must lie in the tube of width delta."""
    below = field.values <= lam
    depths = field.mesh.depth[below]
    deepest = float(depths.max()) if depths.size else 0.0
    return CheckReport("level_set_confinement", bool(deepest < delta), {"deepest": deepest, "delta": delta})


def radial_symmetry_defect(field: Field2D) -> float:
    rings = field.ring_values()
    return float(np.max(rings.max(axis=1) - rings.min(axis=1)))


def ladder_stable(values: list[float], rel: float) -> bool:
    """Consecutive entries differ by at most ``rel`` relatively."""
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return True
    return bool(np.all(np.abs(np.diff(v)) <= rel * np.abs(v[:-1])))


# ---------------------------------------------------------------------------
# Radial reduction


@dataclass
class RadialOracleReport:
    energy_2d: float
    energy_1d: float
    problem: WeightedProblem1D

    @property
    def relative_gap(self) -> float:
        if self.energy_1d == 0.0:
            return abs(self.energy_2d)
        return abs(self.energy_2d - self.energy_1d) / abs(self.energy_1d)


def radial_reduction_oracle(
    geometry: BoundaryGeometry,
    data: BoundaryData,
    eps: float,
    spec: PotentialSpec,
    grid_spec: GridSpec = GridSpec(),
    field: Field2D | None = None,
    n_theta: int = 16,
) -> RadialOracleReport:
    """Compare the 2D minimum with the natural-end 1D problem, omega(t) = 2 pi (R - t)."""
    if not isinstance(geometry, Circle) or not data.constant:
        raise HypothesisError("radial reduction needs a disk and constant data")
    R = geometry.R
    problem = WeightedProblem1D(Weight.radial(R), eps, data.g0, None, data.g0, None)
    if field is None:
        field = minimize_f_epsilon(geometry, data, eps, spec, grid_spec, n_theta)
    t = R * (1.0 - field.mesh.rho[::-1])
    t[0], t[-1] = 0.0, R
    sol = minimize_bvp(problem, spec, grid_spec, grid=t)
    return RadialOracleReport(field.energy, sol.energy, problem)


# ---------------------------------------------------------------------------
# Grid dump


def dump_grid(field: Field2D, path, extra: dict | None = None) -> None:
    """Header lines '# key=value' (grid spec); body: one ring per row, n_theta values (row-major u)."""
    mesh = field.mesh
    header = dict(extra or {})
    header |= {
        "format": "polar-rings-v1",
        "geometry": mesh.geometry.kind,
        "axes": ",".join(f"{a:.17g}" for a in _axes(mesh.geometry)),
        "n_rings": mesh.n_rings,
        "n_theta": mesh.n_theta,
        "eps": f"{field.eps:.17g}",
        "center_u": f"{field.values[0]:.17g}",
        "rho": ",".join(f"{r:.17g}" for r in mesh.rho[1:]),
    }
    with open(path, "w", encoding="utf-8") as fh:
        for k, v in header.items():
            fh.write(f"# {k}={v}\n")
        np.savetxt(fh, field.b - field.ring_values(), fmt="%.17g")


def load_grid(path) -> tuple[dict, np.ndarray]:
    header = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            k, _, v = line[2:].strip().partition("=")
            header[k] = v
    body = np.loadtxt(path, comments="#", ndmin=2)
    return header, body
