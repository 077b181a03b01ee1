"""Experiment catalog and convergence-study machinery.

Cases pair a manufactured exact solution with the geometry and data needed
by the diffuse-domain schemes; runs produce convergence tables (relative
L2 over the box, relative max over the physical domain, orders between
consecutive interface widths) and constant-validation reports.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import asymptotics
from .grid import (GridSpec, ScalarField, VectorField, norm_l2_weighted,
                   norm_linf_masked)
from .levelset import (LevelSetField, advect, extend_constant_normal,
                       needs_reinit, reinitialize, seed_interval,
                       seed_polar_star, seed_torus, star_velocity,
                       torus_distance)
from .schemes import (AssembledOperator, GeometryFields, ProblemSpec,
                      SchemeKind, assemble_heat_step, assemble_poisson,
                      build_geometry)
from .solvers import MgConfig, SolveReport, multigrid_solve, solve_tridiagonal

HALF_WIDTH = 1.111          # default 1D domain [-1.111, 1.111]


def scheme_name(scheme: SchemeKind) -> str:
    """Display name: 'mddm3' steady, 'mddmt3' time-dependent."""
    if scheme.time_dependent:
        return scheme.family[:-1] + "t" + scheme.family[-1]
    return scheme.family


# ---------------------------------------------------------------------------
# Case catalog


@dataclass
class CaseSpec:
    """One experiment: geometry + manufactured data + run parameters."""

    id: str
    dim: int
    omega_lo: tuple
    omega_hi: tuple
    exact: Callable                      # exact(coords..., t=) -> array
    forcing_ext: Callable | None         # analytic constant-normal extension
    boundary_ext: Callable | None        # analytic constant-normal extension
    seed: Callable                       # seed(grid, band_width, t) -> LevelSetField
    eps_schedule: tuple = (0.05, 0.025, 0.0125, 0.00625)
    h_rule: Callable = None              # h_rule(eps) -> h
    dt_rule: Callable | None = None      # dt_rule(eps, h) -> dt
    t_end: float = 0.0
    time_dependent: bool = False
    velocity: Callable | None = None     # velocity(grid, t) -> field or None
    boundary_slope: float = 0.0          # A at the extraction boundary
    diffusivity: Callable | None = None
    initial: Callable | None = None
    boundary_raw: Callable | None = None  # initializer for numeric extension
    forcing_raw: Callable | None = None
    extension_band_factor: float = 3.0
    boundary_gap: float | None = None
    max_curvature: float = 0.0
    relax_geometry_checks: bool = False
    correction_support: str = "inside"
    notes: str = ""

    def grid_for(self, eps: float, h: float | None = None) -> GridSpec:
        h = self.h_rule(eps) if h is None else h
        n = []
        for lo, hi in zip(self.omega_lo, self.omega_hi):
            cells = int(round((hi - lo) / h))
            n.append(cells + 1)
        return GridSpec(tuple(self.omega_lo), tuple(self.omega_hi), tuple(n))

    def problem(self, eps: float, forcing_ext=None, boundary_ext=None) -> ProblemSpec:
        return ProblemSpec(
            omega_lo=tuple(self.omega_lo), omega_hi=tuple(self.omega_hi),
            eps=eps,
            forcing_ext=forcing_ext or self.forcing_ext,
            boundary_ext=boundary_ext or self.boundary_ext,
            exact=self.exact, initial=self.initial,
            diffusivity=self.diffusivity,
            boundary_gap=self.boundary_gap,
            max_curvature=self.max_curvature,
            relax_geometry_checks=self.relax_geometry_checks)


def _interval_case(cid: str, u, d2u, du_at, notes: str = "") -> CaseSpec:
    """1D Poisson case on [-HALF_WIDTH, HALF_WIDTH] inside [-2, 2].

    ``u`` and ``d2u`` are scalar-callable on arrays, ``du_at`` evaluates the
    derivative at a point. Boundary data is extended constant-normally
    (nearest endpoint value); forcing is clamped into the interval.
    """
    b = HALF_WIDTH
    g_left = float(u(np.array(-b)))
    g_right = float(u(np.array(b)))

    def exact(x, t=0.0):
        return u(x)

    def forcing_ext(x, t=0.0):
        return d2u(np.clip(x, -b, b))

    def boundary_ext(x, t=0.0):
        return np.where(x < 0.0, g_left, g_right)

    def seed(grid, band_width, t=0.0):
        return seed_interval(grid, -b, b, band_width)

    return CaseSpec(
        id=cid, dim=1, omega_lo=(-2.0,), omega_hi=(2.0,),
        exact=exact, forcing_ext=forcing_ext, boundary_ext=boundary_ext,
        seed=seed, h_rule=lambda eps: eps / 4.0,
        boundary_slope=float(du_at(b)), boundary_gap=2.0 - b,
        notes=notes)


def _heat_case(moving: bool) -> CaseSpec:
    b = HALF_WIDTH

    def x_right(t):
        return b + 0.5 * t if moving else b

    def exact(x, t=0.0):
        return np.cos(x) * math.sin(t)

    def forcing_ext(x, t=0.0):
        xc = np.clip(x, -b, x_right(t))
        return np.cos(xc) * (math.cos(t) + math.sin(t))

    def boundary_ext(x, t=0.0):
        mid = 0.5 * (-b + x_right(t))
        gl = math.cos(b) * math.sin(t)
        gr = math.cos(x_right(t)) * math.sin(t)
        return np.where(x < mid, gl, gr)

    def seed(grid, band_width, t=0.0):
        return seed_interval(grid, -b, x_right(t), band_width)

    velocity = None
    if moving:
        def velocity(grid, t):
            (x,) = grid.meshgrid()
            return ScalarField(grid, np.where(x > 0.0, 0.5, 0.0).reshape(-1))

    return CaseSpec(
        id="heat1d_moving" if moving else "heat1d",
        dim=1, omega_lo=(-2.0,), omega_hi=(2.0,),
        exact=exact, forcing_ext=forcing_ext, boundary_ext=boundary_ext,
        seed=seed, h_rule=lambda eps: eps / 4.0,
        dt_rule=lambda eps, h: h, t_end=1.0, time_dependent=True,
        velocity=velocity,
        initial=lambda x, t=0.0: np.zeros_like(x),
        boundary_slope=-math.sin(b), boundary_gap=2.0 - b)


def _star2d_case(time_dependent: bool) -> CaseSpec:
    def exact(x, y, t=0.0):
        return 0.25 * (x * x + y * y)

    def forcing_ext(x, y, t=0.0):
        # heat: du/dt = lap(u) + f with u = rho^2/4  =>  f = -1
        # steady: div(grad u) = f                    =>  f = +1
        return np.full_like(x, -1.0 if time_dependent else 1.0)

    def seed(grid, band_width, t=0.0):
        return seed_polar_star(grid, band_width, t=t)

    velocity = star_velocity if time_dependent else None
    return CaseSpec(
        id="star2d" if time_dependent else "star2d_poisson",
        dim=2, omega_lo=(-2.0, -2.0), omega_hi=(2.0, 2.0),
        exact=exact, forcing_ext=forcing_ext, boundary_ext=None,
        boundary_raw=lambda x, y, t=0.0: 0.25 * (x * x + y * y),
        seed=seed, eps_schedule=(0.2, 0.1, 0.05),
        h_rule=lambda eps: eps / 6.4,
        dt_rule=(lambda eps, h: eps / 256.0) if time_dependent else None,
        t_end=0.1 if time_dependent else 0.0,
        time_dependent=time_dependent, velocity=velocity,
        initial=(lambda x, y, t=0.0: 0.25 * (x * x + y * y)) if time_dependent else None,
        max_curvature=2.1, boundary_gap=2.0 - 1.12,
        relax_geometry_checks=True)


def _torus_forcing(x, y, z, t=0.0):
    beta = 7.0 + x + 2.0 * y + 3.0 * z
    ey = np.exp(y)
    ez = np.exp(z)
    s = np.sqrt(1.0 + y * y)
    lap = x * ey + ez / s ** 3 + ez * s
    grad_dot = ey + 2.0 * (x * ey + ez * y / s) + 3.0 * ez * s
    return grad_dot + beta * lap


def _torus3d_case() -> CaseSpec:
    def exact(x, y, z, t=0.0):
        return x * np.exp(y) + np.exp(z) * np.sqrt(1.0 + y * y)

    def seed(grid, band_width, t=0.0):
        return seed_torus(grid, band_width)

    return CaseSpec(
        id="torus3d", dim=3,
        omega_lo=(-1.0, -1.0, -1.0), omega_hi=(1.0, 1.0, 1.0),
        exact=exact, forcing_ext=None, boundary_ext=None,
        boundary_raw=exact, forcing_raw=_torus_forcing,
        seed=seed, eps_schedule=(0.2, 0.1),
        h_rule=lambda eps: eps / 3.2,
        diffusivity=lambda x, y, z: 7.0 + x + 2.0 * y + 3.0 * z,
        max_curvature=1.0 / 0.3, boundary_gap=0.1,
        relax_geometry_checks=True)


def builtin_cases() -> dict[str, CaseSpec]:
    b = HALF_WIDTH
    cases = [
        _interval_case("case1", lambda x: 0.5 * x * x,
                       lambda x: np.ones_like(x), lambda s: s),
        # quadratic with vanishing boundary slope: (x^2 - b^2)^2 has
        # derivative 4x(x^2-b^2) = 0 at x = +-b
        _interval_case("case2", lambda x: (x * x - b * b) ** 2,
                       lambda x: 12.0 * x * x - 4.0 * b * b,
                       lambda s: 4.0 * s * (s * s - b * b),
                       notes="A=0 superconvergence case"),
        _interval_case("case3", lambda x: 1.0 / (x * x + 1.0),
                       lambda x: (6.0 * x * x - 2.0) / (x * x + 1.0) ** 3,
                       lambda s: -2.0 * s / (s * s + 1.0) ** 2),
        _interval_case("case4", np.cos, lambda x: -np.cos(x),
                       lambda s: -math.sin(s)),
        _interval_case("case5", lambda x: (x * x + 1.0) ** 2,
                       lambda x: 12.0 * x * x + 4.0,
                       lambda s: 4.0 * s * (s * s + 1.0)),
        _interval_case("case6", lambda x: np.log(x * x + 1.0),
                       lambda x: (2.0 - 2.0 * x * x) / (x * x + 1.0) ** 2,
                       lambda s: 2.0 * s / (s * s + 1.0)),
        _interval_case("case7", lambda x: np.sqrt(x * x + 1.0),
                       lambda x: (x * x + 1.0) ** -1.5,
                       lambda s: s / math.sqrt(s * s + 1.0)),
        _heat_case(moving=False),
        _heat_case(moving=True),
        _star2d_case(time_dependent=True),
        _star2d_case(time_dependent=False),
        _torus3d_case(),
    ]
    return {c.id: c for c in cases}


# ---------------------------------------------------------------------------
# Convergence tables


@dataclass
class ConvergenceTable:
    case_id: str
    scheme: str
    h_rule: str
    rows: list = field(default_factory=list)   # (eps, E2, k2, Einf, kinf)
    reports: list = field(default_factory=list)

    def add(self, eps: float, e2: float, einf: float,
            report: SolveReport | None = None) -> None:
        k2 = kinf = float("nan")
        if self.rows:
            e_prev, e2_prev, _, einf_prev, _ = self.rows[-1]
            k2 = math.log(e2 / e2_prev) / math.log(eps / e_prev)
            kinf = math.log(einf / einf_prev) / math.log(eps / e_prev)
        self.rows.append((eps, e2, k2, einf, kinf))
        self.reports.append(report)

    def fitted_orders(self) -> tuple[float, float]:
        eps = np.log([r[0] for r in self.rows])
        k2 = float(np.polyfit(eps, np.log([r[1] for r in self.rows]), 1)[0])
        ki = float(np.polyfit(eps, np.log([r[3] for r in self.rows]), 1)[0])
        return k2, ki

    def to_csv(self, with_reports: bool = False) -> str:
        out = io.StringIO()
        cols = "epsilon,E2,k2,Einf,kinf"
        if with_reports:
            cols += ",iterations,residual"
        out.write(cols + "\n")
        for row, rep in zip(self.rows, self.reports):
            eps, e2, k2, einf, kinf = row
            k2s = "" if math.isnan(k2) else f"{k2:.4f}"
            kis = "" if math.isnan(kinf) else f"{kinf:.4f}"
            line = f"{eps:.8g},{e2:.8e},{k2s},{einf:.8e},{kis}"
            if with_reports:
                if rep is None:
                    line += ",,"
                else:
                    line += f",{rep.iterations},{rep.final_residual:.4e}"
            out.write(line + "\n")
        return out.getvalue()


def relative_errors(u_num: ScalarField, case: CaseSpec, geom: GeometryFields,
                    t: float = 0.0) -> tuple[float, float]:
    """(E2, Einf): phi-weighted relative L2 over the box and relative max
    over the physical domain (nodes with r <= 0)."""
    grid = u_num.grid
    coords = grid.meshgrid()
    exact = ScalarField.from_values(grid, np.broadcast_to(
        case.exact(*coords, t=t), grid.shape))
    diff = ScalarField(grid, u_num.data - exact.data)
    e2 = (norm_l2_weighted(geom.phase.phi, diff)
          / norm_l2_weighted(geom.phase.phi, exact))
    mask = geom.ls.inside()
    einf = norm_linf_masked(mask, diff) / norm_linf_masked(mask, exact)
    return e2, einf


class _FrozenFieldsByTime:
    """Wrap precomputed per-time-level arrays as a (coords..., t) callable."""

    def __init__(self):
        self.table: dict[float, np.ndarray] = {}

    def put(self, t: float, arr: np.ndarray) -> None:
        self.table[round(float(t), 12)] = arr

    def __call__(self, *coords, t=0.0):
        key = round(float(t), 12)
        if key not in self.table:
            raise KeyError(f"no frozen field for t={t}")
        return self.table[key]


def _band_width(eps: float) -> float:
    return 5.0 * eps


def _prepare_extensions(case: CaseSpec, geom: GeometryFields, eps: float):
    """Numeric constant-normal extensions for cases without analytic ones.

    Boundary data relaxes on both sides of the interface toward its trace;
    forcing keeps its values inside D and is continued outward.
    """
    band = case.extension_band_factor * eps
    grid = geom.grid
    g_fn = case.boundary_ext
    f_fn = case.forcing_ext
    if g_fn is None:
        raw = ScalarField.from_function(grid, case.boundary_raw)
        ext = extend_constant_normal(raw, geom.ls, band, preserve_interior=False)
        g_fn = ext.view()
    if f_fn is None:
        raw = ScalarField.from_function(grid, case.forcing_raw)
        ext = extend_constant_normal(raw, geom.ls, band, preserve_interior=True)
        f_fn = ext.view()
    return g_fn, f_fn


def _wrap_static(value) -> Callable:
    if callable(value):
        return value
    arr = np.asarray(value)

    def fn(*coords, t=0.0):
        return arr
    return fn


def run_elliptic(case: CaseSpec, scheme: SchemeKind,
                 eps_schedule=None, h_rule=None,
                 mg_config: MgConfig | None = None) -> ConvergenceTable:
    """Solve the steady problem over the eps schedule and tabulate errors."""
    if case.time_dependent:
        raise ValueError(f"case {case.id} is time-dependent")
    eps_schedule = tuple(eps_schedule or case.eps_schedule)
    table = ConvergenceTable(case.id, scheme_name(scheme), "case-default")
    for eps in eps_schedule:
        h = h_rule(eps) if h_rule else None
        u, geom, report = solve_elliptic_once(case, scheme, eps, h,
                                              mg_config=mg_config)
        e2, einf = relative_errors(u, case, geom)
        table.add(eps, e2, einf, report)
    return table


def solve_elliptic_once(case: CaseSpec, scheme: SchemeKind, eps: float,
                        h: float | None = None,
                        mg_config: MgConfig | None = None):
    grid = case.grid_for(eps, h)
    ls = case.seed(grid, _band_width(eps))
    geom = build_geometry(ls, eps)
    g_fn, f_fn = _prepare_extensions(case, geom, eps)
    spec = case.problem(eps, forcing_ext=_wrap_static(f_fn),
                        boundary_ext=_wrap_static(g_fn))
    op = assemble_poisson(spec, scheme, geom)
    if grid.dim == 1:
        u = solve_tridiagonal(op)
        report = None
    else:
        g_arr = g_fn if not callable(g_fn) else g_fn(*grid.meshgrid(), t=0.0)
        u, report = multigrid_solve(op, mg_config or MgConfig(),
                                    u0=np.broadcast_to(g_arr, grid.shape))
        if not report.converged:
            raise RuntimeError(
                f"multigrid failed: case={case.id} scheme={scheme.family} "
                f"eps={eps} residual={report.final_residual:.3e}")
    return ScalarField(grid, u.reshape(-1)), geom, report


def _advance_levelset(case: CaseSpec, ls: LevelSetField, t: float,
                      dt: float) -> LevelSetField:
    """One transport step of the interface, with reinitialization when the
    slope check trips."""
    v = case.velocity(ls.grid, t)
    if isinstance(v, VectorField):
        # convert the prescribed velocity to a normal speed v . grad r/|grad r|
        from .grid import centered_gradient
        grad = centered_gradient(ls.r)
        mag = np.maximum(grad.magnitude().data, 1e-12)
        vn = sum(v.components[d] * grad.components[d] for d in range(ls.grid.dim))
        v = ScalarField(ls.grid, vn / mag)
    ls = advect(ls, v, dt)
    # check in a narrower band (1.5 eps) so skeleton kinks of the distance
    # field, which sit a fixed distance inside, do not trip the slope test
    if needs_reinit(ls, band=0.3 * ls.band_width):
        ls = reinitialize(ls)
    return ls


def run_parabolic(case: CaseSpec, scheme: SchemeKind,
                  eps_schedule=None, mg_config: MgConfig | None = None,
                  t_end: float | None = None) -> ConvergenceTable:
    """March the time-dependent problem to t_end per eps; errors at t_end."""
    if not case.time_dependent:
        raise ValueError(f"case {case.id} is steady")
    eps_schedule = tuple(eps_schedule or case.eps_schedule)
    table = ConvergenceTable(case.id, scheme_name(scheme), "case-default")
    for eps in eps_schedule:
        u, geom, report = march_parabolic(case, scheme, eps,
                                          mg_config=mg_config, t_end=t_end)
        e2, einf = relative_errors(u, case, geom, t=t_end or case.t_end)
        table.add(eps, e2, einf, report)
    return table


def march_parabolic(case: CaseSpec, scheme: SchemeKind, eps: float,
                    h: float | None = None,
                    mg_config: MgConfig | None = None,
                    t_end: float | None = None):
    """Crank-Nicolson march with the level set advanced inside each step."""
    t_end = case.t_end if t_end is None else t_end
    grid = case.grid_for(eps, h)
    h_val = grid.h[0]
    dt = case.dt_rule(eps, h_val)
    n_steps = int(round(t_end / dt))
    ls = case.seed(grid, _band_width(eps))
    geom = build_geometry(ls, eps)
    coords = grid.meshgrid()
    u = np.broadcast_to(case.initial(*coords, t=0.0), grid.shape).astype(float).copy()

    static_geometry = case.velocity is None
    numeric_ext = case.boundary_ext is None or case.forcing_ext is None
    g_fn, f_fn = case.boundary_ext, case.forcing_ext
    g_tab = f_tab = None
    if numeric_ext:
        g_tab = _FrozenFieldsByTime()
        f_tab = _FrozenFieldsByTime()
        g0, f0 = _prepare_extensions(case, geom, eps)
        if case.boundary_ext is None:
            g_tab.put(0.0, np.asarray(g0))
            g_fn = g_tab
        if case.forcing_ext is None:
            f_tab.put(0.0, np.asarray(f0))
            f_fn = f_tab
    spec = case.problem(eps, forcing_ext=f_fn, boundary_ext=g_fn)

    if static_geometry and grid.dim == 1 and not numeric_ext:
        u = _march_static_1d(case, spec, scheme, geom, u, dt, n_steps)
        return ScalarField(grid, u.reshape(-1)), geom, None

    report_last: SolveReport | None = None
    t = 0.0
    geom_old = geom
    for k in range(n_steps):
        t_new = (k + 1) * dt
        if static_geometry:
            geom_new = geom_old
            if numeric_ext:
                if case.boundary_ext is None:
                    g_tab.put(t_new, g_tab.table[0.0])
                if case.forcing_ext is None:
                    f_tab.put(t_new, f_tab.table[0.0])
        else:
            ls = _advance_levelset(case, ls, t, dt)
            geom_new = build_geometry(ls, eps)
            if numeric_ext:
                g_new, f_new = _prepare_extensions(case, geom_new, eps)
                if case.boundary_ext is None:
                    g_tab.put(t_new, np.asarray(g_new))
                if case.forcing_ext is None:
                    f_tab.put(t_new, np.asarray(f_new))
        op = assemble_heat_step(spec, scheme, geom_old, geom_new, u, dt, t, t_new)
        if grid.dim == 1:
            u = solve_tridiagonal(op).reshape(grid.shape)
        else:
            u, report_last = multigrid_solve(op, mg_config or MgConfig(), u0=u)
            if not report_last.converged:
                raise RuntimeError(
                    f"multigrid failed at step {k + 1}: case={case.id} "
                    f"eps={eps} residual={report_last.final_residual:.3e}")
        geom_old = geom_new
        t = t_new
    return ScalarField(grid, u.reshape(-1)), geom_old, report_last


def _march_static_1d(case: CaseSpec, spec: ProblemSpec, scheme: SchemeKind,
                     geom: GeometryFields, u: np.ndarray, dt: float,
                     n_steps: int) -> np.ndarray:
    """Fixed-geometry march: the implicit matrix is constant, so only the
    right-hand side is rebuilt each step. Same time scheme as
    assemble_heat_step (Crank-Nicolson diffusion, implicit penalty)."""
    from scipy.linalg import solve_banded

    grid = geom.grid
    x = grid.axis_coords(0)
    op_imp = assemble_heat_step(spec, scheme, geom, geom, u, dt, 0.0, dt)
    lo, di, up = op_imp.bands()
    n = di.size
    ab = np.zeros((3, n))
    ab[0, 1:] = up[:-1]
    ab[1, :] = di
    ab[2, :-1] = lo[1:]
    # diffusion-only band product for the right-hand side
    op_L = assemble_poisson(spec, scheme, geom)
    Llo, Ldi, Lup = op_L.bands()
    w = op_L.weight.reshape(-1)
    if op_L.corr is not None:
        c = op_L.corr[0].reshape(-1) / (2.0 * grid.h[0])
        Llo[1:-1] -= c[1:-1]
        Lup[1:-1] += c[1:-1]
    Ldi -= w
    Llo[0] = Lup[0] = Llo[-1] = Lup[-1] = 0.0
    Ldi[0] = Ldi[-1] = 0.0
    phi = geom.phase.phi.data

    u = u.reshape(-1).copy()
    f_old = spec.forcing_ext(x, t=0.0)
    for k in range(n_steps):
        t_new = (k + 1) * dt
        Du = Ldi * u
        Du[1:] += Llo[1:] * u[:-1]
        Du[:-1] += Lup[:-1] * u[1:]
        f_new = spec.forcing_ext(x, t=t_new)
        gb = spec.boundary_ext(x, t=t_new)
        rhs = phi * u / dt - 0.5 * Du + w * gb + 0.5 * phi * (f_old + f_new)
        rhs[0] = gb[0]
        rhs[-1] = gb[-1]
        u = solve_banded((1, 1), ab, rhs)
        f_old = f_new
    return u


# ---------------------------------------------------------------------------
# Truncation / analytic error split


@dataclass
class SplitReport:
    case_id: str
    scheme: str
    eps: float
    h_values: list
    consecutive: list          # signed relative consecutive errors
    orders: list
    truncation_sum: float
    analytic_leading: float    # signed relative leading analytic error

    def fitted_order(self) -> float:
        x = np.log(self.h_values[:-1])
        y = np.log(np.abs(self.consecutive))
        return float(np.polyfit(x, y, 1)[0])


def truncation_split(case: CaseSpec, scheme: SchemeKind, eps: float,
                     h_values) -> SplitReport:
    """Split the total error into discretization and modeling parts.

    Solves the steady case on each grid of the ladder, takes the signed
    difference of consecutive solutions at the node of maximal magnitude
    inside D, and compares their Richardson sum against the signed leading
    analytic error 2 * eps^p * (boundary-layer amplitude) relative to the
    max of the exact solution.
    """
    h_values = sorted(h_values, reverse=True)
    if len(h_values) < 3:
        raise ValueError("need at least 3 grid sizes")
    sols = []
    for h in h_values:
        u, geom, _ = solve_elliptic_once(case, scheme, eps, h)
        sols.append((u, geom))
    coords0 = sols[0][0].grid.meshgrid()
    umax = float(np.max(np.abs(case.exact(*coords0)[sols[0][1].ls.inside()
                                                    .reshape(sols[0][0].grid.shape)])))
    consecutive = []
    for (u1, geom1), (u2, _) in zip(sols[:-1], sols[1:]):
        x1 = u1.grid.axis_coords(0)
        x2 = u2.grid.axis_coords(0)
        idx = np.searchsorted(x2, x1)
        idx = np.clip(idx, 0, x2.size - 1)
        diff = u1.data - u2.data[idx]
        diff = np.where(geom1.ls.inside(), diff, 0.0)
        i = int(np.argmax(np.abs(diff)))
        consecutive.append(float(diff[i]) / umax)
    orders = [math.log(abs(consecutive[j - 1] / consecutive[j])) / math.log(2.0)
              for j in range(1, len(consecutive))]
    pred = asymptotics.predict(scheme, case.boundary_slope)
    power = pred.constants.get("boundary_power", 1.5)
    amp = pred.constants.get("boundary_const", 0.0)
    analytic = 2.0 * eps ** power * amp / umax if amp else 0.0
    return SplitReport(case.id, scheme.family, eps, list(h_values),
                       consecutive, orders, float(sum(consecutive)), analytic)


# ---------------------------------------------------------------------------
# Constant validation (asymptotics against solver output)


CONSTANT_SCHEDULES = {
    "ddm1": (0.003125, 0.0015625, 0.00078125, 0.000390625),
    "ddm3": (0.003125, 0.0015625, 0.00078125, 0.000390625),
    "ddm2": (0.0125, 0.00625, 0.003125, 0.0015625),
    "mddm1": (0.005, 0.0025, 0.00125, 0.000625),
    "mddm3": (0.005, 0.0025, 0.00125, 0.000625),
    "mddm2": (0.05, 0.025, 0.0125, 0.00625),
}


def _extraction_h_rule(scheme: SchemeKind):
    if scheme.modified:
        return lambda eps: eps ** 1.5 / 4.0
    return lambda eps: eps / 4.0


def run_constant_validation(case: CaseSpec, scheme: SchemeKind,
                            eps_schedule=None) -> list[dict]:
    """Measure the scheme's error constants on a 1D case and compare with
    the closed-form predictions. Returns rows for the constants CSV."""
    if case.dim != 1:
        raise ValueError("constant validation runs on 1D cases")
    scheme = replace(scheme, correction_support="band" if scheme.modified
                     else scheme.correction_support)
    eps_schedule = tuple(eps_schedule or CONSTANT_SCHEDULES[scheme.family])
    h_rule = _extraction_h_rule(scheme)
    pred = asymptotics.predict(scheme, case.boundary_slope)
    power = pred.constants.get("boundary_power", 1.0)

    interior = []
    boundary = []
    for eps in eps_schedule:
        u, geom, _ = solve_elliptic_once(case, scheme, eps, h_rule(eps))
        coords = u.grid.meshgrid()
        exact = ScalarField.from_values(u.grid, np.broadcast_to(
            case.exact(*coords), u.grid.shape))
        try:
            interior.append((eps, asymptotics.extract_interior_constant(
                u, exact, geom.ls, eps, power=1.0)))
        except asymptotics.PlateauError:
            if case.boundary_slope != 0.0 and scheme.family in ("ddm1", "ddm2",
                                                                "ddm3", "mddm2"):
                raise
        boundary.append((eps, asymptotics.boundary_layer_value(
            u, exact, geom.ls, eps, power)))

    rows = []

    def add(name, predicted, measured):
        gap = (abs(measured - predicted) / abs(predicted)
               if predicted else abs(measured))
        rows.append(dict(scheme=scheme.family, case=case.id,
                         constant_name=name, predicted=predicted,
                         measured=measured, rel_gap=gap))

    fam = scheme.family
    if fam in ("ddm1", "ddm3"):
        fit = asymptotics.fit_poly_in_ln_eps(interior, degree=1)
        add("ln_eps_slope", pred["ln_eps_slope"], fit.slope)
        add("ln_eps_intercept", pred["ln_eps_intercept"], fit.intercept)
    elif fam == "ddm2":
        add("interior_const", pred["interior_const"], interior[-1][1])
    elif fam in ("mddm1", "mddm3"):
        measured = asymptotics.extract_boundary_constant(boundary, power)
        add("boundary_const", pred["boundary_const"], measured)
    elif fam == "mddm2":
        add("interior_const", pred["interior_const"], interior[-1][1])
        measured = asymptotics.extract_boundary_constant(boundary, power)
        add("boundary_const", pred["boundary_const"], measured)
        add("h_integral", 2.92, pred["h_integral"])
    return rows


def constants_csv(rows) -> str:
    out = io.StringIO()
    out.write("scheme,case,constant_name,predicted,measured,rel_gap\n")
    for r in rows:
        out.write(f"{r['scheme']},{r['case']},{r['constant_name']},"
                  f"{r['predicted']:.6g},{r['measured']:.6g},{r['rel_gap']:.4g}\n")
    return out.getvalue()
