"""Level-set geometry pipeline.

Signed-distance fields (negative inside the physical domain D), the tanh
phase field built from them, interface normals, Hamilton-Jacobi transport
(WENO5 + TVD-RK2), reinitialization and constant-normal extension of data
off the interface.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import GridSpec, ScalarField, VectorField, _axis_slices, centered_gradient

DEFAULT_TAU = 1e-15
WENO_EPS = 1e-6


class CflError(ValueError):
    """Raised when an advection step violates the CFL restriction."""


@dataclass
class LevelSetField:
    """Signed distance to the interface, negative inside D."""

    r: ScalarField
    band_width: float

    @property
    def grid(self) -> GridSpec:
        return self.r.grid

    def inside(self) -> np.ndarray:
        """Boolean mask of nodes in D (r <= 0), flat."""
        return self.r.data <= 0.0

    def band(self, width: float | None = None) -> np.ndarray:
        w = self.band_width if width is None else width
        return np.abs(self.r.data) <= w


@dataclass
class PhaseField:
    """Smoothed characteristic function of D with transition width eps."""

    phi: ScalarField
    eps: float

    @property
    def grid(self) -> GridSpec:
        return self.phi.grid


def phase_from_distance(ls: LevelSetField, eps: float) -> PhaseField:
    """phi = (1 - tanh(3 r / eps)) / 2, so phi = 1/2 exactly on the interface."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    phi = 0.5 * (1.0 - np.tanh(3.0 * ls.r.data / eps))
    return PhaseField(ScalarField(ls.grid, phi), eps)


def regularized_grad_mag(pf: PhaseField, tau: float = DEFAULT_TAU) -> ScalarField:
    """|grad phi| blended away from zero: tau + (1 - tau) |grad phi|.

    Keeps the gradient-weighted penalty well posed where phi flattens out.
    """
    if not (0.0 < tau < 1.0):
        raise ValueError("tau must lie in (0, 1)")
    mag = centered_gradient(pf.phi).magnitude()
    return ScalarField(pf.grid, tau + (1.0 - tau) * mag.data)


def masked_normal(pf: PhaseField, ls: LevelSetField,
                  tau: float = DEFAULT_TAU) -> VectorField:
    """Outward unit normal -grad(phi)/|grad phi| inside D, zero outside.

    Zero is also used where |grad phi| has decayed below tau, which keeps
    the vector finite deep in the bulk.
    """
    grad = centered_gradient(pf.phi)
    mag = grad.magnitude().data
    ok = (ls.r.data <= 0.0) & (mag > tau)
    inv = np.where(ok, 1.0 / np.where(mag > tau, mag, 1.0), 0.0)
    comps = [-c * inv for c in grad.components]
    return VectorField(pf.grid, comps)


def sgn_smoothed(r: np.ndarray, h: float) -> np.ndarray:
    """Smoothed sign function: +-1 beyond one cell, sine blend inside."""
    out = np.where(r > h, 1.0, np.where(r < -h, -1.0, 0.0))
    mid = np.abs(r) <= h
    rm = r[mid]
    out[mid] = rm / h + np.sin(np.pi * rm / h) / np.pi
    return out


# ---------------------------------------------------------------------------
# WENO5 one-sided derivatives


def _weno5_from_diffs(q1, q2, q3, q4, q5):
    """Standard fifth-order WENO reconstruction of a derivative from five
    consecutive one-sided difference quotients (Jiang-Shu weights)."""
    is0 = 13.0 / 12.0 * (q1 - 2 * q2 + q3) ** 2 + 0.25 * (q1 - 4 * q2 + 3 * q3) ** 2
    is1 = 13.0 / 12.0 * (q2 - 2 * q3 + q4) ** 2 + 0.25 * (q2 - q4) ** 2
    is2 = 13.0 / 12.0 * (q3 - 2 * q4 + q5) ** 2 + 0.25 * (3 * q3 - 4 * q4 + q5) ** 2
    a0 = 0.1 / (WENO_EPS + is0) ** 2
    a1 = 0.6 / (WENO_EPS + is1) ** 2
    a2 = 0.3 / (WENO_EPS + is2) ** 2
    wsum = a0 + a1 + a2
    p0 = q1 / 3.0 - 7.0 * q2 / 6.0 + 11.0 * q3 / 6.0
    p1 = -q2 / 6.0 + 5.0 * q3 / 6.0 + q4 / 3.0
    p2 = q3 / 3.0 + 5.0 * q4 / 6.0 - q5 / 6.0
    return (a0 * p0 + a1 * p1 + a2 * p2) / wsum


def _pad_linear(values: np.ndarray, axis: int, width: int) -> np.ndarray:
    """Extrapolate the field linearly by ``width`` ghost layers along axis."""
    dim = values.ndim
    first = values[_axis_slices(dim, axis, slice(0, 1))]
    second = values[_axis_slices(dim, axis, slice(1, 2))]
    last = values[_axis_slices(dim, axis, slice(-1, None))]
    last2 = values[_axis_slices(dim, axis, slice(-2, -1))]
    lo_slabs = [first + (first - second) * k for k in range(width, 0, -1)]
    hi_slabs = [last + (last - last2) * k for k in range(1, width + 1)]
    return np.concatenate(lo_slabs + [values] + hi_slabs, axis=axis)


def weno_derivatives(values: np.ndarray, h: float, axis: int):
    """(D-, D+) fifth-order upwind derivatives along one axis.

    The field is extrapolated linearly outside the box; the interface is
    assumed to stay well away from the box boundary.
    """
    dim = values.ndim
    p = _pad_linear(values, axis, 3)
    d = (p[_axis_slices(dim, axis, slice(1, None))]
         - p[_axis_slices(dim, axis, slice(0, -1))]) / h
    n = values.shape[axis]

    def dq(offset):
        # difference quotient d_{i+offset-1/2} aligned with node i
        return d[_axis_slices(dim, axis, slice(3 + offset, 3 + offset + n))]

    dm = _weno5_from_diffs(dq(-3), dq(-2), dq(-1), dq(0), dq(1))
    dp = _weno5_from_diffs(dq(2), dq(1), dq(0), dq(-1), dq(-2))
    return dm, dp


def _godunov_grad_mag(values: np.ndarray, grid: GridSpec, direction: np.ndarray):
    """Godunov |grad| for motion in the normal direction with given sign.

    ``direction`` > 0 means outward motion (level set values decrease with
    speed |v|); the usual Osher-Sethian selection applies per axis.
    """
    sq = np.zeros_like(values)
    pos = direction > 0
    for d in range(grid.dim):
        dm, dp = weno_derivatives(values, grid.h[d], d)
        ap = np.maximum(dm, 0.0) ** 2
        am = np.minimum(dp, 0.0) ** 2
        bp = np.maximum(dp, 0.0) ** 2
        bm = np.minimum(dm, 0.0) ** 2
        sq += np.where(pos, np.maximum(ap, am), np.maximum(bp, bm))
    return np.sqrt(sq)


def _hj_rhs(values: np.ndarray, grid: GridSpec, v) -> np.ndarray:
    """Right-hand side -H for r_t + H = 0 with H = v|grad r| (scalar normal
    speed) or H = v . grad r (vector velocity), WENO5 upwinding."""
    if isinstance(v, VectorField):
        out = np.zeros_like(values)
        for d in range(grid.dim):
            dm, dp = weno_derivatives(values, grid.h[d], d)
            comp = v.view(d)
            out -= comp * np.where(comp > 0, dm, dp)
        return out
    speed = v.view() if isinstance(v, ScalarField) else np.asarray(v, dtype=float)
    speed = np.broadcast_to(speed, values.shape)
    mag = _godunov_grad_mag(values, grid, speed)
    return -speed * mag


def max_speed(v) -> float:
    if isinstance(v, VectorField):
        return float(v.magnitude().data.max())
    if isinstance(v, ScalarField):
        return float(np.abs(v.data).max())
    return float(np.max(np.abs(v)))


def advect(ls: LevelSetField, v, dt: float) -> LevelSetField:
    """One TVD-RK2 step of r_t + v |grad r| = 0 (or r_t + v . grad r = 0).

    Rejects steps with dt * max|v| / h > 0.5 instead of silently
    sub-stepping.
    """
    grid = ls.grid
    hmin = min(grid.h)
    cfl = dt * max_speed(v) / hmin
    if cfl > 0.5 + 1e-12:
        raise CflError(f"CFL number {cfl:.3f} exceeds 0.5")
    r0 = ls.r.view()
    k1 = r0 + dt * _hj_rhs(r0, grid, v)
    k2 = k1 + dt * _hj_rhs(k1, grid, v)
    r1 = 0.5 * (r0 + k2)
    return LevelSetField(ScalarField(grid, r1.reshape(-1)), ls.band_width)


def slope_deviation(ls: LevelSetField, band: float | None = None) -> float:
    """Max | |grad r| - 1 | near the interface (centered differences).

    In one dimension this is the usual slope check; in higher dimensions
    only the gradient magnitude equals one for a distance function (the
    per-axis slopes are normal components below one).
    """
    grid = ls.grid
    width = ls.band_width if band is None else band
    sel = ls.band(width)
    if not sel.any():
        return 0.0
    mag = centered_gradient(ls.r).magnitude().data
    return float(np.abs(mag[sel] - 1.0).max())


def needs_reinit(ls: LevelSetField, threshold: float = 0.01,
                 band: float | None = None) -> bool:
    """True when the distance property has drifted near the interface."""
    return slope_deviation(ls, band) > threshold


def _godunov_reinit_mag(values: np.ndarray, grid: GridSpec, sgn: np.ndarray):
    """First-order Godunov |grad r| used by the reinitialization flow."""
    dim = values.ndim
    sq = np.zeros_like(values)
    pos = sgn > 0
    for d in range(grid.dim):
        p = _pad_linear(values, d, 1)
        dm = (values - p[_axis_slices(dim, d, slice(0, -2))]) / grid.h[d]
        dp = (p[_axis_slices(dim, d, slice(2, None))] - values) / grid.h[d]
        ap = np.maximum(dm, 0.0) ** 2
        am = np.minimum(dp, 0.0) ** 2
        bp = np.maximum(dp, 0.0) ** 2
        bm = np.minimum(dm, 0.0) ** 2
        sq += np.where(pos, np.maximum(ap, am), np.maximum(bp, bm))
    return np.sqrt(sq)


def reinitialize(ls: LevelSetField, pseudo_steps: int | None = None,
                 residual_tol: float = 1e-3, max_steps: int = 200) -> LevelSetField:
    """Relax r toward a signed-distance function without moving the zero set.

    Pseudo-time flow r_tau = sgn(r0) (1 - |grad r|) with smoothed sign of
    the initial field and dtau = h/2. Nodes whose initial value changes sign
    with a neighbor relax instead toward the subcell distance
    r0/|grad r0|, which anchors the zero crossing. Stops when
    max| |grad r| - 1 | in the band drops under ``residual_tol`` or after
    ``max_steps`` iterations (or runs exactly ``pseudo_steps`` if given).
    """
    grid = ls.grid
    h = min(grid.h)
    dtau = 0.5 * h
    r0 = ls.r.view()
    r = r0.copy()
    sgn = sgn_smoothed(r0, h)

    near = np.zeros(grid.shape, dtype=bool)
    for d in range(grid.dim):
        flip = r0[_axis_slices(grid.dim, d, slice(0, -1))] \
            * r0[_axis_slices(grid.dim, d, slice(1, None))] <= 0.0
        near[_axis_slices(grid.dim, d, slice(0, -1))] |= flip
        near[_axis_slices(grid.dim, d, slice(1, None))] |= flip
    mag0 = np.maximum(centered_gradient(ls.r).magnitude().view(), 1e-12)
    subcell = r0 / mag0

    band = ls.band(ls.band_width).reshape(grid.shape)
    check = band & ~near
    n_iter = pseudo_steps if pseudo_steps is not None else max_steps
    for _ in range(n_iter):
        mag = _godunov_reinit_mag(r, grid, sgn)
        r = np.where(near,
                     r - (dtau / h) * (np.sign(r0) * np.abs(r) - subcell),
                     r + dtau * sgn * (1.0 - mag))
        if pseudo_steps is None and check.any():
            resid = float(np.abs(mag[check] - 1.0).max())
            if resid < residual_tol:
                break
    return LevelSetField(ScalarField(grid, r.reshape(-1)), ls.band_width)


def extend_constant_normal(psi: ScalarField, ls: LevelSetField, band: float,
                           preserve_interior: bool = True,
                           residual_tol: float = 1e-3,
                           max_steps: int = 200) -> ScalarField:
    """Make psi constant along interface normals within a band around the
    interface by relaxing psi_t + sgn(r) (grad r / |grad r|ic) . grad psi = 0.

    ``preserve_interior=True`` freezes all nodes with r <= 0 (forcing data
    keeps its bulk values and is only continued outward); with False the
    band on both sides relaxes to the interface trace (boundary data).
    Second-order one-sided differences, dtau = h/2.
    """
    grid = ls.grid
    h = min(grid.h)
    if band > min(hi - lo for lo, hi in zip(grid.lo, grid.hi)) / 2:
        raise ValueError("band exceeds the box half-width")
    dtau = 0.5 * h
    rv = ls.r.view()
    grad = centered_gradient(ls.r)
    mag = np.maximum(grad.magnitude().view(), 1e-12)
    sgn = sgn_smoothed(rv, h)
    wvec = [sgn * grad.view(d) / mag for d in range(grid.dim)]

    if preserve_interior:
        frozen = rv <= 0.0
    else:
        frozen = np.zeros(grid.shape, dtype=bool)
    active = (np.abs(rv) <= band + 2 * h) & ~frozen
    resmask = (~frozen) & (np.abs(rv) <= band) & (rv > -band)

    p = psi.view().copy()
    dim = grid.dim

    def upwind_term():
        adv = np.zeros(grid.shape)
        for d in range(dim):
            w = wvec[d]
            pp = _pad_linear(p, d, 2)
            vm = (3.0 * p
                  - 4.0 * pp[_axis_slices(dim, d, slice(1, -3))]
                  + pp[_axis_slices(dim, d, slice(0, -4))]) / (2.0 * grid.h[d])
            vp = (-3.0 * p
                  + 4.0 * pp[_axis_slices(dim, d, slice(3, -1))]
                  - pp[_axis_slices(dim, d, slice(4, None))]) / (2.0 * grid.h[d])
            adv += w * np.where(w > 0, vm, vp)
        return adv

    for _ in range(max_steps):
        adv = upwind_term()
        if resmask.any():
            scale = max(float(np.abs(p[resmask]).max()), 1.0)
            if float(np.abs(adv[resmask]).max()) < residual_tol * scale:
                break
        p = np.where(active, p - dtau * adv, p)
    return ScalarField(grid, p.reshape(-1))


# ---------------------------------------------------------------------------
# Analytic seeds


def seed_interval(grid: GridSpec, a: float, b: float,
                  band_width: float) -> LevelSetField:
    if b <= a:
        raise ValueError("need b > a")
    (x,) = grid.meshgrid()
    r = np.maximum(a - x, x - b)
    return LevelSetField(ScalarField(grid, r.reshape(-1)), band_width)


def star_boundary_radius(theta: np.ndarray, t: float = 0.0) -> np.ndarray:
    """Polar radius of the star-shaped boundary under its radial motion law.

    At t=0 this is 1 + 0.1 cos(3 theta) + 0.02 cos(5 theta); the prescribed
    radial velocity integrates to polynomial-in-t coefficients.
    """
    c3 = 0.1 + 0.2 * t + 0.2 * t * t
    c5 = 0.02 + 0.12 * t + 0.36 * t * t
    return 1.0 + c3 * np.cos(3.0 * theta) + c5 * np.cos(5.0 * theta)


def star_velocity(grid: GridSpec, t: float) -> VectorField:
    """Prescribed radial velocity field of the star-shaped domain."""
    x, y = grid.meshgrid()
    theta = np.arctan2(y, x)
    s = (0.2 * (1.0 + 2.0 * t) * np.cos(3.0 * theta)
         + 0.12 * (1.0 + 6.0 * t) * np.cos(5.0 * theta))
    return VectorField(grid, [(s * np.cos(theta)).reshape(-1),
                              (s * np.sin(theta)).reshape(-1)])


def seed_polar_star(grid: GridSpec, band_width: float, t: float = 0.0,
                    n_samples: int = 4096) -> LevelSetField:
    """Signed distance to the star-shaped polar curve by dense sampling,
    then a reinitialization pass to smooth the sampling error."""
    if grid.dim != 2:
        raise ValueError("polar star is a 2D shape")
    theta = np.linspace(0.0, 2.0 * np.pi, n_samples, endpoint=False)
    rho = star_boundary_radius(theta, t)
    px = rho * np.cos(theta)
    py = rho * np.sin(theta)
    x, y = grid.meshgrid()
    pts = np.stack([x.reshape(-1), y.reshape(-1)], axis=1)
    curve = np.stack([px, py], axis=1)
    from scipy.spatial import cKDTree

    dmin, _ = cKDTree(curve).query(pts)
    node_theta = np.arctan2(pts[:, 1], pts[:, 0])
    inside = np.hypot(pts[:, 0], pts[:, 1]) <= star_boundary_radius(node_theta, t)
    r = np.where(inside, -dmin, dmin)
    ls = LevelSetField(ScalarField(grid, r), band_width)
    return reinitialize(ls, pseudo_steps=10)


def torus_distance(x, y, z, major: float = 0.6, minor: float = 0.3,
                   tilt_deg: float = 135.0):
    """Signed distance to a torus centered at the origin with its axis
    rotated by tilt_deg in the y-z plane."""
    th = math.radians(tilt_deg)
    rx = x
    ry = y * math.sin(th) + z * math.cos(th)
    rz = y * math.cos(th) - z * math.sin(th)
    return np.sqrt((major - np.sqrt(rx ** 2 + ry ** 2)) ** 2 + rz ** 2) - minor


def seed_torus(grid: GridSpec, band_width: float, major: float = 0.6,
               minor: float = 0.3, tilt_deg: float = 135.0) -> LevelSetField:
    if minor <= 0 or major <= minor:
        raise ValueError("need major > minor > 0")
    x, y, z = grid.meshgrid()
    r = torus_distance(x, y, z, major, minor, tilt_deg)
    return LevelSetField(ScalarField(grid, r.reshape(-1)), band_width)


def analytic_seed(shape: str, grid: GridSpec, band_width: float,
                  **params) -> LevelSetField:
    """Seed a level set from a named shape: interval, polar_star or torus."""
    if shape == "interval":
        return seed_interval(grid, params["a"], params["b"], band_width)
    if shape == "polar_star":
        return seed_polar_star(grid, band_width, t=params.get("t", 0.0))
    if shape == "torus":
        return seed_torus(grid, band_width,
                          params.get("major", 0.6), params.get("minor", 0.3),
                          params.get("tilt_deg", 135.0))
    raise ValueError(f"unknown shape {shape!r}")
