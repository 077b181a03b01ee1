"""Linear solvers: direct tridiagonal in 1D, geometric multigrid in 2D/3D.

The multigrid hierarchy re-discretizes the operator on coarse grids (the
assembled operator knows how to inject its nodal ingredient fields), uses
red-black Gauss-Seidel smoothing, full-weighting restriction and
(bi/tri)linear prolongation. The stopping test uses the diagonally scaled
residual so the huge penalty rows outside the physical domain do not skew
the norm.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .grid import GridSpec, _axis_slices
from .schemes import AssembledOperator


def thomas_solve(lower, diag, upper, rhs) -> np.ndarray:
    """Solve the tridiagonal system with the Thomas elimination.

    ``lower[i]`` multiplies x[i-1] in row i (lower[0] ignored), ``upper[i]``
    multiplies x[i+1] (upper[-1] ignored). Raises on a zero pivot.
    """
    a = np.asarray(lower, dtype=float)
    b = np.asarray(diag, dtype=float)
    c = np.asarray(upper, dtype=float)
    d = np.asarray(rhs, dtype=float)
    n = b.size
    if not (a.size == c.size == d.size == n):
        raise ValueError("band lengths are inconsistent")
    cp = np.empty(n)
    dp = np.empty(n)
    if b[0] == 0.0:
        raise ZeroDivisionError("zero pivot in row 0")
    cp[0] = c[0] / b[0]
    dp[0] = d[0] / b[0]
    for i in range(1, n):
        den = b[i] - a[i] * cp[i - 1]
        if den == 0.0:
            raise ZeroDivisionError(f"zero pivot in row {i}")
        cp[i] = c[i] / den
        dp[i] = (d[i] - a[i] * dp[i - 1]) / den
    x = np.empty(n)
    x[-1] = dp[-1]
    for i in range(n - 2, -1, -1):
        x[i] = dp[i] - cp[i] * x[i + 1]
    return x


def solve_tridiagonal(op: AssembledOperator) -> np.ndarray:
    """Direct solve of a 1D assembled operator (LAPACK banded path)."""
    lower, diag, upper = op.bands()
    n = diag.size
    ab = np.zeros((3, n))
    ab[0, 1:] = upper[:-1]
    ab[1, :] = diag
    ab[2, :-1] = lower[1:]
    return solve_banded((1, 1), ab, op.rhs)


@dataclass
class MgConfig:
    n_levels: int | None = None          # None: coarsen while >= 5 nodes/axis
    pre_smooth: int = 2
    post_smooth: int = 2
    tolerance: float = 1e-10
    max_vcycles: int = 200
    coarse_sweeps: int = 200

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")


@dataclass
class SolveReport:
    iterations: int
    final_residual: float
    converged: bool
    contraction: list[float] = field(default_factory=list)

    @property
    def max_contraction(self) -> float:
        return max(self.contraction) if self.contraction else 0.0


def _parity_mask(grid: GridSpec) -> np.ndarray:
    idx = np.zeros(grid.shape, dtype=int)
    for d in range(grid.dim):
        shape = [1] * grid.dim
        shape[d] = grid.n[d]
        idx = idx + np.arange(grid.n[d]).reshape(shape)
    return idx % 2 == 0


def _rb_sweep(op: AssembledOperator, u: np.ndarray, b: np.ndarray,
              diag: np.ndarray, red: np.ndarray) -> np.ndarray:
    for mask in (red, ~red):
        r = b - op.apply(u)
        u[mask] += r[mask] / diag[mask]
    return u


def restrict_full_weighting(fine: np.ndarray) -> np.ndarray:
    """Node-centered full weighting: [1/4, 1/2, 1/4] per axis, then take
    every other node. Boundary planes are injected."""
    a = fine
    dim = a.ndim
    for d in range(dim):
        s = a.copy()
        inner = _axis_slices(dim, d, slice(1, -1))
        plus = _axis_slices(dim, d, slice(2, None))
        minus = _axis_slices(dim, d, slice(0, -2))
        s[inner] = 0.25 * a[minus] + 0.5 * a[inner] + 0.25 * a[plus]
        a = s
    return a[tuple(slice(None, None, 2) for _ in range(dim))].copy()


def prolong_linear(coarse: np.ndarray) -> np.ndarray:
    """Multilinear interpolation onto the grid with doubled resolution."""
    a = coarse
    dim = a.ndim
    for d in range(dim):
        n = a.shape[d]
        shape = list(a.shape)
        shape[d] = 2 * n - 1
        out = np.zeros(shape, dtype=a.dtype)
        out[_axis_slices(dim, d, slice(0, None, 2))] = a
        lo = a[_axis_slices(dim, d, slice(0, -1))]
        hi = a[_axis_slices(dim, d, slice(1, None))]
        out[_axis_slices(dim, d, slice(1, None, 2))] = 0.5 * (lo + hi)
        a = out
    return a


def _layer_limit(op: AssembledOperator) -> float | None:
    """Coarsest spacing that still resolves the penalty layer, or None.

    When the operator carries a significant interface layer (peak penalty
    weight of order 1/eps^2 or more), grids with h beyond ~1.5 eps produce
    useless re-discretized coarse corrections in the band; hierarchy depth
    is capped there and the coarsest level leans on extra sweeps instead.
    """
    eps = op.ingredients.get("eps")
    if eps is None:
        return None
    if float(op.weight.max()) * eps ** 2 < 0.5:
        return None
    return 0.8 * eps


def _build_hierarchy(op: AssembledOperator, n_levels: int | None):
    ops = [op]
    h_cap = _layer_limit(op)
    while True:
        g = ops[-1].grid
        if n_levels is not None and len(ops) >= n_levels:
            break
        if any((k - 1) % 2 for k in g.n) or any((k - 1) // 2 + 1 < 5 for k in g.n):
            break
        if h_cap is not None and max(g.h) * 2.0 > h_cap:
            break
        ops.append(ops[-1].coarsened())
    return ops


def _vcycle(ops, diags, reds, level, u, b, cfg: MgConfig):
    op = ops[level]
    diag = diags[level]
    red = reds[level]
    if level == len(ops) - 1:
        for _ in range(cfg.coarse_sweeps):
            u = _rb_sweep(op, u, b, diag, red)
        return u
    for _ in range(cfg.pre_smooth):
        u = _rb_sweep(op, u, b, diag, red)
    res = b - op.apply(u)
    res[op.boundary.reshape(op.grid.shape)] = 0.0
    rc = restrict_full_weighting(res)
    rc[ops[level + 1].boundary.reshape(ops[level + 1].grid.shape)] = 0.0
    ec = _vcycle(ops, diags, reds, level + 1, np.zeros_like(rc), rc, cfg)
    u = u + prolong_linear(ec)
    for _ in range(cfg.post_smooth):
        u = _rb_sweep(op, u, b, diag, red)
    return u


def multigrid_solve(op: AssembledOperator, cfg: MgConfig | None = None,
                    u0: np.ndarray | None = None):
    """V-cycle iteration until the diagonally scaled residual norm drops
    below tolerance * (norm of the scaled rhs). Returns (solution array,
    SolveReport); a non-converged run is reported, never silently returned
    as converged.
    """
    cfg = cfg or MgConfig()
    grid = op.grid
    ops = _build_hierarchy(op, cfg.n_levels)
    diags = [o.diagonal() for o in ops]
    reds = [_parity_mask(o.grid) for o in ops]
    b = op.rhs.reshape(grid.shape).copy()
    u = (np.zeros(grid.shape) if u0 is None
         else np.asarray(u0, dtype=float).reshape(grid.shape).copy())

    def scaled_norm(v):
        return float(np.sqrt(np.mean((v / diags[0]) ** 2)))

    target = cfg.tolerance * max(scaled_norm(b), 1e-300)
    resid = scaled_norm(b - op.apply(u))
    if resid <= target:
        return u, SolveReport(0, resid, True)
    ratios = []
    for it in range(1, cfg.max_vcycles + 1):
        u = _vcycle(ops, diags, reds, 0, u, b, cfg)
        new_resid = scaled_norm(b - op.apply(u))
        ratios.append(new_resid / resid if resid > 0 else 0.0)
        resid = new_resid
        if resid <= target:
            return u, SolveReport(it, resid, True, ratios)
    return u, SolveReport(cfg.max_vcycles, resid, False, ratios)
