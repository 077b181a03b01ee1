"""Uniform node-centered box grids, scalar/vector fields and stencil kernels.

Fields live on the nodes of a regular box in 1-3 dimensions. All stencils
are second order: centered differences in the interior, one-sided
three-point differences on the outer boundary of the box.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class GridSpec:
    """Uniform node-centered grid on a box.

    ``n`` counts nodes per axis (so there are ``n - 1`` cells), and the
    spacing is ``h = (hi - lo) / (n - 1)``. Paper-style experiments use
    square cells; pass ``allow_anisotropic=True`` to opt out of that check.
    """

    lo: tuple[float, ...]
    hi: tuple[float, ...]
    n: tuple[int, ...]
    allow_anisotropic: bool = False

    def __post_init__(self):
        object.__setattr__(self, "lo", tuple(float(a) for a in self.lo))
        object.__setattr__(self, "hi", tuple(float(b) for b in self.hi))
        object.__setattr__(self, "n", tuple(int(k) for k in self.n))
        if not (len(self.lo) == len(self.hi) == len(self.n)):
            raise ValueError("lo/hi/n must have equal length")
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        if any(k < 3 for k in self.n):
            raise ValueError("need at least 3 nodes per axis")
        if any(b <= a for a, b in zip(self.lo, self.hi)):
            raise ValueError("hi must exceed lo on every axis")
        if not self.allow_anisotropic:
            hs = self.h
            if max(hs) - min(hs) > 1e-12 * max(hs):
                raise ValueError(f"cells are not square: h={hs}")

    @property
    def dim(self) -> int:
        return len(self.n)

    @property
    def h(self) -> tuple[float, ...]:
        return tuple((b - a) / (k - 1) for a, b, k in zip(self.lo, self.hi, self.n))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.n

    @property
    def node_count(self) -> int:
        return int(np.prod(self.n))

    def axis_coords(self, axis: int) -> np.ndarray:
        return np.linspace(self.lo[axis], self.hi[axis], self.n[axis])

    def meshgrid(self) -> tuple[np.ndarray, ...]:
        """Coordinate arrays of shape ``self.shape``, 'ij' indexing."""
        return tuple(np.meshgrid(*[self.axis_coords(d) for d in range(self.dim)],
                                 indexing="ij"))

    def boundary_mask(self) -> np.ndarray:
        """True on the outer boundary nodes of the box."""
        m = np.zeros(self.shape, dtype=bool)
        for d in range(self.dim):
            sl = [slice(None)] * self.dim
            sl[d] = 0
            m[tuple(sl)] = True
            sl[d] = -1
            m[tuple(sl)] = True
        return m

    def coarsened(self) -> GridSpec:
        """Grid with every other node kept (requires n odd per axis)."""
        if any((k - 1) % 2 for k in self.n):
            raise ValueError(f"cannot coarsen n={self.n}: n-1 must be even")
        return GridSpec(self.lo, self.hi, tuple((k - 1) // 2 + 1 for k in self.n),
                        self.allow_anisotropic)


@dataclass
class ScalarField:
    """One real value per node, stored flat in row-major order."""

    grid: GridSpec
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float).reshape(-1)
        if self.data.size != self.grid.node_count:
            raise ValueError("data length does not match node count")

    @classmethod
    def from_values(cls, grid: GridSpec, values: np.ndarray) -> ScalarField:
        return cls(grid, np.asarray(values, dtype=float).reshape(-1).copy())

    @classmethod
    def full(cls, grid: GridSpec, value: float) -> ScalarField:
        return cls(grid, np.full(grid.node_count, float(value)))

    @classmethod
    def from_function(cls, grid: GridSpec, fn) -> ScalarField:
        """Evaluate ``fn(*coords)`` on the meshgrid."""
        vals = fn(*grid.meshgrid())
        return cls(grid, np.broadcast_to(vals, grid.shape).astype(float).reshape(-1).copy())

    def view(self) -> np.ndarray:
        """Data reshaped to the grid shape (shares memory)."""
        return self.data.reshape(self.grid.shape)

    def copy(self) -> ScalarField:
        return ScalarField(self.grid, self.data.copy())


@dataclass
class VectorField:
    """One component array per axis, each stored like a ScalarField."""

    grid: GridSpec
    components: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if len(self.components) != self.grid.dim:
            raise ValueError("need one component per axis")
        self.components = [np.asarray(c, dtype=float).reshape(-1)
                           for c in self.components]
        for c in self.components:
            if c.size != self.grid.node_count:
                raise ValueError("component length does not match node count")

    def view(self, axis: int) -> np.ndarray:
        return self.components[axis].reshape(self.grid.shape)

    def magnitude(self) -> ScalarField:
        mag = np.sqrt(sum(c * c for c in self.components))
        return ScalarField(self.grid, mag)


def _axis_slices(dim: int, axis: int, s: slice) -> tuple:
    sl = [slice(None)] * dim
    sl[axis] = s
    return tuple(sl)


def deriv_axis(values: np.ndarray, h: float, axis: int) -> np.ndarray:
    """Second-order derivative along one axis: centered inside, one-sided at
    the two boundary planes."""
    dim = values.ndim
    out = np.empty_like(values)
    inner = _axis_slices(dim, axis, slice(1, -1))
    plus = _axis_slices(dim, axis, slice(2, None))
    minus = _axis_slices(dim, axis, slice(0, -2))
    out[inner] = (values[plus] - values[minus]) / (2.0 * h)

    first = _axis_slices(dim, axis, slice(0, 1))
    f1 = _axis_slices(dim, axis, slice(1, 2))
    f2 = _axis_slices(dim, axis, slice(2, 3))
    out[first] = (-3.0 * values[first] + 4.0 * values[f1] - values[f2]) / (2.0 * h)

    last = _axis_slices(dim, axis, slice(-1, None))
    l1 = _axis_slices(dim, axis, slice(-2, -1))
    l2 = _axis_slices(dim, axis, slice(-3, -2))
    out[last] = (3.0 * values[last] - 4.0 * values[l1] + values[l2]) / (2.0 * h)
    return out


def centered_gradient(f: ScalarField) -> VectorField:
    v = f.view()
    comps = [deriv_axis(v, f.grid.h[d], d).reshape(-1) for d in range(f.grid.dim)]
    return VectorField(f.grid, comps)


def flux_divergence(coef: ScalarField, u: ScalarField) -> ScalarField:
    """Conservative discretization of div(coef grad u).

    Face coefficients are arithmetic means of the nodal values. The outer
    boundary nodes of the box get value 0 (their rows are replaced by
    Dirichlet conditions wherever this operator is used).
    """
    if coef.grid != u.grid:
        raise ValueError("coef and u live on different grids")
    if np.any(coef.data < 0):
        raise ValueError("coef must be nonnegative")
    g = u.grid
    cv = coef.view()
    uv = u.view()
    out = np.zeros_like(uv)
    for d in range(g.dim):
        h2 = g.h[d] ** 2
        inner = _axis_slices(g.dim, d, slice(1, -1))
        plus = _axis_slices(g.dim, d, slice(2, None))
        minus = _axis_slices(g.dim, d, slice(0, -2))
        c_plus = 0.5 * (cv[inner] + cv[plus])
        c_minus = 0.5 * (cv[inner] + cv[minus])
        out[inner] += (c_plus * (uv[plus] - uv[inner])
                       - c_minus * (uv[inner] - uv[minus])) / h2
    bmask = g.boundary_mask()
    out[bmask] = 0.0
    return ScalarField(g, out)


def norm_l2_weighted(w: ScalarField, f: ScalarField) -> float:
    """Discrete L2 norm of the pointwise product w*f: sqrt(mean((w f)^2))."""
    if w.grid != f.grid:
        raise ValueError("fields live on different grids")
    p = w.data * f.data
    return float(np.sqrt(np.mean(p * p)))


def norm_linf_masked(mask: np.ndarray, f: ScalarField) -> float:
    """Max of |f| over the masked nodes."""
    m = np.asarray(mask, dtype=bool).reshape(-1)
    if m.size != f.grid.node_count:
        raise ValueError("mask length does not match node count")
    if not m.any():
        raise ValueError("mask selects no nodes")
    return float(np.max(np.abs(f.data[m])))


def flag_refinement(u: ScalarField, phi: ScalarField,
                    threshold_scale: float = 1e-4) -> np.ndarray:
    """Flag nodes where the undivided gradient of u*phi is large.

    A node is flagged when the largest centered undivided difference of
    ``u*phi`` over the axes reaches ``threshold_scale`` (boundary planes use
    one-sided differences). Returns a boolean array on the grid shape.
    """
    if u.grid != phi.grid:
        raise ValueError("fields live on different grids")
    g = u.grid
    p = (u.data * phi.data).reshape(g.shape)
    flags = np.zeros(g.shape, dtype=bool)
    for d in range(g.dim):
        und = np.abs(deriv_axis(p, 0.5, d))  # 2h spacing with h=0.5 -> undivided
        flags |= und >= threshold_scale
    return flags


def save_field(path, f: ScalarField) -> None:
    """Plain-text dump: header (dim, n, lo, hi) then row-major values."""
    g = f.grid
    with open(path, "w") as fh:
        fh.write(f"dim {g.dim}\n")
        fh.write("n " + " ".join(str(k) for k in g.n) + "\n")
        fh.write("lo " + " ".join(repr(a) for a in g.lo) + "\n")
        fh.write("hi " + " ".join(repr(b) for b in g.hi) + "\n")
        np.savetxt(fh, f.data.reshape(-1, 1))


def load_field(path) -> ScalarField:
    with open(path) as fh:
        dim = int(fh.readline().split()[1])
        n = tuple(int(t) for t in fh.readline().split()[1:])
        lo = tuple(float(t) for t in fh.readline().split()[1:])
        hi = tuple(float(t) for t in fh.readline().split()[1:])
        if len(n) != dim:
            raise ValueError("header is inconsistent")
        data = np.loadtxt(fh).reshape(-1)
    return ScalarField(GridSpec(lo, hi, n, allow_anisotropic=True), data)
