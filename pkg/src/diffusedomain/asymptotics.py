"""Closed-form error constants of the boundary-layer analysis and the
utilities that extract the matching quantities from solver output.

For a scheme with boundary slope A (normal derivative of the exact solution
at the interface) the leading error constants are:

    ddm2   interior: (A/3)(gamma - ln 6)
    ddm1   interior: -(A/6) ln eps + (A/3)(gamma - ln 6)
    ddm3   interior: -(A/6) ln eps + (A/3)(gamma - ln(sqrt(2/3)/2))
    mddm1  boundary (power 1.5): -A / sqrt(2 pi)
    mddm3  boundary (power 1.5): -A / sqrt(6 pi)
    mddm2  interior: -A / H, boundary: -A exp(1/36) / H

where gamma is the Euler-Mascheroni constant and H is the integral of
h(x) = exp(exp(6x)(1-6x)/36 + 6x) over the real line (about 2.92). All
constants are linear in A and vanish when A = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import quad

from .grid import ScalarField
from .levelset import LevelSetField
from .schemes import SchemeKind

EULER_GAMMA = 0.577215664901532860606512


class PlateauError(RuntimeError):
    """The scaled error has no flat interior plateau at the assumed power."""


def h_integrand(x):
    return np.exp(np.exp(6.0 * x) * (1.0 - 6.0 * x) / 36.0 + 6.0 * x)


@lru_cache(maxsize=None)
def h_integral(lo: float = -math.inf, hi: float = math.inf) -> float:
    """Integral of h over [lo, hi] to absolute accuracy 1e-8.

    The integrand decays double-exponentially on the right (truncate at 3)
    and like exp(6x) on the left (truncate at -30; the tail is below
    exp(1/36) exp(-180) / 6).
    """
    a = max(lo, -30.0)
    b = min(hi, 3.0)
    if a >= b:
        return 0.0
    total = 0.0
    for left, right in ((a, min(b, 0.0)), (max(a, 0.0), b)):
        if left < right:
            val, _ = quad(h_integrand, left, right, epsabs=1e-10,
                          epsrel=1e-10, limit=200)
            total += val
    return total


@dataclass(frozen=True)
class AsymptoticPrediction:
    scheme: SchemeKind
    boundary_slope: float                 # A
    constants: dict

    def __getitem__(self, key):
        return self.constants[key]


def predict(scheme: SchemeKind, boundary_slope: float,
            eps: float | None = None) -> AsymptoticPrediction:
    """All leading error constants defined for the scheme.

    ``interior_const`` is the limit of (u_eps - u)/eps deep inside D (its
    eps-dependent part is reported through ``ln_eps_slope`` and evaluated
    at eps when one is given). ``boundary_const`` is the scaled error at
    the interface at the family's power (1.5 for mddm1/mddm3, 1 for the
    others).
    """
    A = boundary_slope
    fam = scheme.family
    c: dict[str, float] = {}
    if fam == "ddm2":
        c["interior_const"] = (A / 3.0) * (EULER_GAMMA - math.log(6.0))
        c["ln_eps_slope"] = 0.0
        c["boundary_power"] = 1.0
        c["boundary_const"] = c["interior_const"]
    elif fam in ("ddm1", "ddm3"):
        if fam == "ddm1":
            intercept = (A / 3.0) * (EULER_GAMMA - math.log(6.0))
        else:
            intercept = (A / 3.0) * (EULER_GAMMA - math.log(0.5 * math.sqrt(2.0 / 3.0)))
        c["ln_eps_slope"] = -A / 6.0
        c["ln_eps_intercept"] = intercept
        c["boundary_power"] = 1.0
        if eps is not None:
            c["interior_const"] = c["ln_eps_slope"] * math.log(eps) + intercept
    elif fam == "mddm1":
        c["boundary_power"] = 1.5
        c["boundary_const"] = -A / math.sqrt(2.0 * math.pi)
        c["interior_const"] = 0.0
    elif fam == "mddm3":
        c["boundary_power"] = 1.5
        c["boundary_const"] = -A / math.sqrt(6.0 * math.pi)
        c["interior_const"] = 0.0
    elif fam == "mddm2":
        H = h_integral()
        c["boundary_power"] = 1.0
        c["interior_const"] = -A / H
        c["boundary_const"] = -A * math.exp(1.0 / 36.0) / H
        c["h_integral"] = H
    return AsymptoticPrediction(scheme, A, c)


@dataclass
class FitResult:
    coefficients: np.ndarray      # highest degree first (numpy poly order)
    residual_norm: float

    @property
    def intercept(self) -> float:
        return float(self.coefficients[-1])

    @property
    def slope(self) -> float:
        return float(self.coefficients[-2])


def fit_poly_in_ln_eps(points, degree: int) -> FitResult:
    """Least-squares fit of value against powers of ln(eps)."""
    pts = list(points)
    if degree not in (1, 2):
        raise ValueError("degree must be 1 or 2")
    if len(pts) < degree + 2:
        raise ValueError(f"need at least {degree + 2} points")
    eps = np.array([p[0] for p in pts], dtype=float)
    val = np.array([p[1] for p in pts], dtype=float)
    if len(np.unique(eps)) != len(eps):
        raise ValueError("eps values must be distinct")
    x = np.log(eps)
    coef = np.polyfit(x, val, degree)
    resid = val - np.polyval(coef, x)
    return FitResult(coef, float(np.linalg.norm(resid)))


def extract_interior_constant(u_num: ScalarField, u_exact: ScalarField,
                              ls: LevelSetField, eps: float, power: float,
                              window: tuple[float, float] = (-10.0, -5.0),
                              flatness: float = 0.05) -> float:
    """Plateau value of (u_num - u_exact)/eps^power in the window of scaled
    depth z = r/eps.

    Raises PlateauError when the plateau is not flat to ``flatness`` of its
    mean - the signal that the assumed expansion power is wrong.
    """
    z = ls.r.data / eps
    sel = (z >= window[0]) & (z <= window[1])
    if sel.sum() < 5:
        raise PlateauError(f"window {window} holds {int(sel.sum())} nodes (< 5)")
    scaled = (u_num.data[sel] - u_exact.data[sel]) / eps ** power
    mean = float(np.mean(scaled))
    spread = float(np.max(scaled) - np.min(scaled))
    if spread > flatness * max(abs(mean), 1e-300):
        raise PlateauError(
            f"plateau spread {spread:.3g} exceeds {flatness:.0%} of |mean| "
            f"{abs(mean):.3g}")
    return mean


def boundary_layer_value(u_num: ScalarField, u_exact: ScalarField,
                         ls: LevelSetField, eps: float, power: float) -> float:
    """Interpolate (u_num - u_exact)/eps^power at the interface (r = 0).

    One-dimensional fields only; uses the rightmost sign change of r and a
    quadratic through the three nearest nodes.
    """
    if u_num.grid.dim != 1:
        raise ValueError("boundary interpolation is implemented in 1D")
    r = ls.r.data
    x = u_num.grid.axis_coords(0)
    sign = np.sign(r)
    crossings = np.nonzero(sign[:-1] * sign[1:] < 0)[0]
    if crossings.size == 0:
        raise ValueError("level set has no zero crossing")
    i = int(crossings[-1])
    # linear interpolation of the crossing location
    x0 = x[i] - r[i] * (x[i + 1] - x[i]) / (r[i + 1] - r[i])
    scaled = (u_num.data - u_exact.data) / eps ** power
    j = min(max(i, 1), x.size - 2)
    coef = np.polyfit(x[j - 1:j + 2], scaled[j - 1:j + 2], 2)
    return float(np.polyval(coef, x0))


def extract_boundary_constant(sweep, power: float,
                              max_rel_residual: float = 0.10) -> float:
    """Extrapolate boundary-layer values collected over an eps sweep to
    eps -> 0.

    ``sweep`` is a sequence of (eps, value) pairs with at least 4 entries.
    The power-1.5 family extrapolates with a quadratic in sqrt(eps); power 1
    uses a straight line in eps. Raises when the fit residual exceeds
    ``max_rel_residual`` of the intercept.
    """
    pts = sorted(sweep)
    if len(pts) < 4:
        raise ValueError("need a sweep of at least 4 eps values")
    eps = np.array([p[0] for p in pts])
    val = np.array([p[1] for p in pts])
    if power == 1.5:
        xs = np.sqrt(eps)
        coef = np.polyfit(xs, val, 2)
    else:
        xs = eps
        coef = np.polyfit(xs, val, 1)
    resid = float(np.linalg.norm(val - np.polyval(coef, xs)))
    intercept = float(coef[-1])
    if resid > max_rel_residual * max(abs(intercept), 1e-300):
        raise RuntimeError(
            f"boundary fit residual {resid:.3g} exceeds "
            f"{max_rel_residual:.0%} of intercept {intercept:.3g}")
    return intercept
