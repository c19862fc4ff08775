"""Mellin symbols of model operators on the half-line and of the wedge system.

Mathematical formulation
------------------------
The contour is the infinite rectangle made of four pieces, traversed as

    Gamma1 : xi from -inf to +inf          (Xi = 1/p - i xi)
    Gamma2+: eta from +inf to 0
    Gamma3 : xi from +inf to -inf
    Gamma2-: eta from 0 to +inf

Symbols of order ``s``:

* identity  : exp(i pi s) sin(pi(Xi - s)) / sin(pi Xi) on Gamma1,
              ((eta + i)/(eta - i))^s on Gamma2+,
              ((eta - i)/(eta + i))^s on Gamma2-,
              exp(i pi s) on Gamma3;
* K^1_c     : exp(-i pi (Xi - 1)) c^(Xi - s - 1) / sin(pi Xi) on Gamma1 and
              Gamma3, zero on Gamma2+-.

All complex powers use ``arg`` in (0, 2pi).  With that reading the four
pieces of every symbol join continuously at the corners.

The wedge system ``[[I, -A], [A, I]]`` with ``A = (K_{e^{ia}} + K_{e^{i(2pi-a)}})/2``
has on Gamma1 the symbol ``[[d, -b], [b, d]]`` with

    d = exp(i pi r) sin(pi(Xi - r)) / sin(pi Xi),
    b = exp(-i pi r) cos((pi - a)(Xi - r - 1)) / sin(pi Xi),

and ``det = d^2 + b^2``.

Performance
-----------
Everything is vectorized over xi.  For ``|xi| >= 10`` the determinant is
evaluated in log form, so the scan never overflows regardless of range.
"""

from __future__ import annotations

import cmath
import csv
import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import ConstraintError, DomainError, NonEllipticError
from .special_functions import TWO_PI, BranchSpec, arg_in_open_circle, complex_power

ELLIPTIC_TOL = 1e-6
MARGINAL_TOL = 1e-8
SCALED_FROM = 10.0


class Component(str, enum.Enum):
    GAMMA1 = "Gamma1"
    GAMMA2_PLUS = "Gamma2Plus"
    GAMMA2_MINUS = "Gamma2Minus"
    GAMMA3 = "Gamma3"


@dataclass(frozen=True)
class SpaceParams:
    """Integrability ``p`` and smoothness order (``s`` for the BVP, ``r`` for the BIE)."""

    p: float
    order: float
    check_strip: bool = False

    def __post_init__(self):
        if not (1.0 < self.p < math.inf):
            raise ConstraintError(f"p={self.p} must lie in (1, inf)")
        if self.check_strip and not (1.0 / self.p < self.order < 1.0 + 1.0 / self.p):
            raise ConstraintError(
                f"s={self.order} violates 1/p < s < 1 + 1/p for p={self.p}")


@dataclass(frozen=True)
class SymbolPoint:
    """A point of the contour; ``xi`` is used on Gamma1/Gamma3, ``eta`` on Gamma2."""

    component: Component
    xi: float | None = None
    eta: float | None = None

    def __post_init__(self):
        comp = Component(self.component)
        object.__setattr__(self, "component", comp)
        if comp in (Component.GAMMA1, Component.GAMMA3):
            if self.xi is None or self.eta is not None:
                raise DomainError(f"{comp.value} points take xi only")
        else:
            if self.eta is None or self.xi is not None:
                raise DomainError(f"{comp.value} points take eta only")
            if self.eta < 0:
                raise DomainError("eta must be nonnegative")

    def Xi(self, p: float) -> complex:
        if self.xi is None:
            raise DomainError("Xi is defined on Gamma1 and Gamma3 only")
        return 1.0 / p - 1j * self.xi


@dataclass(frozen=True)
class MellinOperatorSpec:
    """Operator ``d0 I + sum_j d_j K^1_{c_j}``."""

    d0: complex
    terms: tuple = ()

    def __post_init__(self):
        terms = tuple((complex(d), complex(c)) for d, c in self.terms)
        for _, c in terms:
            arg_in_open_circle(c)
        object.__setattr__(self, "terms", terms)

    def __add__(self, other: "MellinOperatorSpec") -> "MellinOperatorSpec":
        return MellinOperatorSpec(self.d0 + other.d0, self.terms + other.terms)


@dataclass
class SystemSymbolValue:
    matrix: np.ndarray
    det: complex
    point: SymbolPoint


# ------------------------------------------------------------ scalar symbols

def _ratio_sin(Xi, s):
    """sin(pi(Xi - s)) / sin(pi Xi), overflow free."""
    return np.exp(log_sin(np.pi * (Xi - s)) - log_sin(np.pi * Xi))


def identity_symbol(omega: SymbolPoint, params: SpaceParams) -> complex:
    s, p = params.order, params.p
    comp = omega.component
    if comp is Component.GAMMA3:
        return complex(np.exp(1j * np.pi * s))
    if comp is Component.GAMMA1:
        xi = omega.xi
        if math.isinf(xi):
            return complex(1.0) if xi > 0 else complex(np.exp(TWO_PI * 1j * s))
        Xi = omega.Xi(p)
        return complex(np.exp(1j * np.pi * s) * _ratio_sin(Xi, s))
    return complex(_gamma2_identity(np.asarray(omega.eta, float), s, comp))


def _gamma2_identity(eta, s, comp):
    # (eta+i)/(eta-i) has arg 2 atan(1/eta) in (0, pi]; (eta-i)/(eta+i) has arg
    # 2pi - 2 atan(1/eta) in [pi, 2pi) when read in (0, 2pi)
    with np.errstate(divide="ignore"):
        half = np.arctan2(1.0, eta)
    arg = 2.0 * half if comp is Component.GAMMA2_PLUS else TWO_PI - 2.0 * half
    return np.exp(1j * s * arg)


def k1_symbol(omega: SymbolPoint, c: complex, params: SpaceParams,
              branch: BranchSpec | None = None) -> complex:
    s, p = params.order, params.p
    if branch is None:
        branch = BranchSpec.for_base(c)
    if omega.component in (Component.GAMMA2_PLUS, Component.GAMMA2_MINUS):
        return 0j
    xi = omega.xi
    if math.isinf(xi):
        return 0j
    return complex(_k1_line(np.asarray(xi, float), c, s, p, branch))


def _k1_line(xi, c, s, p, branch: BranchSpec):
    Xi = 1.0 / p - 1j * xi
    arg = branch.arg_c
    logc = math.log(abs(c)) + 1j * arg
    if abs(np.exp(1j * arg) - c / abs(c)) > 1e-9:
        raise DomainError("branch does not match c")
    log_val = -1j * np.pi * (Xi - 1.0) + (Xi - s - 1.0) * logc - log_sin(np.pi * Xi)
    return np.exp(log_val)


def composite_symbol(spec: MellinOperatorSpec, omega: SymbolPoint,
                     params: SpaceParams) -> complex:
    val = spec.d0 * identity_symbol(omega, params)
    for d, c in spec.terms:
        val += d * k1_symbol(omega, c, params)
    return complex(val)


# --------------------------------------------------------- log-space sin/cos

def log_sin(w):
    """Principal-free log of sin(w), stable for large |Im w| (complex, vectorized)."""
    w = np.asarray(w, dtype=complex)
    neg = w.imag < 0
    out = np.empty_like(w)
    a = w[neg]
    out[neg] = 1j * a + np.log1p(-np.exp(-2j * a)) - np.log(2j)
    b = w[~neg]
    out[~neg] = -1j * b + np.log1p(-np.exp(2j * b)) + np.log(0.5j)
    return out[()] if out.ndim == 0 else out


def log_cos(w):
    """Log of cos(w), stable for large |Im w|."""
    w = np.asarray(w, dtype=complex)
    neg = w.imag < 0
    out = np.empty_like(w)
    a = w[neg]
    out[neg] = 1j * a + np.log1p(np.exp(-2j * a)) - math.log(2.0)
    b = w[~neg]
    out[~neg] = -1j * b + np.log1p(np.exp(2j * b)) - math.log(2.0)
    return out[()] if out.ndim == 0 else out


# ------------------------------------------------------------ system symbol

def _entries(xi, alpha, r, p):
    Xi = 1.0 / p - 1j * np.asarray(xi, dtype=float)
    ls = log_sin(np.pi * Xi)
    d = np.exp(1j * np.pi * r + log_sin(np.pi * (Xi - r)) - ls)
    b = np.exp(-1j * np.pi * r + log_cos((np.pi - alpha) * (Xi - r - 1.0)) - ls)
    return d, b


def det_log(xi, alpha: float, r: float, p: float):
    """Logarithm of the closed-form system determinant on Gamma1."""
    Xi = 1.0 / p - 1j * np.asarray(xi, dtype=float)
    L1 = 4j * np.pi * r + 2.0 * log_sin(np.pi * (Xi - r))
    L2 = 2.0 * log_cos((np.pi - alpha) * (Xi - r - 1.0))
    M = np.maximum(L1.real, L2.real)
    s = np.exp(L1 - M) + np.exp(L2 - M)
    with np.errstate(divide="ignore"):
        return -2j * np.pi * r + M + np.log(s) - 2.0 * log_sin(np.pi * Xi)


def det_direct(xi, alpha: float, r: float, p: float):
    """Closed-form determinant evaluated without scaling (may overflow)."""
    Xi = 1.0 / p - 1j * np.asarray(xi, dtype=float)
    num = (np.exp(4j * np.pi * r) * np.sin(np.pi * (Xi - r)) ** 2
           + np.cos((np.pi - alpha) * (Xi - r - 1.0)) ** 2)
    return np.exp(-2j * np.pi * r) * num / np.sin(np.pi * Xi) ** 2


def system_det(xi, alpha: float, r: float, p: float):
    """Determinant on Gamma1; direct for |xi| < 10, log form beyond."""
    xi = np.asarray(xi, dtype=float)
    out = np.empty(xi.shape, dtype=complex)
    far = np.abs(xi) >= SCALED_FROM
    with np.errstate(over="ignore", invalid="ignore"):
        out[~far] = det_direct(xi[~far], alpha, r, p)
        out[far] = np.exp(det_log(xi[far], alpha, r, p))
    return out[()] if out.ndim == 0 else out


def _det_scalar(xi: float, alpha: float, r: float, p: float) -> complex:
    if abs(xi) >= SCALED_FROM:
        return complex(np.exp(det_log(xi, alpha, r, p)))
    Xi = 1.0 / p - 1j * xi
    num = (cmath.exp(4j * math.pi * r) * cmath.sin(math.pi * (Xi - r)) ** 2
           + cmath.cos((math.pi - alpha) * (Xi - r - 1.0)) ** 2)
    return cmath.exp(-2j * math.pi * r) * num / cmath.sin(math.pi * Xi) ** 2


def det_limits(alpha: float, r: float, p: float):
    """Limits of the Gamma1 determinant at xi -> -inf and xi -> +inf."""
    return complex(np.exp(4j * np.pi * r)), 1.0 + 0j


def system_symbol(omega: SymbolPoint, alpha: float, params: SpaceParams) -> SystemSymbolValue:
    if omega.component is not Component.GAMMA1:
        raise DomainError("the system symbol is evaluated on Gamma1 only")
    if not (0.0 < alpha < TWO_PI):
        raise DomainError("alpha must lie in (0, 2pi)")
    r, p = params.order, params.p
    if math.isinf(omega.xi):
        lo, hi = det_limits(alpha, r, p)
        d = complex(np.exp(2j * np.pi * r)) if omega.xi < 0 else 1.0 + 0j
        mat = np.array([[d, 0], [0, d]], dtype=complex)
        return SystemSymbolValue(mat, lo if omega.xi < 0 else hi, omega)
    d, b = _entries(omega.xi, alpha, r, p)
    mat = np.array([[d, -b], [b, d]], dtype=complex)
    return SystemSymbolValue(mat, complex(system_det(omega.xi, alpha, r, p)), omega)


# ----------------------------------------------------------------- ellipticity

@dataclass(frozen=True)
class XiGrid:
    xi_max: float = 30.0
    step: float = 1e-2

    def points(self) -> np.ndarray:
        n = int(round(2 * self.xi_max / self.step))
        return np.linspace(-self.xi_max, self.xi_max, n + 1)


@dataclass
class EllipticityResult:
    inf_abs_det: float
    argmin_xi: float
    limit_values: tuple
    grid_inf: float
    verdict: str  # "elliptic" | "marginal" | "not elliptic"

    @property
    def elliptic(self) -> bool:
        return self.verdict == "elliptic"


def classify(inf_abs: float) -> str:
    if inf_abs > ELLIPTIC_TOL:
        return "elliptic"
    if inf_abs >= MARGINAL_TOL:
        return "marginal"
    return "not elliptic"


def _refine_minima(f, xs, vals, max_refine: int = 8, below: float = 0.1):
    """Brent refinement of the lowest local minima (those under ``below``)."""
    interior = np.where((vals[1:-1] <= vals[:-2]) & (vals[1:-1] <= vals[2:]))[0] + 1
    best_x = float(xs[int(np.argmin(vals))])
    best_v = float(np.min(vals))
    interior = interior[vals[interior] < below]
    order = interior[np.argsort(vals[interior])][:max_refine]
    for i in order:
        res = minimize_scalar(f, bounds=(xs[i - 1], xs[i + 1]), method="bounded",
                              options={"xatol": 1e-13})
        if res.fun < best_v:
            best_v, best_x = float(res.fun), float(res.x)
    return best_x, best_v


def ellipticity_infimum(alpha: float, params: SpaceParams, grid: XiGrid = XiGrid(),
                        refine: bool = True) -> EllipticityResult:
    """Infimum of |det| over Gamma1 (grid scan, Brent refinement, limits at +-inf)."""
    r, p = params.order, params.p
    xs = grid.points()
    vals = np.abs(system_det(xs, alpha, r, p))
    grid_inf = float(vals.min())
    if refine:
        x0, v0 = _refine_minima(lambda x: abs(_det_scalar(x, alpha, r, p)), xs, vals)
    else:
        x0, v0 = float(xs[int(np.argmin(vals))]), grid_inf
    lims = det_limits(alpha, r, p)
    inf_abs = min(v0, abs(lims[0]), abs(lims[1]))
    return EllipticityResult(inf_abs, x0, lims, grid_inf, classify(inf_abs))


# ------------------------------------------------------------------- winding

def _accumulate(f, a: float, b: float, n: int = 4001, max_step: float = 0.3,
                depth: int = 30) -> float:
    """Continuous phase change of f along the parameter interval [a, b]."""
    ts = np.linspace(a, b, n)
    vals = f(ts)
    if np.any(vals == 0) or not np.all(np.isfinite(vals)):
        raise NonEllipticError("symbol vanishes or is undefined on the contour")
    dphi = np.angle(vals[1:] / vals[:-1])
    total = 0.0
    for i, d in enumerate(dphi):
        if abs(d) > max_step and depth > 0:
            total += _accumulate(f, ts[i], ts[i + 1], 17, max_step, depth - 1)
        else:
            total += d
    return float(total)


@dataclass
class WindingResult:
    winding: int
    total_phase: float
    closure_error: float
    gamma1_phase: float
    segment_phases: dict = field(default_factory=dict)

    @property
    def index(self) -> int:
        return -self.winding


def gamma3_det(xi, alpha: float, r: float, p: float):
    """System determinant on Gamma3: exp(2 pi i r) + b(xi)^2."""
    _, b = _entries(xi, alpha, r, p)
    return np.exp(2j * np.pi * r) + b * b


def winding_index(alpha: float, params: SpaceParams, grid: XiGrid = XiGrid(),
                  contour: str = "full", tol: float = ELLIPTIC_TOL) -> WindingResult:
    """Winding number of the system determinant.

    ``contour="full"`` runs over the closed rectangle; the Gamma1 phase alone is
    reported in ``gamma1_phase`` (in units of 2pi it is an integer only when
    ``2r`` is an integer).  ``contour="gamma1"`` returns the rounded Gamma1 phase.
    """
    r, p = params.order, params.p
    ell = ellipticity_infimum(alpha, params, grid)
    if ell.inf_abs_det <= tol:
        raise NonEllipticError(
            f"|det| reaches {ell.inf_abs_det:.3e} at xi={ell.argmin_xi:.6g}; no winding number")
    X = grid.xi_max
    # map (-1, 1) onto the whole line so the endpoint limits are attached exactly
    def on_line(func):
        def g(u):
            xi = X * np.tan(0.5 * np.pi * np.clip(u, -1 + 1e-15, 1 - 1e-15)) / 8.0
            return func(xi)
        return g
    span = 1.0 - 1e-12
    g1 = _accumulate(on_line(lambda x: system_det(x, alpha, r, p)), -span, span, 8001)
    lo, hi = det_limits(alpha, r, p)
    # attach the tiny remainders to the exact limits
    g1 += float(np.angle(system_det(-X * np.tan(0.5 * np.pi * span) / 8.0, alpha, r, p) / lo))
    g1 += float(np.angle(hi / system_det(X * np.tan(0.5 * np.pi * span) / 8.0, alpha, r, p)))
    if contour == "gamma1":
        return WindingResult(int(round(g1 / TWO_PI)), g1,
                             abs(g1 / TWO_PI - round(g1 / TWO_PI)), g1, {"Gamma1": g1})
    g3_vals = gamma3_det(grid.points(), alpha, r, p)
    if np.min(np.abs(g3_vals)) <= tol:
        raise NonEllipticError("determinant vanishes on Gamma3")
    g3 = _accumulate(on_line(lambda x: gamma3_det(-x, alpha, r, p)), -span, span, 8001)
    # Gamma2 pieces: det = I^2 with analytic phase 2 r * (change of arg)
    g2p = 2.0 * r * np.pi          # arg 2 atan(1/eta): 0 -> pi as eta: inf -> 0
    g2m = 2.0 * r * np.pi          # arg 2pi - 2 atan(1/eta): pi -> 2pi as eta: 0 -> inf
    total = g1 + g2p + g3 + g2m
    w = int(round(total / TWO_PI))
    return WindingResult(w, total, abs(total / TWO_PI - w), g1,
                         {"Gamma1": g1, "Gamma2Plus": g2p, "Gamma3": g3, "Gamma2Minus": g2m})


# ------------------------------------------------------------------ output

def symbol_curve(alpha: float, params: SpaceParams, grid: XiGrid = XiGrid()):
    xs = grid.points()
    det = system_det(xs, alpha, params.order, params.p)
    phase = np.unwrap(np.angle(det))
    return xs, det, phase


def write_symbol_csv(stream, alpha: float, params: SpaceParams, grid: XiGrid = XiGrid()):
    xs, det, phase = symbol_curve(alpha, params, grid)
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(["xi", "re_det", "im_det", "abs_det", "phase"])
    for x, d, ph in zip(xs, det, phase):
        w.writerow([f"{x:.10g}", f"{d.real:.16e}", f"{d.imag:.16e}",
                    f"{abs(d):.16e}", f"{ph:.16e}"])
