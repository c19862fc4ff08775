"""Complex Bessel/Hankel functions and branch utilities.

Mathematical formulation
------------------------
For ``|z| <= R0`` the Hankel function is assembled from the ascending
series of J0, Y0 (resp. J1, Y1),

    H_n^(1)(z) = J_n(z) + i Y_n(z).

For ``|z| > R0`` the exact Hankel integral

    H_nu^(1)(z) = sqrt(2/(pi z)) exp(i(z - nu pi/2 - pi/4)) / Gamma(nu + 1/2)
                  * int_0^inf exp(-u) u^(nu-1/2) (1 + i u/(2z))^(nu-1/2) du

is evaluated with generalized Gauss-Laguerre quadrature (weight
``u^(nu-1/2) e^-u``).  The integrand is analytic on the half-line for
``arg z`` in ``[0, pi)``, and 64 nodes reach rounding level for ``|z| >= 1``.
Its termwise expansion is the classical large-argument asymptotic series,
which is available separately for comparison only.

Purely imaginary arguments ``z = i t`` are routed through K0, K1:
``H_0(it) = -(2i/pi) K0(t)`` and ``H_1(it) = -(2/pi) K1(t)``.

Supported sector: ``z != 0`` with ``0 <= arg z < pi``.  The lower half-plane
and the negative real axis raise :class:`UnsupportedDomainError`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_genlaguerre

from .errors import BranchError, DomainError, UnsupportedDomainError

EULER_GAMMA = 0.57721566490153286061
TWO_PI = 2.0 * math.pi

# switch between ascending series and the Hankel integral
SERIES_RADIUS = 2.0
_N_SERIES = 30
_N_LAGUERRE = 64


@dataclass(frozen=True)
class BranchSpec:
    """Branch choice for complex powers ``c^gamma``.

    Parameters
    ----------
    arg_c : float
        Argument of the base, in the open interval (0, 2*pi).
    arg_gamma : float
        Argument of the auxiliary lift parameter, in (0, pi).
    """

    arg_c: float
    arg_gamma: float = math.pi / 2

    def __post_init__(self):
        if not (0.0 < self.arg_c < TWO_PI):
            raise BranchError(f"arg_c={self.arg_c} not in (0, 2pi)")
        if not (0.0 < self.arg_gamma < math.pi):
            raise BranchError(f"arg_gamma={self.arg_gamma} not in (0, pi)")

    @classmethod
    def for_base(cls, c: complex, arg_gamma: float = math.pi / 2) -> "BranchSpec":
        return cls(arg_in_open_circle(c), arg_gamma)


@dataclass(frozen=True)
class Wavenumber:
    """Complex wavenumber with nonzero imaginary part."""

    k: complex

    def __post_init__(self):
        k = complex(self.k)
        if k.imag == 0.0:
            raise DomainError("wavenumber must have Im k != 0")
        object.__setattr__(self, "k", k)

    @classmethod
    def parse(cls, text: str) -> "Wavenumber":
        return cls(complex(text.replace(" ", "").replace("i", "j")))


def arg_in_open_circle(c: complex) -> float:
    """Argument of ``c`` read in (0, 2*pi); positive reals are rejected."""
    c = complex(c)
    if c == 0:
        raise BranchError("c = 0 has no argument")
    a = math.atan2(c.imag, c.real)
    if a < 0.0:
        a += TWO_PI
    if a == 0.0 or a >= TWO_PI:
        raise BranchError("arg c = 0 lies on the cut of the (0, 2pi) branch")
    return a


def complex_power(c, gamma, spec: BranchSpec | None = None):
    """Evaluate ``c**gamma = |c|**gamma * exp(i gamma arg c)``, arg c in (0, 2pi).

    Parameters
    ----------
    c : complex
        Base; positive reals are on the cut and raise :class:`BranchError`.
    gamma : complex or ndarray
        Exponent (broadcasts).
    spec : BranchSpec, optional
        Explicit branch.  Its ``arg_c`` must describe the direction of ``c``.
    """
    c = complex(c)
    if spec is None:
        arg = arg_in_open_circle(c)
    else:
        arg = spec.arg_c
        if abs(np.exp(1j * arg) - c / abs(c)) > 1e-9:
            raise BranchError("BranchSpec.arg_c does not match the direction of c")
    gamma = np.asarray(gamma, dtype=complex)
    out = np.exp(gamma * (math.log(abs(c)) + 1j * arg))
    return out[()] if out.ndim == 0 else out


def log_kernel(x, y) -> float:
    """Logarithmic fundamental solution ``(1/2pi) ln|x - y|``."""
    d = math.hypot(x[0] - y[0], x[1] - y[1])
    if d == 0.0:
        raise DomainError("log kernel is singular at x = y")
    return math.log(d) / TWO_PI


# ---------------------------------------------------------------- series

@lru_cache(maxsize=None)
def _series_coefficients():
    m = np.arange(_N_SERIES)
    fact = np.array([math.factorial(int(j)) for j in m], dtype=float)
    harm = np.concatenate([[0.0], np.cumsum(1.0 / m[1:])])
    c0 = 1.0 / fact**2                       # J0, I0
    c1 = 1.0 / (fact * fact * (m + 1))       # J1, I1 without z/2
    d1 = harm + np.concatenate([harm[1:], [harm[-1] + 1.0 / _N_SERIES]])
    return c0, c1, harm, d1


def _polyval(coef, w):
    out = np.zeros_like(w)
    for c in coef[::-1]:
        out = out * w + c
    return out


def _series_j(z, sign: float):
    """Return (F0, F1, S0, S1) for w = sign*z^2/4.

    sign = -1 gives J-type sums, sign = +1 gives I-type sums.  S0 and S1 are
    the harmonic-weighted auxiliary sums entering Y0/K0 and Y1/K1.
    """
    c0, c1, harm, d1 = _series_coefficients()
    w = sign * z * z / 4.0
    f0 = _polyval(c0, w)
    f1 = 0.5 * z * _polyval(c1, w)
    s0 = _polyval(c0 * harm, w)
    s1 = 0.5 * z * _polyval(c1 * d1, w)
    return f0, f1, s0, s1


def _series_h(z):
    """Ascending-series H0, H1 together with J0, Y0, J1, Y1."""
    j0, j1, s0, s1 = _series_j(z, -1.0)
    lg = np.log(z / 2.0) + EULER_GAMMA
    # s0 already carries the (-1)^m of w = -z^2/4
    y0 = (2.0 / np.pi) * (lg * j0 - s0)
    # Y1 = (2/pi)(ln(z/2)+g) J1 - 2/(pi z) - (1/pi)(z/2) sum (-w)^m (H_m + H_{m+1})/(m!(m+1)!)
    y1 = (2.0 / np.pi) * lg * j1 - 2.0 / (np.pi * z) - s1 / np.pi
    return j0 + 1j * y0, j1 + 1j * y1, j0, y0, j1, y1


def _series_k(t):
    """Ascending series for K0, K1 (complex arguments allowed)."""
    i0, i1, s0, s1 = _series_j(t, 1.0)
    lg = np.log(t / 2.0) + EULER_GAMMA
    k0 = -lg * i0 + s0
    k1 = 1.0 / t + lg * i1 - 0.5 * s1
    return k0, k1


# ------------------------------------------------------- Hankel integral

@lru_cache(maxsize=None)
def _laguerre(nu_half: float):
    u, w = roots_genlaguerre(_N_LAGUERRE, nu_half)
    return u, w / math.gamma(nu_half + 1.0)


def _hankel_integral(nu: int, z, scaled: bool):
    """Hankel integral for H_nu^(1), nu in {0, 1}; vectorized over z."""
    a = nu - 0.5
    u, w = _laguerre(a)
    zz = z[..., None]
    root = np.sqrt(1.0 + (0.5j * u) / zz)  # principal branch, same as ** 0.5
    f = (root if nu == 1 else 1.0 / root) @ w
    phase = -(nu * 0.5 + 0.25) * np.pi
    pre = np.sqrt(2.0 / (np.pi * z))
    if scaled:
        return pre * np.exp(1j * phase) * f
    return pre * np.exp(1j * (z + phase)) * f


def _k_integral(nu: int, t, scaled: bool):
    """K_nu(t) for Re t > 0 via the same integral with z = i t."""
    a = nu - 0.5
    u, w = _laguerre(a)
    tt = t[..., None]
    f = np.sum(w * (1.0 + 0.5 * u / tt) ** a, axis=-1)
    pre = np.sqrt(np.pi / (2.0 * t))
    return pre * f if scaled else pre * np.exp(-t) * f


def hankel_asymptotic(nu: int, z, terms: int = 12):
    """Classical large-argument asymptotic series for H_nu^(1)(z).

    Truncated after ``terms`` terms; the minimal term is of size
    ``exp(-2|z|)``, so this is a diagnostic, not the evaluation path.
    """
    z = np.asarray(z, dtype=complex)
    mu = 4.0 * nu * nu
    term = np.ones_like(z)
    total = np.ones_like(z)
    for j in range(1, terms):
        term = term * (mu - (2 * j - 1) ** 2) / (j * 8.0) * (1j / z)
        total = total + term
    return np.sqrt(2.0 / (np.pi * z)) * np.exp(1j * (z - nu * np.pi / 2 - np.pi / 4)) * total


# --------------------------------------------------------------- public

def _check_sector(z):
    z = np.asarray(z, dtype=complex)
    if np.any(z == 0):
        raise DomainError("Hankel function is singular at z = 0")
    if np.any(z.imag < 0) or np.any((z.imag == 0) & (z.real < 0)):
        raise UnsupportedDomainError("argument outside the sector 0 <= arg z < pi")
    if not np.all(np.isfinite(z)):
        raise DomainError("non-finite argument")
    return z


def _hankel(nu: int, z, scaled: bool):
    z = _check_sector(z)
    flat = z.ravel()
    out = np.empty_like(flat)

    imag_axis = flat.real == 0.0
    small = (np.abs(flat) <= SERIES_RADIUS) & ~imag_axis
    large = ~small & ~imag_axis

    if np.any(small):
        zs = flat[small]
        h = _series_h(zs)[nu]
        out[small] = h * np.exp(-1j * zs) if scaled else h
    if np.any(large):
        out[large] = _hankel_integral(nu, flat[large], scaled)
    if np.any(imag_axis):
        t = flat[imag_axis].imag
        kv = bessel_k(nu, t, scaled=scaled)
        # H0(it) = -(2i/pi) K0(t),  H1(it) = -(2/pi) K1(t); scaling e^{-iz} = e^{t}
        out[imag_axis] = (-2j / np.pi) * kv if nu == 0 else (-2.0 / np.pi) * kv
    out = out.reshape(z.shape)
    return out[()] if out.ndim == 0 else out


def hankel_h0(z, scaled: bool = False):
    """Hankel function H_0^(1)(z).

    Parameters
    ----------
    z : complex or array_like
        Nonzero argument with ``0 <= arg z < pi``.
    scaled : bool
        If true return ``H_0^(1)(z) * exp(-i z)``, which stays O(|z|^-1/2) for
        large ``Im z``.
    """
    return _hankel(0, z, scaled)


def hankel_h1(z, scaled: bool = False):
    """Hankel function H_1^(1)(z); same domain and scaling as :func:`hankel_h0`."""
    return _hankel(1, z, scaled)


def hankel_h0_radial_derivative(z, scaled: bool = False):
    """Derivative ``d/dz H_0^(1)(z) = -H_1^(1)(z)``."""
    return -_hankel(1, z, scaled)


def bessel_k(nu: int, t, scaled: bool = False):
    """Modified Bessel K_nu(t), nu in {0, 1}, for real t > 0 (or Re t > 0).

    ``scaled=True`` returns ``K_nu(t) exp(t)``.
    """
    if nu not in (0, 1):
        raise UnsupportedDomainError("only orders 0 and 1 are implemented")
    t = np.asarray(t, dtype=complex if np.iscomplexobj(t) else float)
    if np.any(np.real(t) <= 0):
        raise DomainError("K_nu requires Re t > 0")
    flat = np.atleast_1d(t).ravel()
    out = np.empty(flat.shape, dtype=complex)
    small = np.abs(flat) <= SERIES_RADIUS
    if np.any(small):
        ts = flat[small].astype(complex)
        kv = _series_k(ts)[nu]
        out[small] = kv * np.exp(ts) if scaled else kv
    if np.any(~small):
        out[~small] = _k_integral(nu, flat[~small].astype(complex), scaled)
    if not np.iscomplexobj(t):
        out = out.real
    out = out.reshape(np.shape(t))
    return out[()] if out.ndim == 0 else out


def bessel_jy(x):
    """Return (J0, Y0, J1, Y1) at real ``x > 0``."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise DomainError("bessel_jy requires x > 0")
    h0 = np.asarray(hankel_h0(x.astype(complex)))
    h1 = np.asarray(hankel_h1(x.astype(complex)))
    return h0.real, h0.imag, h1.real, h1.imag


def h0_series(z):
    """Ascending-series representation of H_0^(1) (no range switching)."""
    z = _check_sector(z)
    return _series_h(z)[0]


def h0_large_argument(z):
    """Hankel-integral representation of H_0^(1) (no range switching)."""
    z = _check_sector(z)
    out = _hankel_integral(0, np.atleast_1d(z), False).reshape(z.shape)
    return out[()] if out.ndim == 0 else out


@lru_cache(maxsize=None)
def _j_coefficients(terms: int):
    fact = np.array([math.factorial(j) for j in range(terms)], dtype=float)
    return 1.0 / fact**2, 1.0 / (fact * fact * (np.arange(terms) + 1))


J_SERIES_TERMS = 50
J_SERIES_RADIUS = 20.0


def bessel_j0(z):
    """J0 by its ascending series; accurate for |z| <= 20 (used in kernel splitting)."""
    z = np.asarray(z, dtype=complex)
    c0, _ = _j_coefficients(J_SERIES_TERMS)
    return _polyval(c0, -z * z / 4.0)


def bessel_j1(z):
    """J1 by its ascending series; same range as :func:`bessel_j0`."""
    z = np.asarray(z, dtype=complex)
    _, c1 = _j_coefficients(J_SERIES_TERMS)
    return 0.5 * z * _polyval(c1, -z * z / 4.0)
