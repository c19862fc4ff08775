"""Nystrom realization of the Mellin convolution operator and the 2x2 wedge system.

The Mellin convolution operator on the half-line is

    (K_c phi)(t) = (1/pi) int_0^inf phi(tau) / (t - c tau) dtau,   0 < arg c < 2 pi.

The reduced boundary system for the unknowns (phi, psi) on the half-line reads

    [ I  -A ] [phi]   [G]
    [ A   I ] [psi] = [H],      A = (K_{e^{i alpha}} + K_{e^{i(2 pi - alpha)}}) / 2.

Its ``1/2`` factors are kept exactly as they appear in the final system; the
derivation multiplies an intermediate identity by 2, which is not repeated
here.  ``A`` has the real kernel

    (1/pi) (t - tau cos alpha) / (t^2 + tau^2 - 2 t tau cos alpha),

and the system is unitarily similar to ``diag(I + iA, I - iA)``, so each
eigenvalue ``mu`` of A yields the pair ``1 +- i mu``.

Densities live on composite Gauss panels.  Each (target, panel) pair whose
pole ``t/c`` lies inside the Bernstein ellipse where plain Gauss would lose
accuracy receives Cauchy product weights, which integrate the panel
interpolant exactly.  This covers the near-vertex region and small
``|arg c|`` without any adaptive parameter.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Sequence, Union

import numpy as np
import scipy.linalg

from .errors import DomainError, SingularSystemError, UnsupportedDomainError
from .quadrature import bernstein_rho, cauchy_weights, gauss_legendre, interp_matrix, rho_far
from .special_functions import BranchSpec, arg_in_open_circle

log = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
ALPHA_WARN = 1e-3
DEFAULT_LADDER = (64, 128, 256, 512)


# ---------------------------------------------------------------- meshes

class _Panels:
    """Composite Gauss machinery shared by every mesh; needs ``edges`` and ``order``."""

    edges: np.ndarray
    order: int

    @cached_property
    def _layout(self):
        e = np.asarray(self.edges, dtype=float)
        x, w = gauss_legendre(self.order)
        mid = 0.5 * (e[1:] + e[:-1])
        half = 0.5 * (e[1:] - e[:-1])
        nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
        weights = (half[:, None] * w[None, :]).ravel()
        for a in (nodes, weights, mid, half):
            a.setflags(write=False)
        return nodes, weights, mid, half

    @property
    def nodes(self) -> np.ndarray:
        return self._layout[0]

    @property
    def weights(self) -> np.ndarray:
        return self._layout[1]

    @property
    def centers(self) -> np.ndarray:
        return self._layout[2]

    @property
    def halfwidths(self) -> np.ndarray:
        return self._layout[3]

    @property
    def size(self) -> int:
        return self.nodes.size

    @property
    def n_panels(self) -> int:
        return len(self.edges) - 1

    @property
    def lower(self) -> float:
        return float(self.edges[0])

    @property
    def upper(self) -> float:
        return float(self.edges[-1])

    def sample(self, f: Callable) -> np.ndarray:
        return np.asarray(f(self.nodes), dtype=complex)

    def locate(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        j = np.searchsorted(self.edges, t, side="right") - 1
        return np.clip(j, 0, self.n_panels - 1)

    def interpolate(self, values, t) -> np.ndarray:
        """Panelwise polynomial interpolant of nodal ``values`` at points ``t``."""
        values = np.asarray(values).reshape(self.n_panels, self.order)
        t = np.atleast_1d(np.asarray(t, dtype=float))
        j = self.locate(t)
        xr = (t - self.centers[j]) / self.halfwidths[j]
        out = np.empty(t.shape, dtype=complex)
        for pj in np.unique(j):
            sel = j == pj
            out[sel] = interp_matrix(self.order, xr[sel]) @ values[pj]
        return out

    def derivative(self, values) -> np.ndarray:
        """Panelwise derivative of the interpolant at the nodes."""
        from .quadrature import diff_matrix
        values = np.asarray(values).reshape(self.n_panels, self.order)
        D = diff_matrix(self.order)
        return ((values @ D.T) / self.halfwidths[:, None]).ravel()

    def integrate(self, values) -> complex:
        return complex(np.dot(self.weights, values))


@dataclass(frozen=True)
class GradedMesh(_Panels):
    """Panels [T (j/N)^q, T ((j+1)/N)^q], j = 0..N-1, each with an ``order``-point Gauss rule."""

    T: float = 40.0
    N: int = 256
    q: float = 3.0
    order: int = 16

    def __post_init__(self):
        if not self.T > 0:
            raise DomainError("truncation T must be positive")
        if int(self.N) != self.N or self.N < 1:
            raise DomainError("panel count N must be a positive integer")
        if not self.q >= 1:
            raise DomainError("grading q must be >= 1")
        if self.order < 1:
            raise DomainError("order must be positive")

    @cached_property
    def edges(self) -> np.ndarray:
        e = self.T * (np.arange(self.N + 1) / self.N) ** self.q
        e.setflags(write=False)
        return e

    def refined(self) -> "GradedMesh":
        return GradedMesh(self.T, 2 * self.N, self.q, self.order)


@dataclass(frozen=True)
class GeometricMesh(_Panels):
    """Panels uniform in ln t on [e^{-L}, e^{L}]; used by the Mellin-transform oracle."""

    L: float = 40.0
    N: int = 160
    order: int = 16

    @cached_property
    def edges(self) -> np.ndarray:
        e = np.exp(np.linspace(-self.L, self.L, self.N + 1))
        e.setflags(write=False)
        return e

    @property
    def T(self) -> float:
        return self.upper


Mesh = Union[GradedMesh, GeometricMesh]


# --------------------------------------------------------- Mellin kernel

def _check_c(c: complex) -> complex:
    c = complex(c)
    if abs(c) == 0:
        raise DomainError("c must be nonzero")
    th = math.atan2(c.imag, c.real) % TWO_PI
    if th == 0.0 or (c.imag == 0 and c.real > 0):
        raise UnsupportedDomainError("arg c = 0: the kernel has a Cauchy pole on the half-line")
    return c


def k1_matrix(c: complex, mesh: Mesh, targets) -> np.ndarray:
    """Matrix mapping nodal densities to (K_c phi)(t) at ``targets``."""
    c = _check_c(c)
    t = np.atleast_1d(np.asarray(targets, dtype=float))
    g = mesh.order
    P = mesh.n_panels
    # far field: plain Gauss
    M = (mesh.weights[None, :] / (t[:, None] - c * mesh.nodes[None, :])) / math.pi
    # pole of 1/(t - c tau) in each panel's reference coordinate
    w = (t[:, None] / c - mesh.centers[None, :]) / mesh.halfwidths[None, :]
    near = bernstein_rho(w) < rho_far(g)
    it, jp = np.nonzero(near)
    if it.size:
        lw = cauchy_weights(w[it, jp], g) * (-1.0 / (math.pi * c))
        M3 = M.reshape(t.size, P, g)
        M3[it, jp, :] = lw
    return M


def _tail_estimate(c: complex, phi: np.ndarray, mesh: Mesh, t: np.ndarray) -> np.ndarray:
    """Bound on (1/pi) int_T^inf |phi| / |t - c tau| assuming exponential decay past T."""
    n = mesh.order
    tail_vals = np.abs(phi[-n:])
    tau = mesh.nodes[-n:]
    end = tail_vals[-1]
    if end == 0.0:
        return np.zeros_like(t)
    with np.errstate(divide="ignore", invalid="ignore"):
        slope = np.polyfit(tau, np.log(np.maximum(tail_vals, 1e-300)), 1)[0]
    lam = max(-slope, 1.0 / mesh.upper)  # no decay seen: assume 1/T scale
    dist = np.abs(t - c * mesh.upper)
    return end / (lam * math.pi * dist)


@dataclass
class K1Value:
    value: np.ndarray
    tail: np.ndarray


def k1_apply(c: complex, phi, mesh: Mesh, t, return_tail: bool = False):
    """Apply the Mellin convolution operator K_c to a density at points ``t``.

    Parameters
    ----------
    c : complex
        Kernel parameter, ``arg c`` in ``(0, 2 pi)``.
    phi : array_like or callable
        Nodal samples on ``mesh`` or a function to be sampled there.
    mesh : GradedMesh or GeometricMesh
    t : float or array_like
        Evaluation points in ``(0, T]``.
    return_tail : bool
        Also return an estimate of the neglected integral over ``(T, inf)``.

    Returns
    -------
    complex or ndarray, or K1Value when ``return_tail`` is set.
    """
    phi = mesh.sample(phi) if callable(phi) else np.asarray(phi, dtype=complex)
    if phi.shape != (mesh.size,):
        raise DomainError("density does not conform to the mesh")
    scalar = np.ndim(t) == 0
    tt = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(tt <= 0) or np.any(tt > mesh.upper):
        raise DomainError(f"evaluation points must lie in (0, {mesh.upper}]")
    val = k1_matrix(c, mesh, tt) @ phi
    if return_tail:
        return K1Value(val, _tail_estimate(complex(c), phi, mesh, tt))
    return complex(val[0]) if scalar else val


def mellin_multiplier(c: complex, z: complex, s_shift: float = 0.0,
                      spec: Optional[BranchSpec] = None) -> complex:
    """exp(-i pi (z-1)) c^{z-s-1} / sin(pi z) with arg c in (0, 2 pi).

    For ``s_shift = 0`` this is the Mellin multiplier of K_c under
    ``M f(z) = int_0^inf t^{z-1} f(t) dt``.
    """
    z = complex(z)
    if not (0.0 < z.real < 1.0):
        raise DomainError("Re z must lie in (0, 1)")
    th = spec.arg_c if spec is not None else arg_in_open_circle(c)
    lnc = math.log(abs(c)) + 1j * th
    return complex(np.exp(-1j * math.pi * (z - 1.0) + (z - s_shift - 1.0) * lnc)
                   / np.sin(math.pi * z))


# ----------------------------------------------------- Mellin transform oracle

@dataclass(frozen=True)
class LogLine:
    """Composite Gauss rule in x = ln t on [-L, L]."""

    L: float = 60.0
    panels: int = 120
    order: int = 16

    @cached_property
    def rule(self):
        x, w = gauss_legendre(self.order)
        e = np.linspace(-self.L, self.L, self.panels + 1)
        mid, half = 0.5 * (e[1:] + e[:-1]), 0.5 * (e[1:] - e[:-1])
        return ((mid[:, None] + half[:, None] * x).ravel(),
                (half[:, None] * w).ravel())

    def transform(self, f_of_t: np.ndarray, z) -> np.ndarray:
        """int e^{x z} f(e^x) dx for each z, given f sampled at the rule's points."""
        x, w = self.rule
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        return np.exp(np.outer(z, x)) @ (w * f_of_t)


def mellin_numeric(f: Callable, z, line: LogLine = LogLine()) -> np.ndarray:
    x, _ = line.rule
    return line.transform(np.asarray(f(np.exp(x)), dtype=complex), z)


@dataclass
class MellinCheck:
    z: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray

    @property
    def rel_err(self) -> np.ndarray:
        return np.abs(self.lhs - self.rhs) / np.abs(self.rhs)


def mellin_dual_path(c: complex, z, f: Callable = lambda t: np.exp(-np.log(t) ** 2),
                     mesh: Optional[GeometricMesh] = None,
                     line: LogLine = LogLine()) -> MellinCheck:
    """Numeric M[K_c f](z) against multiplier(z) * numeric M[f](z)."""
    mesh = mesh or GeometricMesh(L=line.L, N=2 * line.panels, order=16)
    x, _ = line.rule
    t = np.exp(x)
    kf = k1_apply(c, f, mesh, np.minimum(t, mesh.upper))
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    lhs = line.transform(kf, z)
    rhs = np.array([mellin_multiplier(c, zz) for zz in z]) * mellin_numeric(f, z, line)
    return MellinCheck(z, lhs, rhs)


# ------------------------------------------------------------ the system

@dataclass
class DiscreteSystem:
    matrix: np.ndarray
    A: np.ndarray
    mesh: Mesh
    params: tuple  # (alpha, r, p); r and p select the space, not the kernel
    rhs: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return self.mesh.size

    def apply(self, phi, psi) -> tuple[np.ndarray, np.ndarray]:
        v = self.matrix @ np.concatenate([phi, psi])
        return v[: self.n], v[self.n:]


@dataclass
class DensityPair:
    phi: np.ndarray
    psi: np.ndarray
    mesh: Mesh
    residual: float = 0.0
    relative_residual: float = 0.0

    def __post_init__(self):
        if self.phi.shape != self.psi.shape or self.phi.shape != (self.mesh.size,):
            raise DomainError("densities must conform to the same mesh")


def mellin_block(alpha: float, mesh: Mesh, targets=None) -> np.ndarray:
    """Discretized A = (K_{e^{i alpha}} + K_{e^{-i alpha}}) / 2 (real for real targets)."""
    tg = mesh.nodes if targets is None else targets
    K = k1_matrix(np.exp(1j * alpha), mesh, tg)
    # the kernel for e^{-i alpha} is the complex conjugate one
    return K.real.copy()


def assemble(alpha: float, r: float, p: float, mesh: Mesh) -> DiscreteSystem:
    """Nystrom matrix [[I, -A], [A, I]] on ``mesh``; the right-hand side is left unset."""
    alpha = float(alpha)
    if not (0.0 < alpha < TWO_PI):
        raise DomainError("alpha must lie in (0, 2pi)")
    if not (1.0 < float(p) < math.inf):
        raise DomainError("p must lie in (1, inf)")
    if alpha < ALPHA_WARN or alpha > TWO_PI - ALPHA_WARN:
        warnings.warn("alpha within 1e-3 of 0 or 2pi: kernel nearly singular, accuracy degrades",
                      RuntimeWarning, stacklevel=2)
    A = mellin_block(alpha, mesh)
    n = mesh.size
    I = np.eye(n)
    M = np.block([[I, -A], [A, I]]).astype(complex)
    return DiscreteSystem(M, A, mesh, (alpha, r, p))


def solve(system: DiscreteSystem, rhs) -> DensityPair:
    """Dense LU solve of the system for rhs (G, H) given as nodal arrays or callables."""
    G, H = rhs
    mesh = system.mesh
    G = mesh.sample(G) if callable(G) else np.asarray(G, dtype=complex)
    H = mesh.sample(H) if callable(H) else np.asarray(H, dtype=complex)
    b = np.concatenate([G, H])
    system.rhs = b
    try:
        with warnings.catch_warnings():
            # singularity is reported below as SingularSystemError
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            lu = scipy.linalg.lu_factor(system.matrix, check_finite=True)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise SingularSystemError(str(exc), math.inf) from exc
    if np.any(np.abs(np.diag(lu[0])) == 0.0):
        raise SingularSystemError("exactly singular LU factor", math.inf)
    x = scipy.linalg.lu_solve(lu, b)
    rcond = _rcond_estimate(system.matrix, lu)
    if rcond < np.finfo(float).eps:
        raise SingularSystemError("matrix numerically singular", 1.0 / max(rcond, 1e-300))
    res = float(np.linalg.norm(system.matrix @ x - b))
    scale = float(np.linalg.norm(system.matrix, 2 if system.n <= 512 else "fro")
                  * np.linalg.norm(x)) or 1.0
    n = system.n
    return DensityPair(x[:n], x[n:], mesh, res, res / scale)


def _rcond_estimate(M: np.ndarray, lu) -> float:
    # 1-norm reciprocal condition via LAPACK gecon
    gecon = scipy.linalg.get_lapack_funcs("gecon", (lu[0],))
    anorm = np.linalg.norm(M, 1)
    rc, info = gecon(lu[0], anorm, norm="1")
    return float(rc)


def nystrom_interpolate(system: DiscreteSystem, sol: DensityPair, G: Callable, H: Callable, t):
    """Natural Nystrom interpolant: phi = G + A psi, psi = H - A phi at arbitrary t."""
    A = mellin_block(system.params[0], system.mesh, t)
    return G(t) + A @ sol.psi, H(t) - A @ sol.phi


# ----------------------------------------------------------- conditioning

def _symmetrized(A: np.ndarray, mesh: Mesh) -> np.ndarray:
    s = np.sqrt(mesh.weights)
    return (s[:, None] * A) / s[None, :]


def system_condition(A: np.ndarray, mesh: Mesh, weighted: bool = True) -> float:
    """2-norm condition number of [[I,-A],[A,I]], computed through I + iA."""
    B = _symmetrized(A, mesh) if weighted else A
    sv = np.linalg.svd(np.eye(A.shape[0]) + 1j * B, compute_uv=False)
    return float(sv[0] / sv[-1])


@dataclass
class SweepLevel:
    N: int
    n: int
    cond: float
    cond_raw: float


@dataclass
class SweepReport:
    alpha: float
    r: float
    p: float
    T: float
    levels: list
    exponent: float
    classification: str  # "bounded" | "growing"
    notes: str = ""

    def to_records(self) -> list:
        return [dict(alpha=self.alpha, r=self.r, p=self.p, N=lv.N, T=self.T, cond=lv.cond,
                     cond_raw=lv.cond_raw, residual=None) for lv in self.levels]


GROWTH_EXPONENT = 0.1


def condition_sweep(alpha: float, r: float, p: float, ladder: Sequence[int] = DEFAULT_LADDER,
                    T: float = 40.0, q: float = 3.0, order: int = 4) -> SweepReport:
    """Condition numbers across a mesh ladder, classified by the fitted growth exponent.

    The fit ``cond ~ N^gamma`` uses the last three levels; ``gamma`` above
    ``GROWTH_EXPONENT`` means "growing".
    """
    levels = []
    for N in ladder:
        mesh = GradedMesh(T, N, q, order)
        A = mellin_block(alpha, mesh)
        levels.append(SweepLevel(N, 2 * mesh.size, system_condition(A, mesh, True),
                                 system_condition(A, mesh, False)))
    Ns = np.array([lv.N for lv in levels], dtype=float)
    cs = np.array([lv.cond for lv in levels])
    tail = slice(max(0, len(Ns) - 3), len(Ns))
    gamma = float(np.polyfit(np.log(Ns[tail]), np.log(cs[tail]), 1)[0]) if len(Ns) > 1 else 0.0
    cls = "growing" if gamma > GROWTH_EXPONENT else "bounded"
    return SweepReport(alpha, r, p, T, levels, gamma, cls)


# ------------------------------------------------------------- diagnostics

def write_density_csv(path, sol: DensityPair):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "re_phi", "im_phi", "re_psi", "im_psi"])
        for t, a, b in zip(sol.mesh.nodes, sol.phi, sol.psi):
            w.writerow([repr(float(t)), repr(a.real), repr(a.imag), repr(b.real), repr(b.imag)])


def diagnostics_record(system: DiscreteSystem, sol: Optional[DensityPair] = None,
                       cond: Optional[float] = None) -> dict:
    alpha, r, p = system.params
    mesh = system.mesh
    return dict(alpha=float(alpha), r=float(r), p=float(p), N=int(mesh.n_panels),
                T=float(mesh.upper), cond=cond,
                residual=None if sol is None else sol.residual)


def write_diagnostics_json(path, records: list):
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
