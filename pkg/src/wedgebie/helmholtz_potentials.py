"""Layer potentials and boundary operators for the Helmholtz equation in a wedge.

Geometry
--------
The wedge ``Omega = {0 < arg x < alpha}`` is bounded by ``R+ = {(t, 0)}`` and
``R_alpha = {t (cos alpha, sin alpha)}``.  Outward normals are ``(0, -1)`` and
``(-sin alpha, cos alpha)``; the tangent is ``l = R_90 nu``, i.e. ``e_1`` on
R+ and ``-e_alpha`` on R_alpha, which orients the boundary from infinity on
R_alpha through the vertex to infinity on R+.  Both sides are parametrized by
arclength ``t > 0`` from the vertex, so every density is a function on the
half-line and lives on a :class:`~wedgebie.bie_solver.GradedMesh`.

Fundamental solution
--------------------
``G(x) = -(i/4) H_0^(1)(k |x|)`` with ``Im k > 0`` solves ``(Delta + k^2) G = delta``
and behaves like ``ln|x| / (2 pi)`` at the origin.  With ``nu`` the outward
normal, Green's formula gives

    u = N f + W (u|) - V (d_nu u|),

with ``V phi(x) = int G(x-y) phi dsigma``, ``W phi(x) = int d_nu(y) G(x-y) phi dsigma``.
Interior limits ("+") obey ``(W phi)+ = phi/2 + W0 phi``,
``(d_nu V psi)+ = -psi/2 + W0* psi``, ``(V phi)+ = V_{-1} phi`` and
``(d_nu W phi)+ = V_{+1} phi``.

Quadrature
----------
* same side, kernel of ``|t - tau|``: product integration of the exact
  splits ``G = J0(kr) ln r / (2 pi) + R(r)`` and
  ``d_tau G = N1 / (2 pi (tau - t)) - k J1 ln|tau - t| / (2 pi)``;
* opposite sides and interior targets: adaptive subdivision toward the complex
  zeros of ``|x - y(tau)|^2``;
* the hypersingular operator in Maue form, acting on the tangential
  derivative of the density, which is differentiated panelwise.

Panelwise differentiation drops the point mass that a density jump at the
vertex would produce.  For the Dirichlet trace of a field that is continuous
at the vertex the dropped masses of the two sides cancel.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Sequence, Union

import numpy as np
import scipy.linalg

from .bie_solver import GradedMesh, k1_apply
from .errors import ContractError, DomainError, UnsupportedDomainError
from .quadrature import (AdaptiveRule, _subdivide, bernstein_rho, cauchy_weights,
                         diff_matrix, gauss_legendre, interp_matrix, log_weights,
                         pv_weights, rho_far)
from .special_functions import EULER_GAMMA, bessel_j0, bessel_j1, hankel_h0, hankel_h1

log = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
BOUNDARY_GAP = 1e-6
BESSEL_SERIES_LIMIT = 20.0
SERIES_CANCELLATION = 11.5


class Side(str, enum.Enum):
    RPLUS = "RPlus"
    RALPHA = "RAlpha"


# ------------------------------------------------------------------ geometry

@dataclass(frozen=True)
class WedgeGeometry:
    alpha: float

    def __post_init__(self):
        if not (0.0 < self.alpha < TWO_PI):
            raise DomainError("alpha must lie in (0, 2pi)")

    def direction(self, side: Side) -> np.ndarray:
        if side == Side.RPLUS:
            return np.array([1.0, 0.0])
        return np.array([math.cos(self.alpha), math.sin(self.alpha)])

    def normal(self, side: Side) -> np.ndarray:
        if side == Side.RPLUS:
            return np.array([0.0, -1.0])
        return np.array([-math.sin(self.alpha), math.cos(self.alpha)])

    def tangent(self, side: Side) -> np.ndarray:
        n = self.normal(side)
        return np.array([-n[1], n[0]])

    def orientation(self, side: Side) -> float:
        """+1 if the tangent points away from the vertex, -1 otherwise."""
        return 1.0 if side == Side.RPLUS else -1.0

    def point(self, side: Side, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return t[..., None] * self.direction(side)

    def polar_angle(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.mod(np.arctan2(x[..., 1], x[..., 0]), TWO_PI)

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        th = self.polar_angle(x)
        return (th > 0) & (th < self.alpha) & (np.hypot(x[..., 0], x[..., 1]) > 0)

    def distance_to_boundary(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = []
        for side in Side:
            e = self.direction(side)
            s = np.maximum(x @ e, 0.0)
            out.append(np.linalg.norm(x - s[..., None] * e, axis=-1))
        return np.minimum(*out)


@dataclass(frozen=True)
class BoundarySample:
    side: Side
    t: float
    value: complex = 0j

    def __post_init__(self):
        if not self.t > 0:
            raise DomainError("boundary samples exclude the vertex (t > 0)")


def pullback(v: Callable, alpha: float) -> Callable:
    """(J_alpha v)(t) = v(t cos alpha, t sin alpha) for v taking points of shape (..., 2)."""
    e = np.array([math.cos(alpha), math.sin(alpha)])

    def v1(t):
        t = np.asarray(t, dtype=float)
        return v(t[..., None] * e)
    return v1


# ------------------------------------------------------------------- kernels

@dataclass(frozen=True)
class HelmholtzKernel:
    """Radial fundamental solution G(r) = -(i/4) H0(k r) and its splits."""

    k: complex

    def __post_init__(self):
        k = complex(self.k)
        if k.imag == 0:
            raise UnsupportedDomainError("real wavenumbers are out of scope (Im k = 0)")
        if k.imag < 0:
            raise UnsupportedDomainError("Im k < 0 gives a growing fundamental solution")

    @property
    def laplace(self) -> bool:
        return False

    def value(self, r):
        return -0.25j * hankel_h0(self.k * np.asarray(r))

    def deriv(self, r):
        return 0.25j * self.k * hankel_h1(self.k * np.asarray(r))

    def value_and_deriv(self, r):
        z = self.k * np.asarray(r)
        return -0.25j * hankel_h0(z), 0.25j * self.k * hankel_h1(z)

    def second(self, r):
        z = self.k * np.asarray(r)
        h0, h1 = hankel_h0(z), hankel_h1(z)
        return 0.25j * self.k ** 2 * (h0 - h1 / z)

    def _series_guard(self, d):
        z = self.k * np.asarray(d)
        # series truncation needs |z| <= 20; cancellation costs about exp(|z| - |Im z|)
        if np.any(np.abs(z) > BESSEL_SERIES_LIMIT) or \
                np.any(np.abs(z) - np.abs(z.imag) > SERIES_CANCELLATION):
            raise UnsupportedDomainError("near-field panel too wide for the Bessel series; "
                                         "refine the mesh")

    def log_factor(self, d):
        """Coefficient of ln|d| / (2 pi) in G(|d|)."""
        self._series_guard(d)
        return bessel_j0(self.k * d)

    def smooth_value(self, r):
        """R(r) = G(r) - J0(k r) ln r / (2 pi), with its limit at r = 0."""
        r = np.asarray(r, dtype=float)
        out = np.empty(r.shape, dtype=complex)
        z = r == 0
        out[z] = -0.25j + (np.log(self.k / 2.0) + EULER_GAMMA) / TWO_PI
        rr = r[~z]
        out[~z] = self.value(rr) - bessel_j0(self.k * rr) * np.log(rr) / TWO_PI
        return out

    def cauchy_factor(self, d):
        """N1(|d|) = 2 pi r G'(r) + k r J1(k r) ln r (even, N1(0) = 1)."""
        d = np.asarray(d, dtype=float)
        r = np.abs(d)
        out = np.ones(r.shape, dtype=complex)
        nz = r > 0
        rr = r[nz]
        out[nz] = TWO_PI * rr * self.deriv(rr) + self.k * rr * bessel_j1(self.k * rr) * np.log(rr)
        return out

    def log_deriv_factor(self, d):
        """Coefficient of ln|d| in d_tau G(tau - t) with d = tau - t."""
        self._series_guard(d)
        return -self.k * bessel_j1(self.k * np.asarray(d)) / TWO_PI


@dataclass(frozen=True)
class LaplaceKernel:
    """G(r) = ln r / (2 pi) with the same interface as :class:`HelmholtzKernel`."""

    k: complex = 0j

    @property
    def laplace(self) -> bool:
        return True

    def value(self, r):
        return np.log(np.asarray(r, dtype=float)) / TWO_PI + 0j

    def deriv(self, r):
        return 1.0 / (TWO_PI * np.asarray(r, dtype=float)) + 0j

    def value_and_deriv(self, r):
        return self.value(r), self.deriv(r)

    def second(self, r):
        return -1.0 / (TWO_PI * np.asarray(r, dtype=float) ** 2) + 0j

    def log_factor(self, d):
        return np.ones(np.shape(d), dtype=complex)

    def smooth_value(self, r):
        return np.zeros(np.shape(r), dtype=complex)

    def cauchy_factor(self, d):
        return np.ones(np.shape(d), dtype=complex)

    def log_deriv_factor(self, d):
        return np.zeros(np.shape(d), dtype=complex)


Kernel = Union[HelmholtzKernel, LaplaceKernel]


def make_kernel(k) -> Kernel:
    if k is None:
        return LaplaceKernel()
    if isinstance(k, (HelmholtzKernel, LaplaceKernel)):
        return k
    k = getattr(k, "k", k)
    return HelmholtzKernel(complex(k))


# ----------------------------------------------------- adaptive near weights

_RULE = AdaptiveRule()


def _near_weight_sets(mesh: GradedMesh, it: np.ndarray, jp: np.ndarray, sings: np.ndarray,
                      kernel_fn: Callable, targets_aux) -> list:
    """Adaptive weights for the (target, panel) pairs ``(it, jp)``.

    ``sings`` has shape (npairs, m) with singularity locations in tau;
    ``kernel_fn(aux_rows, tau)`` returns a list of kernel arrays evaluated at
    fine points ``tau`` for the targets ``aux_rows``.
    """
    g = mesh.order
    xf, wf = gauss_legendre(_RULE.fine)
    Xs, Ws, owner = [], [], []
    for n, (i, j) in enumerate(zip(it, jp)):
        mid, half = mesh.centers[j], mesh.halfwidths[j]
        ref = [(s - mid) / half for s in sings[n]]
        for u, v in _subdivide(ref, _RULE.rho_acc, _RULE.max_depth):
            Xs.append(0.5 * (u + v) + 0.5 * (v - u) * xf)
            Ws.append(0.5 * (v - u) * wf)
            owner.append(n)
    npiece = len(owner)
    X = np.concatenate(Xs)
    Wt = np.concatenate(Ws)
    own = np.repeat(np.asarray(owner), _RULE.fine)
    tau = mesh.centers[jp[own]] + mesh.halfwidths[jp[own]] * X
    Wt = Wt * mesh.halfwidths[jp[own]]
    L = interp_matrix(g, X)
    out = []
    for vals in kernel_fn(targets_aux[it[own]] if targets_aux is not None else own, tau):
        contrib = (vals * Wt)[:, None] * L
        acc = np.zeros((len(it), g), dtype=complex)
        np.add.at(acc, own, contrib)
        out.append(acc)
    return out


# ------------------------------------------------------- same-side operators

def _same_side_pairs(mesh: GradedMesh, targets: np.ndarray):
    w = (targets[:, None] - mesh.centers[None, :]) / mesh.halfwidths[None, :]
    near = bernstein_rho(w + 0j) < rho_far(mesh.order)
    return w, near


@dataclass
class SameSideBlocks:
    """Same-side single layer V and the Maue derivative block K (acting on phi')."""

    V: np.ndarray
    K: np.ndarray


def same_side_blocks(kern: Kernel, mesh: GradedMesh, targets=None) -> SameSideBlocks:
    """Matrices for int G(|t - tau|) phi and PV int -d_tau G(|t - tau|) phi'."""
    t = mesh.nodes if targets is None else np.atleast_1d(np.asarray(targets, dtype=float))
    g = mesh.order
    P = mesh.n_panels
    tau = mesh.nodes
    d = tau[None, :] - t[:, None]
    r = np.abs(d)
    w, near = _same_side_pairs(mesh, t)
    far3 = ~np.repeat(near, g, axis=1)
    V = np.zeros((t.size, tau.size), dtype=complex)
    K = np.zeros((t.size, tau.size), dtype=complex)
    rf = r[far3]
    gv, gd = kern.value_and_deriv(rf)
    wts = np.broadcast_to(mesh.weights, r.shape)[far3]
    V[far3] = gv * wts
    K[far3] = -gd * np.sign(d[far3]) * wts
    it, jp = np.nonzero(near)
    if it.size:
        xg, wg = gauss_legendre(g)
        h = mesh.halfwidths[jp][:, None]
        wn = w[it, jp]
        dn = (mesh.centers[jp][:, None] + h * xg[None, :]) - t[it][:, None]
        inside = np.abs(wn) < 1.0
        lw = log_weights(wn, g)
        cw = np.empty((it.size, g), dtype=complex)
        if np.any(inside):
            cw[inside] = pv_weights(wn[inside], g)
        if np.any(~inside):
            cw[~inside] = cauchy_weights(wn[~inside] + 0j, g)
        logw = lw + np.log(h) * wg[None, :]
        j0 = kern.log_factor(dn)
        Vn = h * (j0 * logw / TWO_PI + kern.smooth_value(np.abs(dn)) * wg[None, :])
        jlog = kern.log_deriv_factor(dn)
        Kn = -(kern.cauchy_factor(dn) * cw / TWO_PI + h * jlog * logw)
        V3 = V.reshape(t.size, P, g)
        K3 = K.reshape(t.size, P, g)
        V3[it, jp, :] = Vn
        K3[it, jp, :] = Kn
    return SameSideBlocks(V, K)


def derivative_matrix(mesh: GradedMesh) -> np.ndarray:
    """Block-diagonal panelwise differentiation on the mesh nodes."""
    D = diff_matrix(mesh.order)
    return scipy.linalg.block_diag(*[D / h for h in mesh.halfwidths])


# --------------------------------------------------- opposite-side operators

@dataclass
class CrossBlocks:
    """Kernels between a target at parameter t on one side and a source at tau on the other.

    With ``r^2 = t^2 + tau^2 - 2 t tau cos(alpha)``:
    ``V``: G(r); ``W``: G'(r) t sin(alpha) / r (double layer, either direction);
    ``Wstar``: G'(r) tau sin(alpha) / r; ``M``: -G'(r) (t - tau cos alpha) / r,
    the Maue derivative block acting on phi'.
    """

    V: np.ndarray
    W: np.ndarray
    Wstar: np.ndarray
    M: np.ndarray


def _cross_r(t, tau, alpha):
    return np.sqrt((t - tau) ** 2 + 4.0 * t * tau * math.sin(0.5 * alpha) ** 2)


def cross_blocks(kern: Kernel, alpha: float, mesh: GradedMesh, targets=None) -> CrossBlocks:
    t = mesh.nodes if targets is None else np.atleast_1d(np.asarray(targets, dtype=float))
    g, P = mesh.order, mesh.n_panels
    tau = mesh.nodes
    sa, ca = math.sin(alpha), math.cos(alpha)
    T2, S2 = np.meshgrid(t, tau, indexing="ij")
    r = _cross_r(T2, S2, alpha)
    gv, gd = kern.value_and_deriv(r)
    wts = mesh.weights[None, :]
    V = gv * wts
    W = gd * T2 * sa / r * wts
    Ws = gd * S2 * sa / r * wts
    M = -gd * (T2 - S2 * ca) / r * wts

    e = np.exp(1j * alpha)
    sp = t[:, None] * e
    wa = (sp - mesh.centers[None, :]) / mesh.halfwidths[None, :]
    wb = (np.conj(sp) - mesh.centers[None, :]) / mesh.halfwidths[None, :]
    near = np.minimum(bernstein_rho(wa), bernstein_rho(wb)) < rho_far(g)
    it, jp = np.nonzero(near)
    if it.size:
        sings = np.stack([t[it] * e, t[it] * np.conj(e)], axis=1)

        def fn(tt, ss):
            rr = _cross_r(tt, ss, alpha)
            v, d = kern.value_and_deriv(rr)
            return [v, d * tt * sa / rr, d * ss * sa / rr, -d * (tt - ss * ca) / rr]

        sets = _near_weight_sets(mesh, it, jp, sings, fn, t)
        for Mat, wset in zip((V, W, Ws, M), sets):
            Mat.reshape(t.size, P, g)[it, jp, :] = wset
    return CrossBlocks(V, W, Ws, M)


# -------------------------------------------------- public boundary operators

def _density(phi, mesh: GradedMesh) -> np.ndarray:
    v = mesh.sample(phi) if callable(phi) else np.asarray(phi, dtype=complex)
    if v.shape != (mesh.size,):
        raise DomainError("density does not conform to the mesh")
    return v


def _targets(t) -> np.ndarray:
    tt = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(tt <= 0):
        raise DomainError("boundary targets exclude the vertex (t > 0)")
    return tt


def _out(v, t):
    return complex(v[0]) if np.ndim(t) == 0 else v


def check_differentiable(phi: np.ndarray, mesh: GradedMesh, tol: float = 1e-6):
    """Reject densities whose panel interpolants jump across interior panel edges."""
    vals = phi.reshape(mesh.n_panels, mesh.order)
    Lr = interp_matrix(mesh.order, [1.0])[0]
    Ll = interp_matrix(mesh.order, [-1.0])[0]
    right = vals[:-1] @ Lr
    left = vals[1:] @ Ll
    scale = max(float(np.abs(phi).max()), 1e-300)
    jump = float(np.abs(right - left).max()) if mesh.n_panels > 1 else 0.0
    if jump > tol * scale:
        raise ContractError(f"density is not continuous along the boundary "
                            f"(panel-edge jump {jump:.3e}); V_plus1 needs its derivative")


def boundary_op_V_minus1(phi, k, t, geometry: WedgeGeometry, mesh: GradedMesh,
                         source: Side = Side.RPLUS, target: Side = Side.RPLUS):
    """Single-layer trace: int over the source side of G(x(t) - y) phi(y) dsigma."""
    kern = make_kernel(k)
    phi = _density(phi, mesh)
    tt = _targets(t)
    if source == target:
        B = same_side_blocks(kern, mesh, tt).V
    else:
        B = cross_blocks(kern, geometry.alpha, mesh, tt).V
    return _out(B @ phi, t)


def boundary_op_W_0(phi, k, t, geometry: WedgeGeometry, mesh: GradedMesh,
                    source: Side = Side.RPLUS, target: Side = Side.RPLUS):
    """Direct value of the double layer on the boundary; identically 0 on the source side."""
    kern = make_kernel(k)
    phi = _density(phi, mesh)
    tt = _targets(t)
    if source == target:
        return _out(np.zeros(tt.size, dtype=complex), t)
    return _out(cross_blocks(kern, geometry.alpha, mesh, tt).W @ phi, t)


def boundary_op_W_star_0(psi, k, t, geometry: WedgeGeometry, mesh: GradedMesh,
                         source: Side = Side.RPLUS, target: Side = Side.RALPHA):
    """Direct normal derivative of the single layer; identically 0 on the source side."""
    kern = make_kernel(k)
    psi = _density(psi, mesh)
    tt = _targets(t)
    if source == target:
        return _out(np.zeros(tt.size, dtype=complex), t)
    return _out(cross_blocks(kern, geometry.alpha, mesh, tt).Wstar @ psi, t)


def boundary_op_V_plus1(phi, k, t, geometry: WedgeGeometry, mesh: GradedMesh,
                        source: Side = Side.RPLUS, target: Side = Side.RPLUS):
    """Hypersingular trace d_nu W phi in Maue form:

        s_x s_y d/dt int G phi'(tau) dtau + k^2 (nu_x . nu_y) int G phi dtau,

    where ``s`` are the side orientations.  The density must be continuous
    along its side; a jump at the vertex is not represented.
    """
    kern = make_kernel(k)
    phi = _density(phi, mesh)
    check_differentiable(phi, mesh)
    tt = _targets(t)
    dphi = mesh.derivative(phi)
    k2 = 0.0 if kern.laplace else kern.k ** 2
    if source == target:
        B = same_side_blocks(kern, mesh, tt)
        return _out(B.K @ dphi + k2 * (B.V @ phi), t)
    C = cross_blocks(kern, geometry.alpha, mesh, tt)
    nn = -math.cos(geometry.alpha)
    return _out(C.M @ dphi + k2 * nn * (C.V @ phi), t)


# -------------------------------------------------------- Laplace wedge forms

def _sym_k1(phi, alpha, mesh, t, sign: float = 1.0, weights=(1.0, 1.0)):
    c = np.exp(1j * alpha)
    a = k1_apply(c, phi, mesh, t)
    b = k1_apply(np.conj(c), phi, mesh, t)
    return weights[0] * a + sign * weights[1] * b


def laplace_vplus1_cross(dv1, alpha: float, mesh: GradedMesh, t):
    """Printed closed form (1/4)[K_{e^{i a}} + K_{e^{-i a}}] d_tau v1 on R+ for v on R_alpha.

    The first-principles hypersingular operator has the opposite sign; see
    :func:`laplace_vplus1_cross_geometric`.
    """
    return 0.25 * _sym_k1(dv1, alpha, mesh, t)


def laplace_vplus1_cross_geometric(dv1, alpha: float, mesh: GradedMesh, t):
    """Direct quadrature of -(1/2pi) int (t - tau cos a)/r^2 (J_a d_l v)(tau) dtau,
    with ``J_a d_l v = -d_tau v1``."""
    dv1 = _density(dv1, mesh)
    tt = _targets(t)
    B = cross_blocks(LaplaceKernel(), alpha, mesh, tt)
    # M holds -(t - tau cos a)/(2 pi r^2); the kernel here is -(1/2pi)(...) times -dv1
    return _out(-(B.M @ dv1), t)


def laplace_tangential_single_cross(w, alpha: float, mesh: GradedMesh, t):
    """J_a r_{R_a} d_l V_{Laplace,-1} r_{R+} w = -(1/4)[K_{e^{i a}} + K_{e^{-i a}}] w."""
    return -0.25 * _sym_k1(w, alpha, mesh, t)


def laplace_tangential_single_cross_plus(w_alpha_pulled, alpha: float, mesh: GradedMesh, t):
    """r_{R+} d_l V_{Laplace,-1} r_{R_a} w = (1/4)[K_{e^{i a}} + K_{e^{-i a}}] J_a w."""
    return 0.25 * _sym_k1(w_alpha_pulled, alpha, mesh, t)


def laplace_double_cross_experimental(phi1, alpha: float, mesh: GradedMesh, t):
    """Printed (1/4i)[e^{i a} K_{e^{i a}} - e^{-i a} K_{e^{-i a}}] phi1; experimental."""
    c = np.exp(1j * alpha)
    return _sym_k1(phi1, alpha, mesh, t, -1.0, (c, np.conj(c))) / 4j


def laplace_dual_cross_experimental(phi, alpha: float, mesh: GradedMesh, t):
    """Printed (1/4i)[K_{e^{i a}} - K_{e^{-i a}}] phi; experimental."""
    return _sym_k1(phi, alpha, mesh, t, -1.0) / 4j


# ------------------------------------------------------------- potentials

def _check_interior(geometry: WedgeGeometry, x: np.ndarray):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if not np.all(geometry.contains(x)):
        raise DomainError("evaluation point outside the wedge")
    if np.any(geometry.distance_to_boundary(x) < BOUNDARY_GAP):
        raise DomainError("point within 1e-6 of the boundary; use the trace operators")
    return x


@dataclass
class PotentialRows:
    """Rows mapping nodal densities on one side to potentials at points x."""

    V: np.ndarray
    W: np.ndarray
    gradV: Optional[np.ndarray] = None  # shape (2, m, n)
    gradW: Optional[np.ndarray] = None


def potential_rows(kern: Kernel, geometry: WedgeGeometry, mesh: GradedMesh, side: Side,
                   x, gradients: bool = False) -> PotentialRows:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    e = geometry.direction(side)
    nu = geometry.normal(side)
    g, P = mesh.order, mesh.n_panels
    tau = mesh.nodes
    xe = x @ e
    xn = x @ nu
    xperp = np.abs(x[:, 0] * e[1] - x[:, 1] * e[0])

    def kernels(xi_idx, tt):
        xs = x[xi_idx]
        d = xs - tt[..., None] * e
        r = np.hypot(d[..., 0], d[..., 1])
        v, gd = kern.value_and_deriv(r)
        xnv = xs @ nu
        out = [v, -gd * xnv / r]
        if gradients:
            g2 = kern.second(r)
            out += [gd * d[..., 0] / r, gd * d[..., 1] / r]
            a = (g2 - gd / r) * xnv / r ** 2
            out += [-a * d[..., 0] - gd * nu[0] / r, -a * d[..., 1] - gd * nu[1] / r]
        return out

    idx = np.repeat(np.arange(x.shape[0])[:, None], tau.size, axis=1)
    TT = np.broadcast_to(tau, idx.shape)
    vals = kernels(idx, TT)
    vals = [v * mesh.weights[None, :] for v in vals]
    sp = xe + 1j * xperp
    wa = (sp[:, None] - mesh.centers[None, :]) / mesh.halfwidths[None, :]
    wb = (np.conj(sp)[:, None] - mesh.centers[None, :]) / mesh.halfwidths[None, :]
    near = np.minimum(bernstein_rho(wa), bernstein_rho(wb)) < rho_far(g)
    it, jp = np.nonzero(near)
    if it.size:
        sings = np.stack([sp[it], np.conj(sp[it])], axis=1)
        sets = _near_weight_sets(mesh, it, jp, sings, lambda ii, tt: kernels(ii, tt),
                                 np.arange(x.shape[0]))
        for Mat, wset in zip(vals, sets):
            Mat.reshape(x.shape[0], P, g)[it, jp, :] = wset
    if gradients:
        return PotentialRows(vals[0], vals[1], np.stack(vals[2:4]), np.stack(vals[4:6]))
    return PotentialRows(vals[0], vals[1])


@dataclass
class PotentialValue:
    value: np.ndarray
    tail: float


def _tail(phi: np.ndarray, mesh: GradedMesh) -> float:
    return float(np.abs(phi[-mesh.order:]).max() * mesh.halfwidths[-1])


def single_layer(phi, k, x, geometry: WedgeGeometry, mesh: GradedMesh,
                 side: Side = Side.RPLUS, with_tail: bool = False):
    """V phi(x) for a density on one side, x strictly inside the wedge."""
    xs = _check_interior(geometry, x)
    phi = _density(phi, mesh)
    rows = potential_rows(make_kernel(k), geometry, mesh, side, xs)
    v = rows.V @ phi
    if with_tail:
        return PotentialValue(v, _tail(phi, mesh))
    return complex(v[0]) if np.ndim(x) == 1 else v


def double_layer(phi, k, x, geometry: WedgeGeometry, mesh: GradedMesh,
                 side: Side = Side.RPLUS, with_tail: bool = False):
    """W phi(x) = int d_nu(y) G(x - y) phi(y) dsigma over one side."""
    xs = _check_interior(geometry, x)
    phi = _density(phi, mesh)
    rows = potential_rows(make_kernel(k), geometry, mesh, side, xs)
    v = rows.W @ phi
    if with_tail:
        return PotentialValue(v, _tail(phi, mesh))
    return complex(v[0]) if np.ndim(x) == 1 else v


# -------------------------------------------------------- volume potential

@dataclass(frozen=True)
class VolumeSource:
    """Compactly supported source f with support inside ``box = (x0, x1, y0, y1)``."""

    f: Callable
    box: tuple
    order: int = 24
    cells: int = 6

    def check(self, geometry: WedgeGeometry, samples: int = 64):
        x0, x1, y0, y1 = self.box
        s = np.linspace(0, 1, samples)
        edges = np.concatenate([
            np.stack([x0 + (x1 - x0) * s, np.full_like(s, y0)], 1),
            np.stack([x0 + (x1 - x0) * s, np.full_like(s, y1)], 1),
            np.stack([np.full_like(s, x0), y0 + (y1 - y0) * s], 1),
            np.stack([np.full_like(s, x1), y0 + (y1 - y0) * s], 1)])
        if not np.all(geometry.contains(edges)) or \
                np.min(geometry.distance_to_boundary(edges)) <= 0:
            raise ContractError("source support box must lie inside the wedge "
                                "at positive distance from the boundary")

    @cached_property
    def tensor_rule(self):
        x0, x1, y0, y1 = self.box
        xg, wg = gauss_legendre(self.order)

        def comp(a, b):
            e = np.linspace(a, b, self.cells + 1)
            m, h = 0.5 * (e[1:] + e[:-1]), 0.5 * (e[1:] - e[:-1])
            return (m[:, None] + h[:, None] * xg).ravel(), (h[:, None] * wg).ravel()
        X, WX = comp(x0, x1)
        Y, WY = comp(y0, y1)
        P = np.stack(np.meshgrid(X, Y, indexing="ij"), -1).reshape(-1, 2)
        W = np.outer(WX, WY).ravel()
        fv = np.asarray(self.f(P), dtype=complex)
        keep = fv != 0
        return P[keep], W[keep] * fv[keep]

    def distance(self, x) -> float:
        x0, x1, y0, y1 = self.box
        dx = max(x0 - x[0], 0.0, x[0] - x1)
        dy = max(y0 - x[1], 0.0, x[1] - y1)
        return math.hypot(dx, dy)

    @property
    def diameter(self) -> float:
        x0, x1, y0, y1 = self.box
        return math.hypot(x1 - x0, y1 - y0)


def _polar_rule(R: float, n_theta: int = 96, order: int = 16):
    xg, wg = gauss_legendre(order)
    dy = [R * 2.0 ** (-m) for m in range(30, 2, -1)]
    edges = np.concatenate([[0.0], dy, np.linspace(R / 8.0, R, 15)])
    m, h = 0.5 * (edges[1:] + edges[:-1]), 0.5 * (edges[1:] - edges[:-1])
    rho = (m[:, None] + h[:, None] * xg).ravel()
    wr = (h[:, None] * wg).ravel()
    th = np.arange(n_theta) * TWO_PI / n_theta
    return rho, wr, th, TWO_PI / n_theta


def newton_potential(f: VolumeSource, k, x, gradient: bool = False):
    """N f(x) = int G(x - y) f(y) dy (and optionally its gradient)."""
    kern = make_kernel(k)
    x = np.asarray(x, dtype=float)
    if f.distance(x) > 0.25 * f.diameter / f.cells:
        P, W = f.tensor_rule
        d = x - P
        r = np.hypot(d[:, 0], d[:, 1])
        v, gd = kern.value_and_deriv(r)
        val = complex(np.sum(v * W))
        if not gradient:
            return val
        return val, np.array([np.sum(gd * d[:, 0] / r * W), np.sum(gd * d[:, 1] / r * W)])
    # polar coordinates around x absorb the logarithmic singularity
    x0, x1, y0, y1 = f.box
    R = max(math.hypot(a - x[0], b - x[1]) for a in (x0, x1) for b in (y0, y1))
    rho, wr, th, wt = _polar_rule(R)
    dirs = np.stack([np.cos(th), np.sin(th)], 1)
    pts = x + rho[:, None, None] * dirs[None, :, :]
    fv = np.asarray(f.f(pts.reshape(-1, 2)), dtype=complex).reshape(rho.size, th.size)
    v, gd = kern.value_and_deriv(rho)
    val = complex(np.sum((v * rho * wr)[:, None] * fv) * wt)
    if not gradient:
        return val
    # grad_x G(x - y) = G'(r) (x - y)/r = -G'(rho) dir
    gx = -np.sum((gd * rho * wr)[:, None] * fv * dirs[None, :, 0]) * wt
    gy = -np.sum((gd * rho * wr)[:, None] * fv * dirs[None, :, 1]) * wt
    return val, np.array([gx, gy])


def newton_traces(f: Optional[VolumeSource], k, geometry: WedgeGeometry, mesh: GradedMesh):
    """(N f)+ on R+ and (d_nu N f)+ on R_alpha at the mesh nodes."""
    n = mesh.size
    if f is None:
        return np.zeros(n, complex), np.zeros(n, complex)
    f.check(geometry)
    P, W = f.tensor_rule
    kern = make_kernel(k)
    out = []
    for side in (Side.RPLUS, Side.RALPHA):
        X = geometry.point(side, mesh.nodes)
        d = X[:, None, :] - P[None, :, :]
        r = np.hypot(d[..., 0], d[..., 1])
        v, gd = kern.value_and_deriv(r)
        if side == Side.RPLUS:
            out.append((v * W).sum(1))
        else:
            nu = geometry.normal(side)
            out.append(((gd * (d @ nu) / r) * W).sum(1))
    return out[0], out[1]


# ---------------------------------------------------------- boundary data

def _smooth_cutoff(t):
    return np.exp(-np.asarray(t, dtype=float))


@dataclass
class BoundaryData:
    """Dirichlet data g on R_alpha, Neumann data h on R+, and their extensions.

    ``extension`` is ``"zero"`` or ``"smooth"``; the smooth choice continues
    g to R+ by ``g(t) chi(t)`` and h to R_alpha by ``h(t) chi(t)`` with
    ``chi(t) = exp(-t)``.  Explicit extensions may be given as
    ``g0 = (g0_plus, g0_alpha)`` and ``h0 = (h0_plus, h0_alpha)``.
    """

    g: Callable
    h: Callable
    extension: str = "zero"
    g0: Optional[tuple] = None
    h0: Optional[tuple] = None
    chi: Callable = _smooth_cutoff

    def __post_init__(self):
        if self.extension not in ("zero", "smooth", "custom"):
            raise DomainError("extension must be 'zero', 'smooth' or 'custom'")
        if self.g0 is not None or self.h0 is not None:
            self.extension = "custom"

    def g0_plus(self, t):
        t = np.asarray(t, dtype=float)
        if self.g0 is not None:
            return np.asarray(self.g0[0](t), dtype=complex)
        if self.extension == "smooth":
            return np.asarray(self.g(t), dtype=complex) * self.chi(t)
        return np.zeros(t.shape, dtype=complex)

    def h0_alpha(self, t):
        t = np.asarray(t, dtype=float)
        if self.h0 is not None:
            return np.asarray(self.h0[1](t), dtype=complex)
        if self.extension == "smooth":
            return np.asarray(self.h(t), dtype=complex) * self.chi(t)
        return np.zeros(t.shape, dtype=complex)

    def verify(self, mesh: GradedMesh, tol: float = 1e-12):
        t = mesh.nodes
        for ext, base, name in ((self.g0, self.g, "g0"), (self.h0, self.h, "h0")):
            if ext is None:
                continue
            on_side = ext[1] if name == "g0" else ext[0]
            a, b = np.asarray(on_side(t)), np.asarray(base(t))
            if np.max(np.abs(a - b)) > tol * max(1.0, float(np.max(np.abs(b)))):
                raise ContractError(f"{name} does not extend the given boundary data")


# ------------------------------------------------------- reduced system

@dataclass
class WedgeOperators:
    """All boundary blocks needed by the reduced system, on one mesh."""

    geometry: WedgeGeometry
    kern: Kernel
    mesh: GradedMesh

    @cached_property
    def same(self) -> SameSideBlocks:
        return same_side_blocks(self.kern, self.mesh)

    @cached_property
    def cross(self) -> CrossBlocks:
        return cross_blocks(self.kern, self.geometry.alpha, self.mesh)

    @cached_property
    def D(self) -> np.ndarray:
        return derivative_matrix(self.mesh)

    @property
    def k2(self) -> complex:
        return 0.0 if self.kern.laplace else self.kern.k ** 2

    @cached_property
    def vplus1_same(self) -> np.ndarray:
        return self.same.K @ self.D + self.k2 * self.same.V

    @cached_property
    def vplus1_cross(self) -> np.ndarray:
        nn = -math.cos(self.geometry.alpha)
        return self.cross.M @ self.D + self.k2 * nn * self.cross.V

    @cached_property
    def matrix(self) -> np.ndarray:
        n = self.mesh.size
        I = 0.5 * np.eye(n)
        return np.block([[I, self.cross.V], [-self.vplus1_cross, I]])


def rhs_assemble(f: Optional[VolumeSource], data: BoundaryData, k,
                 ops: WedgeOperators) -> tuple[np.ndarray, np.ndarray]:
    """(G+, H-) of the reduced system at the mesh nodes.

    G0 = (Nf)+ - g0/2 + W0 g0 - V_{-1} h0 and H0 = (d_nu Nf)+ - h0/2 + V_{+1} g0 - W0* h0,
    restricted to R+ and R_alpha.  Same-side W0 and W0* vanish identically.
    """
    mesh = ops.mesh
    data.verify(mesh)
    t = mesh.nodes
    g = np.asarray(data.g(t), dtype=complex)
    h = np.asarray(data.h(t), dtype=complex)
    g0p = data.g0_plus(t)
    h0a = data.h0_alpha(t)
    nf, dnf = newton_traces(f, k, ops.geometry, mesh)
    G = nf - 0.5 * g0p + ops.cross.W @ g - ops.same.V @ h - ops.cross.V @ h0a
    H = dnf - 0.5 * h0a + ops.vplus1_same @ g + ops.vplus1_cross @ g0p - ops.cross.Wstar @ h
    return G, H


@dataclass
class WedgeDensities:
    phi0: np.ndarray  # on R+
    psi0: np.ndarray  # on R_alpha (pulled back)
    residual: float
    condition: float


def solve_reduced(ops: WedgeOperators, G, H) -> WedgeDensities:
    n = ops.mesh.size
    M = ops.matrix
    b = np.concatenate([G, H])
    lu = scipy.linalg.lu_factor(M)
    x = scipy.linalg.lu_solve(lu, b)
    res = float(np.linalg.norm(M @ x - b) / max(np.linalg.norm(b), 1e-300))
    gecon = scipy.linalg.get_lapack_funcs("gecon", (lu[0],))
    rc, _ = gecon(lu[0], np.linalg.norm(M, 1), norm="1")
    return WedgeDensities(x[:n], x[n:], res, 1.0 / max(float(rc), 1e-300))


def represent_solution(f: Optional[VolumeSource], phi0, psi0, data: BoundaryData, k, x,
                       ops: WedgeOperators) -> np.ndarray:
    """u(x) = N f(x) + W(g0 + phi0)(x) - V(h0 + psi0)(x) at interior points x."""
    geo, mesh, kern = ops.geometry, ops.mesh, ops.kern
    xs = _check_interior(geo, x)
    t = mesh.nodes
    dir_plus = data.g0_plus(t) + np.asarray(phi0)
    dir_alpha = np.asarray(data.g(t), dtype=complex)
    neu_plus = np.asarray(data.h(t), dtype=complex)
    neu_alpha = data.h0_alpha(t) + np.asarray(psi0)
    rp = potential_rows(kern, geo, mesh, Side.RPLUS, xs)
    ra = potential_rows(kern, geo, mesh, Side.RALPHA, xs)
    u = rp.W @ dir_plus + ra.W @ dir_alpha - rp.V @ neu_plus - ra.V @ neu_alpha
    if f is not None:
        u = u + np.array([newton_potential(f, kern, xx) for xx in xs])
    return u


# ------------------------------------------------------------ manufactured

@dataclass(frozen=True)
class PointSource:
    """u*(x) = (1/4) H0(k |x - x0|), a homogeneous solution away from x0."""

    k: complex
    x0: tuple

    def value(self, x):
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x - np.asarray(self.x0), axis=-1)
        return 0.25 * hankel_h0(self.k * r)

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        d = x - np.asarray(self.x0)
        r = np.linalg.norm(d, axis=-1)
        return (-0.25 * self.k * hankel_h1(self.k * r) / r)[..., None] * d

    def dirichlet(self, geometry: WedgeGeometry, side: Side) -> Callable:
        return lambda t: self.value(geometry.point(side, t))

    def neumann(self, geometry: WedgeGeometry, side: Side) -> Callable:
        nu = geometry.normal(side)
        return lambda t: self.gradient(geometry.point(side, t)) @ nu


def default_probes(alpha: float, n: int = 20) -> np.ndarray:
    """Deterministic interior probes: radii in [0.3, 3], angles in (0.15, 0.85) alpha."""
    i = np.arange(n)
    rad = 0.3 + 2.7 * ((i * 0.6180339887498949) % 1.0)
    ang = alpha * (0.15 + 0.7 * ((i * 0.7548776662466927 + 0.5) % 1.0))
    return np.stack([rad * np.cos(ang), rad * np.sin(ang)], 1)


def exterior_source(alpha: float, radius: float = 1.5) -> tuple:
    """Point on the bisector of the exterior angle, at the given distance from the vertex."""
    th = alpha + 0.5 * (TWO_PI - alpha)
    return (radius * math.cos(th), radius * math.sin(th))


@dataclass
class BvpResult:
    alpha: float
    k: complex
    extension: str
    probes: np.ndarray
    u: np.ndarray
    exact: np.ndarray
    density_error: float
    residual: float
    condition: float
    exact_density_residual: float

    @property
    def rel_errors(self) -> np.ndarray:
        return np.abs(self.u - self.exact) / np.abs(self.exact)

    @property
    def max_rel_error(self) -> float:
        return float(self.rel_errors.max())


def default_bvp_mesh() -> GradedMesh:
    return GradedMesh(T=40.0, N=32, q=3.0, order=8)


def solve_bvp(alpha: float = 2 * math.pi / 3, k=1 + 1j, extension: str = "zero",
              x0: Optional[tuple] = None, probes=None, mesh: Optional[GradedMesh] = None,
              ops: Optional[WedgeOperators] = None) -> BvpResult:
    """Manufactured-solution pipeline for the mixed problem with f = 0.

    Dirichlet data on R_alpha and Neumann data on R+ come from a point source
    outside the closed wedge; the reduced system is solved and the field is
    reconstructed at interior probes.
    """
    geo = WedgeGeometry(alpha)
    kern = make_kernel(k)
    if ops is None:
        ops = WedgeOperators(geo, kern, mesh or default_bvp_mesh())
    mesh = ops.mesh
    x0 = x0 if x0 is not None else exterior_source(alpha)
    if geo.contains(np.asarray(x0)) or geo.distance_to_boundary(np.asarray(x0)) < 1.0 - 1e-12:
        raise DomainError("source point must lie outside the closed wedge at distance >= 1")
    src = PointSource(kern.k, tuple(x0))
    data = BoundaryData(src.dirichlet(geo, Side.RALPHA), src.neumann(geo, Side.RPLUS), extension)
    G, H = rhs_assemble(None, data, kern, ops)
    sol = solve_reduced(ops, G, H)
    t = mesh.nodes
    phi_ex = src.dirichlet(geo, Side.RPLUS)(t) - data.g0_plus(t)
    psi_ex = src.neumann(geo, Side.RALPHA)(t) - data.h0_alpha(t)
    ex = np.concatenate([phi_ex, psi_ex])
    res_ex = float(np.abs(ops.matrix @ ex - np.concatenate([G, H])).max())
    derr = float(np.abs(np.concatenate([sol.phi0, sol.psi0]) - ex).max() / np.abs(ex).max())
    probes = default_probes(alpha) if probes is None else np.atleast_2d(probes)
    u = represent_solution(None, sol.phi0, sol.psi0, data, kern, probes, ops)
    return BvpResult(alpha, kern.k, data.extension, probes, u, src.value(probes),
                     derr, sol.residual, sol.condition, res_ex)


# ------------------------------------------------------------- Plemelj

@dataclass
class JumpReport:
    which: str
    t: np.ndarray
    deltas: np.ndarray
    approach: np.ndarray  # values at each delta, shape (len(deltas), len(t))
    measured: np.ndarray  # Richardson-extrapolated interior limit
    formula: np.ndarray

    @property
    def max_rel_error(self) -> float:
        return float(np.abs(self.measured - self.formula).max()
                     / max(np.abs(self.formula).max(), 1e-300))


PLEMELJ_DELTAS = (1e-2, 1e-3, 1e-4, 1e-5)


def _richardson(vals: np.ndarray, deltas: Sequence[float]) -> np.ndarray:
    """Linear-in-delta extrapolation from the two smallest distances."""
    d1, d2 = deltas[-2], deltas[-1]
    return (d1 * vals[-1] - d2 * vals[-2]) / (d1 - d2)


def plemelj_check(density, k, t, which: str, geometry: WedgeGeometry, mesh: GradedMesh,
                  side: Side = Side.RPLUS, target_side: Optional[Side] = None,
                  deltas: Sequence[float] = PLEMELJ_DELTAS) -> JumpReport:
    """Approach the boundary along the inward normal and compare with the trace formula.

    ``which``: ``W_jump`` ((W phi)+ = phi/2 + W0 phi), ``Vstar_jump``
    ((d_nu V psi)+ = -psi/2 + W0* psi), ``V_continuity`` ((V phi)+ = V_{-1} phi) or
    ``W_normal_continuity`` ((d_nu W phi)+ = V_{+1} phi).  The density lives on
    ``side``; targets ``t`` lie on ``target_side`` (default: the same side).
    """
    kern = make_kernel(k)
    phi = _density(density, mesh)
    tside = target_side or side
    tt = _targets(t)
    y = geometry.point(tside, tt)
    nu = geometry.normal(tside)
    grads = which in ("Vstar_jump", "W_normal_continuity")
    rows_vals = []
    for d in deltas:
        x = y - d * nu
        rows = potential_rows(kern, geometry, mesh, side, x, gradients=grads)
        if which == "W_jump":
            rows_vals.append(rows.W @ phi)
        elif which == "V_continuity":
            rows_vals.append(rows.V @ phi)
        elif which == "Vstar_jump":
            rows_vals.append(np.tensordot(nu, rows.gradV, 1) @ phi)
        elif which == "W_normal_continuity":
            rows_vals.append(np.tensordot(nu, rows.gradW, 1) @ phi)
        else:
            raise DomainError(f"unknown jump relation {which!r}")
    vals = np.array(rows_vals)
    measured = _richardson(vals, deltas)
    same = tside == side
    local = mesh.interpolate(phi, tt) if same else np.zeros(tt.size, complex)
    if which == "W_jump":
        formula = 0.5 * local + boundary_op_W_0(phi, kern, tt, geometry, mesh, side, tside)
    elif which == "Vstar_jump":
        formula = -0.5 * local + boundary_op_W_star_0(phi, kern, tt, geometry, mesh, side, tside)
    elif which == "V_continuity":
        formula = boundary_op_V_minus1(phi, kern, tt, geometry, mesh, side, tside)
    else:
        formula = boundary_op_V_plus1(phi, kern, tt, geometry, mesh, side, tside)
    return JumpReport(which, tt, np.asarray(deltas), vals, measured, np.atleast_1d(formula))


# ------------------------------------------------------- compatibility

@dataclass
class CompatibilityReport:
    exponents: tuple  # fitted decay exponents of the two differences
    limits: tuple  # values at the smallest sample point
    thresholds: tuple
    consistent: tuple
    t: np.ndarray = field(repr=False, default=None)

    @property
    def ok(self) -> bool:
        return all(self.consistent)


COMPAT_MARGIN = 0.05


def _fit_exponent(t, v) -> float:
    a = np.abs(v)
    if np.all(a < 1e-14):
        return math.inf
    return float(np.polyfit(np.log(t), np.log(np.maximum(a, 1e-300)), 1)[0])


def compatibility_check(data: BoundaryData, s: float, p: float, alpha: float,
                        u_plus: Optional[Callable] = None,
                        dn_alpha: Optional[Callable] = None,
                        t=None) -> CompatibilityReport:
    """Vertex decay of u+_+ - J u+_a and (d_nu u)+_+ + J (d_nu u)+_a.

    The unknown traces (Dirichlet on R+, Neumann on R_alpha) default to the
    extensions carried by ``data``.  A difference behaving like ``t^gamma``
    belongs to the tilde space of order ``sigma`` when ``gamma > sigma - 1/p``;
    the orders are ``s - 1/p`` and ``s - 1/p - 1``.
    """
    t = np.logspace(-4, -2, 9) if t is None else np.asarray(t, dtype=float)
    up = u_plus or data.g0_plus
    dna = dn_alpha or data.h0_alpha
    d1 = np.asarray(up(t)) - np.asarray(data.g(t))
    d2 = np.asarray(data.h(t)) + np.asarray(dna(t))
    g1, g2 = _fit_exponent(t, d1), _fit_exponent(t, d2)
    th1 = s - 1.0 / p - 1.0 / p
    th2 = s - 1.0 / p - 1.0 - 1.0 / p
    return CompatibilityReport((g1, g2), (complex(d1[0]), complex(d2[0])), (th1, th2),
                               (g1 > th1 + COMPAT_MARGIN, g2 > th2 + COMPAT_MARGIN), t)
