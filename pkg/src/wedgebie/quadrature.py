"""Panel quadrature on graded meshes of the half-line.

Every panel carries a ``g``-point Gauss-Legendre rule.  Densities are
represented by their panel interpolants, so a quadrature rule for a kernel
``K(tau)`` against a panel becomes a weight vector acting on nodal values.
Three constructions are provided:

* plain Gauss weights for well separated targets;
* product integration (exact for polynomials of degree < g) against the
  Cauchy kernel ``1/(x - w)``, its principal value and ``ln|x - w|``;
* adaptive dyadic subdivision of the panel interpolant, for any kernel with a
  known complex singularity location.

Separation is measured by the Bernstein ellipse parameter
``rho(w) = |w + sqrt(w - 1) sqrt(w + 1)|`` of the singularity in the panel's
reference coordinate; Gauss with g nodes then errs by about ``rho^(-2g)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

EPS_TARGET = 1e-15


@lru_cache(maxsize=None)
def gauss_legendre(g: int):
    x, w = np.polynomial.legendre.leggauss(g)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def rho_far(g: int, eps: float = EPS_TARGET) -> float:
    """Bernstein parameter beyond which plain g-point Gauss reaches ``eps``."""
    return float(np.exp(-np.log(eps) / (2 * g)))


def bernstein_rho(w):
    w = np.asarray(w, dtype=complex)
    s = np.sqrt(w - 1.0) * np.sqrt(w + 1.0)
    return np.maximum(np.abs(w + s), np.abs(w - s))


@lru_cache(maxsize=None)
def _barycentric(g: int):
    x, _ = gauss_legendre(g)
    d = x[:, None] - x[None, :]
    np.fill_diagonal(d, 1.0)
    return 1.0 / np.prod(d, axis=1)


def interp_matrix(g: int, xe) -> np.ndarray:
    """Lagrange interpolation from the g Gauss nodes to points ``xe`` in [-1, 1]."""
    x, _ = gauss_legendre(g)
    lam = _barycentric(g)
    xe = np.asarray(xe, dtype=float)
    d = xe[:, None] - x[None, :]
    exact = d == 0.0
    d[exact] = 1.0
    t = lam / d
    mat = t / t.sum(axis=1, keepdims=True)
    rows = np.any(exact, axis=1)
    if np.any(rows):
        mat[rows] = exact[rows].astype(float)
    return mat


@lru_cache(maxsize=None)
def diff_matrix(g: int) -> np.ndarray:
    """Differentiation of the interpolant at the Gauss nodes (reference interval)."""
    x, _ = gauss_legendre(g)
    lam = _barycentric(g)
    d = x[:, None] - x[None, :]
    np.fill_diagonal(d, 1.0)
    D = (lam[None, :] / lam[:, None]) / d
    np.fill_diagonal(D, 0.0)
    np.fill_diagonal(D, -D.sum(axis=1))
    return D


@lru_cache(maxsize=None)
def _vandermonde_inv_t(g: int) -> np.ndarray:
    x, _ = gauss_legendre(g)
    V = np.vander(x, g, increasing=True)
    return np.linalg.inv(V.T)


# ---------------------------------------------------------- product rules

def cauchy_moments(w, g: int) -> np.ndarray:
    """Moments  int_{-1}^{1} x^k / (x - w) dx, k < g, for w off [-1, 1].

    Forward recurrence for |w| <= 2, Laurent series in 1/w beyond.
    """
    w = np.atleast_1d(np.asarray(w, dtype=complex))
    mu = np.empty(w.shape + (g,), dtype=complex)
    near = np.abs(w) <= 2.0
    wn = w[near]
    if wn.size:
        m = np.empty(wn.shape + (g,), dtype=complex)
        m[..., 0] = np.log((1.0 - wn) / (-1.0 - wn))
        for k in range(1, g):
            m[..., k] = wn * m[..., k - 1] + (1.0 - (-1.0) ** k) / k
        mu[near] = m
    wf = w[~near]
    if wf.size:
        nterm = int(np.ceil(np.log(EPS_TARGET) / np.log(0.5))) + g + 2
        inv = 1.0 / wf
        m = np.zeros(wf.shape + (g,), dtype=complex)
        for k in range(g):
            j = np.arange(nterm)
            coef = (1.0 + (-1.0) ** (k + j)) / (k + j + 1.0)
            m[..., k] = -np.polynomial.polynomial.polyval(inv, np.concatenate([[0.0], coef]))
        mu[~near] = m
    return mu


def cauchy_weights(w, g: int) -> np.ndarray:
    """Weights l_j(w) with int f(x)/(x - w) dx = sum_j l_j f(x_j) for deg f < g."""
    return cauchy_moments(w, g) @ _vandermonde_inv_t(g).T


def pv_weights(w, g: int) -> np.ndarray:
    """Principal-value Cauchy weights for real w in (-1, 1)."""
    w = np.atleast_1d(np.asarray(w, dtype=float))
    m = np.empty(w.shape + (g,))
    m[..., 0] = np.log((1.0 - w) / (1.0 + w))
    for k in range(1, g):
        m[..., k] = w * m[..., k - 1] + (1.0 - (-1.0) ** k) / k
    return m @ _vandermonde_inv_t(g).T


def log_weights(w, g: int) -> np.ndarray:
    """Weights for int_{-1}^{1} f(x) ln|x - w| dx, real w in (-1, 1)."""
    w = np.atleast_1d(np.asarray(w, dtype=float))
    m = np.empty(w.shape + (g,))
    with np.errstate(divide="ignore"):
        l1 = np.log(np.abs(1.0 - w))
        l2 = np.log(np.abs(1.0 + w))
    for k in range(g):
        wk = w ** (k + 1)
        s = np.zeros_like(w)
        for j in range(k + 1):
            s += w ** (k - j) * (1.0 - (-1.0) ** (j + 1)) / (j + 1)
        a1, a2 = 1.0 - wk, (-1.0) ** (k + 1) - wk
        # x ln x -> 0 at an endpoint hit
        with np.errstate(invalid="ignore"):
            t1 = np.where(a1 == 0.0, 0.0, a1 * l1)
            t2 = np.where(a2 == 0.0, 0.0, a2 * l2)
        m[..., k] = (t1 - t2 - s) / (k + 1)
    return m @ _vandermonde_inv_t(g).T


# ------------------------------------------------------- adaptive rule

def _subdivide(sing, rho_acc: float, max_depth: int):
    """Reference subintervals of [-1, 1] resolving the singularities ``sing``."""
    out = []
    stack = [(-1.0, 1.0, 0)]
    while stack:
        u, v, depth = stack.pop()
        mid, half = 0.5 * (u + v), 0.5 * (v - u)
        ok = True
        for s in sing:
            if bernstein_rho((s - mid) / half) < rho_acc:
                ok = False
                break
        if ok or depth >= max_depth:
            out.append((u, v))
        else:
            stack.append((u, mid, depth + 1))
            stack.append((mid, v, depth + 1))
    return out


@dataclass(frozen=True)
class AdaptiveRule:
    rho_acc: float = 3.0
    fine: int = 16
    max_depth: int = 52

    def weights(self, kernel, a: float, b: float, g: int, sing) -> np.ndarray:
        """Weights (length g) for int_a^b kernel(tau) phi(tau) dtau.

        ``kernel`` maps an array of tau to kernel values; ``sing`` lists complex
        singularity locations in tau.
        """
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        ref_sing = [(complex(s) - mid) / half for s in sing]
        pieces = _subdivide(ref_sing, self.rho_acc, self.max_depth)
        xf, wf = gauss_legendre(self.fine)
        X = np.concatenate([0.5 * (u + v) + 0.5 * (v - u) * xf for u, v in pieces])
        Wt = np.concatenate([0.5 * (v - u) * wf for u, v in pieces])
        L = interp_matrix(g, X)
        vals = kernel(mid + half * X) * (Wt * half)
        return vals @ L
