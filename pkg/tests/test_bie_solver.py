import cmath
import json
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad
from scipy.optimize import linear_sum_assignment

from wedgebie.bie_solver import (
    DiscreteSystem, GradedMesh, assemble, condition_sweep,
    diagnostics_record, k1_apply, mellin_block, mellin_dual_path, mellin_multiplier,
    nystrom_interpolate, solve, system_condition, write_density_csv, write_diagnostics_json,
)
from wedgebie.errors import DomainError, SingularSystemError, UnsupportedDomainError
from wedgebie.mellin_symbol import Component, SpaceParams, SymbolPoint, k1_symbol

# frozen oracle: e * E1(1) from scipy.special.exp1
E_E1 = 0.5963473623231941
ALPHA = 2 * math.pi / 3


@pytest.fixture(scope="module")
def mesh():
    return GradedMesh(40.0, 32, 3.0, 16)


@pytest.fixture(scope="module")
def small_mesh():
    return GradedMesh(40.0, 8, 3.0, 8)


class TestMesh:
    def test_layout(self, mesh):
        x = mesh.nodes
        assert np.all(np.diff(x) > 0) and x[0] > 0 and x[-1] <= mesh.T
        assert np.all(mesh.weights > 0)
        assert mesh.integrate(np.exp(-x)) == pytest.approx(1 - math.exp(-40), rel=1e-12)

    def test_refinement_nests(self, mesh):
        fine = mesh.refined()
        assert np.allclose(fine.edges[::2], mesh.edges, rtol=0, atol=1e-13)

    @pytest.mark.parametrize("kw", [dict(T=0), dict(N=0), dict(N=2.5), dict(q=0.5)])
    def test_validation(self, kw):
        with pytest.raises(DomainError):
            GradedMesh(**kw)

    def test_interpolate_derivative(self, mesh):
        f = np.sin(mesh.nodes) * np.exp(-mesh.nodes / 5)
        t = np.array([0.3, 2.2, 17.0])
        assert np.allclose(mesh.interpolate(f, t), np.sin(t) * np.exp(-t / 5), atol=1e-10)
        df = np.exp(-mesh.nodes / 5) * (np.cos(mesh.nodes) - np.sin(mesh.nodes) / 5)
        assert np.max(np.abs(mesh.derivative(f) - df)) < 1e-8


class TestK1:
    def test_zero_density(self, mesh):
        assert k1_apply(1j, np.zeros(mesh.size), mesh, 1.0) == 0

    def test_exponential_integral(self, mesh):
        v = k1_apply(cmath.exp(1j * math.pi), lambda t: np.exp(-t), mesh, 1.0)
        assert abs(v - E_E1 / math.pi) < 1e-10
        assert abs(v - 0.18983) < 1e-5

    @pytest.mark.parametrize("theta", [0.3, math.pi / 2, 2.5, 4.0, 6.0])
    def test_dilation_invariance(self, mesh, theta):
        c = cmath.exp(1j * theta)
        f = lambda t: t * np.exp(-t)
        t = np.array([0.05, 0.7, 3.0, 9.0])
        lhs = k1_apply(c, lambda s: f(2 * s), mesh, t)
        rhs = k1_apply(c, f, mesh, 2 * t)
        assert np.max(np.abs(lhs - rhs)) < 1e-9

    @settings(max_examples=20, deadline=None)
    @given(a=st.complex_numbers(max_magnitude=5, allow_nan=False, allow_infinity=False),
           b=st.complex_numbers(max_magnitude=5, allow_nan=False, allow_infinity=False),
           theta=st.floats(0.05, 2 * math.pi - 0.05))
    def test_linearity(self, a, b, theta):
        m = GradedMesh(40.0, 8, 3.0, 8)
        c = cmath.exp(1j * theta)
        f, g = np.exp(-m.nodes), m.nodes * np.exp(-0.5 * m.nodes)
        t = np.array([0.2, 1.5])
        lhs = k1_apply(c, a * f + b * g, m, t)
        rhs = a * k1_apply(c, f, m, t) + b * k1_apply(c, g, m, t)
        assert np.max(np.abs(lhs - rhs)) <= 1e-12 * (1 + abs(a) + abs(b))

    def test_against_adaptive_quadrature(self, mesh):
        c = cmath.exp(0.4j)
        for t in (0.01, 0.5, 2.0):
            k = lambda s: np.exp(-s) / (t - c * s) / math.pi
            ref = quad(lambda s: k(s).real, 0, 40, points=[t / math.cos(0.4)], limit=400)[0] \
                + 1j * quad(lambda s: k(s).imag, 0, 40, points=[t / math.cos(0.4)], limit=400)[0]
            assert abs(k1_apply(c, lambda s: np.exp(-s), mesh, t) - ref) < 1e-9

    def test_errors(self, mesh):
        with pytest.raises(UnsupportedDomainError):
            k1_apply(2.0, np.exp(-mesh.nodes), mesh, 1.0)
        with pytest.raises(DomainError):
            k1_apply(1j, np.exp(-mesh.nodes), mesh, 0.0)
        with pytest.raises(DomainError):
            k1_apply(1j, np.exp(-mesh.nodes), mesh, 41.0)
        with pytest.raises(DomainError):
            k1_apply(1j, np.ones(3), mesh, 1.0)

    def test_tail_report(self, mesh):
        out = k1_apply(-1, lambda t: np.exp(-t), mesh, np.array([1.0, 5.0]), return_tail=True)
        assert out.value.shape == (2,) and np.all(out.tail >= 0) and np.all(out.tail < 1e-15)


class TestMultiplier:
    def test_classical_value(self):
        assert abs(mellin_multiplier(cmath.exp(1j * math.pi), 0.5) - 1) < 1e-15

    @pytest.mark.parametrize("z", [0.0, 1.0, -0.2 + 1j, 1.5])
    def test_strip(self, z):
        with pytest.raises(DomainError):
            mellin_multiplier(1j, z)

    @settings(max_examples=100, deadline=None)
    @given(xi=st.floats(-6, 6), theta=st.floats(0.05, 2 * math.pi - 0.05),
           s=st.floats(-2, 2), p=st.floats(1.05, 10))
    def test_equals_gamma3_symbol(self, xi, theta, s, p):
        c = cmath.exp(1j * theta)
        m = mellin_multiplier(c, 1 / p - 1j * xi, s)
        k = k1_symbol(SymbolPoint(Component.GAMMA3, xi=xi), c, SpaceParams(p, s))
        assert abs(m - k) <= 1e-12 * abs(k)

    def test_dual_path_quarter_turn(self):
        z = 0.5 + 1j * np.array([-2.0, 0.0, 1.3])
        chk = mellin_dual_path(1j, z)
        assert np.max(chk.rel_err) < 1e-6


class TestSystem:
    def test_block_structure(self, small_mesh):
        S = assemble(ALPHA, -0.5, 2, small_mesh)
        n = small_mesh.size
        M = S.matrix
        assert np.array_equal(M[:n, :n], np.eye(n)) and np.array_equal(M[n:, n:], np.eye(n))
        assert np.array_equal(M[:n, n:], -M[n:, :n])

    def test_operator_matches_matrix(self, mesh):
        phi = np.exp(-mesh.nodes) * mesh.nodes
        A = mellin_block(ALPHA, mesh)
        c = cmath.exp(1j * ALPHA)
        direct = 0.5 * (k1_apply(c, phi, mesh, mesh.nodes)
                        + k1_apply(c.conjugate(), phi, mesh, mesh.nodes))
        assert np.max(np.abs(A @ phi - direct)) < 1e-8

    def test_real_kernel_quadrature(self, mesh):
        phi = lambda s: s * np.exp(-s)
        A = mellin_block(ALPHA, mesh, np.array([0.3, 2.0]))
        ca = math.cos(ALPHA)
        for i, t in enumerate((0.3, 2.0)):
            ker = lambda s: (t - s * ca) / (t * t + s * s - 2 * t * s * ca) / math.pi
            ref = quad(lambda s: ker(s) * phi(s), 0, 40, limit=200)[0]
            assert abs(A[i] @ mesh.sample(phi) - ref) < 1e-9

    def test_eigenvalue_pairing(self, small_mesh):
        S = assemble(ALPHA, -0.5, 2, small_mesh)
        mu = np.linalg.eigvals(S.A)
        lam = np.linalg.eigvals(S.matrix)
        expect = np.concatenate([1 + 1j * mu, 1 - 1j * mu])
        rows, cols = linear_sum_assignment(np.abs(lam[:, None] - expect[None, :]))
        assert np.max(np.abs(lam[rows] - expect[cols])) < 1e-10

    def test_round_trip(self, mesh):
        S = assemble(ALPHA, -0.5, 2, mesh)
        phi = mesh.sample(lambda t: t * np.exp(-t))
        psi = mesh.sample(lambda t: np.exp(-0.5 * t))
        sol = solve(S, S.apply(phi, psi))
        err = max(np.abs(sol.phi - phi).max(), np.abs(sol.psi - psi).max())
        assert err / np.abs(phi).max() < 1e-8

    def test_zero_rhs(self, small_mesh):
        S = assemble(ALPHA, -0.5, 2, small_mesh)
        sol = solve(S, (np.zeros(S.n), np.zeros(S.n)))
        assert not np.any(sol.phi) and not np.any(sol.psi)

    def test_mesh_doubling(self):
        G, H = (lambda t: np.exp(-t)), (lambda t: t * np.exp(-t))
        tp = np.array([0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0])
        prev, diffs = None, []
        for N in (32, 64, 128):
            S = assemble(ALPHA, -0.5, 2, GradedMesh(40.0, N, 3.0, 16))
            cur = nystrom_interpolate(S, solve(S, (G, H)), G, H, tp)
            if prev is not None:
                diffs.append(max(np.abs(cur[0] - prev[0]).max(), np.abs(cur[1] - prev[1]).max()))
            prev = cur
        assert all(d < 1e-4 for d in diffs) and diffs[1] < diffs[0]

    def test_residual_bound(self, mesh):
        S = assemble(ALPHA, -0.5, 2, mesh)
        sol = solve(S, (lambda t: np.exp(-t), lambda t: np.cos(t) * np.exp(-t)))
        assert sol.relative_residual <= 1e-10

    def test_singular(self, small_mesh):
        S = assemble(ALPHA, -0.5, 2, small_mesh)
        bad = DiscreteSystem(np.ones_like(S.matrix), S.A, small_mesh, S.params)
        with pytest.raises(SingularSystemError) as ei:
            solve(bad, (np.ones(S.n), np.ones(S.n)))
        assert ei.value.condition > 1e15

    def test_near_degenerate_angle_warns(self, small_mesh):
        with pytest.warns(RuntimeWarning):
            assemble(5e-4, -0.5, 2, small_mesh)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            assemble(0.5, -0.5, 2, small_mesh)

    def test_domain(self, small_mesh):
        with pytest.raises(DomainError):
            assemble(0.0, -0.5, 2, small_mesh)
        with pytest.raises(DomainError):
            assemble(1.0, -0.5, 1.0, small_mesh)


class TestConditioning:
    def test_condition_weighted_vs_raw(self, small_mesh):
        A = mellin_block(ALPHA, small_mesh)
        assert system_condition(A, small_mesh) >= 1.0
        assert system_condition(np.zeros_like(A), small_mesh) == pytest.approx(1.0)

    def test_report_and_truncation_robustness(self):
        a = condition_sweep(ALPHA, -0.5, 2, ladder=(16, 32, 64), T=40.0)
        b = condition_sweep(ALPHA, -0.5, 2, ladder=(32, 64, 128), T=80.0)
        assert a.classification == b.classification
        assert len(a.to_records()) == 3 and a.to_records()[0]["N"] == 16


def test_output_files(tmp_path, small_mesh):
    S = assemble(ALPHA, -0.5, 2, small_mesh)
    sol = solve(S, (lambda t: np.exp(-t), lambda t: np.exp(-t)))
    write_density_csv(tmp_path / "d.csv", sol)
    rows = (tmp_path / "d.csv").read_text().splitlines()
    assert rows[0] == "t,re_phi,im_phi,re_psi,im_psi" and len(rows) == S.n + 1
    rec = diagnostics_record(S, sol, cond=1.5)
    write_diagnostics_json(tmp_path / "d.json", [rec])
    back = json.loads((tmp_path / "d.json").read_text())
    assert set(back) == {"alpha", "r", "p", "N", "T", "cond", "residual"}
