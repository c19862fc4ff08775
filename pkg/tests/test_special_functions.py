import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special as sp

from wedgebie.errors import BranchError, DomainError, UnsupportedDomainError
from wedgebie.special_functions import (
    EULER_GAMMA, BranchSpec, Wavenumber, bessel_j0, bessel_j1, bessel_jy, bessel_k,
    complex_power, h0_large_argument, h0_series, hankel_asymptotic, hankel_h0, hankel_h1,
    hankel_h0_radial_derivative, log_kernel,
)


def _sector_points(n=400, seed=0):
    rng = np.random.default_rng(seed)
    mod = 10.0 ** rng.uniform(-8, 3, n)
    arg = rng.uniform(0.0, math.pi - 1e-3, n)
    return mod * np.exp(1j * arg)


class TestHankel:
    def test_h0_matches_scipy_on_sector(self):
        z = _sector_points()
        ours = hankel_h0(z, scaled=True)
        ref = sp.hankel1e(0, z)
        assert np.max(np.abs(ours - ref) / np.abs(ref)) < 1e-10

    def test_h1_matches_scipy_on_sector(self):
        z = _sector_points(seed=1)
        ours = hankel_h1(z, scaled=True)
        ref = sp.hankel1e(1, z)
        assert np.max(np.abs(ours - ref) / np.abs(ref)) < 1e-10

    def test_imaginary_one_k0_identity(self):
        # frozen oracle: K0(1) = 0.42102443824070834
        val = hankel_h0(1j)
        assert abs(val - (-2j / math.pi) * 0.42102443824070834) < 1e-14
        assert abs(val - (-0.26803256j)) < 1e-7

    def test_log_remainder_limit(self):
        z = 1e-8 * np.exp(0.4j)
        rem = hankel_h0(z) - (2j / math.pi) * np.log(z)
        lim = 1 + (2j / math.pi) * (EULER_GAMMA - math.log(2))
        assert abs(rem - lim) < 1e-12
        # frozen oracle for the imaginary part
        assert abs(lim - (1 - 0.0738042951086872j)) < 1e-15

    def test_exponential_decay_on_imaginary_axis(self):
        t = np.linspace(1, 100, 200)
        vals = np.abs(hankel_h0(1j * t)) * np.exp(t) * np.sqrt(t)
        assert np.all(np.isfinite(vals)) and vals.max() < 1.0

    def test_derivative_k1_identity(self):
        # frozen oracle: K1(1) = 0.6019072301972346
        d = hankel_h0_radial_derivative(1j)
        assert abs(d - (-(-2 / math.pi) * 0.6019072301972346)) < 1e-14
        assert abs(d - 0.3831860438745649) < 1e-14

    def test_derivative_finite_difference(self):
        z, h = 2 + 0.5j, 1e-5
        fd = (hankel_h0(z + h) - hankel_h0(z - h)) / (2 * h)
        d = hankel_h0_radial_derivative(z)
        assert abs(fd - d) / abs(d) < 1e-6

    def test_derivative_log_singularity(self):
        z = np.logspace(-8, -2, 7) * np.exp(0.3j)
        dev = hankel_h0_radial_derivative(z) - (2j / math.pi) / z
        assert np.max(np.abs(dev)) < 1.0

    def test_wronskian(self):
        x = np.linspace(0.1, 50, 1000)
        j0, y0, j1, y1 = bessel_jy(x)
        w = j1 * y0 - j0 * y1          # J0 Y0' - J0' Y0 using J0' = -J1, Y0' = -Y1
        assert np.max(np.abs(w - 2 / (math.pi * x)) * x) < 1e-10

    def test_series_asymptotic_overlap(self):
        z = np.concatenate([np.linspace(0.5, 2, 31),
                            np.linspace(0.5, 2, 31) * np.exp(0.7j),
                            np.linspace(0.5, 2, 31) * np.exp(2.0j)])
        a, b = h0_series(z), h0_large_argument(z)
        assert np.max(np.abs(a - b) / np.abs(b)) < 1e-8

    def test_asymptotic_series_agrees_at_large_argument(self):
        z = np.array([30.0, 30 * np.exp(0.5j), 100.0])
        assert np.max(np.abs(hankel_asymptotic(0, z) - hankel_h0(z)) / np.abs(hankel_h0(z))) < 1e-12

    def test_zero_argument_rejected(self):
        with pytest.raises(DomainError):
            hankel_h0(0.0)

    @pytest.mark.parametrize("z", [1 - 1j, -2.0, -1e-3j])
    def test_outside_sector_rejected(self, z):
        with pytest.raises(UnsupportedDomainError):
            hankel_h0(z)

    def test_bessel_k_against_scipy(self):
        t = np.logspace(-6, 2.5, 60)
        for nu in (0, 1):
            assert np.max(np.abs(bessel_k(nu, t, scaled=True) - sp.kve(nu, t)) / sp.kve(nu, t)) < 1e-12

    def test_j_series_against_scipy(self):
        rng = np.random.default_rng(3)
        z = rng.uniform(0, 20, 300) * np.exp(1j * rng.uniform(0, math.pi, 300))
        # rounding in the ascending series scales with the sum of |terms| = I0(|z|)
        scale = 1e-14 * sp.i0(np.abs(z))
        for ours, nu in ((bessel_j0(z), 0), (bessel_j1(z), 1)):
            assert np.all(np.abs(ours - sp.jv(nu, z)) <= np.maximum(scale, 1e-15))


class TestBranches:
    def test_half_power_of_minus_one(self):
        assert abs(complex_power(np.exp(1j * math.pi), 0.5) - 1j) < 1e-15

    def test_square_of_i(self):
        assert abs(complex_power(1j, 2) + 1) < 1e-15

    def test_exponential_form(self):
        c, g = np.exp(1.5j * math.pi), -0.5 - 0.3j
        assert abs(complex_power(c, g) - np.exp(g * 1.5j * math.pi)) < 1e-14

    def test_explicit_spec_used(self):
        c = np.exp(1.5j * math.pi)
        val = complex_power(c, 0.5, BranchSpec(1.5 * math.pi))
        assert abs(val - np.exp(0.75j * math.pi)) < 1e-15

    def test_positive_real_rejected(self):
        with pytest.raises(BranchError):
            complex_power(2.0, 0.5)

    @pytest.mark.parametrize("arg", [0.0, 2 * math.pi, -1.0])
    def test_branch_spec_range(self, arg):
        with pytest.raises(BranchError):
            BranchSpec(arg)

    def test_wavenumber_requires_absorption(self):
        with pytest.raises(DomainError):
            Wavenumber(2.0)
        assert Wavenumber(1 + 1j).k == 1 + 1j

    @settings(max_examples=200, deadline=None)
    @given(theta=st.floats(0.01, 2 * math.pi - 0.01),
           g1=st.complex_numbers(max_magnitude=3, allow_nan=False, allow_infinity=False),
           g2=st.complex_numbers(max_magnitude=3, allow_nan=False, allow_infinity=False))
    def test_power_addition(self, theta, g1, g2):
        c = np.exp(1j * theta)
        lhs = complex_power(c, g1 + g2)
        rhs = complex_power(c, g1) * complex_power(c, g2)
        assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))


class TestLogKernel:
    def test_values(self):
        assert log_kernel((1, 0), (0, 0)) == 0.0
        assert abs(log_kernel((math.e, 0), (0, 0)) - 1 / (2 * math.pi)) < 1e-15
        assert abs(log_kernel((1, 1), (0, 0)) - 0.05516) < 1e-5

    def test_singular(self):
        with pytest.raises(DomainError):
            log_kernel((1, 2), (1, 2))

    @given(st.tuples(*[st.floats(-10, 10)] * 4))
    def test_symmetric(self, c):
        x, y = c[:2], c[2:]
        if x == y:
            return
        assert log_kernel(x, y) == log_kernel(y, x)
