import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special

from twomode.errors import QuadratureError
from twomode.spectral import (BathParams, bose_einstein, lamb_shift, lamb_shift_derivative, lamb_shift_grid,
                              memory_kernel, memory_kernel_diag, noise_kernel, noise_kernel_diag, ohmic_density,
                              reservoir_densities, self_energy)


def shift_s1(omega, eta, c):
    """Closed form for s = 1 via the exponential integral."""
    x = omega / c
    return eta * (-c + omega * math.exp(-x) * special.expi(x))


def shift_negative(omega, bath):
    """Closed form for omega < 0 and any s (incomplete gamma)."""
    a = -omega
    c, s = bath.omega_c, bath.s
    val = mp.gamma(s + 1) * mp.mpf(a) ** s * mp.e ** (a / c) * mp.gammainc(-s, a / c)
    return float(-bath.eta * c ** (1 - s) * val)


def noise_zeta(tau, bath):
    """Hurwitz-zeta form of the thermal kernel."""
    c, s, t = bath.omega_c, bath.s, bath.temperature
    z = mp.zeta(s + 1, 1 + t / c + 1j * t * tau)
    return complex(bath.eta * c ** (1 - s) * mp.gamma(s + 1) * t ** (s + 1) * z)


class TestDensities:
    def test_ohmic_value(self):
        b = BathParams(0.1, 1.0, 5.0)
        assert ohmic_density(5.0, b) == pytest.approx(2 * np.pi * 0.1 * 5 * np.exp(-1), rel=1e-14)
        assert ohmic_density(5.0, b) == pytest.approx(1.15573, abs=1e-5)

    @pytest.mark.parametrize("omega", [0.0, -0.5, -100.0])
    def test_zero_off_support(self, omega):
        assert ohmic_density(omega, BathParams(0.3, 0.5)) == 0.0

    def test_reservoir_split(self):
        b = BathParams(0.1, 1.0, 5.0, lam=0.5)
        jl, jr = reservoir_densities(5.0, b)
        assert (jl, jr) == pytest.approx((0.57786, 1.73359), abs=1e-5)
        jl, jr = reservoir_densities(2.0, BathParams(0.1, lam=0.0))
        assert jl == 0.0 and jr == pytest.approx(2 * ohmic_density(2.0, BathParams(0.1)))
        jl, jr = reservoir_densities(2.0, BathParams(0.1))
        assert jl == jr

    @pytest.mark.parametrize("kw", [dict(eta=-0.1), dict(eta=0.1, s=0), dict(eta=0.1, omega_c=-1),
                                    dict(eta=0.1, lam=1.5), dict(eta=0.1, temperature=-1), dict(eta=np.nan)])
    def test_bath_validation(self, kw):
        with pytest.raises(ValueError):
            BathParams(**kw)

    def test_bose(self):
        assert bose_einstein(1.0, 0.0) == 0.0
        assert bose_einstein(1.0, 1.0) == pytest.approx(1 / (np.e - 1), rel=1e-14)
        assert bose_einstein(50.0, 1.0) < 1e-20
        with pytest.raises(ValueError):
            bose_einstein(0.0, 1.0)

    @given(st.floats(-50, 50), st.floats(0.01, 5), st.floats(0.2, 4))
    def test_density_nonnegative_and_linear(self, w, eta, s):
        b = BathParams(eta, s, 5.0)
        j = ohmic_density(w, b)
        assert j >= 0
        assert ohmic_density(w, b.with_eta(2 * eta)) == pytest.approx(2 * j, rel=1e-13, abs=0)


class TestLambShift:
    @pytest.mark.parametrize("s", [0.5, 1.0, 2.0])
    def test_band_edge(self, s):
        b = BathParams(0.2, s, 5.0)
        assert lamb_shift(0.0, b) == pytest.approx(-0.2 * 5.0 * special.gamma(s), abs=1e-9)

    def test_band_edge_value(self):
        assert lamb_shift(0.0, BathParams(0.2, 1.0, 5.0)) == pytest.approx(-1.0, abs=1e-10)

    def test_zero_coupling(self):
        for w in (-3.0, 0.0, 2.5):
            assert lamb_shift(w, BathParams(0.0)) == 0.0

    @pytest.mark.parametrize("omega", [-50.0, -7.0, -1.0, -1e-3, 1e-3, 0.5, 1.0, 5.0, 20.0, 80.0])
    def test_exponential_integral_s1(self, omega):
        b = BathParams(0.3, 1.0, 5.0)
        assert lamb_shift(omega, b) == pytest.approx(shift_s1(omega, 0.3, 5.0), abs=1e-9)

    def test_far_below_band(self):
        b = BathParams(0.3, 1.0, 5.0)
        val = lamb_shift(-50.0, b)
        assert abs(val) < b.eta * b.omega_c ** 2 / 50.0
        assert abs(lamb_shift(-500.0, b)) < 1e-2 * b.eta * b.omega_c

    @pytest.mark.parametrize("s", [0.3, 0.5, 1.5, 2.0, 3.0])
    @pytest.mark.parametrize("omega", [-20.0, -2.0, -0.3])
    def test_incomplete_gamma_form(self, s, omega):
        b = BathParams(0.17, s, 4.0)
        assert lamb_shift(omega, b) == pytest.approx(shift_negative(omega, b), abs=1e-9)

    @pytest.mark.parametrize("s", [0.5, 2.0])
    def test_principal_value_by_mpmath(self, s):
        b = BathParams(0.2, s, 5.0)
        w = 1.3
        f = lambda x: 0.2 * x * (x / 5.0) ** (s - 1) * mp.e ** (-x / 5.0)
        # symmetric window around the pole: the 1/(w - x) part integrates to zero there
        inner = mp.quad(lambda x: (f(x) - f(w)) / (w - x), [0, w, 2 * w])
        tail = mp.quad(lambda x: f(x) / (w - x), [2 * w, 50, mp.inf])
        assert lamb_shift(w, b) == pytest.approx(float(inner + tail), abs=1e-9)

    def test_strictly_decreasing_below_band(self):
        b = BathParams(0.3, 0.7, 5.0)
        grid = np.linspace(-30, -1e-3, 200)
        vals = np.array([lamb_shift(w, b) for w in grid])
        assert np.all(np.diff(vals) < 0)

    @given(st.floats(-40, 40), st.floats(0.01, 1.0), st.sampled_from([0.5, 1.0, 2.0]))
    @settings(max_examples=30, deadline=None)
    def test_linear_in_eta(self, w, eta, s):
        b = BathParams(eta, s, 5.0)
        assert lamb_shift(w, b.with_eta(2 * eta)) == pytest.approx(2 * lamb_shift(w, b), rel=1e-9, abs=1e-11)

    def test_grid_matches_adaptive(self):
        for s in (0.5, 1.0, 2.5):
            b = BathParams(0.25, s, 5.0)
            w = np.concatenate([np.linspace(-10, -0.01, 7), np.linspace(0.01, 60, 23)])
            ref = np.array([lamb_shift(x, b) for x in w])
            assert np.abs(lamb_shift_grid(w, b) - ref).max() < 1e-9

    @pytest.mark.parametrize("omega", [-5.0, -0.5, 0.7, 3.0])
    def test_derivative_s1(self, omega):
        eta, c = 0.3, 5.0
        x = omega / c
        exact = eta * ((1 - x) * math.exp(-x) * special.expi(x) + 1)
        assert lamb_shift_derivative(omega, BathParams(eta, 1.0, c)) == pytest.approx(exact, abs=1e-8)

    def test_self_energy_sides(self):
        b = BathParams(0.2, 1.0, 5.0, lam=0.25)
        tot = self_energy(-0.4, b)
        left, right = self_energy(-0.4, b, "L"), self_energy(-0.4, b, "R")
        assert tot.j == 0.0 and tot.delta < 0
        assert left.delta == pytest.approx(0.25 * tot.delta) and right.delta == pytest.approx(1.75 * tot.delta)
        above = self_energy(2.0, b)
        assert above.retarded() == pytest.approx(above.delta - 0.5j * above.j)
        sym = BathParams(0.2)
        assert self_energy(1.0, sym, "L") == self_energy(1.0, sym, "R")

    def test_bad_side(self):
        with pytest.raises(ValueError):
            self_energy(1.0, BathParams(0.1), "X")


class TestKernels:
    def test_memory_moment(self):
        b = BathParams(0.1, 1.0, 5.0)
        g = memory_kernel(0.0, b)
        assert np.allclose(np.diag(g), 2.5, atol=1e-12)
        assert g[0, 1] == 0 and g[1, 0] == 0
        assert np.allclose(memory_kernel(0.0, b, method="quadrature"), g, atol=1e-9)

    @pytest.mark.parametrize("tau", [0.05, 0.7, 3.0, 25.0])
    @pytest.mark.parametrize("s", [0.5, 1.0, 2.0])
    def test_memory_analytic_vs_quadrature(self, tau, s):
        b = BathParams(0.2, s, 5.0, lam=0.6)
        assert np.abs(memory_kernel(tau, b) - memory_kernel(tau, b, method="quadrature")).max() < 1e-8

    def test_memory_hermitian_and_zero(self):
        b = BathParams(0.3, 1.3, 4.0)
        for tau in (0.3, 2.0):
            assert np.allclose(memory_kernel(-tau, b), memory_kernel(tau, b).conj())
        assert not memory_kernel(1.0, BathParams(0.0)).any()

    def test_noise_zero_temperature(self):
        b = BathParams(0.3, 1.0, 5.0, temperature=0.0)
        assert not noise_kernel(0.7, b).any()
        assert not noise_kernel_diag(np.linspace(0, 5, 11), b).any()

    @pytest.mark.parametrize("s", [0.5, 1.0, 2.0])
    @pytest.mark.parametrize("tau", [0.0, 0.4, 3.0, 20.0])
    def test_noise_hurwitz_zeta(self, s, tau):
        b = BathParams(0.1, s, 5.0, temperature=0.5)
        ref = noise_zeta(tau, b)
        assert abs(noise_kernel(tau, b)[0, 0] - ref) < 1e-9
        assert abs(noise_kernel_diag(np.array([tau]), b)[0, 0] - ref) < 1e-9

    def test_noise_self_convergence(self):
        b = BathParams(0.1, 1.0, 5.0, temperature=0.5)
        taus = np.array([0.0])
        coarse = noise_kernel_diag(taus, b, resolution=1)
        fine = noise_kernel_diag(taus, b, resolution=2)
        assert np.abs(coarse - fine).max() < 1e-8

    def test_noise_symmetry(self):
        b = BathParams(0.2, 0.8, 5.0, lam=1.0, temperature=1.0)
        g = noise_kernel(1.1, b)
        assert g[0, 0] == pytest.approx(g[1, 1])
        assert np.allclose(noise_kernel(-1.1, b), g.conj())

    def test_kernel_grid_shape(self):
        b = BathParams(0.2, 1.0, 5.0, lam=0.3)
        k = memory_kernel_diag(np.linspace(0, 1, 5), b)
        assert k.shape == (2, 5)
        assert np.allclose(k[1] / k[0], 1.7 / 0.3)

    def test_cutoff_rule(self):
        b = BathParams(0.1, 1.0, 5.0)
        assert b.cutoff() <= 5.0 * 41.0
        assert special.gammaincc(2.0, b.cutoff() / 5.0) <= 1.01e-12
