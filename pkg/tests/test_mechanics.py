import math

import numpy as np
import pytest
from nanomotion_g2.exceptions import DomainError
from nanomotion_g2.exceptions import UnsupportedRegimeError
from nanomotion_g2.mechanics import actuator_force_psd
from nanomotion_g2.mechanics import ANALYTIC_MEFF_RATIO
from nanomotion_g2.mechanics import damped_frequency
from nanomotion_g2.mechanics import displacement_psd
from nanomotion_g2.mechanics import effective_mass
from nanomotion_g2.mechanics import effective_temperature
from nanomotion_g2.mechanics import force_psd
from nanomotion_g2.mechanics import K_B
from nanomotion_g2.mechanics import linearized_force
from nanomotion_g2.mechanics import position_autocorrelation
from nanomotion_g2.mechanics import psd_variance
from nanomotion_g2.mechanics import solve_beam_modes
from nanomotion_g2.mechanics import static_deflection
from nanomotion_g2.mechanics import susceptibility
from nanomotion_g2.mechanics import temperature_for_spread
from nanomotion_g2.mechanics import thermal_force_sensitivity
from nanomotion_g2.mechanics import thermal_spread
from nanomotion_g2.params import ActuatorParams
from nanomotion_g2.params import ForceConvention
from nanomotion_g2.params import OscillatorParams
from scipy import integrate
from tests.base import BaseTestCase


class TestThermalSpread(BaseTestCase):
    def test_nanotube(self):
        hot = self.oscillator(frequency=1e6, m_eff=1e-20, temperature=300.0)
        cold = self.oscillator(frequency=1e6, m_eff=1e-20, temperature=4.0)
        assert thermal_spread(hot) == pytest.approx(102e-9, rel=0.02)
        assert thermal_spread(cold) == pytest.approx(12e-9, rel=0.02)

    def test_zero_temperature(self):
        assert thermal_spread(self.oscillator(temperature=0.0)) == 0.0

    def test_inverse(self):
        p = self.oscillator()
        dx = thermal_spread(p)
        assert temperature_for_spread(p, dx) == pytest.approx(300.0, rel=1e-12)

    def test_definition(self):
        p = self.oscillator(temperature=1e6)
        expected = math.sqrt(K_B * 1e6 / (2e-15 * p.omega_m ** 2))
        assert thermal_spread(p) == pytest.approx(expected, rel=1e-14)


class TestSpectra(BaseTestCase):
    def test_susceptibility_static(self):
        p = self.oscillator()
        chi = susceptibility(p, 0.0)
        assert chi.imag == 0.0
        assert chi.real == pytest.approx(1.0 / (p.m_eff * p.omega_m ** 2))

    def test_susceptibility_resonance(self):
        p = self.oscillator()
        chi = susceptibility(p, p.omega_m)
        assert chi.real == pytest.approx(0.0, abs=1e-12 * abs(chi))
        assert chi.imag > 0

    def test_variance_matches_integral(self):
        p = self.oscillator(quality_factor=5.0)

        def integrand(omega):
            return float(displacement_psd(p, omega)) / math.pi

        upper = 200 * p.omega_m
        value, _ = integrate.quad(integrand, 0.0, upper, points=[p.omega_m], limit=500)
        # tail beyond upper falls as omega^-4
        tail = force_psd(p) / (p.m_eff ** 2 * 3 * upper ** 3) / math.pi
        assert value + tail == pytest.approx(psd_variance(p), rel=1e-6)

    def test_variance_high_q(self):
        p = self.oscillator(quality_factor=1e4)
        assert psd_variance(p) == pytest.approx(thermal_spread(p) ** 2, rel=1e-3)


class TestDampedFrequency(BaseTestCase):
    def test_value(self):
        p = self.oscillator(quality_factor=2.0)
        assert damped_frequency(p) == pytest.approx(p.omega_m * math.sqrt(1 - 1 / 8))

    def test_overdamped(self):
        p = self.oscillator(quality_factor=0.5)
        with pytest.raises(UnsupportedRegimeError):
            damped_frequency(p)


class TestPositionAutocorrelation(BaseTestCase):
    def test_zero_delay(self):
        p = self.oscillator()
        assert position_autocorrelation(p, 0.0) == pytest.approx(
            thermal_spread(p) ** 2
        )

    def test_even_and_decaying(self):
        p = self.oscillator()
        tau = np.linspace(0, 50e-6, 101)
        forward = position_autocorrelation(p, tau)
        backward = position_autocorrelation(p, -tau)
        np.testing.assert_array_equal(forward, backward)
        envelope = thermal_spread(p) ** 2 * np.exp(-0.5 * p.gamma_m * tau)
        assert np.all(np.abs(forward) <= envelope * (1 + 0.5 / 2.0) + 1e-40)

    def test_zero_slope(self):
        p = self.oscillator()
        h = 1e-12
        slope = (position_autocorrelation(p, h) - position_autocorrelation(p, 0.0)) / h
        assert abs(slope) < 1e-6 * thermal_spread(p) ** 2 * p.omega_m


class TestBeamModes(BaseTestCase):
    def test_roots(self):
        modes = solve_beam_modes(5)
        expected = [1.87510, 4.69409, 7.85476, 10.9955, 14.1372]
        assert [m.index for m in modes] == [1, 2, 3, 4, 5]
        for mode, kl in zip(modes, expected):
            assert float(f"{mode.kL:.6g}") == pytest.approx(kl, rel=1e-5)

    def test_increasing(self):
        modes = solve_beam_modes(12)
        roots = [m.kL for m in modes]
        assert roots == sorted(roots)
        assert len(set(roots)) == 12

    def test_effective_mass(self):
        modes = solve_beam_modes(2)
        for mode in modes:
            assert round(mode.meff_ratio, 4) == ANALYTIC_MEFF_RATIO
            assert not mode.flagged
        assert effective_mass(1e-14, modes[0]) == pytest.approx(2.5e-15, rel=1e-4)

    def test_first_mode_coefficient(self):
        mode = solve_beam_modes(1)[0]
        assert mode.A_n == pytest.approx(-0.734096, rel=1e-5)

    def test_high_modes_flagged(self):
        modes = solve_beam_modes(5)
        assert [m.flagged for m in modes] == [False, False, True, True, True]

    def test_range(self):
        with pytest.raises(DomainError):
            solve_beam_modes(0)
        with pytest.raises(DomainError):
            solve_beam_modes(13)


class TestActuator(BaseTestCase):
    def test_deflection_and_force(self):
        a = ActuatorParams(alpha=2.5e-13, kappa=1e-12, v_offset=100.0, s_v=1e-12)
        assert static_deflection(a, 100.0) == pytest.approx(1e-8)
        # 2 alpha V0 = 50 pN/V
        assert linearized_force(a, 1.0) == pytest.approx(50e-12)
        assert actuator_force_psd(a) == pytest.approx(4 * (50e-12) ** 2 / 4 * 1e-12)

    def test_effective_temperature(self):
        p = self.oscillator()
        quiet = ActuatorParams()
        assert effective_temperature(quiet, p, 300.0) == 300.0

        a = ActuatorParams(alpha=2.5e-13, v_offset=100.0, s_v=1e-10)
        hot = effective_temperature(a, p, 300.0)
        excess = 2 * (2.5e-13 * 100.0) ** 2 * 1e-10 / (p.m_eff * K_B * p.gamma_m)
        assert hot == pytest.approx(300.0 + excess)


class TestForceSensitivity(BaseTestCase):
    def test_conventions(self):
        p = OscillatorParams(
            omega_m=2 * math.pi * 190e3, gamma_m=2e5, m_eff=2e-15, temperature_eff=300
        )
        angular = thermal_force_sensitivity(p, ForceConvention.angular)
        hertz = thermal_force_sensitivity(p, ForceConvention.hertz)
        assert angular == pytest.approx(math.sqrt(force_psd(p)))
        assert hertz == pytest.approx(angular / math.sqrt(2 * math.pi))
