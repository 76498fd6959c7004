import math

import numpy as np
import pytest
from nanomotion_g2.analysis import expansion_model
from nanomotion_g2.analysis import extract_cxi
from nanomotion_g2.analysis import fit_expansion
from nanomotion_g2.analysis import fit_thermal_spectrum
from nanomotion_g2.analysis import linear_detection_threshold
from nanomotion_g2.analysis import normalized_autocorrelation
from nanomotion_g2.analysis import photon_counting_regime
from nanomotion_g2.analysis import sensitivity
from nanomotion_g2.analysis import spectral_snr
from nanomotion_g2.analysis import spectrum_from_g2
from nanomotion_g2.correlator.models import G2Curve
from nanomotion_g2.correlator.utils import correlate_stream
from nanomotion_g2.correlator.utils import g2_adiabatic
from nanomotion_g2.correlator.utils import sample_photon_stream
from nanomotion_g2.exceptions import DomainError
from nanomotion_g2.mechanics import damped_frequency
from nanomotion_g2.mechanics import temperature_for_spread
from nanomotion_g2.mechanics import thermal_spread
from nanomotion_g2.params import CorrelatorMode
from nanomotion_g2.params import Geometry
from nanomotion_g2.params import Normalization
from nanomotion_g2.params import PumpProfile
from nanomotion_g2.trajectory import simulate_ensemble
from nanomotion_g2.trajectory import simulate_thermal
from nanomotion_g2.utils import make_rng
from nanomotion_g2.wick import aj_closed_form
from tests.base import BaseTestCase
from tests.base import W0

F0 = 190e3


def make_curve(tau, g2) -> G2Curve:
    return G2Curve(
        tau=tau,
        g2=g2,
        stderr=np.full_like(tau, np.nan),
        normalization=Normalization.measured_flux,
        norm=1.0,
    )


def ringing(quality_factor: float):
    """(omega tilde, gamma) of a line at F0 with the given quality factor."""
    omega0 = 2 * math.pi * F0
    gamma = omega0 / quality_factor
    return math.sqrt(omega0 ** 2 - 0.25 * gamma ** 2), gamma


class TestSpectrum(BaseTestCase):
    def test_line_position_and_width(self):
        omega, gamma = ringing(10.0)
        tau = np.arange(20000) * 20e-9
        g2 = 1.0 + 0.3 * normalized_autocorrelation(tau, omega, gamma)
        curve = make_curve(tau, g2)
        spectrum = spectrum_from_g2(curve)
        assert spectrum.window == "hann"
        assert spectrum.freq[0] == 0.0

        peak, width = fit_thermal_spectrum(spectrum, band=(100e3, 300e3))
        w = gamma / (2 * math.pi)
        assert peak == pytest.approx(math.sqrt(F0 ** 2 - 0.5 * w ** 2), rel=0.01)
        assert width == pytest.approx(w, rel=0.05)
        assert spectral_snr(spectrum, (100e3, 300e3)) > 10.0

    def test_masked_bins_are_held(self):
        omega, gamma = ringing(10.0)
        tau = np.arange(2000) * 20e-9
        g2 = 1.0 + 0.3 * normalized_autocorrelation(tau, omega, gamma)
        g2[:5] = np.nan
        spectrum = spectrum_from_g2(make_curve(tau, g2), mask_tau=100e-9)
        assert np.all(np.isfinite(spectrum.psd))
        with pytest.raises(DomainError):
            spectrum_from_g2(make_curve(tau, g2))

    def test_nonuniform_delays(self):
        tau = np.array([0.0, 1.0, 3.0, 4.0]) * 1e-8
        with pytest.raises(DomainError):
            spectrum_from_g2(make_curve(tau, np.ones(4)))

    def test_snr_band(self):
        tau = np.arange(100) * 20e-9
        spectrum = spectrum_from_g2(make_curve(tau, np.ones(100)))
        with pytest.raises(DomainError):
            spectral_snr(spectrum, (0.0, 1e12))

    def test_summed_psd_is_variance(self):
        tau = np.arange(500) * 20e-9
        y = 0.1 * make_rng(3).standard_normal(500)
        y -= y.mean()
        spectrum = spectrum_from_g2(make_curve(tau, 1.0 + y))
        df = spectrum.freq[1] - spectrum.freq[0]
        assert np.sum(spectrum.psd) * df == pytest.approx(np.var(y), rel=1e-9)

    def test_uncorrelated_curve_has_no_power(self):
        tau = np.arange(500) * 20e-9
        spectrum = spectrum_from_g2(make_curve(tau, np.ones(500)))
        np.testing.assert_array_equal(spectrum.psd, 0.0)


class TestExpansionFit(BaseTestCase):
    def test_recovers_dynamics_and_spread(self):
        theta = 0.3
        geom = Geometry.symmetric(0.5, theta)
        a0 = aj_closed_form(0, geom)
        alpha = np.array(
            [aj_closed_form(j, geom) * (2 * theta ** 2) ** j / a0 for j in range(3)]
        )
        omega, gamma = ringing(2.0)
        tau = np.arange(1000) * 20e-9
        g2 = expansion_model(tau, alpha, omega, gamma, np.ones_like(tau))

        fit = fit_expansion(make_curve(tau, g2), max_order=2, geometry=geom, w0=W0)
        np.testing.assert_allclose(fit.alpha, alpha, rtol=1e-4, atol=1e-8)
        assert fit.omega_fit == pytest.approx(omega, rel=1e-4)
        assert fit.gamma_fit == pytest.approx(gamma, rel=1e-4)
        assert fit.dx_fit == pytest.approx(theta * W0, rel=1e-4)
        assert fit.residual_rms < 1e-8
        assert fit.residuals.shape == tau.shape

    def test_emitter_factor_divides_out(self):
        omega, gamma = ringing(2.0)
        tau = np.arange(1000) * 20e-9
        alpha = np.array([1.0, -0.1, 0.02])

        def sigma(t):
            return 1.0 - np.exp(-t / 50e-9)

        g2 = expansion_model(tau, alpha, omega, gamma, sigma(tau))
        fit = fit_expansion(make_curve(tau, g2), sigma, max_order=2, mask_tau=300e-9)
        np.testing.assert_allclose(fit.alpha, alpha, atol=1e-6)
        assert fit.omega_fit == pytest.approx(omega, rel=1e-4)
        assert fit.dx_fit is None

    def test_order_range(self):
        tau = np.arange(100) * 20e-9
        with pytest.raises(DomainError):
            fit_expansion(make_curve(tau, np.ones(100)), max_order=5)
        with pytest.raises(DomainError):
            fit_expansion(make_curve(tau[:5], np.ones(5)), max_order=4)


class TestShotNoise(BaseTestCase):
    def test_sensitivity(self):
        assert sensitivity(380e-9, 1e6, 1e-6) == pytest.approx(3.61e-17, rel=0.01)
        assert math.sqrt(sensitivity(380e-9, 1e6, 1e-6)) == pytest.approx(
            6.0e-9, rel=0.01
        )
        with pytest.raises(DomainError):
            sensitivity(380e-9, 0.0, 1e-6)

    def test_extract_cxi(self):
        covariance = np.array([1e-15, -2e-15, 5e-16, 0.0])
        sigma = np.array([1.0, 0.8, 0.05, 1.2])
        g2 = sigma * (1.0 - 4.0 * covariance / W0 ** 2)
        extracted = extract_cxi(g2, sigma, W0)
        np.testing.assert_allclose(extracted[[0, 1, 3]], covariance[[0, 1, 3]])
        assert np.isnan(extracted[2])
        with pytest.raises(DomainError):
            extract_cxi(g2, np.zeros(4), W0)

    def test_regimes(self):
        omega_m = 2 * math.pi * F0
        assert photon_counting_regime(95e3, omega_m)
        assert not photon_counting_regime(1e6, omega_m)

        p = self.oscillator()
        threshold = linear_detection_threshold(p, W0)
        assert threshold == pytest.approx(p.gamma_m * W0 ** 2 / thermal_spread(p) ** 2)


class TestSimulatedData(BaseTestCase):
    def thermal(self, theta: float, frequency: float = F0, quality_factor: float = 2.0):
        cold = self.oscillator(frequency, quality_factor, temperature=1.0)
        hot = temperature_for_spread(cold, theta * W0)
        return self.oscillator(frequency, quality_factor, temperature=hot)

    def adiabatic_curve(self, p, x1, x2, dt, n_samples, tau_max, n_members, seed):
        cfg = self.config(
            tau_bin=dt,
            tau_max=tau_max,
            start_stride=1,
            x1=x1,
            x2=x2,
            mode=CorrelatorMode.adiabatic,
            oscillator=p,
        )
        grid = self.grid(dt=dt, n_samples=n_samples)
        ensemble = simulate_ensemble(p, grid, seed, n_members)
        psf1, psf2 = self.psfs(x1, x2)
        return g2_adiabatic(ensemble, psf1, psf2, np.ones_like, cfg).curve()

    def test_fit_recovers_spread(self):
        theta = 0.3
        p = self.thermal(theta)
        geom = Geometry.symmetric(0.64, theta)
        x1 = 0.64 * W0 / math.sqrt(2.0)
        curve = self.adiabatic_curve(p, x1, -x1, 20e-9, 50000, 20e-6, 128, seed=17)

        fit = fit_expansion(curve, max_order=3, geometry=geom, w0=W0)
        expected = aj_closed_form(1, geom) * 2 * theta ** 2 / aj_closed_form(0, geom)
        assert fit.alpha[1] / fit.alpha[0] == pytest.approx(expected, rel=0.1)
        assert fit.dx_fit == pytest.approx(theta * W0, rel=0.05)
        assert fit.omega_fit == pytest.approx(damped_frequency(p), rel=0.02)
        assert fit.gamma_fit == pytest.approx(p.gamma_m, rel=0.2)

    def test_spectrum_of_large_motion(self):
        theta = 0.95
        p = self.thermal(theta, quality_factor=10.0)
        # offsets sqrt(u) and sqrt(3 u) null the C^2 and C^3 terms of g2
        x1 = 0.5 * W0 * math.sqrt(1.0 + 4.0 * theta ** 2)
        x2 = math.sqrt(3.0) * x1
        curve = self.adiabatic_curve(p, x1, x2, 50e-9, 100000, 400e-6, 64, seed=23)

        spectrum = spectrum_from_g2(curve)
        peak, width = fit_thermal_spectrum(spectrum, band=(100e3, 300e3))
        assert peak == pytest.approx(damped_frequency(p) / (2 * math.pi), rel=0.02)
        assert width == pytest.approx(p.gamma_m / (2 * math.pi), rel=0.15)

    def test_photon_counting_with_dark_counts(self):
        theta = 0.95
        p = self.thermal(theta, frequency=20e3, quality_factor=10.0)
        t = simulate_thermal(p, self.grid(dt=50e-9, n_samples=1000000), 31)
        e = self.emitter(
            gamma_rad=1e6, k_isc=0.0, k_relax=1e6, pump_rate_per_intensity=1e6
        )
        x = 0.5 * W0 * math.sqrt(1.0 + 4.0 * theta ** 2)
        psf1, psf2 = self.psfs(x, x)
        s = sample_photon_stream(t, e, PumpProfile(), psf1, psf2, 0.15, 50.0, seed=32)
        assert photon_counting_regime(len(s.channel(1)) / s.duration, p.omega_m)

        cfg = self.config(
            tau_bin=2e-6,
            tau_max=2e-3,
            x1=x,
            x2=x,
            normalization=Normalization.measured_flux,
        )
        spectrum = spectrum_from_g2(correlate_stream(s, cfg))
        band = (10e3, 30e3)
        assert spectral_snr(spectrum, band) > 5.0
        inside = (spectrum.freq >= band[0]) & (spectrum.freq <= band[1])
        peak = spectrum.freq[inside][np.argmax(spectrum.psd[inside])]
        assert peak == pytest.approx(damped_frequency(p) / (2 * math.pi), rel=0.1)
