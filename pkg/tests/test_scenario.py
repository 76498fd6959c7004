import logging
from pathlib import Path

import pytest
from nanomotion_g2 import status
from nanomotion_g2.exceptions import ScenarioParseError
from nanomotion_g2.exceptions import ScenarioValidationError
from nanomotion_g2.middleware import ExitCodeMiddleware
from nanomotion_g2.params import CorrelatorMode
from nanomotion_g2.params import DriveKind
from nanomotion_g2.params import PsfProfile
from nanomotion_g2.scenario.convertors import CONVERTOR_TYPES
from nanomotion_g2.scenario.utils import load_scenario
from nanomotion_g2.scenario.utils import parse_scenario
from tests.base import BaseTestCase
from tests.base import W0

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"


class TestConvertors(object):
    @pytest.mark.parametrize(
        "unit,text,expected",
        [
            ("frequency", "190 kHz", 190e3),
            ("frequency", "1.5e5", 1.5e5),
            ("length", "380 nm", 380e-9),
            ("length", "-0.2um", -0.2e-6),
            ("time", "20 ns", 20e-9),
            ("time", "4 us", 4e-6),
            ("mass", "2e-15 kg", 2e-15),
            ("mass", "2 fg", 2e-18),
            ("rate", "83 M/s", 83e6),
            ("rate", "3.3e6 1/s", 3.3e6),
            ("temperature", "4 K", 4.0),
            ("voltage_psd", "1 pV^2/Hz", 1e-12),
            ("float", ".5", 0.5),
            ("int", "20000", 20000),
            ("pair", "0.8, 1.0", (0.8, 1.0)),
        ],
    )
    def test_convert(self, unit, text, expected):
        assert CONVERTOR_TYPES[unit].convert(text) == pytest.approx(expected)

    @pytest.mark.parametrize(
        "unit,text",
        [
            ("frequency", "190 kmHz"),
            ("length", "380 ns"),
            ("int", "2.5"),
            ("float", "abc"),
            ("pair", "1.0"),
            ("str", "  "),
        ],
    )
    def test_reject(self, unit, text):
        with pytest.raises(ValueError):
            CONVERTOR_TYPES[unit].convert(text)

    def test_to_string(self):
        assert CONVERTOR_TYPES["frequency"].to_string(190e3) == "190000.0 Hz"
        assert CONVERTOR_TYPES["pair"].to_string((0.8, 1.0)) == "0.8, 1.0"


class TestParse(BaseTestCase):
    def test_empty_gives_defaults(self, caplog):
        with caplog.at_level(logging.INFO, logger="nanomotion_g2"):
            scenario = parse_scenario("")
        assert scenario.oscillator.frequency == 190e3
        assert scenario.simulation.mode is CorrelatorMode.adiabatic
        assert "default applied: [oscillator] frequency = 190000.0 Hz" in caplog.text
        assert "theta = dx_th/w0" in caplog.text

    def test_given_values_not_reported_as_defaults(self, caplog):
        with caplog.at_level(logging.INFO, logger="nanomotion_g2"):
            scenario = parse_scenario("[oscillator]\nfrequency = 200 kHz\n")
        assert scenario.oscillator.frequency == 200e3
        assert "[oscillator] frequency" not in caplog.text
        assert "[oscillator] quality_factor" in caplog.text

    def test_theta_sets_spread(self):
        scenario = self.scenario(drive={"theta": "0.3"})
        assert scenario.theta == pytest.approx(0.3, rel=1e-12)
        assert scenario.spread == pytest.approx(0.3 * W0, rel=1e-12)
        assert scenario.geometry().theta == pytest.approx(0.3, rel=1e-12)
        assert scenario.correlator_config().oscillator is not None

    def test_temperature_drive(self):
        scenario = parse_scenario("[drive]\ntemperature_eff = 300 K\n")
        assert scenario.oscillator_params().temperature_eff == 300.0
        assert scenario.drive.kind is DriveKind.thermal

    def test_actuator_heats_oscillator(self):
        text = (
            "[actuator]\nalpha = 2.5e-13 N/V^2\nv_offset = 100 V\n"
            "s_v = 1e-10 V^2/Hz\nbath_temperature = 300 K\n"
        )
        scenario = parse_scenario(text)
        assert scenario.oscillator_params().temperature_eff > 300.0

    def test_coherent_has_no_thermal_config(self):
        scenario = self.scenario(
            drive={"kind": "coherent", "amplitude": "200 nm", "theta": "0"}
        )
        assert scenario.correlator_config().oscillator is None

    def test_psf_and_pump(self):
        scenario = self.scenario(
            optics={
                "x1": "100 nm",
                "x2": "-100 nm",
                "pump": "gaussian",
                "pump_waist": "500 nm",
            }
        )
        assert scenario.psf(1).center == pytest.approx(100e-9)
        assert scenario.psf(2).center == pytest.approx(-100e-9)
        assert scenario.psf(1).profile is PsfProfile.gaussian
        assert scenario.pump_profile().waist == pytest.approx(500e-9)

    def test_shipped_scenarios(self):
        paths = sorted(SCENARIO_DIR.glob("*.cfg"))
        assert len(paths) == 3
        for path in paths:
            scenario = load_scenario(path)
            assert scenario.drive.theta > 0
            assert scenario.run.seed > 0


class TestParseErrors(BaseTestCase):
    def test_duplicate_option_has_line(self):
        with pytest.raises(ScenarioParseError) as info:
            parse_scenario("[oscillator]\nfrequency = 1 kHz\nfrequency = 2 kHz\n")
        assert info.value.lineno == 3
        assert info.value.detail.startswith("line 3:")
        assert info.value.exit_code == status.EXIT_2_VALIDATION_FAILURE

    def test_missing_header_has_line(self):
        with pytest.raises(ScenarioParseError) as info:
            parse_scenario("frequency = 1 kHz\n")
        assert info.value.lineno == 1

    def test_missing_file(self, tmp_path):
        with pytest.raises(ScenarioParseError):
            load_scenario(tmp_path / "missing.cfg")


class TestValidation(BaseTestCase):
    def expect_invalid(self, text: str) -> ScenarioValidationError:
        with pytest.raises(ScenarioValidationError) as info:
            parse_scenario(text, "bad.cfg")
        assert info.value.path == "bad.cfg"
        assert ExitCodeMiddleware().process_exception(info.value) == 2
        return info.value

    def test_unknown_key(self):
        error = self.expect_invalid("[oscillator]\nfrequncy = 1 kHz\n")
        assert error.errors()[0]["loc"] == ("oscillator", "frequncy")

    def test_unknown_section(self):
        error = self.expect_invalid("[oscilator]\nfrequency = 1 kHz\n")
        assert error.errors()[0]["loc"] == ("oscilator",)

    def test_bad_unit(self):
        error = self.expect_invalid("[optics]\nw0 = 380 ns\n")
        assert error.errors()[0]["loc"] == ("optics", "w0")

    def test_coarse_step(self):
        self.expect_invalid("[simulation]\ndt = 1 us\ntau_bin = 1 us\n")

    def test_short_trajectory(self):
        self.expect_invalid("[simulation]\nn_samples = 1000\ntau_max = 20 us\n")

    def test_range(self):
        self.expect_invalid("[detection]\nefficiency = 1.5\n")
        self.expect_invalid("[oscillator]\nquality_factor = 0.5\n")

    def test_exclusive_fields(self):
        self.expect_invalid("[drive]\ntheta = 0.3\ntemperature_eff = 300 K\n")
        self.expect_invalid("[oscillator]\nquality_factor = 2\ndamping = 90 kHz\n")
        self.expect_invalid("[drive]\nkind = coherent\n")
