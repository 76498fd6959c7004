import pytest
from nanomotion_g2 import status
from nanomotion_g2.cli import execute_from_command_line
from nanomotion_g2.scenario.constants import MANIFEST_NAME
from tests.base import BaseTestCase
from tests.base import W0

OK = status.EXIT_0_OK

# line at 190 kHz with a linear term: both detectors 150 nm off the rest position
LINE_SCENARIO = {
    "oscillator": {"quality_factor": "10"},
    "optics": {"x1": "150 nm", "x2": "150 nm"},
    "simulation": {"tau_max": "200 us", "n_samples": "200000"},
    "analysis": {"band_low": "100 kHz", "band_high": "300 kHz"},
}


class TestCommands(BaseTestCase):
    def test_modes(self, tmp_path):
        manifest = self.run_expect_code("modes", OK, tmp_path)
        header, table = self.read_csv(tmp_path / "modes.csv")
        assert header == ["n", "kL", "A_n", "meff_ratio"]
        assert table.shape == (5, 4)
        assert manifest["outputs"] == ["modes.csv"]
        assert manifest["results"]["flagged_modes"] == [3, 4, 5]
        assert manifest["message"] is None

    def test_image(self, tmp_path):
        manifest = self.run_expect_code("image", OK, tmp_path)
        _, table = self.read_csv(tmp_path / "image.csv")
        assert table.shape == (41, 2)
        spread = manifest["results"]["fit_spread"]
        assert spread == pytest.approx(0.3 * W0, rel=1e-3)

    def test_emitter_g2(self, tmp_path):
        manifest = self.run_expect_code("emitter-g2", OK, tmp_path)
        results = manifest["results"]
        assert abs(results["g2_zero"]) < 1e-6
        assert results["sigma_e_steady"] == pytest.approx(0.190685, rel=1e-4)
        _, table = self.read_csv(tmp_path / "emitter_g2.csv")
        assert table.shape == (201, 2)

    def test_trajectory(self, tmp_path):
        self.run_expect_code("trajectory", OK, tmp_path)
        header, table = self.read_csv(tmp_path / "trajectory.csv")
        assert header == ["t_s", "x_m"]
        assert table.shape == (20000, 2)

    def test_aj_table(self, tmp_path):
        manifest = self.run_expect_code("aj-table", OK, tmp_path)
        header, table = self.read_csv(tmp_path / "aj_table.csv")
        assert header == ["j", "A_j", "converged"]
        assert table[0, 1] == pytest.approx(1 / 1.36, rel=1e-9)
        assert manifest["results"]["all_converged"]


class TestAnalytic(BaseTestCase):
    def test_converged(self, tmp_path):
        manifest = self.run_expect_code("analytic-g2", OK, tmp_path)
        header, table = self.read_csv(tmp_path / "analytic_g2.csv")
        assert header == ["tau_s", "g2"]
        assert table.shape == (201, 2)
        assert abs(table[0, 1]) < 1e-6
        assert len(manifest["results"]["coefficients"]) == 5

    def test_wide_motion_is_non_convergence(self, tmp_path):
        scenario = self.scenario(drive={"theta": "0.5"})
        manifest = self.run_expect_code(
            "analytic-g2", status.EXIT_3_NON_CONVERGENCE, tmp_path, scenario
        )
        assert "did not converge" in manifest["message"]
        assert manifest["outputs"] == []

    def test_spectrum_and_fit(self, tmp_path):
        scenario = self.scenario(**LINE_SCENARIO)
        self.run_expect_code("analytic-g2", OK, tmp_path / "g2", scenario)
        curve = tmp_path / "g2" / "analytic_g2.csv"

        manifest = self.run_expect_code(
            "spectrum", OK, tmp_path / "spectrum", scenario, input_path=curve
        )
        results = manifest["results"]
        assert results["peak_hz"] == pytest.approx(190e3, rel=0.05)
        assert results["snr"] > 10.0
        assert manifest["input_path"] == str(curve)

        manifest = self.run_expect_code(
            "fit", OK, tmp_path / "fit", scenario, input_path=curve
        )
        assert manifest["outputs"] == ["fit.txt", "fit_residuals.csv"]
        assert manifest["results"]["dx_fit"] == pytest.approx(0.3 * W0, rel=1e-3)
        assert manifest["results"]["alpha_1"] < 0
        summary = (tmp_path / "fit" / "fit.txt").read_text()
        assert summary.startswith("alpha_0=")
        assert "dx_fit=" in summary


class TestSimulate(BaseTestCase):
    def test_threads_do_not_change_output(self, tmp_path):
        scenario = self.scenario(simulation={"members": "10"})
        serial = self.run_expect_code(
            "simulate-g2", OK, tmp_path / "serial", scenario, threads=1
        )
        parallel = self.run_expect_code(
            "simulate-g2", OK, tmp_path / "parallel", scenario, threads=2
        )
        first = (tmp_path / "serial" / "g2.csv").read_bytes()
        second = (tmp_path / "parallel" / "g2.csv").read_bytes()
        assert first == second
        assert serial["results"]["n_members"] == 10
        assert serial["threads"] == 1
        assert parallel["threads"] == 2

    def test_manifest(self, tmp_path):
        manifest = self.run_expect_code("simulate-g2", OK, tmp_path, seed=7)
        assert manifest["command"] == "simulate-g2"
        assert manifest["seed"] == 7
        assert manifest["outputs"] == ["g2.csv"]
        assert manifest["results"]["normalization"] == "analytic_flux"
        assert manifest["scenario"]["drive"]["theta"] == 0.3
        assert {"numpy", "scipy", "pydantic", "joblib"} <= set(manifest["versions"])
        assert manifest["wall_time_s"] >= 0


class TestCommandLine(BaseTestCase):
    def write_config(self, tmp_path, sections) -> str:
        path = tmp_path / "run.cfg"
        path.write_text(self.scenario_text(sections))
        return str(path)

    def test_stream_then_correlate(self, tmp_path):
        config = self.write_config(
            tmp_path,
            {
                "drive": {"theta": "0.3"},
                "simulation": {
                    "dt": "1 ns",
                    "n_samples": "400000",
                    "tau_max": "4 us",
                },
                "detection": {"efficiency": "0.5"},
                "run": {"seed": "11"},
            },
        )
        clicks = tmp_path / "clicks"
        argv = ["nanomotion-g2", "--config", config, "--out", str(clicks)]
        assert execute_from_command_line(argv + ["photon-stream"]) == OK
        header, stream = self.read_csv(clicks / "stream.csv")
        assert header == ["t_s", "detector"]
        assert len(stream) > 1000

        g2 = tmp_path / "g2"
        argv = [
            "nanomotion-g2",
            "--config",
            config,
            "--out",
            str(g2),
            "--input",
            str(clicks / "stream.csv"),
            "correlate",
        ]
        assert execute_from_command_line(argv) == OK
        header, table = self.read_csv(g2 / "g2_stream.csv")
        assert header == ["tau_s", "g2", "stderr"]
        assert len(table) == 200
        assert (g2 / MANIFEST_NAME).is_file()

    def test_correlate_needs_input(self, tmp_path):
        argv = ["nanomotion-g2", "--out", str(tmp_path), "correlate"]
        assert execute_from_command_line(argv) == status.EXIT_2_VALIDATION_FAILURE
        assert not (tmp_path / MANIFEST_NAME).exists()

    def test_bad_config(self, tmp_path):
        config = self.write_config(tmp_path, {"optics": {"w0": "380 ns"}})
        argv = ["nanomotion-g2", "--config", config, "--out", str(tmp_path), "modes"]
        assert execute_from_command_line(argv) == status.EXIT_2_VALIDATION_FAILURE

    def test_unknown_subcommand(self, tmp_path):
        with pytest.raises(SystemExit):
            execute_from_command_line(["nanomotion-g2", "resonate"])
