import json
from pathlib import Path
from typing import Any
from typing import Dict
from typing import List
from typing import Optional
from typing import Tuple

import numpy as np
from nanomotion_g2.cli import run
from nanomotion_g2.correlator.models import CorrelatorConfig
from nanomotion_g2.params import EmitterParams
from nanomotion_g2.params import OscillatorParams
from nanomotion_g2.params import Psf
from nanomotion_g2.params import TrajectoryGrid
from nanomotion_g2.scenario.constants import MANIFEST_NAME
from nanomotion_g2.scenario.models import Scenario
from nanomotion_g2.scenario.utils import parse_scenario
from nanomotion_g2.utils import CsvConverter

W0 = 380e-9
# a small but fast scenario used by the command tests
SMALL_SCENARIO = {
    "drive": {"theta": "0.3"},
    "simulation": {
        "dt": "2 ns",
        "n_samples": "20000",
        "members": "4",
        "tau_bin": "20 ns",
        "tau_max": "4 us",
    },
    "analysis": {"truncation": "4"},
    "image": {"points": "41"},
}


class BaseTestCase(object):
    @staticmethod
    def oscillator(
        frequency: float = 190e3,
        quality_factor: float = 2.0,
        m_eff: float = 2e-15,
        temperature: float = 300.0,
    ) -> OscillatorParams:
        return OscillatorParams.from_frequency(
            frequency, quality_factor, m_eff, temperature
        )

    @staticmethod
    def emitter(**kwargs) -> EmitterParams:
        return EmitterParams(**kwargs)

    @staticmethod
    def psfs(x1: float = 0.0, x2: float = 0.0, w0: float = W0) -> Tuple[Psf, Psf]:
        return Psf(center=x1, w0=w0), Psf(center=x2, w0=w0)

    @staticmethod
    def grid(dt: float = 2e-9, n_samples: int = 20000) -> TrajectoryGrid:
        return TrajectoryGrid(dt=dt, n_samples=n_samples)

    @staticmethod
    def config(**kwargs) -> CorrelatorConfig:
        values: Dict[str, Any] = {"tau_bin": 20e-9, "tau_max": 4e-6}
        values.update(kwargs)
        return CorrelatorConfig(**values)

    @staticmethod
    def scenario_text(sections: Dict[str, Dict[str, str]]) -> str:
        lines: List[str] = []
        for name, values in sections.items():
            lines.append(f"[{name}]")
            lines.extend(f"{key} = {value}" for key, value in values.items())
            lines.append("")
        return "\n".join(lines)

    def scenario(self, **sections: Dict[str, str]) -> Scenario:
        merged = {name: dict(values) for name, values in SMALL_SCENARIO.items()}
        for name, values in sections.items():
            merged.setdefault(name, {}).update(values)
        return parse_scenario(self.scenario_text(merged))

    @staticmethod
    def read_csv(path: Path) -> Tuple[List[str], np.ndarray]:
        return CsvConverter.read(path)

    def run_expect_code(
        self,
        command: str,
        code: int,
        out_dir: Path,
        scenario: Optional[Scenario] = None,
        **kwargs,
    ) -> Dict[str, Any]:
        scenario = scenario if scenario is not None else self.scenario()
        exit_code = run(command, scenario, out_dir, **kwargs)
        assert exit_code == code
        manifest = json.loads((out_dir / MANIFEST_NAME).read_text())
        assert manifest["exit_code"] == code
        return manifest
