import math
from typing import Any
from typing import Dict
from typing import List
from typing import Optional
from typing import Tuple

import numpy as np
from nanomotion_g2.correlator.models import CorrelatorConfig
from nanomotion_g2.mechanics import effective_temperature
from nanomotion_g2.mechanics import temperature_for_spread
from nanomotion_g2.mechanics import thermal_spread
from nanomotion_g2.params import ActuatorParams
from nanomotion_g2.params import CorrelatorMode
from nanomotion_g2.params import DriveKind
from nanomotion_g2.params import EmitterParams
from nanomotion_g2.params import Geometry
from nanomotion_g2.params import Normalization
from nanomotion_g2.params import OscillatorParams
from nanomotion_g2.params import Psf
from nanomotion_g2.params import PsfProfile
from nanomotion_g2.params import PumpKind
from nanomotion_g2.params import PumpProfile
from nanomotion_g2.params import TrajectoryGrid
from nanomotion_g2.trajectory import MAX_STEP_PHASE
from pydantic import BaseModel
from pydantic import Extra
from pydantic import Field
from pydantic import root_validator

# start weights stay valid while dx_th / w0 << gamma_rad / omega_m
VALIDITY_FRACTION = 0.1


class SectionModel(BaseModel):
    class Config:
        extra = Extra.forbid
        allow_mutation = False
        arbitrary_types_allowed = True


class OscillatorSection(SectionModel):
    frequency: float = Field(190e3, gt=0, unit="frequency")
    quality_factor: float = Field(2.0, gt=0, unit="float")
    damping: Optional[float] = Field(None, gt=0, unit="frequency")
    mass: float = Field(2e-15, gt=0, unit="mass")
    modes: int = Field(5, ge=1, le=12, unit="int")

    @root_validator(pre=True)
    def check_damping(cls, values):
        if "quality_factor" in values and values.get("damping") is not None:
            raise ValueError("give either quality_factor or damping, not both")
        return values

    @property
    def q_factor(self) -> float:
        if self.damping is not None:
            return self.frequency / self.damping
        return self.quality_factor


class ActuatorSection(SectionModel):
    alpha: float = Field(0.0, ge=0, unit="force_coefficient")
    kappa: float = Field(0.0, ge=0, unit="deflection_coefficient")
    v_offset: float = Field(0.0, unit="voltage")
    s_v: float = Field(0.0, ge=0, unit="voltage_psd")
    bath_temperature: float = Field(300.0, ge=0, unit="temperature")


class EmitterSection(SectionModel):
    gamma_rad: float = Field(8.3e7, gt=0, unit="rate")
    k_isc: float = Field(8e6, ge=0, unit="rate")
    k_relax: float = Field(3.3e6, ge=0, unit="rate")
    pump_rate_per_intensity: float = Field(5e7, ge=0, unit="rate")


class OpticsSection(SectionModel):
    w0: float = Field(380e-9, gt=0, unit="length")
    x1: float = Field(0.0, unit="length")
    x2: float = Field(0.0, unit="length")
    psf_profile: PsfProfile = Field(PsfProfile.gaussian, unit="str")
    psf_table: Optional[str] = Field(None, unit="str")
    pump: PumpKind = Field(PumpKind.broad, unit="str")
    intensity: float = Field(1.0, ge=0, unit="float")
    pump_center: float = Field(0.0, unit="length")
    pump_waist: Optional[float] = Field(None, gt=0, unit="length")

    @root_validator(skip_on_failure=True)
    def check_profiles(cls, values):
        tabulated = values["psf_profile"] is PsfProfile.tabulated
        if tabulated and values.get("psf_table") is None:
            raise ValueError("psf_profile=tabulated needs psf_table")
        if values["pump"] is PumpKind.gaussian and values.get("pump_waist") is None:
            raise ValueError("pump=gaussian needs pump_waist")
        return values


class DriveSection(SectionModel):
    kind: DriveKind = Field(DriveKind.thermal, unit="str")
    temperature_eff: Optional[float] = Field(None, ge=0, unit="temperature")
    theta: Optional[float] = Field(None, ge=0, unit="float")
    amplitude: Optional[float] = Field(None, ge=0, unit="length")
    phase: float = Field(0.0, unit="float")

    @root_validator(skip_on_failure=True)
    def check_drive(cls, values):
        given = [k for k in ("temperature_eff", "theta") if values.get(k) is not None]
        if len(given) == 2:
            raise ValueError("give either temperature_eff or theta, not both")
        if values["kind"] is DriveKind.coherent and values.get("amplitude") is None:
            raise ValueError("coherent drive needs an amplitude")
        return values


class SimulationSection(SectionModel):
    dt: float = Field(1e-9, gt=0, unit="time")
    n_samples: int = Field(200_000, ge=2, unit="int")
    burn_in: Optional[int] = Field(None, ge=0, unit="int")
    members: int = Field(16, ge=1, unit="int")
    tau_bin: float = Field(20e-9, gt=0, unit="time")
    tau_max: float = Field(20e-6, gt=0, unit="time")
    start_stride: int = Field(4, ge=1, unit="int")
    mode: CorrelatorMode = Field(CorrelatorMode.adiabatic, unit="str")
    normalization: Normalization = Field(Normalization.analytic_flux, unit="str")
    tail_window: Tuple[float, float] = Field((0.8, 1.0), unit="pair")


class DetectionSection(SectionModel):
    efficiency: float = Field(1.0, gt=0, le=1, unit="float")
    dark_rate: float = Field(0.0, ge=0, unit="rate")


class AnalysisSection(SectionModel):
    window: str = Field("hann", unit="str")
    mask_tau: float = Field(0.0, ge=0, unit="time")
    max_order: int = Field(4, ge=0, le=4, unit="int")
    truncation: int = Field(4, ge=0, le=12, unit="int")
    n_terms: int = Field(500, ge=1, le=500, unit="int")
    band_low: Optional[float] = Field(None, ge=0, unit="frequency")
    band_high: Optional[float] = Field(None, gt=0, unit="frequency")


class ImageSection(SectionModel):
    x_min: float = Field(-1e-6, unit="length")
    x_max: float = Field(1e-6, unit="length")
    points: int = Field(201, ge=2, unit="int")


class RunSection(SectionModel):
    seed: int = Field(0, ge=0, lt=2 ** 64, unit="int")
    threads: int = Field(1, ge=1, unit="int")


class Scenario(SectionModel):
    oscillator: OscillatorSection = OscillatorSection()
    actuator: ActuatorSection = ActuatorSection()
    emitter: EmitterSection = EmitterSection()
    optics: OpticsSection = OpticsSection()
    drive: DriveSection = DriveSection()
    simulation: SimulationSection = SimulationSection()
    detection: DetectionSection = DetectionSection()
    analysis: AnalysisSection = AnalysisSection()
    image: ImageSection = ImageSection()
    run: RunSection = RunSection()

    @root_validator(skip_on_failure=True)
    def check_consistency(cls, values):
        sim = values["simulation"]
        omega_m = 2.0 * math.pi * values["oscillator"].frequency
        if sim.dt * omega_m >= MAX_STEP_PHASE:
            raise ValueError(
                f"dt*omega_m={sim.dt * omega_m:.4g} must stay below {MAX_STEP_PHASE}"
            )
        if sim.tau_bin < sim.dt:
            raise ValueError("tau_bin must not be shorter than dt")
        if sim.tau_max < 10 * sim.tau_bin:
            raise ValueError("tau_max must be at least 10 tau_bin")
        if sim.tau_max >= sim.n_samples * sim.dt:
            raise ValueError("tau_max must be shorter than the trajectory")
        if values["oscillator"].q_factor <= 1 / math.sqrt(2):
            raise ValueError("quality factor must exceed 1/sqrt(2)")
        return values

    def _base_oscillator(self, temperature: float) -> OscillatorParams:
        return OscillatorParams.from_frequency(
            self.oscillator.frequency,
            self.oscillator.q_factor,
            self.oscillator.mass,
            temperature,
        )

    def oscillator_params(self) -> OscillatorParams:
        drive = self.drive
        if drive.theta is not None:
            spread = drive.theta * self.optics.w0
            temperature = temperature_for_spread(self._base_oscillator(1.0), spread)
        elif drive.temperature_eff is not None:
            temperature = drive.temperature_eff
        else:
            bath = self.actuator.bath_temperature
            temperature = effective_temperature(
                self.actuator_params(), self._base_oscillator(bath), bath
            )
        return self._base_oscillator(temperature)

    def actuator_params(self) -> ActuatorParams:
        return ActuatorParams(**self.actuator.dict(exclude={"bath_temperature"}))

    def emitter_params(self) -> EmitterParams:
        return EmitterParams(**self.emitter.dict())

    def psf(self, detector: int, table: Optional[np.ndarray] = None) -> Psf:
        center = self.optics.x1 if detector == 1 else self.optics.x2
        if self.optics.psf_profile is PsfProfile.tabulated:
            return Psf(
                center=center,
                w0=self.optics.w0,
                profile=PsfProfile.tabulated,
                table_x=table[:, 0],
                table_value=table[:, 1],
            )
        return Psf(center=center, w0=self.optics.w0)

    def pump_profile(self) -> PumpProfile:
        return PumpProfile(
            kind=self.optics.pump,
            intensity=self.optics.intensity,
            center=self.optics.pump_center,
            waist=self.optics.pump_waist,
        )

    def grid(self) -> TrajectoryGrid:
        sim = self.simulation
        return TrajectoryGrid(dt=sim.dt, n_samples=sim.n_samples, burn_in=sim.burn_in)

    def correlator_config(self) -> CorrelatorConfig:
        sim = self.simulation
        thermal = self.drive.kind is DriveKind.thermal
        return CorrelatorConfig(
            tau_bin=sim.tau_bin,
            tau_max=sim.tau_max,
            start_stride=sim.start_stride,
            x1=self.optics.x1,
            x2=self.optics.x2,
            mode=sim.mode,
            normalization=sim.normalization,
            tail_window=sim.tail_window,
            oscillator=self.oscillator_params() if thermal else None,
        )

    @property
    def spread(self) -> float:
        return thermal_spread(self.oscillator_params())

    @property
    def theta(self) -> float:
        return self.spread / self.optics.w0

    @property
    def validity_limit(self) -> float:
        omega_m = 2.0 * math.pi * self.oscillator.frequency
        return VALIDITY_FRACTION * self.emitter.gamma_rad / omega_m

    def geometry(self) -> Geometry:
        return Geometry.from_positions(
            self.optics.x1, self.optics.x2, self.optics.w0, self.spread
        )


class RunManifest(BaseModel):
    command: str
    config_path: Optional[str] = None
    input_path: Optional[str] = None
    scenario: Dict[str, Any]
    seed: int
    threads: int
    versions: Dict[str, str]
    started: str
    wall_time_s: float = 0.0
    outputs: List[str] = []
    results: Dict[str, Any] = {}
    exit_code: int = 0
    message: Optional[str] = None
