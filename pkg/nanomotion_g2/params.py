from enum import Enum
from typing import Optional
from typing import Tuple

import numpy as np
from pydantic import BaseModel
from pydantic import Field
from pydantic import root_validator
from pydantic import validator


class DriveKind(str, Enum):
    thermal = "thermal"
    coherent = "coherent"


class CorrelatorMode(str, Enum):
    full_bloch = "full_bloch"
    adiabatic = "adiabatic"


class Normalization(str, Enum):
    analytic_flux = "analytic_flux"
    measured_flux = "measured_flux"
    tail_average = "tail_average"


class PsfProfile(str, Enum):
    gaussian = "gaussian"
    tabulated = "tabulated"


class PumpKind(str, Enum):
    broad = "broad"
    gaussian = "gaussian"


class ForceConvention(str, Enum):
    angular = "angular"
    hertz = "hertz"


class FrozenModel(BaseModel):
    class Config:
        allow_mutation = False
        arbitrary_types_allowed = True


class OscillatorParams(FrozenModel):
    omega_m: float = Field(..., gt=0, description="angular frequency (rad/s)")
    gamma_m: float = Field(..., gt=0, description="damping rate (rad/s)")
    m_eff: float = Field(..., gt=0, description="effective mass (kg)")
    temperature_eff: float = Field(..., ge=0, description="effective temperature (K)")

    @classmethod
    def from_frequency(
        cls, f_hz: float, quality_factor: float, m_eff: float, temperature_eff: float
    ) -> "OscillatorParams":
        omega_m = 2.0 * np.pi * f_hz
        return cls(
            omega_m=omega_m,
            gamma_m=omega_m / quality_factor,
            m_eff=m_eff,
            temperature_eff=temperature_eff,
        )

    @property
    def quality_factor(self) -> float:
        return self.omega_m / self.gamma_m


class ActuatorParams(FrozenModel):
    alpha: float = Field(0.0, ge=0, description="electrostatic coefficient (N/V^2)")
    kappa: float = Field(0.0, ge=0, description="deflection coefficient (m/V^2)")
    v_offset: float = Field(0.0, description="offset voltage V0 (V)")
    s_v: float = Field(0.0, ge=0, description="voltage noise PSD (V^2/Hz)")


class ModeSolution(FrozenModel):
    index: int = Field(..., ge=1)
    kL: float = Field(..., gt=0)
    A_n: float
    meff_ratio: float = Field(..., gt=0, lt=1)
    flagged: bool = False


class EmitterParams(FrozenModel):
    gamma_rad: float = Field(8.3e7, gt=0, description="excited -> ground (1/s)")
    k_isc: float = Field(8e6, ge=0, description="excited -> metastable (1/s)")
    k_relax: float = Field(3.3e6, ge=0, description="metastable -> ground (1/s)")
    pump_rate_per_intensity: float = Field(
        5e7, ge=0, description="pump rate per normalized intensity (1/s)"
    )

    def max_rate(self, pump: float = 0.0) -> float:
        return max(self.gamma_rad + self.k_isc, self.k_relax, float(pump))


class EmitterState(FrozenModel):
    sigma_g: float = Field(..., ge=0, le=1)
    sigma_e: float = Field(..., ge=0, le=1)
    sigma_m: float = Field(..., ge=0, le=1)

    @root_validator(skip_on_failure=True)
    def check_population_sum(cls, values):
        total = values["sigma_g"] + values["sigma_e"] + values["sigma_m"]
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"populations sum to {total!r}, expected 1")
        return values

    @classmethod
    def ground(cls) -> "EmitterState":
        return cls(sigma_g=1.0, sigma_e=0.0, sigma_m=0.0)

    def as_array(self) -> np.ndarray:
        return np.array([self.sigma_g, self.sigma_e, self.sigma_m])


class Psf(FrozenModel):
    center: float = 0.0
    w0: float = Field(..., gt=0, description="waist (m)")
    profile: PsfProfile = PsfProfile.gaussian
    # tabulated profiles: offsets from ``center`` and the sampled values
    table_x: Optional[np.ndarray] = None
    table_value: Optional[np.ndarray] = None

    @root_validator(skip_on_failure=True)
    def check_table(cls, values):
        if values["profile"] is PsfProfile.tabulated:
            x, value = values.get("table_x"), values.get("table_value")
            if x is None or value is None or len(x) != len(value) or len(x) < 2:
                raise ValueError("tabulated psf needs matching table_x/table_value")
            if np.any(np.diff(x) <= 0):
                raise ValueError("table_x must be strictly increasing")
            if np.any(value < 0) or np.any(value > 1):
                raise ValueError("tabulated psf values must lie in [0, 1]")
        return values

    def shifted(self, center: float) -> "Psf":
        return self.copy(update={"center": center})


class PumpProfile(FrozenModel):
    kind: PumpKind = PumpKind.broad
    intensity: float = Field(1.0, ge=0, description="normalized intensity I0")
    center: float = 0.0
    waist: Optional[float] = Field(None, gt=0)

    @root_validator(skip_on_failure=True)
    def check_waist(cls, values):
        if values["kind"] is PumpKind.gaussian and values.get("waist") is None:
            raise ValueError("gaussian pump needs a waist")
        return values


class TrajectoryGrid(FrozenModel):
    dt: float = Field(..., gt=0, description="step (s)")
    n_samples: int = Field(..., ge=2)
    burn_in: Optional[int] = Field(None, ge=0, description="steps discarded")

    def times(self) -> np.ndarray:
        return np.arange(self.n_samples) * self.dt


class Trajectory(FrozenModel):
    positions: np.ndarray
    dt: float = Field(..., gt=0)
    seed: int = Field(0, ge=0, lt=2 ** 64)
    drive_kind: DriveKind = DriveKind.thermal

    @validator("positions")
    def check_positions(cls, v):
        v = np.asarray(v, dtype=float)
        if v.ndim != 1:
            raise ValueError("positions must be one-dimensional")
        if not np.all(np.isfinite(v)):
            raise ValueError("positions must be finite")
        return v

    @property
    def n_samples(self) -> int:
        return len(self.positions)

    @property
    def duration(self) -> float:
        return self.n_samples * self.dt

    def times(self) -> np.ndarray:
        return np.arange(self.n_samples) * self.dt


class Geometry(FrozenModel):
    delta1_tilde: float = 0.0
    delta2_tilde: float = 0.0
    theta: float = Field(..., ge=0)

    @classmethod
    def symmetric(cls, delta_tilde: float, theta: float) -> "Geometry":
        return cls(delta1_tilde=delta_tilde, delta2_tilde=-delta_tilde, theta=theta)

    @classmethod
    def centered(cls, theta: float) -> "Geometry":
        return cls(theta=theta)

    @classmethod
    def diffusion(cls, delta_tilde: float, theta: float) -> "Geometry":
        return cls(delta1_tilde=0.0, delta2_tilde=delta_tilde, theta=theta)

    @classmethod
    def from_positions(
        cls, x1: float, x2: float, w0: float, dx_th: float
    ) -> "Geometry":
        scale = w0 / np.sqrt(2.0)
        return cls(delta1_tilde=x1 / scale, delta2_tilde=x2 / scale, theta=dx_th / w0)

    @property
    def deltas(self) -> Tuple[float, float]:
        return self.delta1_tilde, self.delta2_tilde
