import json
from typing import Any
from typing import Dict
from typing import Optional
from typing import Tuple

import numpy as np
from nanomotion_g2.exceptions import DomainError
from nanomotion_g2.exceptions import NormalizationWindowError
from nanomotion_g2.logger import logger
from nanomotion_g2.params import CorrelatorMode
from nanomotion_g2.params import FrozenModel
from nanomotion_g2.params import Normalization
from nanomotion_g2.params import OscillatorParams
from pydantic import Field
from pydantic import root_validator
from pydantic import validator

# earliest tail-window start, in units of 1 / gamma_m
MIN_TAIL_RELAXATION = 5.0


class CorrelatorConfig(FrozenModel):
    tau_bin: float = Field(..., gt=0, description="bin width (s)")
    tau_max: float = Field(..., gt=0, description="largest delay (s)")
    start_stride: int = Field(4, ge=1, description="samples between start times")
    x1: float = Field(0.0, description="start detector center (m)")
    x2: float = Field(0.0, description="stop detector center (m)")
    mode: CorrelatorMode = CorrelatorMode.full_bloch
    normalization: Normalization = Normalization.analytic_flux
    tail_window: Tuple[float, float] = (0.8, 1.0)
    oscillator: Optional[OscillatorParams] = None

    @root_validator(skip_on_failure=True)
    def check_bins(cls, values):
        if values["tau_max"] < 10 * values["tau_bin"] * (1 - 1e-12):
            raise ValueError("tau_max must be at least 10 tau_bin")
        return values

    @validator("tail_window")
    def check_tail_window(cls, v):
        lower, upper = v
        if not 0.0 <= lower < upper <= 1.0:
            raise ValueError("tail window must satisfy 0 <= start < end <= 1")
        return v

    @property
    def n_bins(self) -> int:
        return int(round(self.tau_max / self.tau_bin))

    @property
    def bin_edges(self) -> np.ndarray:
        return np.arange(self.n_bins + 1) * self.tau_bin

    def echo(self) -> Dict[str, Any]:
        return json.loads(self.json())

    def check_tail(self) -> None:
        if self.normalization is not Normalization.tail_average:
            return
        if self.oscillator is None:
            return
        start = self.tail_window[0] * self.tau_max
        limit = MIN_TAIL_RELAXATION / self.oscillator.gamma_m
        if start < limit:
            raise NormalizationWindowError(
                f"tail window starts at {start:.4g} s, inside the oscillatory "
                f"region (< {limit:.4g} s)"
            )


class G2Curve(FrozenModel):
    tau: np.ndarray
    g2: np.ndarray
    stderr: np.ndarray
    normalization: Normalization
    norm: float


class CorrelationHistogram(FrozenModel):
    """
    Additive accumulator of start-weighted coincidences.

    Every array and counter except ``bin_edges`` and ``meta`` adds under merge.
    ``weighted_sum / counts`` is the unnormalised G2 per bin; ``weight_norm`` and
    ``stop_norm`` are start and stop flux sums over ``exposure`` starts (or
    seconds, for click streams).
    """

    bin_edges: np.ndarray
    weighted_sum: np.ndarray
    counts: np.ndarray
    lag_sum: np.ndarray
    weight_norm: float = 0.0
    stop_norm: float = 0.0
    exposure: float = 0.0
    n_starts: int = 0
    member_sum: np.ndarray
    member_sq_sum: np.ndarray
    n_members: int = 0
    meta: Dict[str, Any]

    @classmethod
    def empty(
        cls, cfg: CorrelatorConfig, analytic_norm: Optional[float] = None
    ) -> "CorrelationHistogram":
        n = cfg.n_bins
        return cls(
            bin_edges=cfg.bin_edges,
            weighted_sum=np.zeros(n),
            counts=np.zeros(n),
            lag_sum=np.zeros(n),
            member_sum=np.zeros(n),
            member_sq_sum=np.zeros(n),
            meta={"config": cfg.echo(), "analytic_norm": analytic_norm},
        )

    @property
    def config(self) -> CorrelatorConfig:
        return CorrelatorConfig.parse_obj(self.meta["config"])

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])

    def raw(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.counts > 0, self.weighted_sum / self.counts, np.nan)

    def _tail_mean(self, raw: np.ndarray, window: Tuple[float, float]) -> float:
        tau_max = self.bin_edges[-1]
        centers = self.centers
        mask = (centers >= window[0] * tau_max) & (centers <= window[1] * tau_max)
        mask &= np.isfinite(raw)
        if not np.any(mask):
            raise DomainError("tail window holds no filled bins")
        return float(np.mean(raw[mask]))

    def normalization(self) -> Tuple[Normalization, float]:
        cfg = self.config
        kind = cfg.normalization
        if kind is Normalization.analytic_flux and self.meta["analytic_norm"] is None:
            logger.info("analytic flux unavailable, normalising by measured flux")
            kind = Normalization.measured_flux
        if kind is Normalization.analytic_flux:
            return kind, float(self.meta["analytic_norm"])
        if kind is Normalization.measured_flux:
            if self.exposure <= 0 or self.weight_norm <= 0 or self.stop_norm <= 0:
                raise DomainError("no flux recorded, cannot normalise")
            return kind, (self.weight_norm / self.exposure) * (
                self.stop_norm / self.exposure
            )
        return kind, self._tail_mean(self.raw(), cfg.tail_window)

    def curve(self) -> G2Curve:
        kind, norm = self.normalization()
        raw = self.raw()
        with np.errstate(invalid="ignore", divide="ignore"):
            tau = np.where(self.counts > 0, self.lag_sum / self.counts, self.centers)
        g2 = raw / norm

        if self.n_members >= 2:
            mean = self.member_sum / self.n_members
            var = self.member_sq_sum / self.n_members - mean ** 2
            var = np.clip(var, 0.0, None) * self.n_members / (self.n_members - 1)
            stderr = np.sqrt(var / self.n_members) / norm
        elif self.n_members == 0:
            # click streams: Poisson error on the coincidence count
            with np.errstate(invalid="ignore", divide="ignore"):
                stderr = np.where(
                    self.weighted_sum > 0, g2 / np.sqrt(self.weighted_sum), np.nan
                )
        else:
            # a single trajectory has no member scatter
            stderr = np.full_like(g2, np.nan)
        return G2Curve(tau=tau, g2=g2, stderr=stderr, normalization=kind, norm=norm)


class PhotonStream(FrozenModel):
    times: np.ndarray
    detectors: np.ndarray
    duration: float = Field(..., gt=0)
    seed: int = Field(0, ge=0, lt=2 ** 64)

    @validator("times")
    def check_times(cls, v):
        v = np.asarray(v, dtype=float)
        if v.ndim != 1:
            raise ValueError("click times must be one-dimensional")
        if np.any(np.diff(v) <= 0):
            raise ValueError("click times must be strictly increasing")
        return v

    @validator("detectors")
    def check_detectors(cls, v):
        v = np.asarray(v, dtype=np.int8)
        if np.any((v != 1) & (v != 2)):
            raise ValueError("detector labels must be 1 or 2")
        return v

    @root_validator(skip_on_failure=True)
    def check_window(cls, values):
        times, detectors = values["times"], values["detectors"]
        if len(times) != len(detectors):
            raise ValueError("one detector label per click")
        if len(times) and (times[0] < 0 or times[-1] > values["duration"]):
            raise ValueError("click times must lie in [0, duration]")
        return values

    def __len__(self) -> int:
        return len(self.times)

    def channel(self, detector: int) -> np.ndarray:
        return self.times[self.detectors == detector]
