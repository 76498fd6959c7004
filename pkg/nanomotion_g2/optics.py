import math
from typing import Tuple

import numpy as np
from nanomotion_g2.exceptions import ConvergenceError
from nanomotion_g2.exceptions import DomainError
from nanomotion_g2.logger import logger
from nanomotion_g2.params import EmitterParams
from nanomotion_g2.params import Psf
from nanomotion_g2.params import PsfProfile
from nanomotion_g2.params import PumpKind
from nanomotion_g2.params import PumpProfile
from nanomotion_g2.typing import ArrayLike
from nanomotion_g2.typing import FloatArray
from scipy import integrate
from scipy import interpolate
from scipy import optimize

IMAGE_PHASE_NODES = 256
MAX_IMAGE_PHASE_NODES = 16384
IMAGE_RTOL = 1e-10


def _gaussian(x: ArrayLike, center: float, w0: float) -> ArrayLike:
    return np.exp(-2.0 * (np.asarray(x, dtype=float) - center) ** 2 / w0 ** 2)


def psf_eval(psf: Psf, x: ArrayLike) -> ArrayLike:
    if psf.profile is PsfProfile.gaussian:
        return _gaussian(x, psf.center, psf.w0)

    offset = np.asarray(x, dtype=float) - psf.center
    lower, upper = psf.table_x[0], psf.table_x[-1]
    if np.any(offset < lower) or np.any(offset > upper):
        raise DomainError(f"x outside tabulated psf domain [{lower}, {upper}]")
    shape = interpolate.PchipInterpolator(psf.table_x, psf.table_value)
    return np.clip(shape(offset), 0.0, 1.0)


def mean_flux(psf: Psf, dx_th: float) -> float:
    """
    Peak-normalised flux collected through ``psf`` from an emitter whose
    position is Gaussian with rms ``dx_th`` around the origin.
    """
    if psf.profile is not PsfProfile.gaussian:
        logger.warning("mean_flux: tabulated psf, falling back to quadrature")
        return flux_quadrature(psf, dx_th)
    width_sq = psf.w0 ** 2 / 4.0 + dx_th ** 2
    return math.exp(-(psf.center ** 2) / (2.0 * width_sq)) / math.sqrt(
        1.0 + 4.0 * dx_th ** 2 / psf.w0 ** 2
    )


def flux_quadrature(psf: Psf, dx_th: float) -> float:
    if dx_th == 0.0:
        return float(psf_eval(psf, 0.0))

    def integrand(x: float) -> float:
        weight = math.exp(-0.5 * (x / dx_th) ** 2) / (math.sqrt(2 * math.pi) * dx_th)
        return weight * float(psf_eval(psf, x))

    if psf.profile is PsfProfile.gaussian:
        lower, upper = psf.center - 6 * psf.w0, psf.center + 6 * psf.w0
    else:
        lower, upper = psf.center + psf.table_x[0], psf.center + psf.table_x[-1]
    breaks = [p for p in (0.0, psf.center) if lower < p < upper]
    value, _ = integrate.quad(
        integrand, lower, upper, points=breaks or None, epsrel=1e-10, limit=200
    )
    return value


def thermal_image_width(w0: float, dx_th: float) -> float:
    return math.sqrt(w0 ** 2 / 4.0 + dx_th ** 2)


def spread_from_width(width: float, w0: float) -> float:
    excess = width ** 2 - w0 ** 2 / 4.0
    if excess < 0:
        raise DomainError(f"image width {width} is narrower than the psf (w0/2)")
    return math.sqrt(excess)


def thermal_image(x_grid: ArrayLike, w0: float, dx_th: float) -> FloatArray:
    """Time-averaged flux while scanning a gaussian detection spot across x_grid."""
    return np.array(
        [mean_flux(Psf(center=float(x), w0=w0), dx_th) for x in np.ravel(x_grid)]
    )


def pump_rate(e: EmitterParams, pump: PumpProfile, x: ArrayLike) -> ArrayLike:
    x = np.asarray(x, dtype=float)
    peak = e.pump_rate_per_intensity * pump.intensity
    if pump.kind is PumpKind.broad:
        return np.full_like(x, peak)
    return peak * _gaussian(x, pump.center, pump.waist)


def _phase_average(x: FloatArray, x0: float, amplitude: float, w0: float, nodes: int):
    phases = 2.0 * np.pi * np.arange(nodes) / nodes
    excursions = x0 + amplitude * np.cos(phases)
    return _gaussian(x[:, None], excursions[None, :], w0).mean(axis=1)


def coherent_drive_image(
    x_grid: ArrayLike,
    x0: float,
    amplitude: float,
    w0: float,
    nodes: int = IMAGE_PHASE_NODES,
) -> FloatArray:
    """
    Fluorescence image averaged over one period of a coherent oscillation,
    by trapezoidal quadrature over the phase (checked against half the nodes).
    """
    if amplitude < 0:
        raise DomainError(f"amplitude must be non-negative, got {amplitude}")
    x = np.atleast_1d(np.asarray(x_grid, dtype=float))
    coarse = _phase_average(x, x0, amplitude, w0, nodes // 2)
    while True:
        fine = _phase_average(x, x0, amplitude, w0, nodes)
        if np.max(np.abs(fine - coarse)) <= IMAGE_RTOL * max(np.max(fine), 1e-300):
            return fine
        if nodes >= MAX_IMAGE_PHASE_NODES:
            logger.warning(
                "coherent_drive_image: phase quadrature not settled at %d nodes", nodes
            )
            return fine
        coarse, nodes = fine, 2 * nodes


def _gaussian_line(x, height, center, width):
    return height * np.exp(-0.5 * ((x - center) / width) ** 2)


def fit_image_width(x: ArrayLike, flux: ArrayLike) -> Tuple[float, float]:
    """Least-squares gaussian fit of an image; returns (center, rms width)."""
    x = np.asarray(x, dtype=float)
    flux = np.asarray(flux, dtype=float)
    total = np.sum(flux)
    center = np.sum(x * flux) / total
    width = math.sqrt(np.sum((x - center) ** 2 * flux) / total)
    try:
        popt, _ = optimize.curve_fit(
            _gaussian_line,
            x,
            flux,
            p0=[flux.max(), center, width],
            xtol=1e-14,
            ftol=1e-14,
            maxfev=10000,
        )
    except RuntimeError as e:
        raise ConvergenceError(f"image fit did not converge: {e}")
    return float(popt[1]), abs(float(popt[2]))


def fit_coherent_image(
    x: ArrayLike, flux: ArrayLike, w0: float
) -> Tuple[float, float, float]:
    """Fit of a time-averaged image under coherent drive: (x0, amplitude, scale)."""
    x = np.asarray(x, dtype=float)
    flux = np.asarray(flux, dtype=float)
    total = np.sum(flux)
    center = np.sum(x * flux) / total
    spread = math.sqrt(np.sum((x - center) ** 2 * flux) / total)
    # variance of the image = w0^2/4 + amplitude^2/2
    amplitude = math.sqrt(max(2.0 * (spread ** 2 - w0 ** 2 / 4.0), (0.1 * w0) ** 2))

    def model(xs, x0, amp, scale):
        return scale * coherent_drive_image(xs, x0, abs(amp), w0)

    try:
        popt, _ = optimize.curve_fit(
            model, x, flux, p0=[center, amplitude, flux.max()], maxfev=10000
        )
    except RuntimeError as e:
        raise ConvergenceError(f"coherent image fit did not converge: {e}")
    return float(popt[0]), abs(float(popt[1])), float(popt[2])
