"""
Gaussian-moment machinery behind the expansion of g2 in powers of the
position autocorrelation.

Detector offsets are normalised as delta_tilde = x / (w0 / sqrt(2)) and the
spread as theta = dx_th / w0, so that Pi(x - x_i) = exp(-(u - delta_i)^2) with
u ~ N(0, 2 theta^2). With c = -C_xi / (w0^2 / 2),

    g2(tau) = sigma_e(tau) / A_0 * sum_j A_j c^j
"""
import math
from typing import Iterator
from typing import List
from typing import NamedTuple
from typing import Sequence
from typing import Tuple

import numpy as np
from nanomotion_g2.exceptions import ConvergenceError
from nanomotion_g2.exceptions import DomainError
from nanomotion_g2.exceptions import RootBracketError
from nanomotion_g2.exceptions import SeriesReliabilityError
from nanomotion_g2.logger import logger
from nanomotion_g2.params import FrozenModel
from nanomotion_g2.params import Geometry
from nanomotion_g2.typing import ArrayLike
from nanomotion_g2.typing import FloatArray
from numpy.polynomial import polynomial
from pydantic import Field
from scipy import optimize
from scipy import special

MAX_ORACLE_ORDER = 12
MAX_SERIES_TERMS = 500
MAX_COEFFICIENT_INDEX = 12
MAX_SEPARATION_THETA = 0.35
# a term below this fraction of the absolute sum no longer moves the result
SETTLED_FRACTION = 1e-16
# absolute sum over leading term beyond which the digits are gone
MAX_CANCELLATION = 1e10


class SeriesValue(NamedTuple):
    value: float
    converged: bool
    n_terms: int


class ExpansionCoefficients(FrozenModel):
    a: np.ndarray
    truncation: int = Field(..., ge=0)
    converged: bool
    term_converged: np.ndarray
    geometry: Geometry


def gaussian_moment(p: int, q: int, c: float, var: float) -> float:
    """<xi(t)^p xi(t+tau)^q> for a stationary centred Gaussian process."""
    if p < 0 or q < 0:
        raise DomainError("moment orders must be non-negative")
    if (p + q) % 2:
        return 0.0
    half = (p + q) // 2
    total = []
    for j in range(p % 2, min(p, q) + 1, 2):
        count = math.factorial(p) * math.factorial(q)
        count //= (
            2 ** (half - j)
            * math.factorial(j)
            * math.factorial((p - j) // 2)
            * math.factorial((q - j) // 2)
        )
        total.append(count * c ** j * var ** (half - j))
    return math.fsum(total)


def all_pairings(items: Sequence[int]) -> Iterator[List[Tuple[int, int]]]:
    """Every partition of ``items`` into unordered pairs."""
    items = list(items)
    if not items:
        yield []
        return

    first = items.pop(0)
    for i, item in enumerate(items):
        for rest in all_pairings(items[:i] + items[i + 1 :]):
            yield [(first, item)] + rest


def pairing_enumeration_oracle(p: int, q: int, c: float, var: float) -> float:
    """Brute-force Isserlis sum over all perfect matchings of p + q variables."""
    if p + q > MAX_ORACLE_ORDER:
        raise DomainError(f"p+q={p + q} exceeds the enumeration limit")
    if (p + q) % 2:
        return 0.0

    def covariance(a: int, b: int) -> float:
        return var if (a < p) == (b < p) else c

    return math.fsum(
        math.prod(covariance(a, b) for a, b in pairing)
        for pairing in all_pairings(range(p + q))
    )


def _branch_sum(
    j: int, delta: float, theta: float, odd: bool, n_terms: int
) -> SeriesValue:
    """
    One detector's factor of A_2j (odd=False) or A_2j+1 (odd=True):

        sum_n (-1)^n (2m)!/m! sum_p delta^(2n-2p) theta^(2p) / ((2n-2p+o)! p!)

    with m = n + j (+1 when odd) and o = 1 when odd. The inner sum is
    positive and is carried in log space.
    """
    delta = abs(delta)
    log_delta = math.log(delta) if delta > 0 else None
    log_theta = math.log(theta) if theta > 0 else None
    shift = 1 if odd else 0

    terms: List[float] = []
    total_abs = 0.0
    settled = False
    for n in range(n_terms):
        if log_delta is None and log_theta is None:
            p = np.arange(1) if n == 0 else np.arange(0)
        elif log_delta is None:
            p = np.array([n])
        elif log_theta is None:
            p = np.array([0])
        else:
            p = np.arange(n + 1)

        if p.size == 0:
            term = 0.0
        else:
            m = n + j + shift
            log_terms = (
                special.gammaln(2 * m + 1)
                - special.gammaln(m + 1)
                - special.gammaln(2 * (n - p) + shift + 1)
                - special.gammaln(p + 1)
            )
            if log_delta is not None:
                log_terms = log_terms + 2 * (n - p) * log_delta
            if log_theta is not None:
                log_terms = log_terms + 2 * p * log_theta
            term = (-1.0) ** n * math.exp(special.logsumexp(log_terms))

        if not math.isfinite(term):
            return SeriesValue(math.fsum(terms), False, n)
        terms.append(term)
        total_abs += abs(term)
        if n > 0 and abs(term) <= SETTLED_FRACTION * total_abs:
            if abs(term) <= abs(terms[-2]):
                settled = True
                break

    lead = abs(terms[0])
    converged = settled and total_abs <= MAX_CANCELLATION * lead
    return SeriesValue(math.fsum(terms), converged, len(terms))


def _check_series_args(j: int, n_terms: int) -> None:
    if not 0 <= j <= MAX_COEFFICIENT_INDEX:
        raise DomainError(f"j must lie in [0, {MAX_COEFFICIENT_INDEX}], got {j}")
    if not 1 <= n_terms <= MAX_SERIES_TERMS:
        raise DomainError(f"n_terms must lie in [1, {MAX_SERIES_TERMS}]")


def _combine(j: int, d1: float, d2: float, s1: SeriesValue, s2: SeriesValue):
    k = j // 2
    if j % 2:
        value = -d1 * d2 * s1.value * s2.value / math.factorial(2 * k + 1)
    else:
        value = s1.value * s2.value / math.factorial(2 * k)
    converged = s1.converged and s2.converged
    if not converged:
        logger.warning("A_%d: series did not converge (d1=%g, d2=%g)", j, d1, d2)
    return SeriesValue(value, converged, max(s1.n_terms, s2.n_terms))


def aj_general(j: int, geom: Geometry, n_terms: int = MAX_SERIES_TERMS) -> SeriesValue:
    _check_series_args(j, n_terms)
    d1, d2 = geom.deltas
    odd = bool(j % 2)
    s1 = _branch_sum(j // 2, d1, geom.theta, odd, n_terms)
    s2 = _branch_sum(j // 2, d2, geom.theta, odd, n_terms)
    return _combine(j, d1, d2, s1, s2)


def aj_symmetric(
    j: int, delta_tilde: float, theta: float, n_terms: int = MAX_SERIES_TERMS
) -> SeriesValue:
    """A_j(delta, -delta): both detector factors are the same series."""
    _check_series_args(j, n_terms)
    s = _branch_sum(j // 2, delta_tilde, theta, bool(j % 2), n_terms)
    return _combine(j, delta_tilde, -delta_tilde, s, s)


def aj_centered(j: int, theta: float, n_terms: int = MAX_SERIES_TERMS) -> SeriesValue:
    """A_j(0, 0): only p = n survives; odd orders vanish."""
    _check_series_args(j, n_terms)
    if j % 2:
        return SeriesValue(0.0, True, 0)
    s = _branch_sum(j // 2, 0.0, theta, False, n_terms)
    return _combine(j, 0.0, 0.0, s, s)


def aj_diffusion(
    j: int, delta_tilde: float, theta: float, n_terms: int = MAX_SERIES_TERMS
) -> SeriesValue:
    """A_j(0, delta): one detector centred, odd orders vanish."""
    _check_series_args(j, n_terms)
    if j % 2:
        return SeriesValue(0.0, True, 0)
    s1 = _branch_sum(j // 2, 0.0, theta, False, n_terms)
    s2 = _branch_sum(j // 2, delta_tilde, theta, False, n_terms)
    return _combine(j, 0.0, delta_tilde, s1, s2)


def aj_closed_form(j: int, geom: Geometry) -> float:
    """
    Resummed A_j, valid for every theta:

        (-1)^j (2/a)^j / j! He_j(v1) He_j(v2) F(delta1) F(delta2)

    with a = 1 + 4 theta^2, v_i = sqrt(2/a) delta_i and
    F(delta) = exp(-delta^2 / a) / sqrt(a) the mean flux of one detector.
    """
    a = 1.0 + 4.0 * geom.theta ** 2
    d1, d2 = geom.deltas
    scale = math.sqrt(2.0 / a)
    fluxes = math.exp(-(d1 ** 2 + d2 ** 2) / a) / a
    hermite = special.eval_hermitenorm(j, scale * d1) * special.eval_hermitenorm(
        j, scale * d2
    )
    return (-1.0) ** j * (2.0 / a) ** j / math.factorial(j) * hermite * fluxes


def expansion_coefficients(
    geom: Geometry,
    truncation: int,
    n_terms: int = MAX_SERIES_TERMS,
    closed_form: bool = False,
) -> ExpansionCoefficients:
    if closed_form:
        values = [aj_closed_form(j, geom) for j in range(truncation + 1)]
        flags = [True] * len(values)
    else:
        series = [aj_general(j, geom, n_terms) for j in range(truncation + 1)]
        values = [s.value for s in series]
        flags = [s.converged for s in series]
    return ExpansionCoefficients(
        a=np.array(values),
        truncation=truncation,
        converged=all(flags),
        term_converged=np.array(flags),
        geometry=geom,
    )


def optimal_separation(theta: float, n_terms: int = MAX_SERIES_TERMS) -> float:
    """
    Symmetric offset that nulls A_2. A_2(delta, -delta) is the square of one
    detector factor, so the bisection runs on that factor, which changes sign.
    """
    if not 0 <= theta < MAX_SEPARATION_THETA:
        raise DomainError(f"theta must lie in [0, {MAX_SEPARATION_THETA})")

    def factor(delta: float) -> float:
        return _branch_sum(1, delta, theta, False, n_terms).value

    lower, upper = 0.4, 1.2
    if factor(lower) * factor(upper) > 0:
        raise RootBracketError(f"A_2 factor has no sign change in [{lower}, {upper}]")
    return optimize.bisect(factor, lower, upper, xtol=1e-13)


def g2_series(
    c_of_tau: ArrayLike,
    coeffs: ExpansionCoefficients,
    sigma_e_of_tau: ArrayLike,
    w0: float,
) -> FloatArray:
    if not coeffs.converged:
        raise ConvergenceError(
            f"expansion coefficients did not converge (theta={coeffs.geometry.theta})"
        )
    c = -2.0 * np.asarray(c_of_tau, dtype=float) / w0 ** 2
    if coeffs.truncation > 0 and np.any(np.abs(c) >= 1.0):
        raise SeriesReliabilityError("|2 C / w0^2| >= 1: truncated series unreliable")
    a0 = coeffs.a[0]
    sigma = np.asarray(sigma_e_of_tau, dtype=float)
    return sigma / a0 * polynomial.polyval(c, coeffs.a)


def g2_osc_exact(geom: Geometry, c_norm: ArrayLike) -> ArrayLike:
    """
    E[Pi_1(xi) Pi_2(xi')] for jointly Gaussian (xi, xi') with correlation
    coefficient ``c_norm``, from the two-dimensional Gaussian integral.
    """
    rho = np.asarray(c_norm, dtype=float)
    if np.any(np.abs(rho) > 1.0):
        raise DomainError("c_norm must lie in [-1, 1]")
    d1, d2 = geom.deltas
    diagonal = 1.0 + 4.0 * geom.theta ** 2
    off = 4.0 * geom.theta ** 2 * rho
    det = diagonal ** 2 - off ** 2
    quadratic = (diagonal * (d1 ** 2 + d2 ** 2) - 2.0 * off * d1 * d2) / det
    return np.exp(-quadratic) / np.sqrt(det)


def initial_bunching_ratio(geom: Geometry) -> float:
    t2 = geom.theta ** 2
    d1, d2 = geom.deltas
    a = 1.0 + 4.0 * t2
    b = 1.0 + 8.0 * t2
    exponent = -8.0 * t2 / (a * b) * (2.0 * t2 * (d1 - d2) ** 2 - d1 * d2)
    return a / math.sqrt(b) * math.exp(exponent)
