"""
Special functions

Complex Gamma, Kummer's confluent hypergeometric function M(a, b, z) and the
parabolic cylinder function D_ν(z), the local model solutions of the Weber
equation −v″ + (z²/4)v = (ν + 1/2)v at a branching point.
"""

from __future__ import annotations

import cmath
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable

from scipy import integrate, special

from .errors import DomainError, NumericalError, PoleError

logger = logging.getLogger(__name__)

SERIES_RADIUS = 6.0
ASYMPTOTIC_SECTOR = 0.75 * math.pi
ASYMPTOTIC_REL_ERROR = 1e-10
KUMMER_REL_TOL = 1e-15
KUMMER_MAX_TERMS = 20000
MAX_ORDER = 20.0
MAX_ARGUMENT = 20.0


class Regime(str, Enum):
    """Evaluation path used for D_ν."""

    SERIES = "series"
    ASYMPTOTIC = "asymptotic"
    RECURRENCE_SHIFTED = "recurrence-shifted"
    INTEGRAL = "integral"


@dataclass(frozen=True)
class PcfValue:
    """D_ν(z) with its z-derivative and the evaluation path of the value."""

    value: complex
    derivative: complex
    regime: Regime


def _is_nonpositive_integer(z: complex) -> bool:
    return z.imag == 0 and z.real <= 0 and z.real == math.floor(z.real)


def gamma(z: complex) -> complex:
    """
    Complex Gamma function.

    Args:
        z: Argument, not a nonpositive integer

    Returns:
        Γ(z)

    Raises:
        PoleError: At z = 0, −1, −2, ...
    """
    z = complex(z)
    if _is_nonpositive_integer(z):
        raise PoleError(f"Gamma has a pole at z = {z.real:g}")
    return complex(special.gamma(z))


def kummer_m(a: complex, b: complex, z: complex) -> complex:
    """
    Kummer's function M(a, b, z) by its Maclaurin series.

    Terms are summed with math.fsum on real and imaginary parts. For Re z < 0
    Kummer's transformation M(a, b, z) = e^z M(b − a, b, −z) is applied so that
    the series never alternates in sign through large terms.

    Raises:
        PoleError: If b is a nonpositive integer
        DomainError: If |z| > 400
    """
    a, b, z = complex(a), complex(b), complex(z)
    if _is_nonpositive_integer(b):
        raise PoleError(f"M(a, b, z) has a pole at b = {b.real:g}")
    if abs(z) > 400:
        raise DomainError(f"kummer_m requires |z| <= 400, got {abs(z):.6g}")
    if z.real < 0:
        return cmath.exp(z) * _kummer_series(b - a, b, -z)
    return _kummer_series(a, b, z)


def _kummer_series(a: complex, b: complex, z: complex) -> complex:
    term = 1.0 + 0.0j
    real_parts = [1.0]
    imag_parts = [0.0]
    total = term
    small_in_a_row = 0
    for n in range(KUMMER_MAX_TERMS):
        term *= (a + n) / (b + n) * z / (n + 1)
        real_parts.append(term.real)
        imag_parts.append(term.imag)
        if term == 0:
            break
        total += term
        # stop once two consecutive terms are negligible and past the peak
        if abs(term) <= KUMMER_REL_TOL * abs(total) and n + 1 > abs(z):
            small_in_a_row += 1
            if small_in_a_row == 2:
                break
        else:
            small_in_a_row = 0
    else:
        raise NumericalError(
            f"Kummer series did not converge in {KUMMER_MAX_TERMS} terms "
            f"(a={a}, b={b}, z={z})"
        )
    return complex(math.fsum(real_parts), math.fsum(imag_parts))


# --------------------------------------------------------------
# PARABOLIC CYLINDER FUNCTIONS
# --------------------------------------------------------------


def pcf_series(nu: float, z: complex) -> complex:
    """D_ν(z) from the Kummer-function representation (entire in z)."""
    z = complex(z)
    w = z * z / 2
    first = math.sqrt(math.pi) * special.rgamma((1 - nu) / 2)
    second = math.sqrt(2 * math.pi) * special.rgamma(-nu / 2)
    bracket = 0j
    if first != 0:
        bracket += first * kummer_m(-nu / 2, 0.5, w)
    if second != 0:
        bracket -= second * z * kummer_m((1 - nu) / 2, 1.5, w)
    return 2 ** (nu / 2) * cmath.exp(-z * z / 4) * bracket


def pcf_asymptotic(nu: float, z: complex) -> tuple[complex, float]:
    """
    Poincaré expansion of D_ν(z) for large |z| in |arg z| < 3π/4.

    The series is truncated before its smallest term.

    Returns:
        Tuple (value, estimated relative truncation error)
    """
    z = complex(z)
    inv = 1.0 / (2 * z * z)
    term = 1.0 + 0.0j
    total = term
    s = 0
    while True:
        ratio = -(nu - 2 * s) * (nu - 2 * s - 1) * inv / (s + 1)
        following = term * ratio
        if following == 0:
            error = 0.0
            break
        if abs(following) >= abs(term):
            error = abs(term) / abs(total)
            break
        term = following
        total += term
        s += 1
        if s > 200:
            error = abs(term) / abs(total)
            break
    return z**nu * cmath.exp(-z * z / 4) * total, error


def pcf_integral(nu: float, z: complex) -> complex:
    """
    D_ν(z) for ν < 0 from the Laplace-type integral
    e^{−z²/4}/Γ(−ν) ∫₀^∞ t^{−ν−1} e^{−zt − t²/2} dt.
    """
    if not nu < 0:
        raise DomainError("the integral representation requires nu < 0")
    z = complex(z)
    upper = max(0.0, -z.real) + 15.0

    def part(fn: Callable[[float], float]) -> float:
        value, _ = integrate.quad(
            fn, 0.0, upper, weight="alg", wvar=(-nu - 1, 0.0), limit=400,
            epsabs=0.0, epsrel=1e-13,
        )
        return value

    def kernel(t: float) -> complex:
        return cmath.exp(-z * t - t * t / 2)

    value = complex(part(lambda t: kernel(t).real), part(lambda t: kernel(t).imag))
    return cmath.exp(-z * z / 4) * special.rgamma(-nu) * value


def _pcf_value(nu: float, z: complex) -> tuple[complex, Regime]:
    if abs(z) <= SERIES_RADIUS or abs(cmath.phase(z)) >= ASYMPTOTIC_SECTOR:
        return pcf_series(nu, z), Regime.SERIES
    value, error = pcf_asymptotic(nu, z)
    if error <= ASYMPTOTIC_REL_ERROR:
        return value, Regime.ASYMPTOTIC
    if nu < 0:
        return pcf_integral(nu, z), Regime.INTEGRAL
    return _pcf_shifted(nu, z), Regime.RECURRENCE_SHIFTED


def _pcf_shifted(nu: float, z: complex) -> complex:
    # start from orders in [-1, 1) and run D_{k+1} = z D_k − k D_{k−1} upward
    base = nu - math.floor(nu) - 1
    lower = pcf_integral(base, z)
    upper, _ = pcf_asymptotic(base + 1, z)
    order = base + 1
    steps = int(round(nu - order))
    for _ in range(steps):
        lower, upper = upper, z * upper - order * lower
        order += 1
    logger.debug("D_%g(%s) via %d upward recurrence steps", nu, z, steps)
    return upper


def pcf_d(nu: float, z: complex) -> PcfValue:
    """
    Parabolic cylinder function D_ν(z) and its derivative.

    Uses the Kummer representation for |z| <= 6, the Poincaré expansion
    beyond, and for orders where the expansion is too coarse either the
    integral representation (ν < 0) or upward recurrence from low orders.
    The derivative is D_ν′(z) = (z/2) D_ν(z) − D_{ν+1}(z).

    Args:
        nu: Real order, |ν| <= 20
        z: Complex argument, |z| <= 20

    Returns:
        PcfValue

    Raises:
        DomainError: Outside the supported (ν, z) range
    """
    nu = float(nu)
    z = complex(z)
    if abs(nu) > MAX_ORDER or abs(z) > MAX_ARGUMENT:
        raise DomainError(
            f"pcf_d supports |nu| <= {MAX_ORDER:g} and |z| <= {MAX_ARGUMENT:g}, "
            f"got nu={nu:g}, |z|={abs(z):.6g}"
        )
    value, regime = _pcf_value(nu, z)
    shifted, _ = _pcf_value(nu + 1, z)
    derivative = z / 2 * value - shifted
    return PcfValue(value=value, derivative=derivative, regime=regime)


def weber_residual(nu: float, z: complex) -> float:
    """
    Residual of the Weber equation for D_ν at z.

    D″ is assembled from D_ν, D_{ν+1}, D_{ν+2} by differentiating
    D_ν′ = (z/2) D_ν − D_{ν+1} once more, so the residual measures the
    consistency of three independent evaluations.

    Returns:
        |−D″ + (z²/4) D − (ν + 1/2) D| / (1 + |D|)
    """
    point = pcf_d(nu, z)
    z = complex(z)
    d0 = point.value
    d1, _ = _pcf_value(nu + 1, z)
    d2, _ = _pcf_value(nu + 2, z)
    first = z / 2 * d0 - d1
    second = d0 / 2 + z / 2 * first - z / 2 * d1 + d2
    residual = -second + z * z / 4 * d0 - (nu + 0.5) * d0
    return float(abs(residual) / (1 + abs(d0)))


def pcf_table(nu: float, points: list[complex]) -> list[tuple[complex, complex, float]]:
    """Rows (z, D_ν(z), Weber residual) for a list of arguments."""
    return [(complex(z), pcf_d(nu, z).value, weber_residual(nu, z)) for z in points]


def wronskian_reflected(nu: float, z: complex) -> complex:
    """W[D_ν(z), D_ν(−z)] = −D_ν(z) D_ν′(−z) − D_ν′(z) D_ν(−z)."""
    plus = pcf_d(nu, z)
    minus = pcf_d(nu, -complex(z))
    return -plus.value * minus.derivative - plus.derivative * minus.value


__all__ = [
    "PcfValue",
    "Regime",
    "gamma",
    "kummer_m",
    "pcf_asymptotic",
    "pcf_d",
    "pcf_integral",
    "pcf_series",
    "pcf_table",
    "weber_residual",
    "wronskian_reflected",
]
