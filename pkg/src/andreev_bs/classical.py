"""
Classical phase-space layer

Energy-surface branches K±, branching points, the loop action and its period,
the normal-form function F₀, the ν(E, h) parameter of the local Weber model and
the diagonalisation of the BdG symbol.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import integrate, optimize

from .errors import DomainError, ProfileError
from .model import PotentialProfile, SimulationConfig

logger = logging.getLogger(__name__)

DEFAULT_X_MAX = SimulationConfig().x_max
GAP_MARGIN = 1e-9
QUAD_REL_TOL = 1e-10
QUAD_MAX_NODES = 1024
PERIOD_STEP = 1e-5
SEPARATRIX_WARNING = 0.98


# --------------------------------------------------------------
# TYPES
# --------------------------------------------------------------


@dataclass(frozen=True)
class EnergySlice:
    """
    Classical geometry of the energy surface at one energy.

    Attributes:
        energy: E in (0, Δ₀)
        x_branch: Right branching point x_E > 0
        x_left: Left branching point (−x_E for even profiles)
        xi_branch: ξ_E = sqrt(μ(x_E))
        alpha: Δ′(x_E)
        beta: sqrt(α)·(2ξ_E)^(−3/2)
        e1: E/(2ξ_E)²
    """

    energy: float
    x_branch: float
    x_left: float
    xi_branch: float
    alpha: float
    beta: float
    e1: float


@dataclass(frozen=True)
class ActionValue:
    """Loop action A(E) with its period T(E) = dA/dE."""

    action: float
    period: float
    period_fd: Optional[float] = None
    nodes: int = 0
    warnings: Tuple[str, ...] = ()


@dataclass(frozen=True)
class SymbolEigen:
    """Eigenvalues ±λ and unit eigenvectors of the BdG symbol at (x, ξ)."""

    lambda_plus: float
    lambda_minus: float
    y_plus: NDArray[np.complex128]
    y_minus: NDArray[np.complex128]


# --------------------------------------------------------------
# QUADRATURE
# --------------------------------------------------------------


def _legendre(n: int) -> Tuple[NDArray[np.float64], NDArray[np.float64]]:
    return np.polynomial.legendre.leggauss(n)


def sine_quadrature(
    fn: Callable[[NDArray[np.float64]], NDArray[np.float64]],
    a: float,
    b: float,
    *,
    nodes: int = 64,
    lower_singular: bool = True,
    upper_singular: bool = True,
    rel_tol: float = QUAD_REL_TOL,
    max_nodes: int = QUAD_MAX_NODES,
) -> Tuple[float, int, bool]:
    """
    Gauss-Legendre quadrature of fn over [a, b] after a sine substitution.

    The substitution places square-root endpoint behaviour of the integrand on
    a smooth footing: x = c + r·sin θ over both ends, or x = a + (b − a)·sin θ
    when only the upper end is singular (mirror image for the lower end). The
    node count doubles until the relative change drops below rel_tol; with
    max_nodes <= nodes a single fixed rule is applied, which keeps the result
    a smooth function of the integrand parameters.

    Returns:
        Tuple (integral, nodes used, converged)
    """
    if lower_singular and upper_singular:
        centre, radius = (a + b) / 2, (b - a) / 2
        lo, hi = -math.pi / 2, math.pi / 2

        def mapped(theta: NDArray[np.float64]) -> NDArray[np.float64]:
            return fn(centre + radius * np.sin(theta)) * radius * np.cos(theta)

    elif upper_singular:
        lo, hi = 0.0, math.pi / 2

        def mapped(theta: NDArray[np.float64]) -> NDArray[np.float64]:
            return fn(a + (b - a) * np.sin(theta)) * (b - a) * np.cos(theta)

    elif lower_singular:
        lo, hi = 0.0, math.pi / 2

        def mapped(theta: NDArray[np.float64]) -> NDArray[np.float64]:
            return fn(b - (b - a) * np.sin(theta)) * (b - a) * np.cos(theta)

    else:
        lo, hi = a, b
        mapped = fn

    def rule(n: int) -> float:
        t, w = _legendre(n)
        theta = (hi - lo) / 2 * t + (hi + lo) / 2
        return float((hi - lo) / 2 * np.sum(w * mapped(theta)))

    previous = rule(nodes)
    if max_nodes <= nodes:
        return previous, nodes, True
    while nodes < max_nodes:
        nodes *= 2
        current = rule(nodes)
        change = abs(current - previous)
        logger.debug("quadrature with %d nodes: change %.3e", nodes, change)
        if change <= rel_tol * max(abs(current), 1e-300):
            return current, nodes, True
        previous = current
    return previous, nodes, False


# --------------------------------------------------------------
# ENERGY SURFACE
# --------------------------------------------------------------


def _check_energy(profile: PotentialProfile, energy: float) -> None:
    if not 0 < energy < profile.delta0 * (1 - GAP_MARGIN):
        raise DomainError(
            f"energy must lie in (0, delta0) with margin, got E = {energy!r}"
        )


def _branch_momenta(
    profile: PotentialProfile, energy: float, x: ArrayLike
) -> Tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]:
    # returns (sqrt(E² − Δ²) clipped at 0, K₊, K₋)
    x = np.asarray(x, dtype=float)
    delta = profile.delta(x)
    mu = profile.mu(x)
    split = np.sqrt(np.clip(energy**2 - delta**2, 0.0, None))
    return split, mu + split, mu - split


def kinetic_branches(
    profile: PotentialProfile, energy: float, x: float
) -> Optional[Tuple[float, float]]:
    """
    Kinetic energies K±(x) = μ(x) ± sqrt(E² − Δ(x)²).

    Args:
        profile: Junction model
        energy: Energy in (0, Δ₀)
        x: Position

    Returns:
        (K₊, K₋) where Δ(x) <= E; None in the classically forbidden region
    """
    if not 0 < energy < profile.delta0:
        raise DomainError(f"energy must lie in (0, delta0), got E = {energy!r}")
    delta = float(profile.delta(x))
    if abs(delta) > energy:
        return None
    mu = float(profile.mu(x))
    split = math.sqrt(energy**2 - delta**2)
    return mu + split, mu - split


def _branching_point(
    profile: PotentialProfile, energy: float, lo: float, hi: float
) -> float:
    def gap(x: float) -> float:
        return float(profile.delta(x)) - energy

    f_lo, f_hi = gap(lo), gap(hi)
    if f_lo * f_hi > 0:
        raise ProfileError(
            f"no branching point for E = {energy:.6g} in [{lo:g}, {hi:g}] "
            f"(Delta - E = {f_lo:.3g} and {f_hi:.3g})"
        )
    return optimize.brentq(gap, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps)


def make_energy_slice(
    profile: PotentialProfile, energy: float, *, x_max: float = DEFAULT_X_MAX
) -> EnergySlice:
    """
    Locate the branching points Δ(±x_E) = E and the local scalings.

    Raises:
        DomainError: If E is outside (0, Δ₀)
        ProfileError: If Δ − E does not change sign on [0, x_max]
    """
    _check_energy(profile, energy)
    x_right = _branching_point(profile, energy, 0.0, x_max)
    if profile.is_even:
        x_left = -x_right
    else:
        x_left = _branching_point(profile, energy, -x_max, 0.0)
    xi = math.sqrt(float(profile.mu(x_right)))
    if not xi**2 > energy:
        raise ProfileError(f"mu(x_E) = {xi**2:.6g} does not exceed E = {energy:.6g}")
    alpha = float(profile.delta_prime(x_right))
    if not alpha > 0:
        raise ProfileError(f"Delta'(x_E) = {alpha:.3g} is not positive")
    beta = math.sqrt(alpha) * (2 * xi) ** -1.5
    e1 = energy / (2 * xi) ** 2
    return EnergySlice(
        energy=energy,
        x_branch=x_right,
        x_left=x_left,
        xi_branch=xi,
        alpha=alpha,
        beta=beta,
        e1=e1,
    )


# --------------------------------------------------------------
# ACTION AND PERIOD
# --------------------------------------------------------------


def _action_integrand(
    profile: PotentialProfile, energy: float
) -> Callable[[NDArray[np.float64]], NDArray[np.float64]]:
    def integrand(x: NDArray[np.float64]) -> NDArray[np.float64]:
        _, k_plus, k_minus = _branch_momenta(profile, energy, x)
        return np.sqrt(k_plus) - np.sqrt(k_minus)

    return integrand


def _period_integrand(
    profile: PotentialProfile, energy: float
) -> Callable[[NDArray[np.float64]], NDArray[np.float64]]:
    def integrand(x: NDArray[np.float64]) -> NDArray[np.float64]:
        split, k_plus, k_minus = _branch_momenta(profile, energy, x)
        split = np.where(split > 0, split, np.inf)
        return energy / split * (0.5 / np.sqrt(k_plus) + 0.5 / np.sqrt(k_minus))

    return integrand


def _loop_integral(
    profile: PotentialProfile,
    energy: float,
    integrand: Callable[[NDArray[np.float64]], NDArray[np.float64]],
    quad_points: int,
    x_max: float,
    adaptive: bool = True,
) -> Tuple[float, int, bool]:
    cut = make_energy_slice(profile, energy, x_max=x_max)
    cap = QUAD_MAX_NODES if adaptive else quad_points
    return sine_quadrature(
        integrand, cut.x_left, cut.x_branch, nodes=quad_points, max_nodes=cap
    )


def period_finite_difference(
    profile: PotentialProfile,
    energy: float,
    *,
    quad_points: int = 64,
    x_max: float = DEFAULT_X_MAX,
) -> float:
    """T(E) by central differences of A with step 1e−5·Δ₀.

    Both evaluations share the node count that converges at E itself.
    """
    step = PERIOD_STEP * profile.delta0
    _, nodes, _ = _loop_integral(
        profile, energy, _action_integrand(profile, energy), quad_points, x_max
    )
    upper, _, _ = _loop_integral(
        profile, energy + step, _action_integrand(profile, energy + step),
        nodes, x_max, adaptive=False,
    )
    lower, _, _ = _loop_integral(
        profile, energy - step, _action_integrand(profile, energy - step),
        nodes, x_max, adaptive=False,
    )
    return (upper - lower) / (2 * step)


def loop_action(
    profile: PotentialProfile,
    energy: float,
    *,
    quad_points: int = 64,
    x_max: float = DEFAULT_X_MAX,
    with_fd: bool = False,
    adaptive: bool = True,
) -> ActionValue:
    """
    Leading-order action of the closed loop on the ξ > 0 sheet.

    A(E) = ∫ (√K₊ − √K₋) dx between the branching points. The period is the
    direct quadrature of ∫ (E/√(E² − Δ²))·[1/(2√K₊) + 1/(2√K₋)] dx; with
    with_fd the central-difference estimate is attached as well.

    Args:
        profile: Junction model
        energy: Energy in (0, Δ₀)
        quad_points: Initial Gauss-Legendre node count
        x_max: Search bound for the branching points
        with_fd: Also compute the finite-difference period
        adaptive: Double the node count until converged; False applies the
            quad_points rule as is

    Returns:
        ActionValue (warnings attached when the quadrature hits the node cap)
    """
    warnings = []
    action, nodes, converged = _loop_integral(
        profile, energy, _action_integrand(profile, energy), quad_points, x_max,
        adaptive,
    )
    if not converged:
        warnings.append(f"action quadrature not converged at {nodes} nodes")
    period, period_nodes, converged = _loop_integral(
        profile, energy, _period_integrand(profile, energy), quad_points, x_max,
        adaptive,
    )
    if not converged:
        warnings.append(f"period quadrature not converged at {period_nodes} nodes")
    for message in warnings:
        logger.warning("E = %.6g: %s", energy, message)
    period_fd = None
    if with_fd:
        period_fd = period_finite_difference(
            profile, energy, quad_points=quad_points, x_max=x_max
        )
    return ActionValue(
        action=action,
        period=period,
        period_fd=period_fd,
        nodes=max(nodes, period_nodes),
        warnings=tuple(warnings),
    )


def turning_action(
    profile: PotentialProfile,
    energy: float,
    x_from: float,
    *,
    side: int = 1,
    quad_points: int = 64,
    x_max: float = DEFAULT_X_MAX,
) -> float:
    """
    Action between x_from and a branching point.

    side = +1 integrates (√K₊ − √K₋) from x_from to x_E, side = −1 from the
    left branching point to x_from.
    """
    cut = make_energy_slice(profile, energy, x_max=x_max)
    integrand = _action_integrand(profile, energy)
    if side > 0:
        value, _, _ = sine_quadrature(
            integrand, x_from, cut.x_branch, nodes=quad_points, lower_singular=False
        )
    else:
        value, _, _ = sine_quadrature(
            integrand, cut.x_left, x_from, nodes=quad_points, upper_singular=False
        )
    return value


# --------------------------------------------------------------
# NORMAL FORM
# --------------------------------------------------------------


def barrier_top(beta: float) -> float:
    """Height 1/(16β²) of the barrier of (ξ + βξ²)²."""
    return math.inf if beta == 0 else 1.0 / (16 * beta * beta)


def normal_form_F0(beta: float, t: float, *, quad_points: int = 64) -> float:
    """
    Normal-form energy F₀(t, β).

    F₀ = (1/π) ∫ sqrt(t − q(ξ)²) dξ over the well of q² <= t containing 0,
    q(ξ) = ξ + βξ², so that F₀(t, 0) = t/2.

    Raises:
        DomainError: Unless 0 < t < 1/(16β²)
    """
    top = barrier_top(beta)
    if not 0 < t < top:
        raise DomainError(
            f"t = {t!r} outside the well; requires 0 < t < 1/(16 beta^2) = {top:.6g}"
        )
    if t > SEPARATRIX_WARNING * top:
        logger.warning("t = %.6g is within 2%% of the barrier top %.6g", t, top)
    b = abs(beta)
    root = math.sqrt(t)
    # roots of q = ±√t nearest the origin, in cancellation-free form
    right = 2 * root / (1 + math.sqrt(1 + 4 * b * root))
    left = -2 * root / (1 + math.sqrt(1 - 4 * b * root))

    def integrand(xi: NDArray[np.float64]) -> NDArray[np.float64]:
        q = xi + b * xi * xi
        return np.sqrt(np.clip(t - q * q, 0.0, None))

    value, nodes, converged = sine_quadrature(
        integrand, left, right, nodes=quad_points
    )
    if not converged:
        logger.warning("F0 quadrature not converged at %d nodes (t = %.6g)", nodes, t)
    return value / math.pi


def nu_parameter(cut: EnergySlice, h: float) -> float:
    """
    Order ν of the local Weber model at the branching point.

    ν = [F₀(t, β) − h/2]/h − 1 with t = (E₁/β)².
    """
    t = (cut.e1 / cut.beta) ** 2
    f0 = normal_form_F0(cut.beta, t)
    return (f0 - h / 2) / h - 1


# --------------------------------------------------------------
# SYMBOL
# --------------------------------------------------------------


def symbol_vectors(
    delta: ArrayLike, kinetic: ArrayLike, phase: ArrayLike, rho: int
) -> Tuple[NDArray[np.float64], NDArray[np.complex128]]:
    """
    Vectorised eigenpairs of [[a, Δe^{iφ/2}], [Δe^{−iφ/2}, −a]] for a = ξ² − μ.

    Returns:
        (ρλ, Y) with Y of shape (..., 2), unit length, second component real >= 0
    """
    delta = np.asarray(delta, dtype=float)
    a = np.asarray(kinetic, dtype=float)
    half = np.exp(0.5j * np.asarray(phase, dtype=float))
    lam = rho * np.hypot(delta, a)
    # two parallel closed forms; keep the better conditioned one
    v1 = np.stack([delta * half, (lam - a).astype(complex)], axis=-1)
    v2 = np.stack([half * (lam + a), delta.astype(complex)], axis=-1)
    n1 = np.sum(np.abs(v1) ** 2, axis=-1)
    n2 = np.sum(np.abs(v2) ** 2, axis=-1)
    vec = np.where((n1 >= n2)[..., None], v1, v2)
    second = vec[..., 1].real
    sign = np.where(second < 0, -1.0, 1.0)
    # second component zero: put the phase of the first on e^{iφ/2}
    first_sign = np.sign((vec[..., 0] / half).real)
    sign = np.where(second == 0, np.where(first_sign < 0, -1.0, 1.0), sign)
    vec = vec * sign[..., None]
    vec = vec / np.linalg.norm(vec, axis=-1, keepdims=True)
    return lam, vec


def symbol_eigen(profile: PotentialProfile, x: float, xi: float) -> SymbolEigen:
    """
    Diagonalise the BdG symbol at a phase-space point.

    Raises:
        DomainError: At a symbol crossing (Δ = 0 and ξ² = μ)
    """
    delta = float(profile.delta(x))
    a = xi * xi - float(profile.mu(x))
    if delta == 0 and a == 0:
        raise DomainError(f"degenerate symbol (crossing) at x = {x!r}, xi = {xi!r}")
    phase = float(profile.phase(x))
    lam_plus, y_plus = symbol_vectors(delta, a, phase, 1)
    lam_minus, y_minus = symbol_vectors(delta, a, phase, -1)
    return SymbolEigen(
        lambda_plus=float(lam_plus),
        lambda_minus=float(lam_minus),
        y_plus=y_plus,
        y_minus=y_minus,
    )


def symbol_matrix(profile: PotentialProfile, x: float, xi: float) -> NDArray[np.complex128]:
    """The 2×2 BdG symbol P(x, ξ)."""
    delta = float(profile.delta(x))
    a = xi * xi - float(profile.mu(x))
    coupling = delta * np.exp(0.5j * float(profile.phase(x)))
    return np.array([[a, coupling], [np.conj(coupling), -a]], dtype=complex)


# --------------------------------------------------------------
# WKB MODES
# --------------------------------------------------------------

WKB_MODES = ("e+", "e-", "h+", "h-")
MAX_FIT_CONDITION = 1e6


@dataclass(frozen=True)
class WkbFit:
    """
    Least-squares coefficients of the leading-order WKB modes in a window.

    Attributes:
        centre: Node at which the mode phases are anchored
        coefficients: Complex amplitudes in WKB_MODES order (e+, e−, h+, h−)
        condition: Condition number of the mode matrix
        residual: Relative residual of the fit
    """

    centre: float
    coefficients: NDArray[np.complex128]
    condition: float
    residual: float

    def coefficient(self, mode: str) -> complex:
        return complex(self.coefficients[WKB_MODES.index(mode)])

    def loop_weight(self, loop: int) -> float:
        """Squared amplitude carried by the ξ > 0 (loop = +1) or ξ < 0 loop."""
        picks = (0, 2) if loop > 0 else (1, 3)
        return float(sum(abs(self.coefficients[i]) ** 2 for i in picks))


def wkb_modes(
    profile: PotentialProfile, energy: float, x: ArrayLike
) -> NDArray[np.complex128]:
    """
    Leading-order WKB spinor modes on the nodes x of an allowed window.

    Each mode is Y(x)·K(x)^(−1/4)·exp(±i∫√K dx/h), with the symbol eigenvector
    Y for eigenvalue +E and the phase anchored at the middle node.

    Returns:
        Array of shape (len(x), 2, 4) in WKB_MODES order

    Raises:
        DomainError: If Δ >= E somewhere in the window
    """
    x = np.asarray(x, dtype=float)
    delta = profile.delta(x)
    if np.any(np.abs(delta) >= energy):
        raise DomainError("WKB window reaches into the classically forbidden region")
    split, k_plus, k_minus = _branch_momenta(profile, energy, x)
    phase = profile.phase(x)
    centre = len(x) // 2
    modes = np.empty((len(x), 2, 4), dtype=complex)
    for column, kinetic, sign_a in ((0, k_plus, 1.0), (2, k_minus, -1.0)):
        _, spinor = symbol_vectors(delta, sign_a * split, phase, 1)
        momentum = np.sqrt(kinetic)
        action = integrate.cumulative_trapezoid(momentum, x, initial=0.0)
        action = action - action[centre]
        amplitude = kinetic**-0.25
        for offset, direction in ((0, 1.0), (1, -1.0)):
            wave = amplitude * np.exp(1j * direction * action / profile.h)
            modes[:, :, column + offset] = spinor * wave[:, None]
    return modes


def fit_wkb_modes(
    profile: PotentialProfile,
    energy: float,
    x: ArrayLike,
    u1: ArrayLike,
    u2: ArrayLike,
) -> WkbFit:
    """
    Fit a two-component wavefunction to the four WKB modes on a window.

    Raises:
        DomainError: If the mode matrix is too ill-conditioned (window too
            close to a branching point)
    """
    x = np.asarray(x, dtype=float)
    modes = wkb_modes(profile, energy, x)
    matrix = np.concatenate([modes[:, 0, :], modes[:, 1, :]], axis=0)
    data = np.concatenate([np.asarray(u1, dtype=complex), np.asarray(u2, dtype=complex)])
    condition = float(np.linalg.cond(matrix))
    if condition > MAX_FIT_CONDITION:
        raise DomainError(
            f"WKB fit on [{x[0]:.4g}, {x[-1]:.4g}] has condition number "
            f"{condition:.3g}; the window is too close to a branching point"
        )
    coefficients, *_ = np.linalg.lstsq(matrix, data, rcond=None)
    residual = float(
        np.linalg.norm(matrix @ coefficients - data) / max(np.linalg.norm(data), 1e-300)
    )
    logger.debug("WKB fit on [%.4g, %.4g]: residual %.3e", x[0], x[-1], residual)
    return WkbFit(
        centre=float(x[len(x) // 2]),
        coefficients=coefficients,
        condition=condition,
        residual=residual,
    )
