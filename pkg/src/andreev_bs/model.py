"""
Junction model

Smooth SNS junction profiles Δ(x), μ(x), φ(x) and the simulation settings,
plus loading and validation of configuration documents.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Tuple

import numpy as np
import yaml
from numpy.typing import ArrayLike, NDArray
from scipy.optimize import linear_sum_assignment
from scipy.special import expit

from .errors import ConfigError

logger = logging.getLogger(__name__)

PHYSICAL_KEYS = ("delta0", "mu0", "L", "w", "phi", "h")
SIMULATION_KEYS = ("x_max", "grid_points", "root_tol", "quad_points")
OPTIONAL_KEYS = ("mu_bank", "phase_convention", "asymmetry")
PHASE_CONVENTIONS = ("global", "rho")

# Fraction of Δ₀ kept clear of the gap edges, and the band flagged near them
GAP_SHRINK = 1e-6
EDGE_BAND = 1e-3

# Config key -> PotentialProfile field
_PROFILE_FIELDS = {
    "delta0": "delta0",
    "mu0": "mu0",
    "L": "half_length",
    "w": "junction_width",
    "phi": "phi",
    "h": "h",
    "mu_bank": "mu_bank",
    "asymmetry": "asymmetry",
}


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


@dataclass(frozen=True)
class PotentialProfile:
    """
    Symmetric tanh-step SNS junction.

    Attributes:
        delta0: Gap amplitude Δ₀ in the banks.
        mu0: Chemical potential μ₀ (must exceed delta0).
        half_length: Half length L of the normal region.
        junction_width: Width w of the tanh steps.
        phi: Superconducting phase difference φ in [−π, π].
        h: Semiclassical parameter.
        mu_bank: When set, μ drops from mu0 in N to mu_bank in the banks.
        asymmetry: Slope of an odd term added to Δ (zero keeps the profile even).
    """

    delta0: float = 1.0
    mu0: float = 2.0
    half_length: float = 2.0
    junction_width: float = 0.25
    phi: float = math.pi / 2
    h: float = 0.05
    mu_bank: float | None = None
    asymmetry: float = 0.0

    def __post_init__(self) -> None:
        if not self.delta0 > 0:
            raise ConfigError("delta0 must be positive", key="delta0")
        if not self.mu0 > self.delta0:
            raise ConfigError("mu0 must exceed delta0", key="mu0")
        if not self.half_length > 0:
            raise ConfigError("L must be positive", key="L")
        if not 0 < self.junction_width < self.half_length:
            raise ConfigError("w must satisfy 0 < w < L", key="w")
        if not -math.pi <= self.phi <= math.pi:
            raise ConfigError("phi must lie in [-pi, pi]", key="phi")
        if not self.h > 0:
            raise ConfigError("h must be positive", key="h")
        if self.mu_bank is not None and not self.mu_bank > self.delta0:
            raise ConfigError("mu_bank must exceed delta0", key="mu_bank")

    # --------------------------------------------------------------
    # PROFILES
    # --------------------------------------------------------------

    def _step(self, x: NDArray[np.float64]) -> NDArray[np.float64]:
        # (1/2)[tanh(a) + tanh(b) + 2] written with logistic functions so
        # that Δ(x) and Δ(−x) add the same two terms
        scale = 2.0 / self.junction_width
        left = expit(scale * (x - self.half_length))
        right = expit(scale * (-x - self.half_length))
        return left + right

    def delta(self, x: ArrayLike) -> NDArray[np.float64]:
        """Order parameter Δ(x)."""
        x = np.asarray(x, dtype=float)
        value = self.delta0 * self._step(x)
        if self.asymmetry:
            value = value + self.asymmetry * x
        return value

    def delta_prime(self, x: ArrayLike) -> NDArray[np.float64]:
        """Derivative Δ′(x)."""
        x = np.asarray(x, dtype=float)
        scale = 2.0 / self.junction_width
        left = expit(scale * (x - self.half_length))
        right = expit(scale * (-x - self.half_length))
        value = self.delta0 * scale * (left * (1 - left) - right * (1 - right))
        return value + self.asymmetry

    def mu(self, x: ArrayLike) -> NDArray[np.float64]:
        """Chemical potential μ(x)."""
        x = np.asarray(x, dtype=float)
        if self.mu_bank is None:
            return np.full_like(x, self.mu0)
        return self.mu0 - (self.mu0 - self.mu_bank) * self._step(x)

    def mu_prime(self, x: ArrayLike) -> NDArray[np.float64]:
        x = np.asarray(x, dtype=float)
        if self.mu_bank is None:
            return np.zeros_like(x)
        drop = (self.mu0 - self.mu_bank) / self.delta0
        return -drop * (self.delta_prime(x) - self.asymmetry)

    def phase(self, x: ArrayLike) -> NDArray[np.float64]:
        """Phase φ(x) = sgn(x)·φ, zero at the origin."""
        x = np.asarray(x, dtype=float)
        return np.sign(x) * self.phi

    @property
    def is_even(self) -> bool:
        return self.asymmetry == 0.0

    @property
    def bank_mu(self) -> float:
        """Chemical potential reached in the banks."""
        return self.mu0 if self.mu_bank is None else self.mu_bank


@dataclass(frozen=True)
class SimulationConfig:
    """
    Numerical settings.

    Attributes:
        x_max: Half width of the computational domain.
        grid_points: Number of grid nodes (odd, so that x = 0 is a node).
        root_tol: Absolute tolerance for energy roots.
        quad_points: Initial Gauss-Legendre node count.
        phase_convention: "global" (single sign of φ) or "rho" (−ρhφ).
    """

    x_max: float = 6.0
    grid_points: int = 4001
    root_tol: float = 1e-12
    quad_points: int = 64
    phase_convention: str = "global"

    def __post_init__(self) -> None:
        if not self.x_max > 0:
            raise ConfigError("x_max must be positive", key="x_max")
        if isinstance(self.grid_points, bool) or not isinstance(self.grid_points, int):
            raise ConfigError("grid_points must be an integer", key="grid_points")
        if self.grid_points < 1001:
            raise ConfigError("grid_points must be at least 1001", key="grid_points")
        if self.grid_points % 2 == 0:
            raise ConfigError("grid_points must be odd", key="grid_points")
        if not self.root_tol > 0:
            raise ConfigError("root_tol must be positive", key="root_tol")
        if not self.quad_points >= 8:
            raise ConfigError("quad_points must be at least 8", key="quad_points")
        if self.phase_convention not in PHASE_CONVENTIONS:
            raise ConfigError(
                f"phase_convention must be one of {', '.join(PHASE_CONVENTIONS)}",
                key="phase_convention",
            )

    @property
    def dx(self) -> float:
        return 2 * self.x_max / (self.grid_points - 1)


# --------------------------------------------------------------
# OPERATIONS
# --------------------------------------------------------------


def evaluate_profile(
    profile: PotentialProfile, x: ArrayLike
) -> Tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]:
    """
    Evaluate the junction profile.

    Args:
        profile: Junction model
        x: Position or array of positions

    Returns:
        Tuple (Δ(x), μ(x), φ(x)); scalars for scalar input
    """
    x = np.asarray(x, dtype=float)
    delta = profile.delta(x)
    mu = profile.mu(x)
    phase = profile.phase(x)
    return delta[()], mu[()], phase[()]


def check_compatible(profile: PotentialProfile, config: SimulationConfig) -> None:
    """
    Validate the invariants tying the domain to the profile.

    Raises:
        ConfigError: If x_max does not reach the banks
    """
    reach = profile.half_length + 5 * profile.junction_width
    if not config.x_max > reach:
        raise ConfigError(f"x_max must exceed L + 5w = {reach:g}", key="x_max")
    centre = float(profile.delta(0.0))
    if centre > 1e-6 * profile.delta0:
        logger.warning(
            "Delta(0) = %.3g is not negligible; the phase jump at x = 0 is felt", centre
        )


def make_grid(config: SimulationConfig) -> NDArray[np.float64]:
    """Uniform grid on [−x_max, x_max] with x = 0 on the middle node."""
    grid = np.linspace(-config.x_max, config.x_max, config.grid_points)
    # exactly antisymmetric, so that reversing the node order is parity
    return (grid - grid[::-1]) / 2


def gap_window(profile: PotentialProfile, x_max: float) -> Tuple[float, float]:
    """
    Energies scanned for gap levels.

    Both ends sit 1e−6·Δ₀ inside the gap and inside the range Δ takes on
    [−x_max, x_max], so that every energy has two branching points.
    """
    bank = float(np.min(profile.delta(np.array([-x_max, x_max]))))
    centre = float(profile.delta(0.0))
    low = max(GAP_SHRINK * profile.delta0, 2 * centre)
    high = min(profile.delta0 * (1 - GAP_SHRINK), bank - GAP_SHRINK * profile.delta0)
    return low, high


def near_gap_edge(energy: ArrayLike, delta0: float) -> NDArray[np.bool_]:
    """Energies within 1e−3·Δ₀ of either gap edge."""
    energy = np.asarray(energy, dtype=float)
    band = EDGE_BAND * delta0
    return ((energy < band) | (energy > delta0 - band))[()]


def pair_energies(
    first: ArrayLike, second: ArrayLike
) -> Tuple[NDArray[np.intp], NDArray[np.intp]]:
    """
    One-to-one pairing of two level lists.

    Minimizes the summed squared distance; when the lists differ in length
    the surplus levels of the longer one stay unpaired.

    Returns:
        Index arrays (into first, into second) of the paired levels
    """
    first = np.asarray(first, dtype=float)
    second = np.asarray(second, dtype=float)
    if first.size == 0 or second.size == 0:
        empty = np.zeros(0, dtype=np.intp)
        return empty, empty
    rows, cols = linear_sum_assignment((first[:, None] - second[None, :]) ** 2)
    return rows.astype(np.intp), cols.astype(np.intp)


def with_phase(profile: PotentialProfile, phi: float) -> PotentialProfile:
    return dataclasses.replace(profile, phi=phi)


def with_h(profile: PotentialProfile, h: float) -> PotentialProfile:
    return dataclasses.replace(profile, h=h)


def mirror_profile(profile: PotentialProfile) -> PotentialProfile:
    """The same junction at phase −φ."""
    return with_phase(profile, -profile.phi)


# --------------------------------------------------------------
# CONFIGURATION DOCUMENTS
# --------------------------------------------------------------


def _parse_document(text: str) -> Dict[str, Any]:
    try:
        document = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        if mark is not None:
            raise ConfigError(
                f"could not parse configuration at line {mark.line + 1}, "
                f"column {mark.column + 1}: {getattr(exc, 'problem', exc)}",
                line=mark.line + 1,
            ) from exc
        raise ConfigError(f"could not parse configuration: {exc}") from exc
    if document is None:
        return {}
    if not isinstance(document, dict):
        raise ConfigError("configuration must be a key/value mapping")
    return document


def config_from_mapping(
    document: Dict[str, Any],
) -> Tuple[PotentialProfile, SimulationConfig]:
    """
    Build and validate the profile and settings from a parsed mapping.

    Raises:
        ConfigError: On unknown keys, missing keys, wrong types or violated invariants
    """
    known = set(PHYSICAL_KEYS) | set(SIMULATION_KEYS) | set(OPTIONAL_KEYS)
    unknown = sorted(str(key) for key in document if key not in known)
    if unknown:
        raise ConfigError(
            f"unknown configuration keys: {', '.join(unknown)}", key=unknown[0]
        )
    missing = [key for key in PHYSICAL_KEYS if key not in document]
    if missing:
        raise ConfigError(
            f"missing required keys: {', '.join(missing)} "
            f"(required: {', '.join(PHYSICAL_KEYS)})",
            key=missing[0],
        )

    profile_args: Dict[str, Any] = {}
    for key, field in _PROFILE_FIELDS.items():
        if key not in document or (key == "mu_bank" and document[key] is None):
            continue
        value = document[key]
        if not _is_number(value):
            raise ConfigError(f"{key} must be a number, got {value!r}", key=key)
        profile_args[field] = float(value)

    config_args: Dict[str, Any] = {}
    for key in SIMULATION_KEYS:
        if key not in document:
            continue
        value = document[key]
        if not _is_number(value):
            raise ConfigError(f"{key} must be a number, got {value!r}", key=key)
        if key in ("grid_points", "quad_points"):
            if float(value) != int(value):
                raise ConfigError(f"{key} must be an integer", key=key)
            value = int(value)
        else:
            value = float(value)
        config_args[key] = value
    if "phase_convention" in document:
        config_args["phase_convention"] = str(document["phase_convention"])

    profile = PotentialProfile(**profile_args)
    config = SimulationConfig(**config_args)
    check_compatible(profile, config)
    logger.debug("Loaded profile %s with settings %s", profile, config)
    return profile, config


def load_config(text: str) -> Tuple[PotentialProfile, SimulationConfig]:
    """
    Parse a JSON or YAML configuration document.

    Args:
        text: Document text

    Returns:
        Validated (PotentialProfile, SimulationConfig)

    Raises:
        ConfigError: If the document cannot be parsed or violates an invariant
    """
    return config_from_mapping(_parse_document(text))


def load_config_file(path: str | Path) -> Tuple[PotentialProfile, SimulationConfig]:
    """Read and validate a configuration file."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Configuration file not found: {path}")
    logger.info(f"Loading configuration from {path}")
    return load_config(path.read_text())


def config_echo(profile: PotentialProfile, config: SimulationConfig) -> Dict[str, Any]:
    """Configuration in document form, as echoed into run manifests."""
    echo: Dict[str, Any] = {
        "delta0": profile.delta0,
        "mu0": profile.mu0,
        "L": profile.half_length,
        "w": profile.junction_width,
        "phi": profile.phi,
        "h": profile.h,
        "x_max": config.x_max,
        "grid_points": config.grid_points,
        "root_tol": config.root_tol,
        "quad_points": config.quad_points,
        "phase_convention": config.phase_convention,
        "asymmetry": profile.asymmetry,
    }
    if profile.mu_bank is not None:
        echo["mu_bank"] = profile.mu_bank
    return echo
