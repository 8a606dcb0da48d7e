"""
Bohr-Sommerfeld solver

First-order quantization of the Andreev levels,

    A(E) − 2πnh − hφ + hπ = 0,

with electron levels on even n and hole levels on odd n, the supercurrents
dE/dφ and tabulation over phase sweeps.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from concurrent import futures
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import optimize
from tqdm import tqdm

from .classical import (
    QUAD_MAX_NODES,
    _action_integrand,
    loop_action,
    make_energy_slice,
    sine_quadrature,
)
from .errors import DomainError, NumericalError
from .model import (
    PotentialProfile,
    SimulationConfig,
    gap_window,
    mirror_profile,
    near_gap_edge,
    pair_energies,
)

logger = logging.getLogger(__name__)

PHASE_STEP = 1e-4
CURRENT_AGREEMENT = 1e-3
CURRENT_FAILURE = 1e-2
LEVEL_COLUMNS = ["phi", "n", "rho", "E", "dE_dphi", "orbit"]
COMPARISON_COLUMNS = [
    "n",
    "rho",
    "orbit",
    "E_bs",
    "E_oracle",
    "abs_error",
    "edge_unreliable",
]


@dataclass(frozen=True)
class AndreevLevel:
    """
    One quantized level.

    Attributes:
        n: Quantum number
        rho: +1 electron (n even), −1 hole (n odd)
        energy: Level energy in (0, Δ₀)
        action: A(E)
        supercurrent: dE/dφ (implicit estimate)
        period: T(E) = dA/dE
        phi: Phase at which the level was solved
        orbit: +1 for the loop solved at φ, −1 for its mirror solved at −φ
        edge_unreliable: Within 1e−3·Δ₀ of a gap edge
        supercurrent_fd: Finite-difference estimate, when computed
    """

    n: int
    rho: int
    energy: float
    action: float
    supercurrent: float
    period: float
    phi: float
    orbit: int = 1
    edge_unreliable: bool = False
    supercurrent_fd: Optional[float] = None


def parity(n: int) -> int:
    """Branch ρ carried by quantum number n."""
    return 1 if n % 2 == 0 else -1


def _phase_sign(n: int, convention: str) -> int:
    return parity(n) if convention == "rho" else 1


class _FixedAction:
    """A(E) with a frozen quadrature rule, so that it is smooth in E."""

    def __init__(self, profile: PotentialProfile, config: SimulationConfig):
        self.profile = profile
        self.config = config
        _, top = gap_window(profile, config.x_max)
        reference = loop_action(
            profile, top, quad_points=config.quad_points, x_max=config.x_max
        )
        self.nodes = min(max(reference.nodes, config.quad_points), QUAD_MAX_NODES)
        logger.debug("Freezing the action rule at %d nodes", self.nodes)

    def __call__(self, energy: float) -> float:
        cut = make_energy_slice(self.profile, energy, x_max=self.config.x_max)
        value, _, _ = sine_quadrature(
            _action_integrand(self.profile, energy),
            cut.x_left,
            cut.x_branch,
            nodes=self.nodes,
            max_nodes=self.nodes,
        )
        return value

    def period(self, energy: float) -> float:
        return loop_action(
            self.profile,
            energy,
            quad_points=self.nodes,
            x_max=self.config.x_max,
            adaptive=False,
        ).period


def _target(n: int, h: float, phi: float, convention: str) -> float:
    return 2 * math.pi * n * h + _phase_sign(n, convention) * h * phi - h * math.pi


def quantization_mismatch(
    profile: PotentialProfile,
    energy: float,
    n: int,
    *,
    config: Optional[SimulationConfig] = None,
    phi: Optional[float] = None,
) -> float:
    """
    Mismatch A(E) − 2πnh − hφ + hπ of the quantization condition.

    With phase_convention "rho" the phase term becomes −ρhφ. The action uses
    the same frozen quadrature rule as the level solver.

    Args:
        profile: Junction model
        energy: Energy in (0, Δ₀)
        n: Quantum number
        config: Numerical settings (defaults when omitted)
        phi: Phase override; profile.phi when omitted
    """
    config = config or SimulationConfig()
    phi = profile.phi if phi is None else phi
    action = _FixedAction(profile, config)(energy)
    return action - _target(n, profile.h, phi, config.phase_convention)


def quantum_number_range(
    profile: PotentialProfile,
    action_low: float,
    action_high: float,
    *,
    convention: str = "global",
    phi: Optional[float] = None,
) -> List[int]:
    """Quantum numbers whose target action lies strictly inside the window."""
    h = profile.h
    phi = profile.phi if phi is None else phi
    first = math.floor((action_low - h * abs(phi) + h * math.pi) / (2 * math.pi * h)) - 1
    last = math.ceil((action_high + h * abs(phi) + h * math.pi) / (2 * math.pi * h)) + 1
    return [
        n
        for n in range(first, last + 1)
        if action_low < _target(n, h, phi, convention) < action_high
    ]


def _root(
    action: _FixedAction,
    target: float,
    low: float,
    high: float,
    tolerance: float,
) -> float:
    energy = optimize.brentq(
        lambda e: action(e) - target, low, high, xtol=1e-15, rtol=4 * np.finfo(float).eps
    )
    # Newton steps with the period as slope
    for _ in range(3):
        mismatch = action(energy) - target
        if abs(mismatch) <= tolerance:
            break
        energy -= mismatch / action.period(energy)
    return energy


def _solve(
    profile: PotentialProfile,
    config: SimulationConfig,
    phi: float,
    orbit: int,
) -> List[AndreevLevel]:
    h = profile.h
    e_low, e_high = gap_window(profile, config.x_max)
    action = _FixedAction(profile, config)
    a_low, a_high = action(e_low), action(e_high)
    numbers = quantum_number_range(
        profile, a_low, a_high, convention=config.phase_convention, phi=phi
    )
    tolerance = config.root_tol * h
    levels = []
    for n in numbers:
        target = _target(n, h, phi, config.phase_convention)
        energy = _root(action, target, e_low, e_high, tolerance)
        period = action.period(energy)
        sign = _phase_sign(n, config.phase_convention)
        unreliable = bool(near_gap_edge(energy, profile.delta0))
        if unreliable:
            logger.warning("Level n=%d at E=%.6g is close to the gap edge", n, energy)
        levels.append(
            AndreevLevel(
                n=n,
                rho=parity(n),
                energy=energy,
                action=action(energy),
                supercurrent=orbit * sign * h / period,
                period=period,
                phi=orbit * phi,
                orbit=orbit,
                edge_unreliable=unreliable,
            )
        )
    levels.sort(key=lambda level: level.energy)
    logger.info(f"Found {len(levels)} levels at phi = {orbit * phi:.6g}, h = {h:g}")
    return levels


def solve_levels(
    profile: PotentialProfile, config: Optional[SimulationConfig] = None
) -> List[AndreevLevel]:
    """
    Solve the quantization condition below the gap.

    The scan runs from 1e−6·Δ₀ to Δ₀(1 − 1e−6); levels within 1e−3·Δ₀ of
    either gap edge are kept and marked edge_unreliable.

    Each quantum number whose target action is bracketed gives one level,
    located by Brent's method and polished with Newton steps using the period.

    Returns:
        Levels sorted by energy
    """
    config = config or SimulationConfig()
    return _solve(profile, config, profile.phi, orbit=1)


def solve_level_families(
    profile: PotentialProfile, config: Optional[SimulationConfig] = None
) -> List[AndreevLevel]:
    """Levels of the loop at φ together with those of its mirror loop at −φ."""
    config = config or SimulationConfig()
    levels = _solve(profile, config, profile.phi, orbit=1)
    levels += _solve(mirror_profile(profile), config, -profile.phi, orbit=-1)
    levels.sort(key=lambda level: level.energy)
    return levels


def _level_at_phase(
    action: _FixedAction,
    profile: PotentialProfile,
    config: SimulationConfig,
    n: int,
    phi: float,
    guess: float,
) -> float:
    target = _target(n, profile.h, phi, config.phase_convention)
    e_low, e_high = gap_window(profile, config.x_max)
    width = 10 * profile.h * PHASE_STEP / action.period(guess) + 1e-9
    low, high = max(guess - width, e_low), min(guess + width, e_high)
    return _root(action, target, low, high, config.root_tol * profile.h)


def supercurrent(
    profile: PotentialProfile,
    level: AndreevLevel,
    config: Optional[SimulationConfig] = None,
) -> AndreevLevel:
    """
    Reconcile the implicit and finite-difference supercurrents of a level.

    The implicit value h/T(E) follows from differentiating the quantization
    condition; the finite-difference value re-solves the same n at φ ± 1e−4.

    Returns:
        The level with supercurrent_fd filled in

    Raises:
        NumericalError: If the two estimates differ by more than 1e−2 relative
    """
    config = config or SimulationConfig()
    action = _FixedAction(profile, config)
    solved_phi = level.orbit * level.phi
    upper = _level_at_phase(
        action, profile, config, level.n, solved_phi + PHASE_STEP, level.energy
    )
    lower = _level_at_phase(
        action, profile, config, level.n, solved_phi - PHASE_STEP, level.energy
    )
    estimate = level.orbit * (upper - lower) / (2 * PHASE_STEP)
    implicit = level.supercurrent
    relative = abs(implicit - estimate) / abs(implicit)
    if relative > CURRENT_FAILURE:
        raise NumericalError(
            f"supercurrent estimates disagree for n={level.n}: implicit {implicit:.6g}, "
            f"finite difference {estimate:.6g}"
        )
    if relative > CURRENT_AGREEMENT:
        logger.warning(
            "Supercurrent estimates for n=%d differ by %.2e (relative)", level.n, relative
        )
    return dataclasses.replace(level, supercurrent_fd=estimate)


# --------------------------------------------------------------
# TABLES
# --------------------------------------------------------------


def _phase_rows(
    profile: PotentialProfile,
    config: SimulationConfig,
    phi: float,
    include_mirror: bool,
) -> List[Tuple[float, int, int, float, float, int]]:
    if not -math.pi <= phi <= math.pi:
        raise DomainError(f"phase {phi!r} outside [-pi, pi]")
    at_phase = dataclasses.replace(profile, phi=phi)
    levels = _solve(at_phase, config, phi, orbit=1)
    if include_mirror:
        levels += _solve(mirror_profile(at_phase), config, -phi, orbit=-1)
        levels.sort(key=lambda level: level.energy)
    return [
        (phi, level.n, level.rho, level.energy, level.supercurrent, level.orbit)
        for level in levels
    ]


def spectrum_table(
    profile: PotentialProfile,
    phis: Sequence[float],
    *,
    config: Optional[SimulationConfig] = None,
    include_mirror: bool = True,
    jobs: int = 1,
    progress: bool = False,
) -> pd.DataFrame:
    """
    Levels and supercurrents over a list of phases.

    Args:
        profile: Junction model (its phi is replaced by each entry of phis)
        phis: Phases in [−π, π]
        config: Numerical settings
        include_mirror: Also tabulate the mirror loop (orbit −1)
        jobs: Worker processes for independent phases
        progress: Show a progress bar

    Returns:
        DataFrame with columns phi, n, rho, E, dE_dphi, orbit
    """
    config = config or SimulationConfig()
    phis = [float(phi) for phi in phis]
    rows: List[Tuple[float, int, int, float, float, int]] = []
    if jobs > 1 and len(phis) > 1:
        with futures.ProcessPoolExecutor(max_workers=jobs) as executor:
            tasks = [
                executor.submit(_phase_rows, profile, config, phi, include_mirror)
                for phi in phis
            ]
            for task in tqdm(tasks, desc="phases", disable=not progress):
                rows.extend(task.result())
    else:
        for phi in tqdm(phis, desc="phases", disable=not progress):
            rows.extend(_phase_rows(profile, config, phi, include_mirror))
    table = pd.DataFrame(rows, columns=LEVEL_COLUMNS)
    return table.astype({"n": int, "rho": int, "orbit": int})


def levels_frame(levels: Iterable[AndreevLevel]) -> pd.DataFrame:
    """Levels as a table with the spectrum columns."""
    rows = [
        (level.phi, level.n, level.rho, level.energy, level.supercurrent, level.orbit)
        for level in levels
    ]
    return pd.DataFrame(rows, columns=LEVEL_COLUMNS).astype(
        {"n": int, "rho": int, "orbit": int}
    )


def compare_levels(
    levels: Sequence[AndreevLevel],
    oracle_energies: Sequence[float],
    delta0: float,
) -> pd.DataFrame:
    """
    Pair levels one-to-one with oracle energies.

    Levels left without a partner get a row with NaN on the missing side;
    unpaired oracle energies carry no quantum number. Rows touching the
    1e−3·Δ₀ band at either gap edge are marked edge_unreliable.

    Returns:
        DataFrame with columns n, rho, orbit, E_bs, E_oracle, abs_error,
        edge_unreliable
    """
    energies = np.array([level.energy for level in levels], dtype=float)
    oracle = np.sort(np.asarray(oracle_energies, dtype=float))
    first, second = pair_energies(energies, oracle)
    partner = dict(zip(first.tolist(), second.tolist()))
    rows: List[Tuple[object, ...]] = []
    for index, level in enumerate(levels):
        match = float(oracle[partner[index]]) if index in partner else math.nan
        edge = level.edge_unreliable or (
            index in partner and bool(near_gap_edge(match, delta0))
        )
        rows.append(
            (
                level.n,
                level.rho,
                level.orbit,
                level.energy,
                match,
                abs(level.energy - match),
                edge,
            )
        )
    paired = set(second.tolist())
    for index, value in enumerate(oracle):
        if index not in paired:
            edge = bool(near_gap_edge(value, delta0))
            rows.append((pd.NA, pd.NA, pd.NA, math.nan, float(value), math.nan, edge))
    frame = pd.DataFrame(rows, columns=COMPARISON_COLUMNS)
    return frame.astype(
        {"n": "Int64", "rho": "Int64", "orbit": "Int64", "edge_unreliable": bool}
    )


def unmatched_levels(comparison: pd.DataFrame) -> pd.DataFrame:
    """Rows of a comparison with no partner away from the gap edges."""
    lonely = comparison["E_bs"].isna() | comparison["E_oracle"].isna()
    return comparison[lonely & ~comparison["edge_unreliable"]]


def expected_level_count(
    profile: PotentialProfile, config: Optional[SimulationConfig] = None
) -> int:
    """floor(A(E_max)/2πh) − ceil(A(E_min)/2πh) over the scanned window."""
    config = config or SimulationConfig()
    e_low, e_high = gap_window(profile, config.x_max)
    action = _FixedAction(profile, config)
    quantum = 2 * math.pi * profile.h
    return math.floor(action(e_high) / quantum) - math.ceil(action(e_low) / quantum)
