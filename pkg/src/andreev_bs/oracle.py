"""
Numerical oracles

Finite-difference BdG eigensolver on a Dirichlet interval, shooting
refinement of gap eigenvalues, quantum-flux conservation and the
charge-conjugation / PT symmetry checks of the assembled matrix.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from concurrent import futures
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd
from numpy.typing import ArrayLike, NDArray
from scipy import integrate, linalg, sparse
from tqdm import tqdm

from .classical import fit_wkb_modes, make_energy_slice
from .errors import DomainError, NumericalError, ResolutionError
from .io import write_csv
from .model import (
    GAP_SHRINK,
    PotentialProfile,
    SimulationConfig,
    check_compatible,
    make_grid,
    mirror_profile,
    near_gap_edge,
    pair_energies,
)
from .scattering import bank_basis

logger = logging.getLogger(__name__)

POINTS_PER_WAVELENGTH = 8
EIGEN_RETRIES = 2
RESIDUAL_TOL = 1e-10
SHOOT_RTOL = 1e-10
SHOOT_ATOL = 1e-10
SEGMENT_LENGTH = 0.25
REFINE_WIDTH = 1e-3
REFINE_MIN_WIDTH = 1e-7
REFINE_TOL = 1e-12
REFINE_MAX_STEPS = 40
WAVEFUNCTION_COLUMNS = ["x", "Re u1", "Im u1", "Re u2", "Im u2"]
ORACLE_COLUMNS = [
    "h",
    "phi",
    "E_fd",
    "E_richardson",
    "E_shoot",
    "residual",
    "edge_unreliable",
]


@dataclass(frozen=True)
class GridOperator:
    """
    Finite-difference BdG operator in upper Hermitian band storage.

    The unknowns are interleaved as (u₁⁰, u₂⁰, u₁¹, u₂¹, ...) on the interior
    nodes; Dirichlet conditions hold at the two end nodes, which carry no
    unknowns. bands[2 − k, j] holds H[j − k, j] for k = 0, 1, 2, the lower
    triangle being the conjugate of the upper.

    Attributes:
        size: Matrix dimension 2N
        h: Semiclassical parameter
        dx: Grid step
        bands: Array of shape (3, size)
        x: Interior nodes
        gap: Half width of the eigenvalue window (Δ₀)
        profile: Junction the operator was assembled from, if any
    """

    size: int
    h: float
    dx: float
    bands: NDArray[np.complex128]
    x: NDArray[np.float64]
    gap: float
    profile: Optional[PotentialProfile] = None

    def to_sparse(self) -> sparse.csr_matrix:
        """The full Hermitian matrix."""
        offsets = [0, 1, 2, -1, -2]
        diagonals = [
            self.bands[2],
            self.bands[1, 1:],
            self.bands[0, 2:],
            self.bands[1, 1:].conj(),
            self.bands[0, 2:].conj(),
        ]
        return sparse.diags(diagonals, offsets, shape=(self.size, self.size), format="csr")


@dataclass(frozen=True)
class GridWavefunction:
    """
    Two-component wavefunction sampled on the full grid.

    Eigenvectors of a GridOperator vanish on the two end nodes and have unit
    discrete norm; shooting solutions cover only part of the grid and are
    normalized the same way.
    """

    x_grid: NDArray[np.float64]
    u1: NDArray[np.complex128]
    u2: NDArray[np.complex128]
    energy: float

    @property
    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.u1) ** 2 + np.abs(self.u2) ** 2)))


# --------------------------------------------------------------
# ASSEMBLY
# --------------------------------------------------------------


def required_points(profile: PotentialProfile, config: SimulationConfig) -> int:
    """Smallest odd node count that resolves the shortest local wavelength."""
    peak = max(profile.mu0, profile.bank_mu) + profile.delta0
    dx_max = profile.h / POINTS_PER_WAVELENGTH * 2 * math.pi / math.sqrt(peak)
    count = math.ceil(2 * config.x_max / dx_max) + 1
    return count if count % 2 else count + 1


def assemble_operator(
    x: ArrayLike,
    delta: ArrayLike,
    mu: ArrayLike,
    phase: ArrayLike,
    h: float,
    gap: float,
    profile: Optional[PotentialProfile] = None,
) -> GridOperator:
    """
    Assemble the banded operator from potentials sampled on interior nodes.

    Args:
        x: Interior nodes (uniform spacing)
        delta: Δ at the nodes
        mu: μ at the nodes
        phase: φ(x) at the nodes
        h: Semiclassical parameter
        gap: Half width of the eigenvalue window used by eigen_gap
        profile: Junction reference stored on the operator

    Returns:
        GridOperator
    """
    x = np.asarray(x, dtype=float)
    delta = np.broadcast_to(np.asarray(delta, dtype=float), x.shape)
    mu = np.broadcast_to(np.asarray(mu, dtype=float), x.shape)
    phase = np.broadcast_to(np.asarray(phase, dtype=float), x.shape)
    count = len(x)
    if count < 2:
        raise DomainError("at least two interior nodes are needed")
    dx = (x[-1] - x[0]) / (count - 1)
    c = h * h / dx**2
    size = 2 * count
    bands = np.zeros((3, size), dtype=complex)
    bands[2, 0::2] = 2 * c - mu
    bands[2, 1::2] = -2 * c + mu
    bands[1, 1::2] = delta * np.exp(0.5j * phase)
    # second-difference hopping: u₁ to u₁ and u₂ to u₂ of the neighbour node
    bands[0, 2::2] = -c
    bands[0, 3::2] = c
    return GridOperator(
        size=size, h=h, dx=float(dx), bands=bands, x=x, gap=gap, profile=profile
    )


def discretize(
    profile: PotentialProfile, config: Optional[SimulationConfig] = None
) -> GridOperator:
    """
    Central-difference discretization of the BdG operator on [−x_max, x_max].

    Raises:
        ResolutionError: If the grid has fewer than 8 points per shortest
            local wavelength; carries the required node count
    """
    config = config or SimulationConfig()
    check_compatible(profile, config)
    needed = required_points(profile, config)
    if config.grid_points < needed:
        raise ResolutionError(
            f"grid_points = {config.grid_points} is too coarse for h = {profile.h:g}; "
            f"at least {needed} points are required",
            required_points=needed,
        )
    x = make_grid(config)[1:-1]
    op = assemble_operator(
        x,
        profile.delta(x),
        profile.mu(x),
        profile.phase(x),
        profile.h,
        profile.delta0,
        profile=profile,
    )
    logger.debug(f"Assembled operator of size {op.size} (dx = {op.dx:.3g})")
    return op


def double_resolution(config: SimulationConfig) -> SimulationConfig:
    """Same domain with the grid step halved."""
    return dataclasses.replace(config, grid_points=2 * config.grid_points - 1)


# --------------------------------------------------------------
# EIGENSOLVER
# --------------------------------------------------------------


def _solve_bands(
    bands: NDArray[np.complex128], limit: float, vectors: bool
) -> Tuple[NDArray[np.float64], Optional[NDArray[np.complex128]]]:
    # real problems stay real so that their eigenvectors come out real
    matrix = bands.real.copy() if not np.any(bands.imag) else bands
    last: Optional[Exception] = None
    for attempt in range(EIGEN_RETRIES + 1):
        window = limit * (1 - attempt * 1e-9)
        try:
            values = linalg.eig_banded(
                matrix, eigvals_only=True, select="v", select_range=(-window, window)
            )
            if not vectors or values.size == 0:
                return values, None
            values, vecs = linalg.eig_banded(
                matrix,
                select="v",
                select_range=(-window, window),
                max_ev=values.size + 2,
            )
            return values, vecs
        except linalg.LinAlgError as exc:
            last = exc
            logger.warning("Banded eigensolver failed (%s); retrying", exc)
    raise NumericalError(
        f"banded eigensolver failed on a matrix of size {bands.shape[1]} "
        f"in the window |E| < {limit:.6g}: {last}"
    )


def _residual_check(op: GridOperator, values: NDArray, vecs: NDArray) -> float:
    matrix = op.to_sparse()
    scale = float(abs(matrix).sum(axis=1).max())
    residual = matrix @ vecs - vecs * values[None, :]
    worst = float(np.max(np.linalg.norm(residual, axis=0))) if values.size else 0.0
    if worst > RESIDUAL_TOL * scale:
        raise NumericalError(
            f"eigenpair residual {worst:.3e} exceeds {RESIDUAL_TOL:g}·‖H‖ = "
            f"{RESIDUAL_TOL * scale:.3e}"
        )
    return worst


def _to_wavefunction(
    op: GridOperator, vector: NDArray, energy: float
) -> GridWavefunction:
    vector = np.asarray(vector, dtype=complex)
    # fixed gauge: the largest entry is real and positive
    peak = vector[np.argmax(np.abs(vector))]
    vector = vector * (abs(peak) / peak)
    vector = vector / np.linalg.norm(vector)
    zero = np.zeros(1, dtype=complex)
    x_grid = np.concatenate([[op.x[0] - op.dx], op.x, [op.x[-1] + op.dx]])
    return GridWavefunction(
        x_grid=x_grid,
        u1=np.concatenate([zero, vector[0::2], zero]),
        u2=np.concatenate([zero, vector[1::2], zero]),
        energy=float(energy),
    )


def gap_eigenvalues(op: GridOperator) -> NDArray[np.float64]:
    """Eigenvalues with |E| < Δ₀(1 − 1e−6), sorted."""
    values, _ = _solve_bands(op.bands, op.gap * (1 - GAP_SHRINK), vectors=False)
    return np.sort(values)


def eigen_gap(op: GridOperator) -> List[Tuple[float, GridWavefunction]]:
    """
    All eigenpairs inside the gap window |E| < Δ₀(1 − 1e−6).

    Eigenvalues are found by bisection on the band structure and
    eigenvectors by inverse iteration (LAPACK ?hbevx through
    scipy.linalg.eig_banded).

    Returns:
        List of (energy, GridWavefunction) sorted by energy

    Raises:
        NumericalError: If the solver fails twice with perturbed windows or an
            eigenpair residual exceeds 1e−10·‖H‖∞
    """
    values, vecs = _solve_bands(op.bands, op.gap * (1 - GAP_SHRINK), vectors=True)
    if vecs is None:
        return []
    _residual_check(op, values, vecs)
    order = np.argsort(values)
    pairs = [(float(values[i]), _to_wavefunction(op, vecs[:, i], values[i])) for i in order]
    logger.info(f"Found {len(pairs)} gap eigenpairs (size {op.size})")
    return pairs


def richardson(
    values_n: ArrayLike, values_2n: ArrayLike, order: int = 2
) -> NDArray[np.float64]:
    """Extrapolate a sequence converging at dx^order from steps dx and dx/2."""
    coarse = np.asarray(values_n, dtype=float)
    fine = np.asarray(values_2n, dtype=float)
    return fine + (fine - coarse) / (2**order - 1)


def convergence_ratio(
    values_n: ArrayLike, values_2n: ArrayLike, values_4n: ArrayLike
) -> NDArray[np.float64]:
    """(E_N − E_2N)/(E_2N − E_4N); close to 4 for second-order convergence."""
    a = np.asarray(values_n, dtype=float)
    b = np.asarray(values_2n, dtype=float)
    c = np.asarray(values_4n, dtype=float)
    return (a - b) / (b - c)


# --------------------------------------------------------------
# FLUX AND SYMMETRIES
# --------------------------------------------------------------


@dataclass(frozen=True)
class FluxReport:
    """
    Charge current j(x) = h·Im(ū₁u₁′ − ū₂u₂′) on interior nodes.

    Attributes:
        x: Nodes where j is reported (x = 0 excluded)
        current: j on those nodes
        mean: Mean of j
        max_deviation: max |j − mean|
        scale: sqrt(max μ + Δ₀)·max(|u₁|² + |u₂|²)
        relative_deviation: max_deviation / scale
    """

    x: NDArray[np.float64]
    current: NDArray[np.float64]
    mean: float
    max_deviation: float
    scale: float
    relative_deviation: float


def quantum_flux(psi: GridWavefunction, profile: PotentialProfile) -> FluxReport:
    """Current profile of a wavefunction and its conservation statistics."""
    x = np.asarray(psi.x_grid, dtype=float)
    span = x[2:] - x[:-2]
    du1 = (psi.u1[2:] - psi.u1[:-2]) / span
    du2 = (psi.u2[2:] - psi.u2[:-2]) / span
    inner = slice(1, -1)
    current = profile.h * np.imag(
        np.conj(psi.u1[inner]) * du1 - np.conj(psi.u2[inner]) * du2
    )
    nodes = x[inner]
    # φ′ is concentrated on the node at x = 0
    keep = np.abs(nodes) > 0.5 * float(np.min(np.abs(np.diff(x))))
    nodes, current = nodes[keep], current[keep]
    mean = float(np.mean(current))
    deviation = float(np.max(np.abs(current - mean)))
    density = float(np.max(np.abs(psi.u1) ** 2 + np.abs(psi.u2) ** 2))
    peak = max(profile.mu0, profile.bank_mu) + profile.delta0
    scale = math.sqrt(peak) * density
    return FluxReport(
        x=nodes,
        current=current,
        mean=mean,
        max_deviation=deviation,
        scale=scale,
        relative_deviation=deviation / scale if scale > 0 else math.inf,
    )


def phase_ramp(psi: GridWavefunction, wavenumber: float) -> GridWavefunction:
    """Multiply u₁ by exp(i·wavenumber·x); the result is no eigenfunction."""
    ramp = np.exp(1j * wavenumber * np.asarray(psi.x_grid))
    return dataclasses.replace(psi, u1=psi.u1 * ramp)


@dataclass(frozen=True)
class SymmetryReport:
    """
    Symmetry defects of the assembled operator.

    Attributes:
        charge_conjugation: max |spec P(φ) + reversed spec P(−φ)|
        charge_conjugation_matrix: max |−ΣHΣ − H(−φ)| entry, Σ = 1 ⊗ σʸ
        pt: max of the PT spectral and matrix defects
        pt_matrix: max |conj(ΠHΠ) − H| entry, Π the node reversal
        levels: Number of gap eigenvalues of P(φ)
    """

    charge_conjugation: float
    charge_conjugation_matrix: float
    pt: float
    pt_matrix: float
    levels: int


def _bands_from_matrix(matrix: sparse.spmatrix) -> NDArray[np.complex128]:
    size = matrix.shape[0]
    bands = np.zeros((3, size), dtype=complex)
    for k in range(3):
        bands[2 - k, k:] = matrix.diagonal(k)
    return bands


def _spectral_defect(first: NDArray, second: NDArray) -> float:
    if first.shape != second.shape:
        return math.inf
    if first.size == 0:
        return 0.0
    return float(np.max(np.abs(first - second)))


def _max_entry(matrix: sparse.spmatrix) -> float:
    values = sparse.csr_matrix(matrix).data
    return float(np.max(np.abs(values))) if values.size else 0.0


def symmetry_spectrum(
    profile: PotentialProfile, config: Optional[SimulationConfig] = None
) -> SymmetryReport:
    """
    Charge-conjugation and PT defects, by transforming the matrix and re-solving.

    Charge conjugation compares the gap spectrum of P(φ) with minus the
    reversed gap spectrum of P(−φ). The PT transform conj(ΠHΠ) is unitarily
    equivalent to H, so its spectral comparison is exact by construction; the
    matrix defect is what detects a profile that is not even.
    """
    config = config or SimulationConfig()
    op = discretize(profile, config)
    mirror = discretize(mirror_profile(profile), config)
    limit = op.gap * (1 - GAP_SHRINK)
    spectrum = gap_eigenvalues(op)
    mirrored = gap_eigenvalues(mirror)
    charge = _spectral_defect(spectrum, -mirrored[::-1])

    matrix = op.to_sparse()
    nodes = op.size // 2
    sigma = sparse.kron(
        sparse.identity(nodes), sparse.csr_matrix(np.array([[0, -1j], [1j, 0]]))
    )
    conjugated = -(sigma @ matrix @ sigma)
    charge_matrix = _max_entry(conjugated - mirror.to_sparse())

    index = np.arange(op.size)
    reversed_nodes = 2 * (nodes - 1 - index // 2) + index % 2
    transformed = matrix[reversed_nodes][:, reversed_nodes].conj()
    pt_matrix = _max_entry(transformed - matrix)
    pt_values, _ = _solve_bands(_bands_from_matrix(transformed), limit, vectors=False)
    pt_spectral = _spectral_defect(spectrum, np.sort(pt_values))
    report = SymmetryReport(
        charge_conjugation=charge,
        charge_conjugation_matrix=charge_matrix,
        pt=max(pt_spectral, pt_matrix),
        pt_matrix=pt_matrix,
        levels=int(spectrum.size),
    )
    logger.info(
        "Symmetry defects: charge conjugation %.3e, PT %.3e", report.charge_conjugation, report.pt
    )
    return report


# --------------------------------------------------------------
# SHOOTING
# --------------------------------------------------------------


def _system(
    profile: PotentialProfile, energy: float, x: float, phase: float
) -> NDArray[np.complex128]:
    h2 = profile.h**2
    delta = float(profile.delta(x))
    mu = float(profile.mu(x))
    coupling = delta * np.exp(0.5j * phase)
    m = np.zeros((4, 4), dtype=complex)
    m[0, 1] = 1.0
    m[1, 0] = (-mu - energy) / h2
    m[1, 2] = coupling / h2
    m[2, 3] = 1.0
    m[3, 2] = (energy - mu) / h2
    m[3, 0] = -np.conj(coupling) / h2
    return m


def _initial_basis(profile: PotentialProfile, energy: float, side: int) -> NDArray:
    basis = bank_basis(profile, energy, side=side)
    columns = []
    for mode in basis.decaying(side):
        v1, v2 = mode.spinor
        columns.append([v1, mode.exponent * v1, v2, mode.exponent * v2])
    return np.array(columns, dtype=complex).T


def _breakpoints(start: float, stop: float) -> NDArray[np.float64]:
    count = max(1, math.ceil(abs(stop - start) / SEGMENT_LENGTH))
    return np.linspace(start, stop, count + 1)


def _segments(start: float, stop: float) -> List[Tuple[float, float]]:
    # segments never straddle x = 0, where the phase jumps
    if start < 0 < stop or stop < 0 < start:
        points = np.concatenate([_breakpoints(start, 0.0), _breakpoints(0.0, stop)[1:]])
    else:
        points = _breakpoints(start, stop)
    return list(zip(points[:-1], points[1:]))


def _integrate(
    profile: PotentialProfile,
    energy: float,
    basis: NDArray[np.complex128],
    start: float,
    stop: float,
    sample_at: Optional[NDArray[np.float64]] = None,
) -> Tuple[NDArray, List[Tuple[NDArray, NDArray]], List[NDArray]]:
    """
    Carry a two-column solution basis from start to stop.

    The columns are re-orthonormalized by QR after every segment.

    Returns:
        (final basis, [(nodes, samples)] per segment, R factor at the start
        of every segment after the first)
    """
    q, _ = np.linalg.qr(basis)
    samples: List[Tuple[NDArray, NDArray]] = []
    factors: List[NDArray] = []
    pieces = _segments(start, stop)
    for index, (a, b) in enumerate(pieces):
        phase = float(profile.phase(0.5 * (a + b)))

        def rhs(x: float, y: NDArray[np.complex128]) -> NDArray[np.complex128]:
            return (_system(profile, energy, x, phase) @ y.reshape(4, 2)).ravel()

        t_eval = None
        if sample_at is not None:
            lo, hi = min(a, b), max(a, b)
            last = index == len(pieces) - 1
            mask = (sample_at >= lo) & ((sample_at < hi) | (last & (sample_at <= hi)))
            picked = sample_at[mask]
            # the segment end is always evaluated so that the basis can be carried on
            t_eval = np.append(picked, b) if not picked.size or picked[-1] != b else picked
        sol = integrate.solve_ivp(
            rhs,
            (a, b),
            q.ravel(),
            method="DOP853",
            rtol=SHOOT_RTOL,
            atol=SHOOT_ATOL,
            t_eval=t_eval,
        )
        if not sol.success:
            raise NumericalError(
                f"shooting integration stalled at x = {sol.t[-1]:.6g} "
                f"(E = {energy:.10g}): {sol.message}"
            )
        if t_eval is not None:
            states = sol.y.T.reshape(-1, 4, 2)[: picked.size]
            samples.append((sol.t[: picked.size], states))
        q, r = np.linalg.qr(sol.y[:, -1].reshape(4, 2))
        if index < len(pieces) - 1:
            factors.append(r)
    return q, samples, factors


def shoot_determinant(
    profile: PotentialProfile, energy: float, config: Optional[SimulationConfig] = None
) -> float:
    """
    Matching indicator |det[Q_L | Q_R](0)| of the bank-decaying solutions.

    The two modes decaying into each bank are integrated toward x = 0 with
    QR re-orthonormalization; the indicator vanishes at an eigenvalue.

    Raises:
        DomainError: Unless 0 < E < Δ₀
        NumericalError: If the integrator fails; the message names the position
    """
    config = config or SimulationConfig()
    if not 0 < energy < profile.delta0:
        raise DomainError(f"shooting requires 0 < E < delta0, got E = {energy!r}")
    left, _, _ = _integrate(
        profile, energy, _initial_basis(profile, energy, -1), -config.x_max, 0.0
    )
    right, _, _ = _integrate(
        profile, energy, _initial_basis(profile, energy, 1), config.x_max, 0.0
    )
    return float(abs(np.linalg.det(np.hstack([left, right]))))


def refine_level(
    profile: PotentialProfile,
    config: Optional[SimulationConfig],
    seed: float,
    *,
    width: Optional[float] = None,
) -> float:
    """
    Refine a gap eigenvalue by iterated parabolic fits of the squared indicator.

    Args:
        profile: Junction model
        config: Numerical settings
        seed: Starting energy, e.g. a finite-difference eigenvalue
        width: Initial half width of the fit stencil (default 1e−3·Δ₀)

    Returns:
        Energy at the minimum of |det|²
    """
    config = config or SimulationConfig()
    scale = profile.delta0
    width = width or REFINE_WIDTH * scale

    def squared(energy: float) -> float:
        return shoot_determinant(profile, energy, config) ** 2

    centre = seed
    value = squared(centre)
    for step_count in range(REFINE_MAX_STEPS):
        width = min(width, 0.5 * centre, 0.5 * (scale - centre))
        below, above = squared(centre - width), squared(centre + width)
        curvature = below + above - 2 * value
        if curvature > 0:
            step = width * (below - above) / (2 * curvature)
            step = max(-width, min(width, step))
        else:
            step = -width if below < above else width
        centre += step
        value = squared(centre)
        logger.debug(
            "refine %d: E = %.14g, step %.3e, |det|^2 = %.3e", step_count, centre, step, value
        )
        if abs(step) < REFINE_TOL * scale:
            break
        width = max(2 * abs(step), REFINE_MIN_WIDTH * scale)
    else:
        logger.warning("Refinement from E = %.10g did not settle", seed)
    return centre


def shoot_wavefunction(
    profile: PotentialProfile, config: Optional[SimulationConfig], energy: float
) -> GridWavefunction:
    """
    Solution decaying into the left bank whose mirror-loop content vanishes.

    The left-decaying pair is integrated up to the right branching point and
    sampled on the grid nodes; the combination is the null direction of its
    (e−, h−) WKB coefficients in the window below the right branching point.

    Returns:
        GridWavefunction on the nodes up to the right branching point, unit norm
    """
    config = config or SimulationConfig()
    cut = make_energy_slice(profile, energy, x_max=config.x_max)
    grid = make_grid(config)
    nodes = grid[grid <= cut.x_branch]
    _, samples, factors = _integrate(
        profile,
        energy,
        _initial_basis(profile, energy, -1),
        -config.x_max,
        float(nodes[-1]),
        sample_at=nodes,
    )
    # express every segment in the final basis: c_k = R_{k+1}⁻¹ c_{k+1}
    blocks = []
    carry = np.identity(2, dtype=complex)
    for index in range(len(samples) - 1, -1, -1):
        blocks.append(samples[index][1] @ carry)
        if index > 0:
            carry = np.linalg.solve(factors[index - 1], carry)
    columns = np.concatenate(blocks[::-1], axis=0)

    window = 5 * profile.h / math.sqrt(profile.mu0)
    mask = (nodes >= cut.x_branch - 2 * window) & (nodes <= cut.x_branch - window)
    rows = []
    for column in range(2):
        fit = fit_wkb_modes(
            profile,
            energy,
            nodes[mask],
            columns[mask, 0, column],
            columns[mask, 2, column],
        )
        rows.append([fit.coefficient("e-"), fit.coefficient("h-")])
    _, _, vh = np.linalg.svd(np.array(rows).T)
    combination = vh[-1].conj()
    u1 = columns[:, 0, :] @ combination
    u2 = columns[:, 2, :] @ combination
    norm = math.sqrt(float(np.sum(np.abs(u1) ** 2 + np.abs(u2) ** 2)))
    return GridWavefunction(x_grid=nodes, u1=u1 / norm, u2=u2 / norm, energy=energy)


# --------------------------------------------------------------
# TABLES
# --------------------------------------------------------------


def _refined_row(
    profile: PotentialProfile, config: SimulationConfig, seed: float
) -> Tuple[float, float]:
    energy = refine_level(profile, config, seed)
    return energy, shoot_determinant(profile, energy, config)


def match_grid_levels(
    coarse: ArrayLike, fine: ArrayLike, delta0: float
) -> Tuple[NDArray[np.float64], NDArray[np.float64]]:
    """
    Pair the levels of two grids by nearest energy.

    A state present on only one grid is dropped when it lies within
    1e−3·Δ₀ of a gap edge, where the box boundary decides whether it fits
    below Δ₀(1 − 1e−6).

    Returns:
        The paired (coarse, fine) energies, sorted

    Raises:
        NumericalError: If a state away from the gap edges has no partner
    """
    coarse = np.sort(np.asarray(coarse, dtype=float))
    fine = np.sort(np.asarray(fine, dtype=float))
    rows, cols = pair_energies(coarse, fine)
    lonely = np.concatenate([np.delete(coarse, rows), np.delete(fine, cols)])
    interior = lonely[~np.asarray(near_gap_edge(lonely, delta0), dtype=bool)]
    if interior.size:
        raise NumericalError(
            f"gap level count changes from {coarse.size} to {fine.size} "
            f"when the grid is refined (unpaired at E = {interior[0]:.6g})"
        )
    for energy in lonely:
        logger.warning("Dropping E = %.10g, present on one grid only at the gap edge", energy)
    return coarse[rows], fine[cols]


def oracle_levels(
    profile: PotentialProfile,
    config: Optional[SimulationConfig] = None,
    *,
    shoot: bool = True,
    jobs: int = 1,
    progress: bool = False,
) -> pd.DataFrame:
    """
    Positive gap levels from finite differences at N and 2N − 1 nodes.

    E_richardson extrapolates the two grids; with shoot the extrapolated value
    seeds refine_level and residual is the indicator at the refined root.

    Returns:
        DataFrame with columns h, phi, E_fd, E_richardson, E_shoot, residual,
        edge_unreliable (either grid within 1e−3·Δ₀ of a gap edge)
    """
    config = config or SimulationConfig()
    coarse = gap_eigenvalues(discretize(profile, config))
    fine = gap_eigenvalues(discretize(profile, double_resolution(config)))
    coarse, fine = match_grid_levels(coarse[coarse > 0], fine[fine > 0], profile.delta0)
    extrapolated = richardson(coarse, fine)
    shot = np.full(coarse.size, math.nan)
    residual = np.full(coarse.size, math.nan)
    if shoot:
        seeds = [float(e) for e in extrapolated]
        if jobs > 1 and len(seeds) > 1:
            with futures.ProcessPoolExecutor(max_workers=jobs) as executor:
                tasks = [executor.submit(_refined_row, profile, config, e) for e in seeds]
                results = [task.result() for task in tqdm(tasks, disable=not progress)]
        else:
            results = [
                _refined_row(profile, config, e) for e in tqdm(seeds, disable=not progress)
            ]
        for i, (energy, indicator) in enumerate(results):
            shot[i], residual[i] = energy, indicator
    logger.info(f"Oracle found {coarse.size} positive gap levels at h = {profile.h:g}")
    return pd.DataFrame(
        {
            "h": profile.h,
            "phi": profile.phi,
            "E_fd": coarse,
            "E_richardson": extrapolated,
            "E_shoot": shot,
            "residual": residual,
            "edge_unreliable": near_gap_edge(coarse, profile.delta0)
            | near_gap_edge(fine, profile.delta0),
        },
        columns=ORACLE_COLUMNS,
    )


def best_energies(table: pd.DataFrame) -> NDArray[np.float64]:
    """Shooting energies where available, Richardson values otherwise."""
    return table["E_shoot"].fillna(table["E_richardson"]).to_numpy(dtype=float)


def wavefunction_frame(psi: GridWavefunction) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "x": psi.x_grid,
            "Re u1": psi.u1.real,
            "Im u1": psi.u1.imag,
            "Re u2": psi.u2.real,
            "Im u2": psi.u2.imag,
        },
        columns=WAVEFUNCTION_COLUMNS,
    )


def export_wavefunction(psi: GridWavefunction, path: str | Path) -> Path:
    """Write x, Re u1, Im u1, Re u2, Im u2 as CSV."""
    return write_csv(wavefunction_frame(psi), path)
