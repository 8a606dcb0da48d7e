"""
Scattering layer

Transfer matrices and the S-matrix of the scalar Schrödinger comparison
problem −h²u″ + Vu = k²u, resonance search by the argument principle, the
constant-bank spinor modes of the BdG operator and the relative monodromy
phase extracted from numerical wavefunctions.
"""

from __future__ import annotations

import cmath
import dataclasses
import logging
import math
from concurrent import futures
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Callable, Dict, List, Optional, Protocol, Sequence, Tuple

import numpy as np
import pandas as pd
from numpy.typing import ArrayLike, NDArray
from scipy import integrate, optimize
from tqdm import tqdm

from .classical import (
    WkbFit,
    fit_wkb_modes,
    kinetic_branches,
    make_energy_slice,
    turning_action,
)
from .errors import ConfigError, DomainError, NumericalError
from .model import PotentialProfile

if TYPE_CHECKING:
    from .oracle import GridWavefunction

logger = logging.getLogger(__name__)

Matrix2C = NDArray[np.complex128]

ODE_RTOL = 1e-12
ODE_ATOL = 1e-14
ETA = np.diag([1.0, -1.0]).astype(complex)
CONTOUR_POINTS = 16
CONTOUR_MAX_REFINE = 14
CONTOUR_NEAR_ZERO = 1e-6
CONTOUR_RETRIES = 3
SEARCH_MAX_DEPTH = 12
ROOT_MERGE_TOL = 1e-8
MIN_WINDOW_NODES = 8


# --------------------------------------------------------------
# POTENTIALS
# --------------------------------------------------------------


class ScalarPotential(Protocol):
    """Real potential with compact support, integrated piece by piece."""

    def breakpoints(self) -> Tuple[float, ...]:
        """Points where V may jump; the first and last bound the support."""
        ...

    def __call__(self, x: ArrayLike) -> NDArray[np.float64]: ...


def potential_support(potential: ScalarPotential) -> Optional[Tuple[float, float]]:
    """Interval outside which V vanishes, None for the free case."""
    points = potential.breakpoints()
    return (points[0], points[-1]) if points else None


@dataclass(frozen=True)
class BarrierPotential:
    """Sum of square barriers given as (height, left, right)."""

    barriers: Tuple[Tuple[float, float, float], ...] = ()

    def __post_init__(self) -> None:
        for height, left, right in self.barriers:
            if not right > left:
                raise ConfigError(f"barrier [{left:g}, {right:g}] has no width")

    def breakpoints(self) -> Tuple[float, ...]:
        return tuple(sorted({edge for _, a, b in self.barriers for edge in (a, b)}))

    def __call__(self, x: ArrayLike) -> NDArray[np.float64]:
        x = np.asarray(x, dtype=float)
        value = np.zeros_like(x)
        for height, left, right in self.barriers:
            value = value + np.where((x >= left) & (x < right), height, 0.0)
        return value


@dataclass(frozen=True)
class BumpPotential:
    """Sum of smooth bumps h·exp(1 − 1/(1 − t²)), t = (x − c)/r, given as (h, c, r)."""

    bumps: Tuple[Tuple[float, float, float], ...] = ()

    def breakpoints(self) -> Tuple[float, ...]:
        if not self.bumps:
            return ()
        left = min(c - r for _, c, r in self.bumps)
        right = max(c + r for _, c, r in self.bumps)
        return (left, right)

    def __call__(self, x: ArrayLike) -> NDArray[np.float64]:
        x = np.asarray(x, dtype=float)
        value = np.zeros_like(x)
        for height, centre, radius in self.bumps:
            t2 = ((x - centre) / radius) ** 2
            inside = t2 < 1
            safe = np.where(inside, t2, 0.0)
            value = value + np.where(inside, height * np.exp(1 - 1 / (1 - safe)), 0.0)
        return value


@dataclass(frozen=True)
class TabulatedPotential:
    """Samples (x, V) interpolated linearly, zero outside [x[0], x[-1]]."""

    x: Tuple[float, ...]
    values: Tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.x) < 2 or len(self.x) != len(self.values):
            raise ConfigError("tabulated potential needs at least two (x, V) samples")
        if np.any(np.diff(self.x) <= 0):
            raise ConfigError("tabulated potential abscissae must increase strictly")

    def breakpoints(self) -> Tuple[float, ...]:
        return (self.x[0], self.x[-1])

    def __call__(self, x: ArrayLike) -> NDArray[np.float64]:
        x = np.asarray(x, dtype=float)
        return np.interp(x, self.x, self.values, left=0.0, right=0.0)


def piecewise_potential(spec: str) -> ScalarPotential:
    """
    Parse a potential description.

    Accepted forms are "free", a comma list of "barrier:V0:a:b" and
    "bump:V0:c:r" items, or "file:PATH" with two columns (x, V).

    Raises:
        ConfigError: On a malformed description
        FileNotFoundError: If a tabulated file is missing
    """
    spec = spec.strip()
    if spec in ("", "free"):
        return BarrierPotential()
    if spec.startswith("file:"):
        return _tabulated_from_file(Path(spec[len("file:"):]))
    barriers = []
    bumps = []
    for item in spec.split(","):
        kind, *fields = item.strip().split(":")
        if kind not in ("barrier", "bump") or len(fields) != 3:
            raise ConfigError(
                f"malformed potential item {item!r}; expected barrier:V0:a:b or "
                f"bump:V0:c:r"
            )
        try:
            numbers = tuple(float(field) for field in fields)
        except ValueError as exc:
            raise ConfigError(f"non-numeric field in potential item {item!r}") from exc
        if kind == "barrier":
            barriers.append(numbers)
        else:
            if not numbers[2] > 0:
                raise ConfigError(f"bump radius must be positive in {item!r}")
            bumps.append(numbers)
    if barriers and bumps:
        raise ConfigError("barrier and bump items cannot be mixed in one potential")
    if bumps:
        return BumpPotential(tuple(bumps))
    return BarrierPotential(tuple(barriers))


def _tabulated_from_file(path: Path) -> TabulatedPotential:
    if not path.exists():
        raise FileNotFoundError(f"Potential file not found: {path}")
    table = pd.read_csv(path, sep=r"[,\s]+", engine="python", comment="#", header=None)
    if table.shape[1] < 2:
        raise ConfigError(f"potential file {path} needs two columns (x, V)")
    try:
        x = table.iloc[:, 0].astype(float)
        v = table.iloc[:, 1].astype(float)
    except ValueError as exc:
        raise ConfigError(f"non-numeric entries in potential file {path}") from exc
    logger.info(f"Loaded {len(x)} potential samples from {path}")
    return TabulatedPotential(tuple(x), tuple(v))


# --------------------------------------------------------------
# TRANSFER MATRIX
# --------------------------------------------------------------


@dataclass(frozen=True)
class TransferResult:
    """
    Monodromy of the scalar problem across the support of V.

    The monodromy maps the coefficients of (e^{ikx/h}, e^{−ikx/h}) on the left
    of the support to those on the right; f₁ + B f₂ on the left continues to
    A f₁ on the right.
    """

    k: complex
    h: float
    monodromy: Matrix2C
    transmission: complex
    reflection: complex

    @property
    def reflection_right(self) -> complex:
        """Reflection amplitude for incidence from the right."""
        return complex(self.monodromy[0, 1] / self.monodromy[1, 1])

    def s_matrix(self) -> Matrix2C:
        """S = [[A, B], [B₂, A]] with B₂ the right reflection amplitude."""
        a = self.transmission
        return np.array([[a, self.reflection], [self.reflection_right, a]])


def _propagate(
    potential: ScalarPotential, k: complex, h: float, state: NDArray[np.complex128]
) -> NDArray[np.complex128]:
    points = potential.breakpoints()
    for left, right in zip(points[:-1], points[1:]):
        pad = 1e-12 * (right - left)
        lo, hi = left + pad, right - pad

        def rhs(x: float, y: NDArray[np.complex128]) -> NDArray[np.complex128]:
            # piece values only; V may jump at the ends
            v = float(potential(min(max(x, lo), hi)))
            factor = (v - k * k) / (h * h)
            return np.array([y[1], factor * y[0], y[3], factor * y[2]])

        solution = integrate.solve_ivp(
            rhs, (left, right), state, method="DOP853", rtol=ODE_RTOL, atol=ODE_ATOL
        )
        if not solution.success:
            raise NumericalError(
                f"transfer integration failed on [{left:g}, {right:g}] at "
                f"x = {solution.t[-1]:.6g}: {solution.message}"
            )
        state = solution.y[:, -1]
    return state


def _plane_wave_coefficients(
    u: complex, du: complex, k: complex, h: float, x: float
) -> Tuple[complex, complex]:
    wavenumber = 1j * k / h
    forward = (u + du / wavenumber) / 2 * cmath.exp(-wavenumber * x)
    backward = (u - du / wavenumber) / 2 * cmath.exp(wavenumber * x)
    return forward, backward


def transfer_schrodinger(potential: ScalarPotential, k: complex, h: float) -> TransferResult:
    """
    Monodromy matrix, transmission A and reflection B at wavenumber k.

    Two independent solutions, started as e^{±ikx/h} at the left end of the
    support, are integrated across it and decomposed on plane waves at the
    right end. On the real axis the result has the SU(1,1) form
    [[1/Ā, −B̄/Ā], [−B/A, 1/A]]; off the axis it is the analytic continuation.

    Raises:
        DomainError: If k = 0
        NumericalError: If the ODE integration fails
    """
    k = complex(k)
    if k == 0:
        raise DomainError("transfer_schrodinger requires k != 0")
    support = potential_support(potential)
    if support is None:
        identity = np.eye(2, dtype=complex)
        return TransferResult(k=k, h=h, monodromy=identity, transmission=1.0, reflection=0.0)
    a, b = support
    wavenumber = 1j * k / h
    f1, f2 = cmath.exp(wavenumber * a), cmath.exp(-wavenumber * a)
    state = np.array([f1, wavenumber * f1, f2, -wavenumber * f2], dtype=complex)
    state = _propagate(potential, k, h, state)
    monodromy = np.empty((2, 2), dtype=complex)
    monodromy[:, 0] = _plane_wave_coefficients(state[0], state[1], k, h, b)
    monodromy[:, 1] = _plane_wave_coefficients(state[2], state[3], k, h, b)
    transmission = 1 / monodromy[1, 1]
    reflection = -monodromy[1, 0] / monodromy[1, 1]
    return TransferResult(
        k=k,
        h=h,
        monodromy=monodromy,
        transmission=complex(transmission),
        reflection=complex(reflection),
    )


@dataclass(frozen=True)
class ScatteringDefects:
    """
    Distances from the group memberships of the monodromy and S-matrix.

    Attributes:
        su11: ‖M†ηM − η‖, η = diag(1, −1)
        determinant: |det M − 1|
        determinant_printed: |(1 − |B|²)/|A|² − 1|
        flux: ||A|² + |B|² − 1|
        unitarity: ‖S†S − I‖
        symmetry: ‖S − Sᵀ‖ for S = [[B, A], [det M·A, B₂]], rows outgoing
            (left, right) and columns incoming (left, right)
    """

    su11: float
    determinant: float
    determinant_printed: float
    flux: float
    unitarity: float
    symmetry: float

    def as_dict(self) -> Dict[str, float]:
        return dataclasses.asdict(self)

    def worst(self) -> float:
        return max(self.as_dict().values())


def su11_u2_checks(m: Matrix2C, a: complex, b: complex) -> ScatteringDefects:
    """Group-membership defects of a monodromy M with amplitudes A and B."""
    m = np.asarray(m, dtype=complex)
    # left incidence transmits det M / m₁₁, right incidence 1 / m₁₁ = A
    s = np.array([[b, a], [np.linalg.det(m) / m[1, 1], m[0, 1] / m[1, 1]]])
    return ScatteringDefects(
        su11=float(np.linalg.norm(m.conj().T @ ETA @ m - ETA)),
        determinant=float(abs(np.linalg.det(m) - 1)),
        determinant_printed=float(abs((1 - abs(b) ** 2) / abs(a) ** 2 - 1)),
        flux=float(abs(abs(a) ** 2 + abs(b) ** 2 - 1)),
        unitarity=float(np.linalg.norm(s.conj().T @ s - np.eye(2))),
        symmetry=float(np.linalg.norm(s - s.T)),
    )


def scattering_table(
    potential: ScalarPotential, ks: Sequence[complex], h: float
) -> pd.DataFrame:
    """(k, A, B, defects) rows for a list of wavenumbers."""
    rows = []
    for k in ks:
        result = transfer_schrodinger(potential, k, h)
        defects = su11_u2_checks(result.monodromy, result.transmission, result.reflection)
        rows.append(
            {
                "k_re": result.k.real,
                "k_im": result.k.imag,
                "A_re": result.transmission.real,
                "A_im": result.transmission.imag,
                "B_re": result.reflection.real,
                "B_im": result.reflection.imag,
                **defects.as_dict(),
            }
        )
    columns = ["k_re", "k_im", "A_re", "A_im", "B_re", "B_im"]
    columns += [f.name for f in dataclasses.fields(ScatteringDefects)]
    return pd.DataFrame(rows, columns=columns)


# --------------------------------------------------------------
# RESONANCES
# --------------------------------------------------------------


@dataclass(frozen=True)
class Rectangle:
    """Axis-parallel rectangle in the complex k-plane."""

    re_min: float
    re_max: float
    im_min: float
    im_max: float

    def __post_init__(self) -> None:
        if not (self.re_max > self.re_min and self.im_max > self.im_min):
            raise DomainError(f"degenerate search rectangle {self}")

    @property
    def centre(self) -> complex:
        return complex((self.re_min + self.re_max) / 2, (self.im_min + self.im_max) / 2)

    def corners(self) -> List[complex]:
        """Counter-clockwise from the lower left corner."""
        return [
            complex(self.re_min, self.im_min),
            complex(self.re_max, self.im_min),
            complex(self.re_max, self.im_max),
            complex(self.re_min, self.im_max),
        ]

    def contains(self, z: complex) -> bool:
        return self.re_min <= z.real <= self.re_max and self.im_min <= z.imag <= self.im_max

    def split(self) -> Tuple["Rectangle", "Rectangle"]:
        """Halve along the longer side."""
        if self.re_max - self.re_min >= self.im_max - self.im_min:
            mid = (self.re_min + self.re_max) / 2
            return (
                dataclasses.replace(self, re_max=mid),
                dataclasses.replace(self, re_min=mid),
            )
        mid = (self.im_min + self.im_max) / 2
        return (
            dataclasses.replace(self, im_max=mid),
            dataclasses.replace(self, im_min=mid),
        )

    def strips(self, count: int) -> List["Rectangle"]:
        edges = np.linspace(self.re_min, self.re_max, count + 1)
        return [
            dataclasses.replace(self, re_min=float(lo), re_max=float(hi))
            for lo, hi in zip(edges[:-1], edges[1:])
        ]

    def inflate(self, factor: float) -> "Rectangle":
        centre = self.centre
        half_w = (self.re_max - self.re_min) * factor / 2
        half_h = (self.im_max - self.im_min) * factor / 2
        return Rectangle(
            centre.real - half_w, centre.real + half_w, centre.imag - half_h, centre.imag + half_h
        )


@dataclass(frozen=True)
class ResonancePole:
    """
    Pole of S(k), a zero of 1/A(k).

    physical follows the sign convention Im k > 0 for physical resonances.
    """

    k: complex
    energy: complex
    physical: bool
    residual: float


class _ContourTrouble(NumericalError):
    pass


def inverse_transmission(potential: ScalarPotential, k: complex, h: float) -> complex:
    """1/A(k), analytic in k; its zeros are the poles of S."""
    result = transfer_schrodinger(potential, k, h)
    return complex(result.monodromy[1, 1])


def winding_number(fn: Callable[[complex], complex], rect: Rectangle) -> int:
    """
    Number of zeros of fn inside rect by the argument principle.

    Boundary segments are bisected until the argument of fn changes by less
    than π/4 along each of them.

    Raises:
        NumericalError: If the contour passes too close to a zero
    """
    corners = rect.corners()
    scale = max(abs(fn(z)) for z in corners + [rect.centre])
    floor = CONTOUR_NEAR_ZERO * scale

    def value(z: complex) -> complex:
        fz = fn(z)
        if abs(fz) < floor:
            raise _ContourTrouble(f"|f| = {abs(fz):.3g} on the contour at k = {z}")
        return fz

    def change(z0: complex, f0: complex, z1: complex, f1: complex, depth: int) -> float:
        step = cmath.phase(f1 / f0)
        if abs(step) < math.pi / 4:
            return step
        if depth >= CONTOUR_MAX_REFINE:
            raise _ContourTrouble(f"argument not resolved between {z0} and {z1}")
        mid = (z0 + z1) / 2
        fm = value(mid)
        return change(z0, f0, mid, fm, depth + 1) + change(mid, fm, z1, f1, depth + 1)

    total = 0.0
    for start, end in zip(corners, corners[1:] + corners[:1]):
        points = [start + (end - start) * t for t in np.linspace(0, 1, CONTOUR_POINTS + 1)]
        values = [value(z) for z in points]
        for i in range(CONTOUR_POINTS):
            total += change(points[i], values[i], points[i + 1], values[i + 1], 0)
    return int(round(total / (2 * math.pi)))


def _newton(fn: Callable[[complex], complex], start: complex, scale: float) -> complex:
    step = 1e-7 * scale

    def slope(z: complex) -> complex:
        return (fn(z + step) - fn(z - step)) / (2 * step)

    return complex(optimize.newton(fn, start, fprime=slope, tol=1e-12, maxiter=60))


def _search(
    potential: ScalarPotential, h: float, rect: Rectangle, depth: int = 0
) -> List[complex]:
    def fn(z: complex) -> complex:
        return inverse_transmission(potential, z, h)

    for attempt in range(CONTOUR_RETRIES + 1):
        try:
            count = winding_number(fn, rect)
            break
        except _ContourTrouble as exc:
            if attempt == CONTOUR_RETRIES:
                raise NumericalError(
                    f"argument principle failed on {rect} after {attempt} retries: {exc}"
                ) from exc
            logger.debug("Perturbing contour (%s)", exc)
            rect = rect.inflate(1 + 0.02 * (attempt + 1))
    logger.debug("%d zero(s) in %s", count, rect)
    if count <= 0:
        return []
    scale = max(rect.re_max - rect.re_min, rect.im_max - rect.im_min)
    if count == 1 or depth >= SEARCH_MAX_DEPTH:
        if depth >= SEARCH_MAX_DEPTH and count > 1:
            logger.warning("Zero of multiplicity %d near %s", count, rect.centre)
        try:
            root: Optional[complex] = _newton(fn, rect.centre, scale)
        except (RuntimeError, ZeroDivisionError):
            root = None
        if root is not None and rect.inflate(1.01).contains(root):
            return [root]
        if depth >= SEARCH_MAX_DEPTH:
            raise NumericalError(f"could not isolate the zero(s) near {rect.centre}")
    roots: List[complex] = []
    for half in rect.split():
        roots.extend(_search(potential, h, half, depth + 1))
    return roots


def _merge_roots(roots: Sequence[complex]) -> List[complex]:
    merged: List[complex] = []
    for root in sorted(roots, key=lambda z: (round(z.real, 10), round(z.imag, 10))):
        if all(abs(root - other) > ROOT_MERGE_TOL for other in merged):
            merged.append(root)
    return merged


def find_resonances(
    potential: ScalarPotential,
    rect: Rectangle,
    h: float,
    *,
    jobs: int = 1,
    progress: bool = False,
) -> List[ResonancePole]:
    """
    Locate the poles of S(k) inside a rectangle of the complex k-plane.

    Zeros of 1/A(k) are counted by the argument principle, isolated by
    bisecting the rectangle, and polished by Newton iteration. With jobs > 1
    vertical strips of the rectangle are searched in parallel and merged in a
    fixed order.

    Raises:
        DomainError: If the rectangle contains k = 0
        NumericalError: If contour retries are exhausted
    """
    if rect.contains(0j):
        raise DomainError("search rectangle must avoid k = 0")
    if potential_support(potential) is None:
        return []
    strips = rect.strips(jobs) if jobs > 1 else [rect]
    roots: List[complex] = []
    if jobs > 1:
        with futures.ProcessPoolExecutor(max_workers=jobs) as executor:
            tasks = [executor.submit(_search, potential, h, strip) for strip in strips]
            for task in tqdm(tasks, desc="strips", disable=not progress):
                roots.extend(task.result())
    else:
        roots = _search(potential, h, rect)
    poles = []
    for k in _merge_roots(roots):
        residual = abs(inverse_transmission(potential, k, h))
        poles.append(
            ResonancePole(k=k, energy=k * k, physical=k.imag > 0, residual=residual)
        )
    logger.info(f"Found {len(poles)} resonance(s) in {rect}")
    return poles


def resonance_frame(poles: Sequence[ResonancePole]) -> pd.DataFrame:
    columns = ["k_re", "k_im", "E_re", "E_im", "physical", "residual"]
    rows = [
        (p.k.real, p.k.imag, p.energy.real, p.energy.imag, p.physical, p.residual)
        for p in poles
    ]
    return pd.DataFrame(rows, columns=columns)


# --------------------------------------------------------------
# SCALAR BOHR-SOMMERFELD
# --------------------------------------------------------------


def _wall(potential: ScalarPotential, energy: float, lo: float, hi: float) -> Tuple[float, float]:
    """Turning point in [lo, hi] and its reflection phase."""
    for point in potential.breakpoints():
        if lo <= point <= hi:
            eps = 1e-12 * max(1.0, abs(point))
            before = float(potential(point - eps)) - energy
            after = float(potential(point + eps)) - energy
            if before * after < 0:
                inside, outside = (before, after) if before < 0 else (after, before)
                return point, 2 * math.atan(math.sqrt(outside / -inside))
    root = optimize.brentq(lambda x: float(potential(x)) - energy, lo, hi, xtol=1e-14)
    return root, math.pi / 2


def _well(
    potential: ScalarPotential, energy: float, samples: int = 4001
) -> Optional[Tuple[float, float, float]]:
    # allowed interval enclosed by forbidden regions on both sides
    a, b = potential_support(potential) or (0.0, 0.0)
    x = np.linspace(a, b, samples)
    allowed = potential(x) < energy
    for i in range(1, samples - 1):
        if allowed[i] and not allowed[i - 1]:
            j = i
            while j < samples - 1 and allowed[j]:
                j += 1
            if j == samples - 1 and allowed[j]:
                return None
            left, phase_left = _wall(potential, energy, x[i - 1], x[i])
            right, phase_right = _wall(potential, energy, x[j - 1], x[j])
            return left, right, (phase_left + phase_right) / 2
    return None


def scalar_bs_levels(
    potential: ScalarPotential, h: float, e_min: float, e_max: float
) -> List[Tuple[int, float]]:
    """
    First-order Bohr-Sommerfeld quasi-levels of the well enclosed by barriers.

    The condition is (1/h)∫√(E − V) dx = πm + (θ_L + θ_R)/2 over the
    enclosed allowed interval, with θ = π/2 at smooth turning points and the
    step reflection phase 2·arctan(√((V_out − E)/(E − V_in))) at walls.

    Returns:
        (m, E) pairs sorted by energy
    """

    def mismatch(energy: float) -> float:
        well = _well(potential, energy)
        if well is None:
            raise DomainError(f"no enclosed well at E = {energy:.6g}")
        left, right, offset = well
        points = [p for p in potential.breakpoints() if left < p < right]
        value, _ = integrate.quad(
            lambda x: math.sqrt(max(energy - float(potential(x)), 0.0)),
            left,
            right,
            points=points or None,
            limit=200,
            epsabs=0.0,
            epsrel=1e-12,
        )
        return value / h - offset

    low, high = mismatch(e_min), mismatch(e_max)
    levels = []
    for m in range(math.ceil(low / math.pi), math.floor(high / math.pi) + 1):
        if not low < m * math.pi < high:
            continue
        energy = optimize.brentq(lambda e: mismatch(e) - m * math.pi, e_min, e_max, xtol=1e-14)
        levels.append((m, energy))
    return levels


# --------------------------------------------------------------
# BDG BANKS
# --------------------------------------------------------------


@dataclass(frozen=True)
class BankMode:
    """
    Exponential solution spinor·exp(exponent·x) in a constant bank.

    Attributes:
        label: F1+, F1−, F2+ or F2−
        family: "Z" (F1 modes) or "Zbar" (F2 modes)
        spinor: Two-component direction
        exponent: Complex exponent (±ik/h or ±ik̄/h)
        decays_right: The mode vanishes as x → +∞
        decays_left: The mode vanishes as x → −∞
    """

    label: str
    family: str
    spinor: NDArray[np.complex128]
    exponent: complex
    decays_right: bool
    decays_left: bool


@dataclass(frozen=True)
class BankBasis:
    """
    The four bank modes at energy E on one side of the junction.

    modes use k = sqrt(μ + E + iΔ₀) with spinors (e^{iφ/2}, ∓i); exact_modes
    solve the constant-coefficient system exactly, k = sqrt(μ + i·sqrt(Δ₀² − E²))
    with spinors (e^{iφ/2}, e^{∓i·arccos(E/Δ₀)}). The two agree at E = 0.
    """

    energy: float
    side: int
    k: complex
    modes: Tuple[BankMode, ...]
    k_exact: complex
    exact_modes: Tuple[BankMode, ...]

    def decaying(self, direction: int, *, exact: bool = True) -> Tuple[BankMode, ...]:
        """Modes that vanish as x → direction·∞."""
        pool = self.exact_modes if exact else self.modes
        if direction > 0:
            return tuple(mode for mode in pool if mode.decays_right)
        return tuple(mode for mode in pool if mode.decays_left)


def _mode_set(
    k: complex, h: float, half_phase: complex, lower_z: complex, lower_zbar: complex
) -> Tuple[BankMode, ...]:
    modes = []
    for family, base, lower in (("Z", k, lower_z), ("Zbar", k.conjugate(), lower_zbar)):
        spinor = np.array([half_phase, lower], dtype=complex)
        number = "1" if family == "Z" else "2"
        for sign, suffix in ((1, "+"), (-1, "-")):
            exponent = sign * 1j * base / h
            modes.append(
                BankMode(
                    label=f"F{number}{suffix}",
                    family=family,
                    spinor=spinor,
                    exponent=exponent,
                    decays_right=exponent.real < 0,
                    decays_left=exponent.real > 0,
                )
            )
    return tuple(modes)


def bank_basis(profile: PotentialProfile, energy: float, *, side: int = 1) -> BankBasis:
    """
    Spinor bases of exponential solutions in the bank x → side·∞.

    Raises:
        DomainError: Unless 0 < E < Δ₀
    """
    if not 0 < energy < profile.delta0:
        raise DomainError(f"bank_basis requires 0 < E < delta0, got E = {energy!r}")
    mu = profile.bank_mu
    h = profile.h
    half_phase = cmath.exp(0.5j * math.copysign(1.0, side) * profile.phi)
    k = cmath.sqrt(mu + energy + 1j * profile.delta0)
    split = math.sqrt(profile.delta0**2 - energy**2)
    k_exact = cmath.sqrt(mu + 1j * split)
    angle = math.acos(energy / profile.delta0)
    return BankBasis(
        energy=energy,
        side=1 if side > 0 else -1,
        k=k,
        modes=_mode_set(k, h, half_phase, -1j, 1j),
        k_exact=k_exact,
        exact_modes=_mode_set(
            k_exact, h, half_phase, cmath.exp(-1j * angle), cmath.exp(1j * angle)
        ),
    )


# --------------------------------------------------------------
# RELATIVE MONODROMY
# --------------------------------------------------------------


@dataclass(frozen=True)
class RelativePhase:
    """
    Relative monodromy data of a wavefunction between the branching points.

    Attributes:
        d: Right-to-left coefficient ratio of the electron mode of the loop
        tau_over_h: arg d minus the electron action phase between the windows
        closure: Phase accumulated around the dominant loop, in (−π, π]
        loop: +1 for the ξ > 0 loop, −1 for its mirror
        left: Fit in the left window
        right: Fit in the right window
        window: Window offset δ from the branching points
    """

    d: complex
    tau_over_h: float
    closure: float
    loop: int
    left: WkbFit
    right: WkbFit
    window: float

    @property
    def modulus(self) -> float:
        return abs(self.d)


def _wrap(angle: float) -> float:
    return math.remainder(angle, 2 * math.pi)


def relative_phase(
    profile: PotentialProfile,
    energy: float,
    psi: "GridWavefunction",
    *,
    window: Optional[float] = None,
) -> RelativePhase:
    """
    Extract the relative monodromy phase of a wavefunction at energy E.

    The wavefunction is fitted to the four leading-order WKB modes in the
    windows [x_L + δ, x_L + 2δ] and [x_E − 2δ, x_E − δ], δ = 5h/sqrt(μ₀). The
    loop carrying most of the amplitude is reported; its closure phase is
    zero modulo 2π at an eigenvalue of that loop.

    Raises:
        DomainError: If the windows do not fit inside the allowed region, hold
            too few nodes, or the fit is ill-conditioned
    """
    h = profile.h
    delta = window if window is not None else 5 * h / math.sqrt(profile.mu0)
    cut = make_energy_slice(profile, energy)
    if not 2 * delta < (cut.x_branch - cut.x_left) / 2:
        raise DomainError(f"windows of width {delta:.3g} overlap inside the junction")
    x = np.asarray(psi.x_grid)
    fits = []
    for lo, hi in (
        (cut.x_left + delta, cut.x_left + 2 * delta),
        (cut.x_branch - 2 * delta, cut.x_branch - delta),
    ):
        mask = (x >= lo) & (x <= hi)
        if mask.sum() < MIN_WINDOW_NODES:
            raise DomainError(
                f"window [{lo:.4g}, {hi:.4g}] holds {mask.sum()} grid nodes; "
                f"need {MIN_WINDOW_NODES}"
            )
        fits.append(fit_wkb_modes(profile, energy, x[mask], psi.u1[mask], psi.u2[mask]))
    left, right = fits
    forward = left.loop_weight(1) + right.loop_weight(1)
    backward = left.loop_weight(-1) + right.loop_weight(-1)
    loop = 1 if forward >= backward else -1
    electron, hole = ("e+", "h+") if loop > 0 else ("e-", "h-")
    d = right.coefficient(electron) / left.coefficient(electron)
    d_hole = right.coefficient(hole) / left.coefficient(hole)

    def electron_momentum(s: float) -> float:
        branches = kinetic_branches(profile, energy, s)
        return math.sqrt(branches[0]) if branches else 0.0

    momentum, _ = integrate.quad(
        electron_momentum,
        left.centre,
        right.centre,
        limit=200,
        epsabs=0.0,
        epsrel=1e-12,
    )
    tau_over_h = _wrap(cmath.phase(d) - loop * momentum / h)
    ends = turning_action(profile, energy, right.centre, side=1)
    ends += turning_action(profile, energy, left.centre, side=-1)
    closure = _wrap(loop * (cmath.phase(d) - cmath.phase(d_hole)) + ends / h + math.pi)
    logger.debug(
        "E = %.8g: loop %+d, |d| = %.4f, closure %.3e", energy, loop, abs(d), closure
    )
    return RelativePhase(
        d=complex(d),
        tau_over_h=tau_over_h,
        closure=closure,
        loop=loop,
        left=left,
        right=right,
        window=delta,
    )
