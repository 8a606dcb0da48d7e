"""
Command-line interface

andreev-bs spectrum | scatter | verify | pcf

Every command writes its tables next to a manifest.json in the output
directory (--out, overridden by ANDREEV_BS_OUT). Files are staged and only
published when the command succeeds.

Exit codes: 0 success, 1 verification failure, 2 usage or configuration
error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import math
import os
import sys
import time
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from . import __version__
from .bs import (
    compare_levels,
    solve_level_families,
    spectrum_table,
    supercurrent,
    unmatched_levels,
)
from .classical import normal_form_F0
from .errors import (
    ConfigError,
    DomainError,
    NumericalError,
    PoleError,
    ProfileError,
)
from .io import ArtifactStage, RunManifest
from .model import (
    PotentialProfile,
    SimulationConfig,
    check_compatible,
    config_echo,
    load_config_file,
    with_h,
)
from .oracle import (
    best_energies,
    discretize,
    eigen_gap,
    oracle_levels,
    phase_ramp,
    quantum_flux,
    symmetry_spectrum,
)
from .scattering import (
    BumpPotential,
    Rectangle,
    ScatteringDefects,
    find_resonances,
    piecewise_potential,
    resonance_frame,
    scattering_table,
    su11_u2_checks,
    transfer_schrodinger,
)
from .specfun import pcf_d, pcf_table

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2
EXIT_NUMERICAL = 3

DEFAULT_OUT = "andreev_bs_out"
DEFAULT_RECT = (0.5, 2.0, -0.2, 0.05)
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

CHECK_GROUPS = ("flux", "symmetry", "weber", "normal_form", "scattering", "supercurrent")
FLUX_GRID_POINTS = 8001
FLUX_TOL = 1e-4
FLUX_CONTROL_MIN = 1e-1
SYMMETRY_TOL = 1e-10
WEBER_TOL = 1e-8
CLOSED_FORM_TOL = 1e-12
RECURRENCE_TOL = 1e-9
F0_EXACT_TOL = 1e-12
F0_SMALL_BETA_TOL = 1e-4
SCATTERING_TOL = 1e-9
SCATTERING_SAMPLES = 50
SCATTERING_KS = 10
SCATTERING_H = 0.1
RANDOM_SEED = 20240607
CURRENT_TOL = 1e-3
BROKEN_ASYMMETRY = 0.1


# --------------------------------------------------------------
# ARGUMENT TYPES
# --------------------------------------------------------------


def _float_token(token: str) -> float:
    token = token.strip().lower()
    if token in ("pi", "+pi"):
        return math.pi
    if token == "-pi":
        return -math.pi
    return float(token)


def parse_float_list(text: str) -> List[float]:
    """Comma list of floats ("pi" and "-pi" are accepted)."""
    try:
        values = [_float_token(token) for token in text.split(",") if token.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a list of numbers: {text!r}") from exc
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def parse_phis(text: str) -> List[float]:
    """Comma list or start:stop:count."""
    if ":" not in text:
        return parse_float_list(text)
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected start:stop:count, got {text!r}")
    try:
        start, stop = _float_token(parts[0]), _float_token(parts[1])
        count = int(parts[2])
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected start:stop:count, got {text!r}") from exc
    if count < 1:
        raise argparse.ArgumentTypeError("count must be positive")
    return [float(v) for v in np.linspace(start, stop, count)]


def parse_complex_list(text: str) -> List[complex]:
    """Comma list of complex numbers in Python syntax, e.g. 0,1.5,3-1j,2j."""
    try:
        values = [complex(token.strip()) for token in text.split(",") if token.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a list of complex numbers: {text!r}") from exc
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def parse_rect(text: str) -> Rectangle:
    """re_min,re_max,im_min,im_max"""
    values = parse_float_list(text)
    if len(values) != 4:
        raise argparse.ArgumentTypeError("--rect needs re_min,re_max,im_min,im_max")
    try:
        return Rectangle(*values)
    except DomainError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    """Create and validate CLI arguments.

    Returns:
        Parsed command-line namespace
    """
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML or JSON configuration document.")
    common.add_argument(
        "--out",
        default=DEFAULT_OUT,
        help=f"Output directory (default: {DEFAULT_OUT}; ANDREEV_BS_OUT overrides).",
    )
    common.add_argument(
        "--jobs", type=int, default=1, help="Worker processes for independent tasks."
    )
    noise = common.add_mutually_exclusive_group()
    noise.add_argument("--verbose", action="store_true", help="Log at DEBUG level.")
    noise.add_argument(
        "--quiet", action="store_true", help="Log warnings only, no progress bars."
    )

    parser = argparse.ArgumentParser(
        prog="andreev-bs",
        description="Semiclassical Andreev levels of SNS junctions and their oracles.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    commands = parser.add_subparsers(dest="command", required=True)

    spectrum = commands.add_parser(
        "spectrum", parents=[common], help="Bohr-Sommerfeld levels against the oracles."
    )
    spectrum.add_argument(
        "--phis", type=parse_phis, help="Phases: comma list or start:stop:count."
    )
    spectrum.add_argument(
        "--h-sweep", type=parse_float_list, help="Comma list of h values."
    )
    spectrum.add_argument(
        "--skip-shooting",
        action="store_true",
        help="Use Richardson-extrapolated finite differences only.",
    )
    spectrum.set_defaults(handler=cmd_spectrum)

    scatter = commands.add_parser(
        "scatter", parents=[common], help="Scalar scattering matrices and resonances."
    )
    scatter.add_argument(
        "--potential",
        required=True,
        help="free | barrier:V0:a:b[,...] | bump:V0:c:r[,...] | file:PATH",
    )
    scatter.add_argument(
        "--rect",
        type=parse_rect,
        default=Rectangle(*DEFAULT_RECT),
        help="Search rectangle re_min,re_max,im_min,im_max in the k-plane.",
    )
    scatter.add_argument(
        "--k-points", type=int, default=50, help="Real k samples for smatrix.csv."
    )
    scatter.set_defaults(handler=cmd_scatter)

    verify = commands.add_parser(
        "verify", parents=[common], help="Run the invariant suite."
    )
    verify.add_argument("--only", choices=CHECK_GROUPS, help="Run one group of checks.")
    verify.add_argument(
        "--break-symmetry",
        action="store_true",
        help=f"Inject asymmetry = {BROKEN_ASYMMETRY} into the symmetry checks.",
    )
    verify.set_defaults(handler=cmd_verify)

    pcf = commands.add_parser("pcf", parents=[common], help="Tabulate D_nu(z).")
    pcf.add_argument("--nu", type=float, required=True, help="Real order.")
    pcf.add_argument(
        "--z", type=parse_complex_list, required=True, help="Comma list, e.g. 0,1.3,3-1j."
    )
    pcf.set_defaults(handler=cmd_pcf)

    args = parser.parse_args(argv)
    if args.jobs < 1:
        parser.error("--jobs must be at least 1")
    if getattr(args, "k_points", 2) < 2:
        parser.error("--k-points must be at least 2")
    return args


# --------------------------------------------------------------
# SHARED
# --------------------------------------------------------------


def _configure_logging(args: argparse.Namespace) -> None:
    level = os.environ.get("LOG_LEVEL", "INFO").upper()
    if args.verbose:
        level = "DEBUG"
    elif args.quiet:
        level = "WARNING"
    logging.basicConfig(level=level, format=LOG_FORMAT)
    logging.getLogger("andreev_bs").setLevel(level)


def _progress(args: argparse.Namespace) -> bool:
    return not args.quiet and sys.stderr.isatty()


def _output_dir(args: argparse.Namespace) -> str:
    return os.environ.get("ANDREEV_BS_OUT") or args.out


def _load(args: argparse.Namespace) -> Tuple[PotentialProfile, SimulationConfig]:
    if args.config:
        profile, config = load_config_file(args.config)
    else:
        profile, config = PotentialProfile(), SimulationConfig()
    check_compatible(profile, config)
    return profile, config


def _manifest(
    command: str, profile: PotentialProfile, config: SimulationConfig, started: float
) -> RunManifest:
    return RunManifest(
        command=command,
        config=config_echo(profile, config),
        version=__version__,
        duration=time.perf_counter() - started,
    )


# --------------------------------------------------------------
# SPECTRUM
# --------------------------------------------------------------


def _level_ranks(frame: pd.DataFrame) -> pd.Series:
    # oracle energies without a partner have no orbit and get rank −1
    ranks = frame.groupby("orbit")["E_bs"].rank(method="first") - 1
    return ranks.reindex(frame.index).fillna(-1).astype(int)


def cmd_spectrum(args: argparse.Namespace) -> int:
    """Levels from the quantization rule, the oracle levels and their comparison."""
    started = time.perf_counter()
    profile, config = _load(args)
    phis = args.phis or [profile.phi]
    hs = args.h_sweep or [profile.h]
    progress = _progress(args)
    # every h is validated before anything is computed
    for h in hs:
        discretize(with_h(profile, h), config)

    level_tables, oracle_tables, comparisons = [], [], []
    counts: Dict[str, bool] = {}
    for h in tqdm(hs, desc="h", disable=not progress or len(hs) == 1):
        at_h = with_h(profile, h)
        table = spectrum_table(
            at_h, phis, config=config, jobs=args.jobs, progress=progress
        )
        table["h"] = h
        level_tables.append(table)
        oracle = oracle_levels(
            at_h, config, shoot=not args.skip_shooting, jobs=args.jobs, progress=progress
        )
        oracle_tables.append(oracle)
        levels = solve_level_families(at_h, config)
        comparison = compare_levels(levels, best_energies(oracle), profile.delta0)
        comparison.insert(0, "h", h)
        comparison.insert(1, "level", _level_ranks(comparison))
        comparisons.append(comparison)
        lonely = unmatched_levels(comparison)
        counts[f"level_count_h={h:g}"] = lonely.empty
        if not lonely.empty:
            logger.warning(
                f"h = {h:g}: {len(levels)} quantization levels, {len(oracle)} oracle levels, "
                f"{len(lonely)} unpaired away from the gap edges"
            )

    comparison = pd.concat(comparisons, ignore_index=True)
    reliable = comparison[~comparison["edge_unreliable"]].groupby("h", sort=False)
    worst = reliable["abs_error"].max()
    median = reliable["abs_error"].median()
    following = worst.shift(-1)
    comparison["max_error"] = comparison["h"].map(worst)
    comparison["ratio"] = comparison["h"].map(worst / following)
    comparison["median_error"] = comparison["h"].map(median)
    comparison["median_ratio"] = comparison["h"].map(median / median.shift(-1))
    levels_bs = pd.concat(level_tables, ignore_index=True)

    with ArtifactStage(_output_dir(args)) as stage:
        stage.csv("levels_bs.csv", levels_bs)
        stage.csv("levels_oracle.csv", pd.concat(oracle_tables, ignore_index=True))
        stage.csv("comparison.csv", comparison)
        stage.gnuplot(
            "dispersion",
            levels_bs,
            x="phi",
            y="E",
            group=["h", "orbit", "n"],
            title="Andreev levels E_n(phi)",
        )
        manifest = _manifest("spectrum", profile, config, started)
        manifest.checks = counts
        stage.commit(manifest)
    logger.info(
        "Max |E_bs - E_oracle| per h: %s",
        ", ".join(f"{h:g}: {err:.3e}" for h, err in worst.items()),
    )
    return EXIT_OK


# --------------------------------------------------------------
# SCATTER
# --------------------------------------------------------------


def cmd_scatter(args: argparse.Namespace) -> int:
    """S-matrix table on the real axis and resonances inside --rect."""
    started = time.perf_counter()
    profile, config = _load(args)
    potential = piecewise_potential(args.potential)
    rect: Rectangle = args.rect
    ks = np.linspace(max(rect.re_min, 1e-3), rect.re_max, args.k_points)
    table = scattering_table(potential, ks, profile.h)
    poles = find_resonances(
        potential, rect, profile.h, jobs=args.jobs, progress=_progress(args)
    )
    resonances = resonance_frame(poles)
    defect_columns = [f.name for f in dataclasses.fields(ScatteringDefects)]
    worst = float(table[defect_columns].to_numpy().max()) if len(table) else 0.0

    with ArtifactStage(_output_dir(args)) as stage:
        stage.csv("smatrix.csv", table)
        stage.csv("resonances.csv", resonances)
        stage.json(
            "resonances.json",
            {
                "potential": args.potential,
                "h": profile.h,
                "rectangle": dataclasses.asdict(rect),
                "resonances": resonances.to_dict(orient="records"),
            },
        )
        manifest = _manifest("scatter", profile, config, started)
        manifest.checks = {"smatrix_defects": worst <= SCATTERING_TOL}
        stage.commit(manifest)
    logger.info(f"{len(poles)} resonances inside {rect}")
    return EXIT_OK


# --------------------------------------------------------------
# VERIFY
# --------------------------------------------------------------


@dataclass(frozen=True)
class Check:
    """
    One named check of the verify report.

    A check passes when value <= threshold, or value >= threshold for
    negative controls (at_least).
    """

    name: str
    group: str
    value: float
    threshold: float
    at_least: bool = False
    detail: str = ""

    @property
    def passed(self) -> bool:
        if math.isnan(self.value):
            return False
        if self.at_least:
            return self.value >= self.threshold
        return self.value <= self.threshold

    def as_dict(self) -> Dict[str, object]:
        record = dataclasses.asdict(self)
        record["passed"] = self.passed
        return record


def _flux_checks(profile: PotentialProfile, config: SimulationConfig) -> List[Check]:
    fine = dataclasses.replace(
        config, grid_points=max(config.grid_points, FLUX_GRID_POINTS)
    )
    pairs = eigen_gap(discretize(profile, fine))
    deviations = [quantum_flux(psi, profile).relative_deviation for _, psi in pairs]
    checks = [
        Check(
            "flux_conservation",
            "flux",
            max(deviations) if deviations else math.nan,
            FLUX_TOL,
            detail=f"{len(pairs)} gap eigenfunctions at N = {fine.grid_points}",
        )
    ]
    if pairs:
        ramp = 4 * math.sqrt(profile.mu0) / profile.h
        control = quantum_flux(phase_ramp(pairs[0][1], ramp), profile)
        checks.append(
            Check(
                "flux_negative_control",
                "flux",
                control.relative_deviation,
                FLUX_CONTROL_MIN,
                at_least=True,
                detail="u1 multiplied by a phase ramp",
            )
        )
    return checks


def _symmetry_checks(profile: PotentialProfile, config: SimulationConfig) -> List[Check]:
    report = symmetry_spectrum(profile, config)
    detail = f"asymmetry = {profile.asymmetry:g}, {report.levels} gap levels"
    return [
        Check(
            "charge_conjugation",
            "symmetry",
            report.charge_conjugation,
            SYMMETRY_TOL,
            detail=detail,
        ),
        Check("pt", "symmetry", report.pt, SYMMETRY_TOL, detail=detail),
    ]


def _weber_checks() -> List[Check]:
    nus = np.arange(-5.0, 5.0 + 1e-9, 0.25)
    path = np.linspace(-5.0, 5.0, 20)
    points = [complex(x) for x in path] + [complex(0.0, y) for y in path]
    weber = max(row[2] for nu in nus for row in pcf_table(float(nu), points))
    closed = 0.0
    for z in (0.0, 1.0, 2j):
        exact = np.exp(-complex(z) ** 2 / 4)
        closed = max(closed, abs(pcf_d(0.0, z).value - exact) / abs(exact))
    exact = 1.3 * math.exp(-1.3**2 / 4)
    closed = max(closed, abs(pcf_d(1.0, 1.3).value - exact) / exact)
    rng = np.random.default_rng(RANDOM_SEED)
    recurrence = 0.0
    for _ in range(200):
        nu = float(rng.uniform(-4.0, 4.0))
        z = complex(rng.uniform(-4.0, 4.0), rng.uniform(-2.0, 2.0))
        values = [pcf_d(nu + shift, z).value for shift in (-1, 0, 1)]
        scale = max(abs(v) for v in values) * max(1.0, abs(z), abs(nu))
        residual = values[2] - z * values[1] + nu * values[0]
        recurrence = max(recurrence, abs(residual) / scale)
    return [
        Check(
            "weber_residual",
            "weber",
            weber,
            WEBER_TOL,
            detail=f"{len(nus)} orders x {len(points)} points",
        ),
        Check("closed_forms", "weber", closed, CLOSED_FORM_TOL, detail="D_0 and D_1"),
        Check(
            "recurrence", "weber", recurrence, RECURRENCE_TOL, detail="200 random (nu, z)"
        ),
    ]


def _normal_form_checks() -> List[Check]:
    ts = np.linspace(0.1, 1.0, 10)
    exact = max(abs(normal_form_F0(0.0, t) - t / 2) for t in ts)
    small = [normal_form_F0(1e-3, t) for t in ts]
    near = max(abs(f - t / 2) for f, t in zip(small, ts))
    steps = np.diff(small)
    return [
        Check("F0_harmonic", "normal_form", exact, F0_EXACT_TOL, detail="beta = 0"),
        Check("F0_small_beta", "normal_form", near, F0_SMALL_BETA_TOL, detail="beta = 1e-3"),
        Check(
            "F0_monotone",
            "normal_form",
            float(-np.min(steps)),
            0.0,
            detail="minus the smallest increment on t in [0.1, 1]",
        ),
    ]


def _random_bumps(rng: np.random.Generator) -> BumpPotential:
    count = int(rng.integers(1, 4))
    return BumpPotential(
        bumps=tuple(
            (
                float(rng.uniform(-0.5, 0.5)),
                float(rng.uniform(-2.0, 2.0)),
                float(rng.uniform(0.3, 1.0)),
            )
            for _ in range(count)
        )
    )


def _scattering_checks() -> List[Check]:
    rng = np.random.default_rng(RANDOM_SEED)
    worst: Dict[str, float] = {}
    for _ in range(SCATTERING_SAMPLES):
        potential = _random_bumps(rng)
        for k in rng.uniform(1.0, 2.0, SCATTERING_KS):
            result = transfer_schrodinger(potential, complex(k), SCATTERING_H)
            defects = su11_u2_checks(
                result.monodromy, result.transmission, result.reflection
            )
            for name, value in defects.as_dict().items():
                worst[name] = max(worst.get(name, 0.0), value)
    detail = f"{SCATTERING_SAMPLES} smooth potentials x {SCATTERING_KS} real k"
    return [
        Check(f"scattering_{name}", "scattering", value, SCATTERING_TOL, detail=detail)
        for name, value in worst.items()
    ]


def _supercurrent_checks(
    profile: PotentialProfile, config: SimulationConfig
) -> List[Check]:
    worst = 0.0
    count = 0
    for level in solve_level_families(profile, config):
        if level.edge_unreliable:
            continue
        try:
            checked = supercurrent(profile, level, config)
        except NumericalError as exc:
            logger.warning(str(exc))
            worst = math.inf
            continue
        count += 1
        worst = max(
            worst,
            abs(checked.supercurrent - checked.supercurrent_fd) / abs(checked.supercurrent),
        )
    return [
        Check(
            "supercurrent_agreement",
            "supercurrent",
            worst,
            CURRENT_TOL,
            detail=f"{count} levels, implicit h/T against dE/dphi",
        )
    ]


def run_checks(
    profile: PotentialProfile,
    config: SimulationConfig,
    *,
    only: Optional[str] = None,
    break_symmetry: bool = False,
) -> List[Check]:
    """Run the invariant suite, or one group of it."""
    broken = (
        dataclasses.replace(profile, asymmetry=BROKEN_ASYMMETRY)
        if break_symmetry
        else profile
    )
    suite: Dict[str, Callable[[], List[Check]]] = {
        "flux": lambda: _flux_checks(profile, config),
        "symmetry": lambda: _symmetry_checks(broken, config),
        "weber": _weber_checks,
        "normal_form": _normal_form_checks,
        "scattering": _scattering_checks,
        "supercurrent": lambda: _supercurrent_checks(profile, config),
    }
    checks: List[Check] = []
    for group in CHECK_GROUPS:
        if only is not None and group != only:
            continue
        logger.info(f"Running {group} checks")
        checks.extend(suite[group]())
    return checks


def cmd_verify(args: argparse.Namespace) -> int:
    """Write verify_report.json; exit 1 when any check fails."""
    started = time.perf_counter()
    profile, config = _load(args)
    checks = run_checks(
        profile, config, only=args.only, break_symmetry=args.break_symmetry
    )
    passed = all(check.passed for check in checks)
    for check in checks:
        if not check.passed:
            logger.error(
                f"Check {check.name} failed: {check.value:.3e} against {check.threshold:.1e}"
            )
    with ArtifactStage(_output_dir(args)) as stage:
        stage.json(
            "verify_report.json",
            {
                "passed": passed,
                "only": args.only,
                "break_symmetry": args.break_symmetry,
                "checks": [check.as_dict() for check in checks],
            },
        )
        manifest = _manifest("verify", profile, config, started)
        manifest.checks = {check.name: check.passed for check in checks}
        stage.commit(manifest)
    return EXIT_OK if passed else EXIT_FAILED


# --------------------------------------------------------------
# PCF
# --------------------------------------------------------------


def cmd_pcf(args: argparse.Namespace) -> int:
    """Print and write (z, D_nu(z), Weber residual) rows."""
    started = time.perf_counter()
    profile, config = _load(args)
    rows = pcf_table(args.nu, args.z)
    table = pd.DataFrame(
        [(z.real, z.imag, d.real, d.imag, r) for z, d, r in rows],
        columns=["z_re", "z_im", "D_re", "D_im", "residual"],
    )
    table.insert(0, "nu", args.nu)
    with ArtifactStage(_output_dir(args)) as stage:
        stage.csv("pcf.csv", table)
        stage.commit(_manifest("pcf", profile, config, started))
    sys.stdout.write(table.to_csv(index=False, float_format="%.16e", lineterminator="\n"))
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    """CLI entry point.

    Returns:
        Integer exit status: 0 success, 1 failed checks, 2 usage or
        configuration error, 3 numerical failure
    """
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    _configure_logging(args)

    try:
        return args.handler(args)
    except (ConfigError, DomainError, FileNotFoundError) as exc:
        logger.error(str(exc))
        return EXIT_USAGE
    except (NumericalError, ProfileError, PoleError) as exc:
        logger.error(f"Numerical failure: {exc}")
        return EXIT_NUMERICAL


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
