"""
Tests for the finite-difference and shooting oracles.
"""

import dataclasses
import math

import numpy as np
import pandas as pd
import pytest

from andreev_bs.bs import compare_levels, solve_level_families, unmatched_levels
from andreev_bs.classical import make_energy_slice
from andreev_bs.errors import DomainError, NumericalError, ResolutionError
from andreev_bs.model import PotentialProfile, SimulationConfig, with_h, with_phase
from andreev_bs.oracle import (
    ORACLE_COLUMNS,
    WAVEFUNCTION_COLUMNS,
    assemble_operator,
    best_energies,
    convergence_ratio,
    discretize,
    double_resolution,
    eigen_gap,
    export_wavefunction,
    gap_eigenvalues,
    match_grid_levels,
    oracle_levels,
    phase_ramp,
    quantum_flux,
    refine_level,
    required_points,
    richardson,
    shoot_determinant,
    shoot_wavefunction,
    symmetry_spectrum,
)


@pytest.fixture(scope="module")
def default_pairs():
    """Gap eigenpairs of the default junction on the default grid."""
    return eigen_gap(discretize(PotentialProfile(), SimulationConfig()))


@pytest.fixture(scope="module")
def default_oracle():
    """Richardson-extrapolated gap levels of the default junction."""
    return oracle_levels(PotentialProfile(), SimulationConfig(), shoot=False)


@pytest.fixture(scope="module")
def comparisons():
    """Quantization levels against Richardson oracle levels at h = 0.05 and 0.025."""
    profile, config = PotentialProfile(), SimulationConfig()
    frames = {}
    for h in (0.05, 0.025):
        at_h = with_h(profile, h)
        oracle = best_energies(oracle_levels(at_h, config, shoot=False))
        frames[h] = compare_levels(solve_level_families(at_h, config), oracle, profile.delta0)
    return frames


class TestAssembly:
    """Test the banded operator."""

    def test_hand_computed_entries(self):
        """Five nodes with constant potentials."""
        x = np.arange(5) * 0.1
        op = assemble_operator(x, 0.3, 2.0, 0.4, 0.2, 1.0)
        matrix = op.to_sparse().toarray()
        c = 4.0
        coupling = 0.3 * np.exp(0.2j)
        assert op.size == 10
        assert op.dx == pytest.approx(0.1)
        assert matrix[0, 0] == pytest.approx(2 * c - 2.0)
        assert matrix[1, 1] == pytest.approx(-2 * c + 2.0)
        assert matrix[0, 1] == pytest.approx(coupling)
        assert matrix[1, 0] == pytest.approx(np.conj(coupling))
        assert matrix[0, 2] == pytest.approx(-c)
        assert matrix[1, 3] == pytest.approx(c)
        assert matrix[0, 3] == 0
        assert matrix[1, 2] == 0
        assert matrix[0, 4] == 0

    def test_exactly_hermitian(self, profile, coarse_config):
        """The full matrix equals its conjugate transpose bit for bit."""
        matrix = discretize(profile, coarse_config).to_sparse()
        defect = matrix - matrix.conj().T
        assert defect.count_nonzero() == 0

    def test_hard_box(self):
        """With Δ = 0 the spectrum is ±(scalar box levels − μ)."""
        interior = 20
        x = np.arange(1, interior + 1) * 0.1
        op = assemble_operator(x, 0.0, 2.0, 0.0, 0.1, 1.1)
        scalar = 4 * np.sin(np.arange(1, interior + 1) * math.pi / (2 * (interior + 1))) ** 2
        expected = np.concatenate([scalar - 2.0, 2.0 - scalar])
        expected = np.sort(expected[np.abs(expected) < 1.1 * (1 - 1e-6)])
        values = gap_eigenvalues(op)
        assert values.size == expected.size
        assert np.allclose(values, expected, atol=1e-10)

    def test_resolution_refused(self, coarse_config):
        """Too few points per wavelength gives the required count."""
        profile = PotentialProfile(h=0.005)
        with pytest.raises(ResolutionError) as info:
            discretize(profile, coarse_config)
        needed = info.value.required_points
        assert needed == required_points(profile, coarse_config)
        assert needed % 2 == 1
        assert needed > coarse_config.grid_points

    def test_double_resolution(self, config):
        """Halving dx keeps x = 0 on a node."""
        finer = double_resolution(config)
        assert finer.grid_points == 2 * config.grid_points - 1
        assert finer.dx == pytest.approx(config.dx / 2)


class TestEigenGap:
    """Test the gap eigenpairs."""

    def test_sorted_inside_gap(self, default_pairs):
        """Eigenvalues are sorted and inside the shrunken gap."""
        energies = [energy for energy, _ in default_pairs]
        assert energies
        assert energies == sorted(energies)
        assert all(abs(e) < 1 - 1e-6 for e in energies)

    def test_wavefunctions(self, default_pairs):
        """Unit norm, zero boundary values and the energy attached."""
        for energy, psi in default_pairs:
            assert psi.norm == pytest.approx(1.0, abs=1e-12)
            assert psi.u1[0] == psi.u1[-1] == 0
            assert psi.u2[0] == psi.u2[-1] == 0
            assert psi.energy == energy
            assert psi.x_grid[0] == pytest.approx(-6.0)
            assert psi.x_grid[-1] == pytest.approx(6.0)

    def test_spectrum_symmetric(self, default_pairs):
        """The gap spectrum is symmetric under E ↦ −E."""
        energies = np.array([energy for energy, _ in default_pairs])
        assert np.max(np.abs(energies + energies[::-1])) <= 1e-10

    def test_richardson(self):
        """Exact for sequences E₀ + a·dx²."""
        assert richardson([1.4, 2.4], [1.1, 2.1]) == pytest.approx([1.0, 2.0])

    def test_convergence_ratio(self):
        """Second-order sequences give 4."""
        assert convergence_ratio([1.16], [1.04], [1.01]) == pytest.approx([4.0])

    def test_second_order_convergence(self):
        """Gap eigenvalues converge at order dx² as N doubles."""
        profile = PotentialProfile(h=0.1)
        grids = [SimulationConfig(grid_points=n) for n in (1001, 2001, 4001)]
        spectra = [gap_eigenvalues(discretize(profile, grid)) for grid in grids]
        reference = spectra[-1][np.argmin(np.abs(spectra[-1] - 0.5))]
        picked = [spectrum[np.argmin(np.abs(spectrum - reference))] for spectrum in spectra]
        ratio = convergence_ratio(*picked)
        assert 3.5 <= float(ratio) <= 4.5

    def test_oracle_levels_table(self, default_oracle):
        """Positive levels with NaN shooting columns when shooting is off."""
        assert list(default_oracle.columns) == ORACLE_COLUMNS
        assert (default_oracle["E_fd"] > 0).all()
        assert default_oracle["E_shoot"].isna().all()
        assert np.array_equal(best_energies(default_oracle), default_oracle["E_richardson"].to_numpy())


class TestGridMatching:
    """Test the pairing of coarse- and fine-grid levels."""

    def test_edge_state_dropped(self):
        """A state on one grid only is dropped inside the edge band."""
        coarse, fine = match_grid_levels([0.1, 0.5, 0.9998], [0.1001, 0.5002], 1.0)
        assert coarse.tolist() == [0.1, 0.5]
        assert fine.tolist() == [0.1001, 0.5002]

    def test_pairs_by_nearest_energy(self):
        """The surplus state may sit anywhere in the edge band."""
        coarse, fine = match_grid_levels([0.3, 0.6], [0.0004, 0.3001, 0.6001], 1.0)
        assert coarse.tolist() == [0.3, 0.6]
        assert fine.tolist() == [0.3001, 0.6001]

    def test_interior_state_raises(self):
        """A lost state away from the edges is a failure."""
        with pytest.raises(NumericalError):
            match_grid_levels([0.1, 0.5, 0.7], [0.1001, 0.7001], 1.0)

    def test_refined_grid_at_smaller_h(self, profile, config):
        """The edge state that leaves the window at h = 0.025 is not fatal."""
        table = oracle_levels(with_h(profile, 0.025), config, shoot=False)
        energies = table["E_fd"].to_numpy()
        assert len(table) == 42
        assert np.all(np.diff(energies) > 0)
        edge = table["edge_unreliable"].to_numpy()
        assert edge[(energies < 1e-3) | (energies > 1 - 1e-3)].all()


class TestAgreement:
    """Test the quantization rule against the oracle as h shrinks."""

    @pytest.mark.parametrize("h", [0.05, 0.025])
    def test_level_counts_agree(self, comparisons, h):
        """Every level away from the gap edges has an oracle partner."""
        assert unmatched_levels(comparisons[h]).empty

    def test_max_error_shrinks_at_least_linearly(self, comparisons):
        """The worst level converges at first order or better."""
        worst = {
            h: frame.loc[~frame["edge_unreliable"], "abs_error"].max()
            for h, frame in comparisons.items()
        }
        assert worst[0.025] <= 1e-2
        assert worst[0.05] / worst[0.025] >= 1.5

    def test_median_error_shrinks_faster(self, comparisons):
        """Away from the lowest levels the error falls faster than h."""
        median = {
            h: frame.loc[~frame["edge_unreliable"], "abs_error"].median()
            for h, frame in comparisons.items()
        }
        assert median[0.05] / median[0.025] >= 2.5


class TestQuantumFlux:
    """Test current conservation on eigenfunctions."""

    def test_conserved(self, default_pairs, profile):
        """The current is constant across the junction."""
        for _, psi in default_pairs:
            report = quantum_flux(psi, profile)
            assert report.relative_deviation <= 1e-4
            assert not np.any(report.x == 0)

    def test_real_eigenfunctions_carry_no_current(self, coarse_config):
        """At φ = 0 the eigenvectors are real."""
        profile = PotentialProfile(phi=0.0)
        pairs = eigen_gap(discretize(profile, coarse_config))
        for _, psi in pairs:
            report = quantum_flux(psi, profile)
            assert np.max(np.abs(report.current)) <= 1e-12

    def test_phase_ramp_breaks_conservation(self, default_pairs, profile):
        """A non-eigenfunction violates conservation by O(1)."""
        psi = default_pairs[len(default_pairs) // 2][1]
        ramped = phase_ramp(psi, 4 * math.sqrt(profile.mu0) / profile.h)
        assert quantum_flux(ramped, profile).relative_deviation > 0.1


class TestSymmetry:
    """Test the charge-conjugation and PT defects."""

    @pytest.mark.parametrize("phi", [0.0, math.pi / 2])
    def test_even_profile(self, profile, coarse_config, phi):
        """Both symmetries hold to rounding."""
        report = symmetry_spectrum(with_phase(profile, phi), coarse_config)
        assert report.levels > 0
        assert report.charge_conjugation <= 1e-10
        assert report.charge_conjugation_matrix <= 1e-14
        assert report.pt <= 1e-10
        assert report.pt_matrix <= 1e-14

    def test_asymmetric_profile(self, profile, coarse_config):
        """An odd term in Δ breaks PT but not charge conjugation."""
        broken = dataclasses.replace(profile, asymmetry=0.1)
        report = symmetry_spectrum(broken, coarse_config)
        assert report.pt_matrix > 0.1
        assert report.pt >= report.pt_matrix
        assert report.charge_conjugation_matrix <= 1e-14


class TestShooting:
    """Test the shooting indicator and its refinement."""

    @pytest.fixture(scope="class")
    def refined(self, default_oracle):
        """A level near mid-gap refined from its Richardson value."""
        profile, config = PotentialProfile(), SimulationConfig()
        energies = default_oracle["E_richardson"].to_numpy()
        index = int(np.argmin(np.abs(energies - 0.5)))
        seed = float(energies[index])
        neighbour = float(energies[index + 1] if index + 1 < energies.size else energies[index - 1])
        return seed, refine_level(profile, config, seed), neighbour

    def test_agrees_with_finite_differences(self, refined):
        """Refined and extrapolated eigenvalues agree."""
        seed, energy, _ = refined
        assert abs(energy - seed) <= 1e-6

    def test_indicator_vanishes_at_level(self, profile, config, refined):
        """The indicator dips at the eigenvalue and not between levels."""
        _, energy, neighbour = refined
        assert shoot_determinant(profile, energy, config) <= 1e-6
        midpoint = (energy + neighbour) / 2
        assert shoot_determinant(profile, midpoint, config) >= 1e-3

    def test_outside_gap(self, profile, config):
        """Energies outside (0, Δ₀) are refused."""
        with pytest.raises(DomainError):
            shoot_determinant(profile, 1.0, config)

    def test_wavefunction(self, profile, config, refined, tmp_path):
        """The shot solution is normalized and stops at the branching point."""
        _, energy, _ = refined
        psi = shoot_wavefunction(profile, config, energy)
        cut = make_energy_slice(profile, energy)
        assert psi.norm == pytest.approx(1.0)
        assert psi.x_grid[0] == pytest.approx(-config.x_max)
        assert psi.x_grid[-1] <= cut.x_branch
        assert psi.u1.shape == psi.x_grid.shape
        assert np.all(np.isfinite(psi.u1)) and np.all(np.isfinite(psi.u2))

        path = export_wavefunction(psi, tmp_path / "psi.csv")
        frame = pd.read_csv(path)
        assert list(frame.columns) == WAVEFUNCTION_COLUMNS
        assert len(frame) == psi.x_grid.size
        assert frame["Re u1"].to_numpy() == pytest.approx(psi.u1.real)
