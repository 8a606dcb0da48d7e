"""
Tests for the Bohr-Sommerfeld level solver.
"""

import dataclasses
import math

import numpy as np
import pytest

from andreev_bs.bs import (
    COMPARISON_COLUMNS,
    LEVEL_COLUMNS,
    compare_levels,
    expected_level_count,
    levels_frame,
    parity,
    quantization_mismatch,
    quantum_number_range,
    solve_level_families,
    solve_levels,
    spectrum_table,
    supercurrent,
    unmatched_levels,
)
from andreev_bs.errors import DomainError
from andreev_bs.model import SimulationConfig, with_phase


class TestQuantization:
    """Test the quantization condition and its roots."""

    def test_parity(self):
        """Electrons on even n, holes on odd n."""
        assert [parity(n) for n in (-2, -1, 0, 1, 2)] == [1, -1, 1, -1, 1]

    def test_quantum_number_range(self, profile):
        """Targets 2πnh + hφ − hπ inside the action window."""
        h, phi = profile.h, profile.phi
        numbers = quantum_number_range(profile, 0.0, 1.0)
        for n in numbers:
            assert 0.0 < 2 * math.pi * n * h + h * phi - h * math.pi < 1.0
        assert numbers == list(range(numbers[0], numbers[-1] + 1))
        assert 2 * math.pi * (numbers[-1] + 1) * h + h * phi - h * math.pi >= 1.0

    def test_levels_satisfy_condition(self, profile, config):
        """The mismatch vanishes at every solved level."""
        levels = solve_levels(profile, config)
        assert levels
        for level in levels:
            assert abs(quantization_mismatch(profile, level.energy, level.n, config=config)) <= 1e-12

    def test_levels_inside_window(self, profile, config):
        """Levels are sorted and lie in the scanned window."""
        levels = solve_levels(profile, config)
        energies = [level.energy for level in levels]
        assert energies == sorted(energies)
        assert all(1e-6 <= e <= 1 - 1e-6 for e in energies)
        for level in levels:
            assert level.edge_unreliable == (level.energy < 1e-3 or level.energy > 1 - 1e-3)
        assert all(level.rho == parity(level.n) for level in levels)
        assert all(level.phi == profile.phi for level in levels)

    def test_level_count(self, profile, config):
        """The count follows the total action over the window."""
        levels = solve_levels(profile, config)
        assert abs(len(levels) - expected_level_count(profile, config)) <= 2

    def test_smaller_h_gives_more_levels(self, profile, config):
        """Halving h roughly doubles the number of levels."""
        coarse = len(solve_levels(profile, config))
        fine = len(solve_levels(dataclasses.replace(profile, h=profile.h / 2), config))
        assert abs(fine - 2 * coarse) <= 3

    def test_mismatch_phase_override(self, profile, config):
        """The phase argument replaces profile.phi."""
        at_zero = quantization_mismatch(profile, 0.5, 3, config=config, phi=0.0)
        default = quantization_mismatch(profile, 0.5, 3, config=config)
        assert at_zero - default == pytest.approx(profile.h * profile.phi, abs=1e-14)


class TestFamilies:
    """Test the level families of the two loops."""

    def test_mirror_loop(self, profile, config):
        """Orbit −1 levels are the levels of the junction at −φ."""
        families = solve_level_families(profile, config)
        mirror = sorted(level.energy for level in families if level.orbit == -1)
        direct = [level.energy for level in solve_levels(with_phase(profile, -profile.phi), config)]
        assert mirror == pytest.approx(direct, abs=1e-14)

    def test_degenerate_at_zero_phase(self, profile, config):
        """Both loops carry the same levels at φ = 0."""
        families = solve_level_families(with_phase(profile, 0.0), config)
        plus = [level.energy for level in families if level.orbit == 1]
        minus = [level.energy for level in families if level.orbit == -1]
        assert plus == pytest.approx(minus, abs=1e-14)


class TestSupercurrent:
    """Test dE/dφ."""

    def test_implicit_matches_difference(self, profile, config):
        """h/T(E) agrees with re-solving at φ ± 1e−4."""
        levels = solve_levels(profile, config)
        level = levels[len(levels) // 2]
        checked = supercurrent(profile, level, config)
        assert checked.supercurrent_fd == pytest.approx(level.supercurrent, rel=1e-3)

    def test_mirror_current_reversed(self, profile, config):
        """The mirror loop carries the opposite current."""
        for level in solve_level_families(profile, config):
            assert np.sign(level.supercurrent) == level.orbit

    def test_rho_convention(self, profile):
        """With the ρ convention, holes move against electrons."""
        config = SimulationConfig(phase_convention="rho")
        for level in solve_levels(profile, config):
            assert np.sign(level.supercurrent) == level.rho


class TestTables:
    """Test the level tables."""

    def test_spectrum_table(self, profile, config):
        """One block of rows per phase, with the spectrum columns."""
        table = spectrum_table(profile, [0.0, math.pi / 2], config=config, include_mirror=False)
        assert list(table.columns) == LEVEL_COLUMNS
        assert set(table["phi"]) == {0.0, math.pi / 2}
        assert set(table["orbit"]) == {1}
        at_half = table[table["phi"] == math.pi / 2]["E"].tolist()
        assert at_half == pytest.approx([level.energy for level in solve_levels(profile, config)])

    def test_spectrum_table_with_mirror(self, profile, config):
        """Mirror rows are tabulated under the same phase."""
        table = spectrum_table(profile, [math.pi / 2], config=config)
        assert set(table["orbit"]) == {1, -1}

    def test_phase_out_of_range(self, profile, config):
        """Phases beyond π are refused."""
        with pytest.raises(DomainError):
            spectrum_table(profile, [4.0], config=config)

    def test_levels_frame(self, profile, config):
        """Levels convert to a table."""
        levels = solve_levels(profile, config)
        frame = levels_frame(levels)
        assert list(frame.columns) == LEVEL_COLUMNS
        assert len(frame) == len(levels)

    def test_compare_levels(self, profile, config):
        """Each level is paired with the nearest oracle energy."""
        levels = solve_levels(profile, config)
        oracle = [level.energy + 1e-4 for level in levels]
        frame = compare_levels(levels, oracle, profile.delta0)
        assert list(frame.columns) == COMPARISON_COLUMNS
        assert frame["n"].tolist() == [level.n for level in levels]
        assert frame["abs_error"].tolist() == pytest.approx([1e-4] * len(levels), abs=1e-12)

    def test_compare_without_oracle(self, profile, config):
        """Missing oracle energies give NaN."""
        levels = solve_levels(profile, config)
        frame = compare_levels(levels, [], profile.delta0)
        assert frame["E_oracle"].isna().all()
        assert len(unmatched_levels(frame)) == sum(not level.edge_unreliable for level in levels)

    def test_compare_is_one_to_one(self, profile, config):
        """Surplus energies on either side stay unpaired."""
        levels = [level for level in solve_levels(profile, config) if not level.edge_unreliable]
        energies = [level.energy for level in levels]
        missing = compare_levels(levels, energies[:5] + energies[6:], profile.delta0)
        assert len(missing) == len(levels)
        assert missing["E_oracle"].dropna().is_unique
        assert unmatched_levels(missing)["n"].tolist() == [levels[5].n]

        between = (energies[2] + energies[3]) / 2
        frame = compare_levels(levels, energies + [between, 0.9999], profile.delta0)
        assert len(frame) == len(levels) + 2
        assert frame["abs_error"].max() == 0.0
        lonely = unmatched_levels(frame)
        assert lonely["E_oracle"].tolist() == [between]
        assert lonely["n"].isna().all()
        edge_row = frame[frame["E_oracle"] == 0.9999]
        assert edge_row["edge_unreliable"].all() and edge_row["n"].isna().all()
