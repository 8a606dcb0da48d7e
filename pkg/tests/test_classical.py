"""
Tests for the classical phase-space layer.
"""

import math

import numpy as np
import pytest

from andreev_bs.classical import (
    barrier_top,
    fit_wkb_modes,
    kinetic_branches,
    loop_action,
    make_energy_slice,
    normal_form_F0,
    nu_parameter,
    sine_quadrature,
    symbol_eigen,
    symbol_matrix,
    turning_action,
    wkb_modes,
)
from andreev_bs.errors import DomainError


class VeeProfile:
    """Δ(x) = α|x| at constant μ and zero phase."""

    delta0 = 1.0
    h = 0.05
    phi = 0.0
    is_even = True

    def __init__(self, alpha=1.0, mu0=2.0):
        self.alpha = alpha
        self.mu0 = mu0

    def delta(self, x):
        return self.alpha * np.abs(np.asarray(x, dtype=float))

    def delta_prime(self, x):
        return self.alpha * np.sign(np.asarray(x, dtype=float))

    def mu(self, x):
        return np.full_like(np.asarray(x, dtype=float), self.mu0)

    def phase(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))


class TestSineQuadrature:
    """Test the endpoint-aware Gauss-Legendre rule."""

    def test_semicircle(self):
        """Area under sqrt(1 - x^2) is pi/2."""
        value, _, converged = sine_quadrature(lambda x: np.sqrt(1 - x * x), -1, 1)
        assert converged
        assert value == pytest.approx(math.pi / 2, rel=1e-12)

    def test_inverse_square_root(self):
        """Endpoint singularities are integrated exactly."""
        value, _, _ = sine_quadrature(lambda x: 1 / np.sqrt(1 - x * x), -1, 1)
        assert value == pytest.approx(math.pi, rel=1e-12)

    def test_one_sided(self):
        """Only the upper end singular."""
        value, _, _ = sine_quadrature(
            lambda x: 1 / np.sqrt(1 - x), 0, 1, lower_singular=False
        )
        assert value == pytest.approx(2.0, rel=1e-10)

    def test_regular(self):
        """No substitution for smooth integrands."""
        value, _, _ = sine_quadrature(
            lambda x: x * x, 0, 1, lower_singular=False, upper_singular=False
        )
        assert value == pytest.approx(1 / 3, rel=1e-14)


class TestEnergySurface:
    """Test the branches K± and the branching points."""

    def test_branches_in_normal_region(self, profile):
        """K± = μ ± sqrt(E² − Δ²) where Δ is negligible."""
        k_plus, k_minus = kinetic_branches(profile, 0.5, 0.0)
        assert k_plus == pytest.approx(2.5, abs=1e-6)
        assert k_minus == pytest.approx(1.5, abs=1e-6)

    def test_forbidden_region(self, profile):
        """No real branches where Δ > E."""
        assert kinetic_branches(profile, 0.5, 5.0) is None

    def test_energy_outside_gap(self, profile):
        """E must lie strictly inside the gap."""
        with pytest.raises(DomainError):
            kinetic_branches(profile, 0.0, 0.0)
        with pytest.raises(DomainError):
            make_energy_slice(profile, 1.2)

    def test_branching_points(self, profile):
        """Δ(x_E) = E half way up the step, at x = L."""
        cut = make_energy_slice(profile, 0.5)
        assert cut.x_branch == pytest.approx(2.0, abs=1e-9)
        assert cut.x_left == -cut.x_branch
        assert cut.alpha == pytest.approx(2.0, rel=1e-9)
        assert cut.xi_branch == pytest.approx(math.sqrt(2.0), rel=1e-12)
        assert cut.beta == pytest.approx(math.sqrt(2.0) * (2 * math.sqrt(2.0)) ** -1.5)
        assert cut.e1 == pytest.approx(0.5 / 8)


class TestLoopAction:
    """Test the action integral and its period."""

    def test_vee_profile_small_energy(self):
        """A(E) ≈ πE²/(2α√μ) for Δ = α|x| at small E."""
        toy = VeeProfile(alpha=1.0, mu0=2.0)
        energy = 0.02
        value = loop_action(toy, energy)
        expected = math.pi * energy**2 / (2 * math.sqrt(2.0))
        assert value.action == pytest.approx(expected, rel=0.02)
        assert value.period == pytest.approx(2 * expected / energy, rel=0.02)

    def test_period_matches_difference_quotient(self, profile):
        """T(E) agrees with the central difference of A(E)."""
        value = loop_action(profile, 0.6, with_fd=True)
        assert value.warnings == ()
        assert value.period == pytest.approx(value.period_fd, rel=1e-4)

    def test_action_increases(self, profile):
        """A(E) is increasing on (0, Δ₀)."""
        actions = [loop_action(profile, e).action for e in (0.2, 0.4, 0.6, 0.8)]
        assert all(b > a > 0 for a, b in zip(actions, actions[1:]))

    def test_turning_actions_add_up(self, profile):
        """The two half-loop integrals sum to the loop action."""
        total = loop_action(profile, 0.5).action
        right = turning_action(profile, 0.5, 0.0, side=1)
        left = turning_action(profile, 0.5, 0.0, side=-1)
        assert right + left == pytest.approx(total, rel=1e-8)


class TestNormalForm:
    """Test F₀(t, β) and the Weber order ν."""

    def test_harmonic_limit(self):
        """F₀(t, 0) = t/2."""
        assert normal_form_F0(0.0, 0.8) == pytest.approx(0.4, rel=1e-12)

    def test_small_beta_continuity(self):
        """F₀ is continuous in β at 0."""
        assert normal_form_F0(1e-6, 1.0) == pytest.approx(0.5, abs=1e-5)

    def test_outside_well(self):
        """t beyond the barrier top is refused."""
        assert barrier_top(0.1) == pytest.approx(6.25)
        with pytest.raises(DomainError):
            normal_form_F0(0.1, 7.0)
        with pytest.raises(DomainError):
            normal_form_F0(0.1, 0.0)

    def test_nu_scaling(self, profile):
        """ν(h/2) − 2ν(h) = 3/2 at fixed energy."""
        cut = make_energy_slice(profile, 0.5)
        h = 0.05
        assert nu_parameter(cut, h / 2) - 2 * nu_parameter(cut, h) == pytest.approx(
            1.5, abs=1e-9
        )


class TestSymbol:
    """Test the diagonalisation of the BdG symbol."""

    def test_eigenpairs(self, profile):
        """P y± = ±λ y± with unit vectors."""
        x, xi = 2.1, 1.3
        matrix = symbol_matrix(profile, x, xi)
        eigen = symbol_eigen(profile, x, xi)
        assert eigen.lambda_minus == pytest.approx(-eigen.lambda_plus)
        for lam, y in ((eigen.lambda_plus, eigen.y_plus), (eigen.lambda_minus, eigen.y_minus)):
            assert np.linalg.norm(y) == pytest.approx(1.0)
            assert np.allclose(matrix @ y, lam * y, atol=1e-12)

    def test_hermitian(self, profile):
        """The symbol is Hermitian."""
        matrix = symbol_matrix(profile, -2.3, 0.7)
        assert np.allclose(matrix, matrix.conj().T)

    def test_crossing(self):
        """Δ = 0 and ξ² = μ is degenerate."""
        with pytest.raises(DomainError):
            symbol_eigen(VeeProfile(mu0=1.0), 0.0, 1.0)


class TestWkbFit:
    """Test the fit of a wavefunction to the WKB modes."""

    def test_recovers_coefficients(self, profile):
        """A combination of modes is decomposed back into its amplitudes."""
        x = np.linspace(-1.0, 1.0, 41)
        modes = wkb_modes(profile, 0.5, x)
        coefficients = np.array([1.0, 0.0, 0.5j, 0.0])
        psi = modes @ coefficients
        fit = fit_wkb_modes(profile, 0.5, x, psi[:, 0], psi[:, 1])
        assert np.allclose(fit.coefficients, coefficients, atol=1e-10)
        assert fit.residual < 1e-12
        assert fit.loop_weight(1) == pytest.approx(1.25)
        assert fit.loop_weight(-1) == pytest.approx(0.0, abs=1e-20)
        assert fit.coefficient("h+") == pytest.approx(0.5j)

    def test_window_in_forbidden_region(self, profile):
        """A window crossing the branching point is refused."""
        x = np.linspace(1.5, 2.5, 41)
        with pytest.raises(DomainError):
            fit_wkb_modes(profile, 0.5, x, np.ones(41), np.ones(41))
