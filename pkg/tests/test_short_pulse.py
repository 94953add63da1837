"""
Unit tests for shortpulse.short_pulse module
"""

import math
import sys
import unittest
from pathlib import Path

import numpy as np
import pytest

# Add SDK to path
sys.path.insert(0, str(Path(__file__).parent.parent / "sdk"))

from shortpulse.exceptions import BoundaryLeak, MeanNotZero, StepUnstable
from shortpulse.short_pulse import (
    DuhamelCase,
    ShortPulseState,
    admissible_initial_data,
    antiderivative_diagnostics,
    b2_forcing,
    b3_forcing,
    cube_forcing,
    delta_of_trajectory,
    dt_max,
    duhamel_solve,
    perturbation_profile,
    small_norm_check,
    sp_evolve,
    sp_rhs,
    sp_step,
    sp_time_derivatives,
)
from shortpulse.spectral_core import (
    Field,
    antiderivative,
    make_grid,
    semigroup_apply,
    sobolev_norm,
)


def _sup(f):
    return float(np.max(np.abs(f.values)))


class TestRightHandSide(unittest.TestCase):
    """Test cases for sp_rhs and the stability limit"""

    def setUp(self):
        self.grid = make_grid(2 * math.pi, 32)
        self.x = self.grid.nodes

    def test_rhs_of_sine(self):
        """Test A_tau = -cos x + 3 sin^2 x cos x for A = sin x"""
        A = Field(self.grid, np.sin(self.x))
        expected = -np.cos(self.x) + 3 * np.sin(self.x) ** 2 * np.cos(self.x)
        np.testing.assert_allclose(sp_rhs(A).values, expected, atol=1e-12)

    def test_linear_rhs(self):
        """Test that linear mode drops the cube"""
        A = Field(self.grid, np.sin(self.x))
        np.testing.assert_allclose(sp_rhs(A, linear=True).values, -np.cos(self.x), atol=1e-13)

    def test_rhs_rejects_mean(self):
        """Test MeanNotZero for data with a mean"""
        with self.assertRaises(MeanNotZero):
            sp_rhs(Field(self.grid, np.sin(self.x) + 0.1))

    def test_dt_max_for_zero_field(self):
        """Test the linear stability limit on the 2*pi box"""
        self.assertAlmostEqual(dt_max(Field.zeros(self.grid)), 0.5)

    def test_step_beyond_limit(self):
        """Test that an oversized step raises StepUnstable"""
        A = Field(self.grid, 0.1 * np.sin(self.x))
        state = ShortPulseState(0.0, A)
        with self.assertRaises(StepUnstable):
            sp_step(state, 2.0 * dt_max(A))


class TestEvolution(unittest.TestCase):
    """Test cases for sp_evolve"""

    def setUp(self):
        self.grid = make_grid(2 * math.pi, 32)
        self.x = self.grid.nodes
        self.A0 = Field(self.grid, 0.1 * np.sin(self.x) + 0.05 * np.cos(2 * self.x))

    def test_linear_matches_semigroup(self):
        """Test that the linear flow reproduces S(T) A0"""
        trajectory = sp_evolve(self.A0, 1.0, 0.01, linear=True)
        exact = semigroup_apply(self.A0, 1.0)
        self.assertAlmostEqual(trajectory[-1].tau, 1.0, places=14)
        np.testing.assert_allclose(trajectory[-1].A.values, exact.values, atol=1e-9)

    def test_final_time_is_exact(self):
        """Test that a non-multiple T is hit exactly"""
        trajectory = sp_evolve(self.A0, 0.105, 0.01, sample_every=5)
        self.assertEqual(trajectory[-1].tau, 0.105)
        self.assertEqual([round(s.tau, 12) for s in trajectory[:-1]], [0.0, 0.05, 0.1])

    def test_zero_time(self):
        """Test that T = 0 returns the initial state only"""
        trajectory = sp_evolve(self.A0, 0.0, 0.01)
        self.assertEqual(len(trajectory), 1)
        self.assertIs(trajectory[0].A, self.A0)

    def test_mean_is_preserved(self):
        """Test that every sample stays zero-mean"""
        trajectory = sp_evolve(self.A0, 0.5, 0.01)
        for state in trajectory:
            self.assertLess(abs(state.A.spectrum[0]), 1e-12)

    def test_rk4_order(self):
        """Test fourth-order convergence of the nonlinear flow"""
        reference = sp_evolve(self.A0, 0.4, 0.0025)[-1].A
        errors = []
        for dt in (0.02, 0.01):
            A = sp_evolve(self.A0, 0.4, dt)[-1].A
            errors.append(sobolev_norm(A - reference, 0.0))
        self.assertGreater(errors[0] / errors[1], 12.0)

    def test_invalid_arguments(self):
        """Test argument validation"""
        with self.assertRaises(ValueError):
            sp_evolve(self.A0, -1.0, 0.01)
        with self.assertRaises(ValueError):
            sp_evolve(self.A0, 1.0, 0.0)
        with self.assertRaises(MeanNotZero):
            sp_evolve(self.A0 + 1.0, 1.0, 0.01)


class TestTimeDerivatives(unittest.TestCase):
    """Test cases for the closed tau-derivative formulas"""

    def setUp(self):
        self.grid = make_grid(2 * math.pi, 32)
        x = self.grid.nodes
        # cubic mean is nonzero for this profile, which exercises the box corrections
        self.A = Field(self.grid, 0.1 * np.sin(x) + 0.05 * np.cos(2 * x))
        self.dt = 0.01

    def _neighbours(self, dt=None):
        dt = dt or self.dt
        forward = sp_evolve(self.A, 2 * dt, dt)
        backward_1 = sp_step(ShortPulseState(0.0, self.A), -dt)
        backward_2 = sp_step(backward_1, -dt)
        return backward_2.A, backward_1.A, forward[1].A, forward[2].A

    def test_first_derivative_is_rhs(self):
        """Test A_tau against sp_rhs"""
        A_t, _, _ = sp_time_derivatives(self.A)
        np.testing.assert_allclose(A_t.values, sp_rhs(self.A).values, atol=1e-14)

    def test_second_derivative(self):
        """Test A_tautau against a centered second difference of the flow"""
        m2, m1, p1, p2 = self._neighbours()
        _, A_tt, _ = sp_time_derivatives(self.A)
        fd = (p1 - 2.0 * self.A + m1) / self.dt ** 2
        self.assertLess(_sup(A_tt - fd), 1e-4 * _sup(A_tt))

    def test_third_derivative(self):
        """Test A_tautautau against a centered third difference of the flow"""
        m2, m1, p1, p2 = self._neighbours()
        _, _, A_ttt = sp_time_derivatives(self.A)
        fd = (p2 - 2.0 * p1 + 2.0 * m1 - m2) / (2.0 * self.dt ** 3)
        self.assertLess(_sup(A_ttt - fd), 1e-3 * _sup(A_ttt))

    def test_difference_errors_are_second_order(self):
        """Test that both difference errors drop by four when dt is halved"""
        _, A_tt, A_ttt = sp_time_derivatives(self.A)
        errors = []
        for dt in (0.02, 0.01):
            m2, m1, p1, p2 = self._neighbours(dt)
            second = (p1 - 2.0 * self.A + m1) / dt ** 2
            third = (p2 - 2.0 * p1 + 2.0 * m1 - m2) / (2.0 * dt ** 3)
            errors.append((_sup(A_tt - second), _sup(A_ttt - third)))
        for coarse, fine in zip(*errors):
            self.assertGreater(coarse / fine, 3.5)
            self.assertLess(coarse / fine, 4.5)

    def test_backward_steps_recover_data(self):
        """Test that stepping forward then backward returns to A0"""
        state = ShortPulseState(0.0, self.A)
        for _ in range(50):
            state = sp_step(state, self.dt)
        for _ in range(50):
            state = sp_step(state, -self.dt)
        self.assertAlmostEqual(state.tau, 0.0, places=12)
        np.testing.assert_allclose(state.A.values, self.A.values, atol=1e-9)

    def test_whole_line_formulas_differ_on_box(self):
        """Test that periodic=False drops the mean corrections"""
        _, tt_box, _ = sp_time_derivatives(self.A, periodic=True)
        _, tt_line, _ = sp_time_derivatives(self.A, periodic=False)
        shift = (tt_line - tt_box).values
        np.testing.assert_allclose(shift, shift[0], atol=1e-14)
        self.assertGreater(abs(shift[0]), 0.0)

    def test_requires_zero_mean(self):
        """Test MeanNotZero for data with a mean"""
        with self.assertRaises(MeanNotZero):
            sp_time_derivatives(self.A + 0.01)


class TestDuhamel(unittest.TestCase):
    """Test cases for duhamel_solve"""

    def setUp(self):
        self.grid = make_grid(2 * math.pi, 32)
        x = self.grid.nodes
        self.A0 = Field(self.grid, 0.1 * np.sin(x) + 0.05 * np.cos(2 * x))
        self.dt = 0.01
        self.T = 0.5
        self.trajectory = sp_evolve(self.A0, self.T, self.dt)

    def test_homogeneous(self):
        """Test that no forcing gives the semigroup"""
        B0 = antiderivative(self.A0, 1)
        solution = duhamel_solve(B0, None, self.T, self.dt)
        np.testing.assert_allclose(solution[-1].values, semigroup_apply(B0, self.T).values,
                                   atol=1e-13)

    def test_first_antiderivative(self):
        """Test that case (a) with G = A^3 reproduces d^-1 A"""
        B0 = antiderivative(self.A0, 1)
        solution = duhamel_solve(B0, cube_forcing(self.trajectory), self.T, self.dt,
                                 DuhamelCase.A_DIV_FORM)
        direct = antiderivative_diagnostics(self.trajectory[-1]).B1
        self.assertEqual(len(solution), len(self.trajectory))
        self.assertLess(_sup(solution[-1] - direct), 1e-7)

    def test_second_antiderivative(self):
        """Test that case (b) with F = A^3 reproduces d^-2 A"""
        B0 = antiderivative(self.A0, 2)
        solution = duhamel_solve(B0, b2_forcing(self.trajectory), self.T, self.dt,
                                 "b_differentiable")
        direct = antiderivative_diagnostics(self.trajectory[-1]).B2
        self.assertLess(_sup(solution[-1] - direct), 1e-7)

    def test_third_antiderivative(self):
        """Test that case (b) with F = 3 A^2 A_tau reproduces d^-3 A + d^-1 A^3"""
        B0 = antiderivative_diagnostics(self.trajectory[0]).B3
        solution = duhamel_solve(B0, b3_forcing(self.trajectory), self.T, self.dt,
                                 "b_differentiable")
        direct = antiderivative_diagnostics(self.trajectory[-1]).B3
        self.assertGreater(_sup(direct), 1e-3)
        self.assertLess(_sup(solution[-1] - direct), 1e-7)

    def test_missing_samples(self):
        """Test that a short forcing list is rejected"""
        B0 = antiderivative(self.A0, 1)
        forcing = cube_forcing(self.trajectory[:10])
        with self.assertRaises(ValueError):
            duhamel_solve(B0, forcing, self.T, self.dt)

    def test_T_not_multiple_of_dt(self):
        """Test that T must be a multiple of dt"""
        B0 = antiderivative(self.A0, 1)
        with self.assertRaises(ValueError):
            duhamel_solve(B0, None, 0.505, self.dt)


class TestInitialData(unittest.TestCase):
    """Test cases for admissible data and the small-norm test"""

    def setUp(self):
        self.grid = make_grid(64 * math.pi, 1024)

    def test_gaussian_derivative_is_admissible(self):
        """Test that A0 and its anti-derivatives are zero-mean"""
        A0 = admissible_initial_data("gaussian_derivative", 0.1, 1.0, self.grid)
        self.assertLess(abs(A0.spectrum[0]), 1e-12)
        psi = antiderivative(A0, 3) / 0.1
        x = self.grid.nodes - self.grid.length / 2
        density = np.exp(-0.5 * x ** 2) / math.sqrt(2 * math.pi)
        np.testing.assert_allclose(psi.values, density - density.mean(), atol=1e-10)

    def test_sine_packet(self):
        """Test the modulated packet"""
        A0 = admissible_initial_data("sine_packet", 0.05, 2.0, self.grid)
        self.assertGreater(A0.sup_norm(), 0.0)
        self.assertLess(abs(A0.spectrum[0]), 1e-12)

    def test_boundary_leak(self):
        """Test that a box too small for the profile is rejected"""
        with self.assertRaises(BoundaryLeak):
            admissible_initial_data("gaussian_derivative", 0.1, 1.0, make_grid(2 * math.pi, 32))

    def test_unknown_shape(self):
        """Test that unknown shapes are rejected"""
        with self.assertRaises(ValueError):
            admissible_initial_data("square", 0.1, 1.0, self.grid)

    def test_zero_amplitude(self):
        """Test that amplitude 0 gives the zero field"""
        A0 = admissible_initial_data("gaussian_derivative", 0.0, 1.0, self.grid)
        self.assertEqual(A0.sup_norm(), 0.0)

    def test_small_norm(self):
        """Test the global-existence threshold on sine data"""
        grid = make_grid(2 * math.pi, 32)
        small = small_norm_check(Field(grid, 0.1 * np.sin(grid.nodes)))
        self.assertAlmostEqual(small.sum, 0.02 * math.pi, places=10)
        self.assertTrue(small.ok)
        large = small_norm_check(Field(grid, 0.2 * np.sin(grid.nodes)))
        self.assertFalse(large.ok)

    def test_small_norm_threshold_on_sine(self):
        """Test that a sin x first fails at a = 1/sqrt(12 pi)"""
        grid = make_grid(2 * math.pi, 32)
        amplitudes = np.linspace(0.10, 0.20, 201)
        passing = [small_norm_check(Field(grid, a * np.sin(grid.nodes))).ok for a in amplitudes]
        first_fail = amplitudes[passing.index(False)]
        self.assertTrue(all(passing[:passing.index(False)]))
        self.assertFalse(any(passing[passing.index(False):]))
        self.assertLess(abs(first_fail - 1.0 / math.sqrt(12.0 * math.pi)), 5e-4)

    def test_perturbation_profile_has_unit_h2_norm(self):
        """Test the normalization of the perturbation bump"""
        bump = perturbation_profile(self.grid, 1.0, np.random.default_rng(3))
        self.assertAlmostEqual(sobolev_norm(bump, 2.0), 1.0, places=12)
        self.assertLess(abs(bump.spectrum[0]), 1e-12)


class TestDelta(unittest.TestCase):
    """Test cases for delta_of_trajectory"""

    def setUp(self):
        self.grid = make_grid(2 * math.pi, 32)

    def test_requires_s_above_seven_halves(self):
        """Test that s <= 7/2 is rejected"""
        with self.assertRaises(ValueError):
            delta_of_trajectory([ShortPulseState(0.0, Field.zeros(self.grid))], s=3.5)

    def test_zero_trajectory(self):
        """Test that the zero solution has delta 0"""
        report = delta_of_trajectory([ShortPulseState(0.0, Field.zeros(self.grid))])
        self.assertEqual(report.delta, 0.0)

    def test_delta_dominates_hs_norm(self):
        """Test that delta is at least sup ||A||_H^s"""
        A0 = Field(self.grid, 0.1 * np.sin(self.grid.nodes))
        trajectory = sp_evolve(A0, 0.2, 0.01, sample_every=5)
        report = delta_of_trajectory(trajectory, s=4.0)
        self.assertGreaterEqual(report.sup_A, sobolev_norm(A0, 4.0) - 1e-12)
        self.assertGreater(report.delta, report.sup_A)


@pytest.mark.slow
class TestLongRun(unittest.TestCase):
    """Longer runs on the default box"""

    def test_default_data_stays_small(self):
        """Test the default pulse over tau in [0, 1]"""
        grid = make_grid(64 * math.pi, 1024)
        A0 = admissible_initial_data("gaussian_derivative", 0.1, 1.0, grid)
        self.assertTrue(small_norm_check(A0).ok)
        dt = min(0.01, 0.5 * dt_max(A0))
        trajectory = sp_evolve(A0, 1.0, dt, sample_every=10)
        self.assertEqual(trajectory[-1].tau, 1.0)
        self.assertLess(trajectory[-1].A.sup_norm(), 10 * A0.sup_norm())


if __name__ == '__main__':
    unittest.main()
