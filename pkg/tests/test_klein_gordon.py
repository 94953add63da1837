"""
Unit tests for shortpulse.klein_gordon module
"""

import math
import sys
import unittest
from pathlib import Path

import numpy as np

# Add SDK to path
sys.path.insert(0, str(Path(__file__).parent.parent / "sdk"))

from shortpulse.exceptions import GridMismatch, ValidityRegionExceeded
from shortpulse.klein_gordon import (
    ENERGY_RATE_COLUMNS,
    KGState,
    ScalingParams,
    continuation_monitor,
    energy_rate_check,
    kg_dt,
    kg_energies,
    kg_evolve,
    kg_rhs,
    scale_down,
    scale_up,
    symmetric_evolve,
    to_symmetric,
    x_grid_for,
    xi_grid_for,
)
from shortpulse.spectral_core import Field, differentiate, make_grid


class TestKleinGordonRhs(unittest.TestCase):
    """Test cases for kg_rhs and the default step"""

    def setUp(self):
        self.grid = make_grid(2 * math.pi, 32)
        self.x = self.grid.nodes

    def test_linear_rhs(self):
        """Test u_tt = u_xx - u for u = sin x"""
        state = KGState(0.0, Field(self.grid, np.sin(self.x)), Field(self.grid, np.cos(self.x)))
        ut, utt = kg_rhs(state, linear=True)
        np.testing.assert_allclose(ut.values, np.cos(self.x), atol=1e-14)
        np.testing.assert_allclose(utt.values, -2.0 * np.sin(self.x), atol=1e-13)

    def test_cubic_term(self):
        """Test the quasilinear term for u = a sin x"""
        a = 0.3
        u = Field(self.grid, a * np.sin(self.x))
        _, utt = kg_rhs(KGState(0.0, u, Field.zeros(self.grid)))
        cube_xx = a ** 3 * (-0.75 * np.sin(self.x) + 2.25 * np.sin(3 * self.x))
        np.testing.assert_allclose(utt.values, -2 * a * np.sin(self.x) - cube_xx, atol=1e-13)

    def test_rhs_outside_region(self):
        """Test that |u| >= 1/sqrt(3) is rejected"""
        u = Field(self.grid, 0.7 * np.sin(self.x))
        with self.assertRaises(ValidityRegionExceeded):
            kg_rhs(KGState(0.0, u, Field.zeros(self.grid)))

    def test_default_step(self):
        """Test the CFL step on the 2*pi box"""
        self.assertAlmostEqual(kg_dt(self.grid, 0.2), 0.2 / math.sqrt(257.0))

    def test_grid_mismatch(self):
        """Test that u and u_t must share a grid"""
        other = make_grid(4 * math.pi, 32)
        with self.assertRaises(GridMismatch):
            KGState(0.0, Field.zeros(self.grid), Field.zeros(other))


class TestKleinGordonEvolution(unittest.TestCase):
    """Test cases for kg_evolve"""

    def setUp(self):
        self.grid = make_grid(2 * math.pi, 32)
        self.x = self.grid.nodes

    def test_linear_standing_wave(self):
        """Test u = cos(sqrt(2) t) sin x in linear mode"""
        u0 = Field(self.grid, 0.1 * np.sin(self.x))
        trajectory = kg_evolve(u0, Field.zeros(self.grid), 1.0, dt=0.01, linear=True)
        final = trajectory[-1]
        self.assertAlmostEqual(final.t, 1.0, places=12)
        expected = 0.1 * math.cos(math.sqrt(2.0)) * np.sin(self.x)
        np.testing.assert_allclose(final.u.values, expected, atol=1e-9)

    def test_sample_times(self):
        """Test that samples carry t0 + i*dt and the step is shortened to land on t_end"""
        u0 = Field(self.grid, 0.1 * np.sin(self.x))
        trajectory = kg_evolve(u0, Field.zeros(self.grid), 0.95, dt=0.1, sample_every=5, t0=2.0)
        self.assertEqual(trajectory[0].t, 2.0)
        self.assertAlmostEqual(trajectory[-1].t, 2.95, places=12)
        self.assertEqual(len(trajectory), 3)

    def test_initial_data_outside_region(self):
        """Test that data beyond the margin abort with an empty trajectory"""
        u0 = Field(self.grid, 0.56 * np.sin(self.x))
        with self.assertRaises(ValidityRegionExceeded) as ctx:
            kg_evolve(u0, Field.zeros(self.grid), 1.0, dt=0.01)
        self.assertEqual(ctx.exception.trajectory, [])
        self.assertEqual(ctx.exception.t, 0.0)

    def test_slope_cap_abort(self):
        """Test that the slope monitor fires with the samples so far"""
        u0 = Field(self.grid, 0.2 * np.sin(self.x))
        with self.assertRaises(ValidityRegionExceeded) as ctx:
            kg_evolve(u0, Field.zeros(self.grid), 1.0, dt=0.01, slope_cap=0.1)
        self.assertIn("slope", ctx.exception.reason)
        self.assertEqual(len(ctx.exception.trajectory), 1)
        self.assertAlmostEqual(ctx.exception.t, 0.01)

    def test_energy_conservation(self):
        """Test that E1 is conserved up to the stated rate"""
        u0 = Field(self.grid, 0.1 * np.sin(self.x))
        trajectory = kg_evolve(u0, Field.zeros(self.grid), 1.0, dt=0.01)
        rates = energy_rate_check(trajectory)
        self.assertEqual(list(rates.columns), ENERGY_RATE_COLUMNS)
        self.assertEqual(len(rates), len(trajectory) - 2)
        self.assertLess(rates[["r1_normalized", "r2_normalized", "r3_normalized"]].to_numpy().max(),
                        1e-5)

    def test_symmetric_system_agrees(self):
        """Test that the symmetric reformulation reproduces kg_evolve"""
        u0 = Field(self.grid, 0.1 * np.sin(self.x))
        v0 = Field(self.grid, 0.05 * np.cos(2 * self.x))
        direct = kg_evolve(u0, v0, 0.5, dt=0.01)[-1]
        sym = symmetric_evolve(to_symmetric(KGState(0.0, u0, v0)), 0.5, 0.01)[-1]
        self.assertAlmostEqual(sym.t, 0.5, places=12)
        np.testing.assert_allclose(sym.u3.values, direct.u.values, atol=1e-7)
        np.testing.assert_allclose(sym.u1.values, direct.ut.values, atol=1e-7)

    def test_time_step_order(self):
        """Test fourth-order convergence in dt of the nonlinear flow"""
        u0 = Field(self.grid, 0.2 * np.sin(self.x) + 0.1 * np.cos(3 * self.x))
        v0 = Field(self.grid, 0.1 * np.cos(2 * self.x))
        finals = [kg_evolve(u0, v0, 1.0, dt=dt)[-1].u for dt in (0.01, 0.005, 0.0025)]
        coarse = np.max(np.abs((finals[0] - finals[1]).values))
        fine = np.max(np.abs((finals[1] - finals[2]).values))
        self.assertGreater(coarse / fine, 12.0)

    def test_energy_rate_residual_is_second_order(self):
        """Test that the rate residuals drop by four when the sample spacing is halved"""
        u0 = Field(self.grid, 0.3 * np.sin(self.x) + 0.1 * np.cos(3 * self.x))
        worst = []
        for every in (20, 10):
            trajectory = kg_evolve(u0, Field.zeros(self.grid), 2.0, dt=0.005, sample_every=every)
            worst.append(energy_rate_check(trajectory)[["r1", "r2"]].max().to_numpy())
        ratios = worst[0] / worst[1]
        self.assertTrue(np.all(ratios > 3.0), ratios)
        self.assertTrue(np.all(ratios < 5.0), ratios)


class TestEnergies(unittest.TestCase):
    """Test cases for energies and the continuation monitor"""

    def setUp(self):
        self.grid = make_grid(2 * math.pi, 32)
        self.x = self.grid.nodes

    def test_first_energy_of_sine(self):
        """Test E1 = 2 pi a^2 - 3 pi a^4 / 4 for u = a sin x at rest"""
        a = 0.3
        state = KGState(0.0, Field(self.grid, a * np.sin(self.x)), Field.zeros(self.grid))
        energies = kg_energies(state)
        self.assertAlmostEqual(energies.E1, 2 * math.pi * a ** 2 - 0.75 * math.pi * a ** 4, places=12)

    def test_energies_of_zero_state(self):
        """Test that the zero state has zero energies"""
        state = KGState(0.0, Field.zeros(self.grid), Field.zeros(self.grid))
        energies = kg_energies(state)
        self.assertEqual((energies.E1, energies.E2, energies.E3), (0.0, 0.0, 0.0))

    def test_rate_check_on_short_trajectory(self):
        """Test that fewer than three samples give an empty table"""
        state = KGState(0.0, Field.zeros(self.grid), Field.zeros(self.grid))
        table = energy_rate_check([state, state])
        self.assertTrue(table.empty)
        self.assertEqual(list(table.columns), ENERGY_RATE_COLUMNS)

    def test_continuation_monitor(self):
        """Test the verdict on both sides of 1/sqrt(3) - margin"""
        inside = KGState(0.0, Field(self.grid, 0.5 * np.sin(self.x)), Field.zeros(self.grid))
        outside = KGState(0.0, Field(self.grid, 0.6 * np.sin(self.x)), Field.zeros(self.grid))
        report = continuation_monitor([inside])
        self.assertTrue(report.ok)
        self.assertAlmostEqual(report.M0, 0.5)
        self.assertAlmostEqual(report.M2, 0.5)
        self.assertFalse(continuation_monitor([inside, outside]).ok)


class TestMovingFrame(unittest.TestCase):
    """Test cases for the short-pulse scaling"""

    def setUp(self):
        self.grid_x = make_grid(2 * math.pi, 32)
        self.p = ScalingParams(0.1)
        self.grid_xi = xi_grid_for(self.grid_x, self.p)
        x = self.grid_x.nodes
        self.state = KGState(
            0.7,
            Field(self.grid_x, 0.1 * np.sin(x) + 0.05 * np.cos(3 * x)),
            Field(self.grid_x, 0.2 * np.cos(2 * x)),
        )

    def test_epsilon_range(self):
        """Test that epsilon must lie in (0, 1)"""
        for eps in (0.0, 1.0, -0.1):
            with self.assertRaises(ValueError):
                ScalingParams(eps)

    def test_grids(self):
        """Test that the xi-grid is the x-grid divided by 2 eps"""
        self.assertAlmostEqual(self.grid_xi.length, 10 * math.pi)
        self.assertEqual(self.grid_xi.n, 32)
        back = x_grid_for(self.grid_xi, self.p)
        self.assertAlmostEqual(back.length, self.grid_x.length, places=12)
        self.assertEqual(back.n, self.grid_x.n)

    def test_scale_down_at_rest(self):
        """Test U = u/(2 eps) at t = 0"""
        scaled = scale_down(KGState(0.0, self.state.u, self.state.ut), self.p, self.grid_xi)
        self.assertEqual(scaled.tau, 0.0)
        np.testing.assert_allclose(scaled.U.values, self.state.u.values / 0.2, atol=1e-13)

    def test_round_trip(self):
        """Test that scale_up inverts scale_down"""
        scaled = scale_down(self.state, self.p, self.grid_xi)
        self.assertAlmostEqual(scaled.tau, 0.07)
        back = scale_up(scaled.U, scaled.Utau, scaled.tau, self.p, self.grid_x)
        self.assertAlmostEqual(back.t, 0.7)
        np.testing.assert_allclose(back.u.values, self.state.u.values, atol=1e-12)
        np.testing.assert_allclose(back.ut.values, self.state.ut.values, atol=1e-12)

    def test_leading_order_velocity(self):
        """Test that without the correction u_t = -u_x for a moving profile"""
        scaled = scale_down(self.state, self.p, self.grid_xi)
        back = scale_up(scaled.U, scaled.Utau, scaled.tau, self.p, self.grid_x,
                        include_time_correction=False)
        np.testing.assert_allclose(back.ut.values, -differentiate(self.state.u, 1).values,
                                   atol=1e-12)

    def test_incommensurate_grid(self):
        """Test that a wrong xi-grid is rejected"""
        with self.assertRaises(GridMismatch):
            scale_down(self.state, self.p, make_grid(2 * math.pi, 32))

    def test_scaled_velocity_matches_difference_quotient(self):
        """Test U_tau against centered differences of U along a run"""
        u0 = Field(self.grid_x, 0.1 * np.sin(self.grid_x.nodes))
        trajectory = kg_evolve(u0, Field.zeros(self.grid_x), 0.2, dt=0.001, sample_every=10)
        scaled = [scale_down(s, self.p, self.grid_xi) for s in trajectory]
        middle = scaled[10]
        scale = np.max(np.abs(middle.Utau.values))
        errors = []
        for gap in (2, 1):
            before, after = scaled[10 - gap], scaled[10 + gap]
            quotient = (after.U - before.U) / (after.tau - before.tau)
            errors.append(np.max(np.abs((quotient - middle.Utau).values)))
        self.assertLess(errors[1], 1e-3 * scale)
        self.assertGreater(errors[0] / errors[1], 3.5)
        self.assertLess(errors[0] / errors[1], 4.5)


if __name__ == '__main__':
    unittest.main()
