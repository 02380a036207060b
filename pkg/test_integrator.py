"""
Test script for gauge-fixed integration, drift audits and reparametrization
"""

import unittest
import sys
import os
import math

import numpy as np

# Add parent directory to path
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from mechanics.constraint_algo import ConstraintSet, OffConstraintError
from mechanics.integrator import (
    Gauge,
    IntegrationError,
    OrientationError,
    Trajectory,
    conserved_drift,
    drift_report,
    integrate,
    reparametrize_check,
)
from mechanics.systems import build_system


class TestGauge(unittest.TestCase):
    """Test suite for multiplier rules"""

    def setUp(self):
        """Set up the relativistic particle"""
        self.system = build_system('relativistic')

    def test_unit_gauge(self):
        """Test that every multiplier is one"""
        v = Gauge.unit()(self.system.dirac, self.system.initial_state)
        np.testing.assert_array_equal(v, [1.0])

    def test_proper_time_gauge(self):
        """Test that the proper-time gauge gives unit g-norm velocities"""
        metric = self.system.metric
        gauge = Gauge.proper_time(metric.g, self.system.proper_time_block)
        x = np.array([0.0, 0.0, 0.0, 0.0, math.sqrt(1.0 + 0.25), 0.5, 0.0, 0.0])
        v = gauge(self.system.dirac, x)
        qdot, _ = self.system.dirac.vector_field(x, v)
        self.assertAlmostEqual(float(qdot @ metric.g(None) @ qdot), 1.0, places=12)

    def test_custom_gauge(self):
        """Test a custom rule and its label"""
        gauge = Gauge.custom('double', lambda sys, x: [2.0])
        self.assertEqual(gauge.name, 'double')
        np.testing.assert_array_equal(gauge(self.system.dirac, self.system.initial_state), [2.0])


class TestIntegrate(unittest.TestCase):
    """Test suite for RK4 integration with projection"""

    def test_free_particle_line(self):
        """Test the straight worldline x = (t, 0, 0, 0) of a particle at rest"""
        system = build_system('relativistic')
        traj = integrate(system.dirac, Gauge.unit(), system.initial_state, 1e-2, 100)
        self.assertEqual(len(traj), 101)
        np.testing.assert_allclose(traj.q[-1], [1.0, 0.0, 0.0, 0.0], atol=1e-12)
        self.assertLess(drift_report(traj, system.constraints)['max'], 1e-12)

    def test_long_runs(self):
        """Test constraint drift and energy conservation over ten thousand steps at dt = 1e-3"""
        free = build_system('relativistic')
        traj = integrate(free.dirac, Gauge.unit(), free.initial_state, 1e-3, 10000)
        self.assertLess(drift_report(traj, free.constraints)['max'], 1e-9)
        np.testing.assert_allclose(traj.q[-1], [10.0, 0.0, 0.0, 0.0], atol=1e-9)
        em = build_system('em-3d')
        orbit = integrate(em.dirac, Gauge.unit(), em.initial_state, 1e-3, 10000)
        self.assertLess(conserved_drift(orbit, em.hamiltonian.H), 1e-8)

    def test_larmor_orbit(self):
        """Test radius and energy of the circular orbit in a magnetic field"""
        system = build_system('em-3d')
        period = 2.0 * math.pi
        traj = integrate(system.dirac, Gauge.unit(), system.initial_state, period / 2000, 2000)
        center = np.array([0.0, -1.0, 0.0])
        radii = np.linalg.norm(traj.q - center, axis=1)
        self.assertLess(float(np.max(np.abs(radii - 1.0))), 1e-6)
        self.assertLess(conserved_drift(traj, system.hamiltonian.H), 1e-8)
        np.testing.assert_allclose(traj.q[-1], system.initial_state[:3], atol=1e-6)

    def test_fourth_order_convergence(self):
        """Test that halving the step divides the error by about sixteen"""
        system = build_system('em-3d')
        errors = []
        for steps in (100, 200):
            traj = integrate(system.dirac, Gauge.unit(), system.initial_state, 2.0 * math.pi / steps, steps)
            errors.append(float(np.linalg.norm(traj.q[-1] - system.initial_state[:3])))
        factor = errors[0] / errors[1]
        self.assertGreater(factor, 12.0)
        self.assertLess(factor, 20.0)

    def test_null_constraint_preserved(self):
        """Test that the massless particle stays on the light cone"""
        system = build_system('massless')
        traj = integrate(system.dirac, Gauge.unit(), system.initial_state, 1e-3, 200)
        report = drift_report(traj, system.constraints)
        self.assertLess(report['max'], 1e-10)
        self.assertEqual(report['steps'], 200)
        self.assertEqual(len(report['per_step']), 201)

    def test_off_constraint_start(self):
        """Test that the initial point must satisfy the constraints"""
        system = build_system('relativistic')
        with self.assertRaises(OffConstraintError):
            integrate(system.dirac, Gauge.unit(), [0.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0], 1e-3, 10)

    def test_gauge_outside_domain(self):
        """Test that a negative multiplier stops integration with the step index"""
        system = build_system('relativistic')
        with self.assertRaises(IntegrationError) as ctx:
            integrate(system.dirac, Gauge.custom('negative', lambda sys, x: [-1.0]),
                      system.initial_state, 1e-3, 10)
        self.assertEqual(ctx.exception.step, 0)

    def test_invalid_step(self):
        """Test step size validation"""
        system = build_system('em-3d')
        with self.assertRaises(ValueError):
            integrate(system.dirac, Gauge.unit(), system.initial_state, 0.0, 10)

    def test_trajectory_frame(self):
        """Test the tabular form of a trajectory"""
        system = build_system('relativistic')
        traj = integrate(system.dirac, Gauge.unit(), system.initial_state, 1e-2, 5)
        frame = traj.to_frame()
        self.assertEqual(list(frame.columns), ['t', 'q0', 'q1', 'q2', 'q3', 'p0', 'p1', 'p2', 'p3', 'v0'])
        self.assertEqual(len(frame), 6)
        self.assertTrue((frame['v0'] == 1.0).all())

    def test_trajectory_validation(self):
        """Test that times must increase"""
        with self.assertRaises(ValueError):
            Trajectory(np.array([0.0, 0.0]), np.zeros((2, 2)), np.zeros((2, 1)), 1)


class TestDrift(unittest.TestCase):
    """Test suite for drift reports"""

    def test_empty_constraints(self):
        """Test drift of an unconstrained trajectory"""
        system = build_system('em-3d')
        traj = integrate(system.dirac, Gauge.unit(), system.initial_state, 1e-2, 3)
        report = drift_report(traj, ConstraintSet())
        self.assertEqual(report['max'], 0.0)
        self.assertEqual(report['per_constraint'], {})


class TestReparametrization(unittest.TestCase):
    """Test suite for reparametrized trajectories"""

    def setUp(self):
        """Set up a charged relativistic circle"""
        system = build_system('relativistic', {'B': 1.0})
        x0 = np.array([0.0, 0.0, 0.0, 0.0, math.sqrt(2.0), 1.0, 0.0, 0.0])
        self.system = system
        self.traj = integrate(system.dirac, Gauge.unit(), x0, 5e-3, 200)

    def test_linear_time_map(self):
        """Test that t = 2 s with doubled multipliers solves the same equations"""
        worst = reparametrize_check(self.system.dirac, self.traj, lambda s: 2.0 * s, lambda s: 2.0 + 0.0 * s)
        self.assertLess(worst, 1e-8)

    def test_orientation_reversal(self):
        """Test that a decreasing time map is refused"""
        with self.assertRaises(OrientationError):
            reparametrize_check(self.system.dirac, self.traj, lambda s: -s, lambda s: -1.0 + 0.0 * s)


if __name__ == '__main__':
    unittest.main()
