"""
Test script for the constraint algorithm: brackets, multiplier cones,
secondary constraints and prolongation feasibility
"""

import unittest
import sys
import os

import numpy as np

# Add parent directory to path
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from mechanics.bundles import CotangentPoint, TangentPoint
from mechanics.constraint_algo import (
    VERDICT_FAILED,
    VERDICT_INTEGRABLE,
    ConstraintSet,
    HamiltonianFamily,
    OffConstraintError,
    bracket_matrix,
    cone_interior,
    dirac_iterate,
    discover_secondary,
    independent_subset,
    multiplier_conditions,
    project_to_constraints,
    prolongation_defect,
    prolongation_feasible,
    sample_constraint_points,
)
from mechanics.dynamics import MultiplierDomain
from mechanics.jetcalc import ExpressionField
from mechanics.systems import build_system, two_particle_prolongation_functions, two_particle_prolongation_point


def gaussian_sampler(dim):
    """Sampler drawing standard normal seeds"""
    return lambda rng: rng.normal(size=dim)


class TestConstraintSet(unittest.TestCase):
    """Test suite for constraint sets and projection"""

    def setUp(self):
        """Set up the unit momentum shell on T*R^2"""
        self.shell = ExpressionField(lambda z: 0.5 * (z[2] * z[2] + z[3] * z[3] - 1.0), 4, name='shell')
        self.C = ConstraintSet([self.shell])

    def test_tags_and_names(self):
        """Test tags, extension and subsets"""
        q0 = ExpressionField(lambda z: z[0], 4, name='q0')
        extended = self.C.extended([q0], 'secondary')
        self.assertEqual(extended.tags, ['primary', 'secondary'])
        self.assertEqual(extended.describe()[1], {'name': 'q0', 'tag': 'secondary'})
        self.assertEqual(extended.subset([1]).names, ['q0'])
        self.assertTrue(ConstraintSet().is_empty)

    def test_length_mismatch(self):
        """Test that tags must match the functions"""
        with self.assertRaises(ValueError):
            ConstraintSet([self.shell], tags=['primary', 'secondary'])

    def test_projection(self):
        """Test Gauss-Newton projection onto the shell"""
        x = project_to_constraints([0.1, 0.2, 1.2, 0.5], self.C)
        self.assertAlmostEqual(float(np.linalg.norm(x.p)), 1.0, places=10)
        np.testing.assert_allclose(x.q, [0.1, 0.2])

    def test_sampling(self):
        """Test that samples land on the constraint set"""
        rng = np.random.default_rng(1)
        points = sample_constraint_points(self.C, gaussian_sampler(4), 5, rng)
        self.assertEqual(len(points), 5)
        for x in points:
            self.assertLess(self.C.max_violation(x.as_array()), 1e-10)

    def test_independent_subset(self):
        """Test that a duplicated constraint is dropped"""
        doubled = ConstraintSet([self.shell, 2.0 * self.shell])
        points = sample_constraint_points(self.C, gaussian_sampler(4), 3, np.random.default_rng(2))
        kept, dropped = independent_subset(doubled, points)
        self.assertEqual(kept, [0])
        self.assertEqual(dropped[0]['reason'], 'rank drop')


class TestMultiplierCone(unittest.TestCase):
    """Test suite for interior points of the multiplier cone"""

    def test_positive_cone(self):
        """Test alpha^1 = alpha^2 with both multipliers positive"""
        alpha = cone_interior(np.array([[1.0, -1.0]]), [MultiplierDomain.positive()] * 2)
        self.assertIsNotNone(alpha)
        self.assertAlmostEqual(alpha[0], alpha[1], places=10)
        self.assertGreater(alpha[0], 0.0)

    def test_empty_positive_cone(self):
        """Test that alpha^1 + alpha^2 = 0 has no positive solution"""
        self.assertIsNone(cone_interior(np.array([[1.0, 1.0]]), [MultiplierDomain.positive()] * 2))

    def test_unit_normalization(self):
        """Test that the unit multiplier is normalized to one"""
        alpha = cone_interior(np.array([[1.0, 2.0]]), [MultiplierDomain.unit(), MultiplierDomain.free()])
        np.testing.assert_allclose(alpha, [1.0, -0.5], atol=1e-10)

    def test_no_conditions(self):
        """Test a cone without conditions"""
        alpha = cone_interior(np.zeros((0, 1)), [MultiplierDomain.positive()])
        self.assertGreater(alpha[0], 0.0)


class TestBrackets(unittest.TestCase):
    """Test suite for bracket matrices on catalog systems"""

    def test_single_constraint_is_first_class(self):
        """Test {Phi, Phi} = 0 for the relativistic particle"""
        system = build_system('relativistic')
        points = sample_constraint_points(system.constraints, system.sampler, 3, np.random.default_rng(0))
        for x in points:
            M = bracket_matrix(system.family, system.constraints, x)
            self.assertEqual(M.shape, (1, 1))
            self.assertLess(abs(M[0, 0]), 1e-12)

    def test_off_constraint_point(self):
        """Test that bracket matrices need a point on the constraint set"""
        system = build_system('relativistic')
        with self.assertRaises(OffConstraintError):
            bracket_matrix(system.family, system.constraints, [0.0, 0.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0])

    def test_two_particle_bracket_closed_form(self):
        """Test {Phi_1, Phi_2} against the closed form"""
        system = build_system('two-particle')
        points = sample_constraint_points(system.constraints, system.sampler, 3, np.random.default_rng(4),
                                          excluded=system.excluded)
        for x in points:
            M = bracket_matrix(system.family, system.constraints, x)
            expected = system.spec.bracket_closed_form(x.as_array())
            self.assertAlmostEqual(M[1, 0], expected, delta=1e-8 * max(1.0, abs(expected)))


class TestDiracIteration(unittest.TestCase):
    """Test suite for the iteration of bracket tests"""

    def test_discover_secondary(self):
        """Test that {H, q} = -p becomes the only candidate when q = 0 is primary"""
        H = ExpressionField(lambda z: 0.5 * z[1] * z[1], 2, name='H')
        phi = ExpressionField(lambda z: z[0], 2, name='q')
        fam = HamiltonianFamily([H, phi], [MultiplierDomain.unit(), MultiplierDomain.free()], 1)
        points = [CotangentPoint([0.0], [p]) for p in (0.5, -1.0, 2.0)]
        found = discover_secondary(fam, ConstraintSet([phi]), points)
        self.assertEqual(len(found), 1)
        self.assertAlmostEqual(found[0].evaluate(np.array([0.0, 0.5])), -0.5, places=12)
        self.assertEqual(discover_secondary(fam, ConstraintSet(), points), [])

    def test_toy_secondary_constraint(self):
        """Test H = p^2/2 with the primary constraint q = 0: one secondary, p = 0"""
        H = ExpressionField(lambda z: 0.5 * z[1] * z[1], 2, name='H')
        phi = ExpressionField(lambda z: z[0], 2, name='q')
        fam = HamiltonianFamily([H, phi], [MultiplierDomain.unit(), MultiplierDomain.free()], 1)
        report = dirac_iterate(fam, ConstraintSet([phi]), gaussian_sampler(2), samples=6, seed=0)
        self.assertEqual(report.verdict, VERDICT_INTEGRABLE)
        self.assertEqual(report.secondary_count, 1)
        self.assertEqual(report.constraints.tags, ['primary', 'secondary'])
        self.assertEqual(report.multiplier_conditions, 1)
        self.assertEqual(report.generation, 1)

    def test_inconsistent_system_fails(self):
        """Test H = q with p = 1: the bracket is a nonzero constant"""
        H = ExpressionField(lambda z: z[0], 2, name='H')
        phi = ExpressionField(lambda z: z[1] - 1.0, 2, name='p-1')
        fam = HamiltonianFamily([H], [MultiplierDomain.unit()], 1)
        report = dirac_iterate(fam, ConstraintSet([phi]), gaussian_sampler(2), samples=4, seed=0)
        self.assertEqual(report.verdict, VERDICT_FAILED)
        self.assertIn('no sample projected', report.reason)
        self.assertIn('generations', report.to_dict())

    def test_relativistic_integrable(self):
        """Test that the relativistic particle needs no secondary constraint"""
        system = build_system('relativistic')
        report = dirac_iterate(system.family, system.constraints, system.sampler, samples=8, seed=0)
        self.assertEqual(report.verdict, VERDICT_INTEGRABLE)
        self.assertEqual(report.generation, 0)
        self.assertEqual(report.secondary_count, 0)
        self.assertTrue(report.notes)

    def test_two_particle(self):
        """Test one secondary constraint and the multiplier ratio for interacting particles"""
        system = build_system('two-particle')
        report = dirac_iterate(system.family, system.constraints, system.sampler, samples=8, seed=0,
                               excluded=system.excluded)
        self.assertEqual(report.verdict, VERDICT_INTEGRABLE)
        self.assertEqual(report.secondary_count, 1)
        self.assertEqual(report.multiplier_conditions, 1)
        points = sample_constraint_points(report.constraints, system.sampler, 3, np.random.default_rng(9),
                                          excluded=system.excluded)
        for x in points:
            conditions = multiplier_conditions(system.family, report.constraints, x)
            expected = system.spec.ratio_closed_form(x.as_array())
            self.assertTrue(conditions.feasible)
            self.assertAlmostEqual(conditions.ratio, expected, delta=1e-8 * max(1.0, abs(expected)))

    def test_two_particle_secondary_zero_locus(self):
        """Test that the discovered constraint vanishes with Psi and only there"""
        system = build_system('two-particle')
        report = dirac_iterate(system.family, system.constraints, system.sampler, samples=8, seed=0,
                               excluded=system.excluded)
        candidate = report.constraints.functions[report.constraints.tags.index('secondary')]
        psi = system.extras['psi']
        rng = np.random.default_rng(11)
        on_psi = sample_constraint_points(system.constraints.extended([psi], 'secondary'), system.sampler, 10,
                                          rng, excluded=system.excluded)
        self.assertEqual(len(on_psi), 10)
        for x in on_psi:
            self.assertLess(abs(candidate.evaluate(x.as_array())), 1e-8)
        primary = sample_constraint_points(system.constraints, system.sampler, 10, rng, excluded=system.excluded)
        off_psi = [x for x in primary if abs(psi.evaluate(x.as_array())) > 0.05]
        self.assertTrue(off_psi)
        for x in off_psi:
            self.assertGreater(abs(candidate.evaluate(x.as_array())), 1e-3)

    def test_two_particle_fixed_point(self):
        """Test that restarting from the final constraint set stops in generation 0"""
        system = build_system('two-particle')
        report = dirac_iterate(system.family, system.constraints, system.sampler, samples=8, seed=0,
                               excluded=system.excluded)
        rerun = dirac_iterate(system.family, report.constraints, system.sampler, samples=8, seed=1,
                              excluded=system.excluded)
        self.assertEqual(rerun.verdict, VERDICT_INTEGRABLE)
        self.assertEqual(rerun.generation, 0)
        self.assertEqual(rerun.secondary_count, report.secondary_count)
        counts = [len(record.constraints) for record in report.generations]
        self.assertEqual(counts, sorted(counts))
        self.assertLessEqual(report.restricted_bracket_max, 1e-8)

    def test_two_particle_constant_potential(self):
        """Test that a constant potential gives no secondary constraint"""
        system = build_system('two-particle', {'V': 'constant', 'c': 0.5})
        report = dirac_iterate(system.family, system.constraints, system.sampler, samples=8, seed=0,
                               excluded=system.excluded)
        self.assertEqual(report.verdict, VERDICT_INTEGRABLE)
        self.assertEqual(report.secondary_count, 0)


class TestProlongation(unittest.TestCase):
    """Test suite for the pointwise prolongation test"""

    def test_consistent_equations(self):
        """Test qdot = q, which prolongs at every point"""
        f = ExpressionField(lambda z: z[1] - z[0], 2)
        v = TangentPoint([0.5], [0.5])
        self.assertLess(prolongation_defect([f], v), 1e-14)
        self.assertTrue(prolongation_feasible([f], v))

    def test_inconsistent_equations(self):
        """Test q0 = q1 with qdot0 = 1 and qdot1 = 0, whose derivative cannot vanish"""
        f1 = ExpressionField(lambda z: z[2] - 1.0, 4)
        f2 = ExpressionField(lambda z: z[0] - z[1], 4)
        f3 = ExpressionField(lambda z: z[3], 4)
        v = TangentPoint([0.3, 0.3], [1.0, 0.0])
        self.assertAlmostEqual(prolongation_defect([f1, f2, f3], v), 1.0, places=10)
        self.assertFalse(prolongation_feasible([f1, f2, f3], v))

    def test_two_particle_multiplier_ratio(self):
        """Test that the prolonged two-particle equations accept only the conditioned multiplier ratio"""
        system = build_system('two-particle')
        psi = system.extras['psi']
        C = system.constraints.extended([psi], 'secondary')
        functions = two_particle_prolongation_functions(system.dirac, psi)
        self.assertEqual(len(functions), 19)
        points = sample_constraint_points(C, system.sampler, 3, np.random.default_rng(4), excluded=system.excluded)
        self.assertTrue(points)
        for x in points:
            ratio = multiplier_conditions(system.family, C, x).ratio
            good = two_particle_prolongation_point(system.dirac, x.as_array(), [1.0, ratio])
            wrong = two_particle_prolongation_point(system.dirac, x.as_array(), [1.0, 2.0 * ratio])
            self.assertLess(prolongation_defect(functions, good), 1e-6)
            self.assertFalse(prolongation_feasible(functions, wrong))

    def test_off_set_point(self):
        """Test that the point must satisfy the equations"""
        f = ExpressionField(lambda z: z[1] - z[0], 2)
        with self.assertRaises(OffConstraintError):
            prolongation_defect([f], TangentPoint([0.5], [1.0]))


if __name__ == '__main__':
    unittest.main()
