"""
Test script for Morse families, generated covectors and family reduction
"""

import unittest
import sys
import os
import math

import numpy as np

# Add parent directory to path
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from mechanics.genfun import (
    ConstrainedGenerator,
    CriticalityError,
    MorseFamily,
    ReductionRefused,
    constrained_residual,
    generate_from_function,
    generated_covector,
    generated_isotropy,
    lagrange_bracket_max,
    morse_rank_ok,
    reduce_family,
    solve_critical_fiber,
    trivial_family,
)
from mechanics.jetcalc import DomainError, ExpressionField
from mechanics.systems import build_elastic_circle


def fold_family():
    """U(q; y) = q y - y^3 / 3, critical at y = +-sqrt(q) with p = y"""
    return MorseFamily(1, 1, ExpressionField(lambda z: z[0] * z[1] - z[1] * z[1] * z[1] / 3.0, 2), name='fold')


class TestGeneration(unittest.TestCase):
    """Test suite for covectors generated by functions and families"""

    def test_generate_from_function(self):
        """Test p = grad U for a plain function"""
        U = ExpressionField(lambda z: 1.5 * (z[0] * z[0] + z[1] * z[1]), 2)
        point = generate_from_function(U, [1.0, -2.0])
        np.testing.assert_allclose(point.p, [3.0, -6.0])
        self.assertEqual(point.witness.size, 0)
        self.assertEqual(trivial_family(U).fiber_dim, 0)

    def test_family_arity_checked(self):
        """Test that base + fiber must match the field arity"""
        with self.assertRaises(ValueError):
            MorseFamily(2, 2, ExpressionField(lambda z: z[0], 3))

    def test_fold_has_two_branches(self):
        """Test that two seeds find both critical points of the fold"""
        fam = fold_family()
        found = solve_critical_fiber(fam, [4.0], [[1.0], [-1.0]])
        self.assertEqual(len(found), 2)
        covectors = sorted(generated_covector(fam, [4.0], y).p[0] for y in found)
        np.testing.assert_allclose(covectors, [-2.0, 2.0], atol=1e-10)

    def test_fold_without_critical_points(self):
        """Test that a base point with no critical fiber returns an empty list"""
        found = solve_critical_fiber(fold_family(), [-1.0], [[1.0]], least_squares=True, max_iter=20)
        self.assertEqual(found, [])

    def test_seeds_deduplicated(self):
        """Test that seeds converging to one point yield one solution"""
        found = solve_critical_fiber(fold_family(), [4.0], [[1.5], [2.5]])
        self.assertEqual(len(found), 1)

    def test_rank_holds_at_fold_point(self):
        """Test that the rank condition holds where the fiber Hessian vanishes"""
        ok, rank = morse_rank_ok(fold_family(), [0.0], [0.0])
        self.assertTrue(ok)
        self.assertEqual(rank, 1)

    def test_non_critical_witness(self):
        """Test that a non-critical witness is rejected"""
        with self.assertRaises(CriticalityError):
            generated_covector(fold_family(), [4.0], [1.0])

    def test_fiber_domain(self):
        """Test that a seed outside the fiber domain raises"""
        fam = MorseFamily(1, 1, ExpressionField(lambda z: z[0] * z[1], 2),
                          fiber_domain=lambda y: y[0] > 0, fiber_domain_name='y > 0')
        with self.assertRaises(DomainError):
            solve_critical_fiber(fam, [1.0], [[-1.0]])


class TestElasticCircle(unittest.TestCase):
    """Test suite for the point tied to a circle"""

    def setUp(self):
        """Set up the family and an input point"""
        self.fam = build_elastic_circle(k=1.0, a=1.0)
        self.q = np.array([1.5, 0.5])

    def test_branches_match_closed_form(self):
        """Test both force branches against k q / rho (rho -+ a)"""
        base = math.atan2(self.q[1], self.q[0])
        found = solve_critical_fiber(self.fam, self.q, [[base], [base + math.pi]])
        self.assertEqual(len(found), 2)
        rho = float(np.hypot(*self.q))
        expected = [self.q / rho * (rho - 1.0), self.q / rho * (rho + 1.0)]
        for y, p_expected in zip(found, expected):
            np.testing.assert_allclose(generated_covector(self.fam, self.q, y).p, p_expected, atol=1e-9)

    def test_isotropy(self):
        """Test that the generated set is isotropic"""
        y = [math.atan2(self.q[1], self.q[0])]
        self.assertLess(generated_isotropy(self.fam, self.q, y), 1e-10)


class TestConstrainedGenerator(unittest.TestCase):
    """Test suite for energies restricted to constraint sets"""

    def setUp(self):
        """Set up the bead on a unit circle under a unit force"""
        F = ExpressionField(lambda z: 0.5 * (z[0] * z[0] + z[1] * z[1] - 1.0), 2, name='circle')
        energy = ExpressionField(lambda z: z[1], 2, name='height')
        self.gen = ConstrainedGenerator([F], energy)

    def test_residual_vanishes_on_generated_points(self):
        """Test the generation residual at p = grad U + lam grad F"""
        theta, lam = 0.4, -0.7
        q = np.array([math.cos(theta), math.sin(theta)])
        p = np.array([lam * q[0], 1.0 + lam * q[1]])
        self.assertLess(np.max(np.abs(constrained_residual(self.gen, q, p, [lam]))), 1e-14)

    def test_as_family_generates_same_set(self):
        """Test the linear family against the constrained generator"""
        fam = self.gen.as_family()
        theta, lam = 0.4, -0.7
        q = np.array([math.cos(theta), math.sin(theta)])
        point = generated_covector(fam, q, [lam])
        np.testing.assert_allclose(point.p, [lam * q[0], 1.0 + lam * q[1]], atol=1e-14)

    def test_arity_mismatch(self):
        """Test that constraints and energy must share arity"""
        with self.assertRaises(ValueError):
            ConstrainedGenerator([ExpressionField(lambda z: z[0], 3)], ExpressionField(lambda z: z[0], 2))


class TestLagrangeBrackets(unittest.TestCase):
    """Test suite for the isotropy probe on parametrized surfaces"""

    def test_graph_of_gradient_is_isotropic(self):
        """Test a graph p = grad f"""
        surface = lambda t: (t, np.array([2.0 * t[0] + t[1], t[0] + 3.0 * t[1] * t[1]]))
        self.assertLess(lagrange_bracket_max(surface, [[0.1, 0.2], [0.5, -0.3]]), 1e-8)

    def test_non_lagrangian_surface(self):
        """Test a surface with a unit Lagrange bracket"""
        surface = lambda t: (t, np.array([t[1], 0.0]))
        self.assertAlmostEqual(lagrange_bracket_max(surface, [[0.0, 0.0]]), 1.0, places=8)


class TestReduction(unittest.TestCase):
    """Test suite for eliminating fiber variables"""

    def test_reduction_keeps_generated_set(self):
        """Test that eliminating a regular fiber variable preserves covectors"""
        U = ExpressionField(lambda z: z[0] * z[1] - z[1] * z[1] * z[1] / 3.0
                            + 0.5 * (z[2] - z[0]) * (z[2] - z[0]), 3)
        fam = MorseFamily(1, 2, U, name='fold-plus')
        reduced = reduce_family(fam, [1], [1.0], [1.0, 0.5])
        self.assertEqual(reduced.fiber_dim, 1)
        self.assertEqual(reduced.diagnostic['scope'], 'local-only')
        self.assertAlmostEqual(reduced.value([1.0], [1.0]), 2.0 / 3.0, places=10)
        self.assertAlmostEqual(generated_covector(reduced, [4.0], [2.0]).p[0], 2.0, places=8)

    def test_singular_block_refused(self):
        """Test refusal with a diagnostic when the eliminated block is singular"""
        U = ExpressionField(lambda z: z[0] * z[1] + z[2] * z[2] * z[2], 3)
        fam = MorseFamily(1, 2, U)
        with self.assertRaises(ReductionRefused) as ctx:
            reduce_family(fam, [1], [1.0], [0.0, 0.0])
        self.assertEqual(ctx.exception.diagnostic['anchor_block_rank'], 0)

    def test_index_range(self):
        """Test fiber index validation"""
        with self.assertRaises(ValueError):
            reduce_family(fold_family(), [3], [1.0], [1.0])

    def test_empty_elimination_returns_family(self):
        """Test that nothing to eliminate returns the input"""
        fam = fold_family()
        self.assertIs(reduce_family(fam, [], [1.0], [1.0]), fam)


if __name__ == '__main__':
    unittest.main()
