"""
Test script for second-order jets and scalar fields
"""

import unittest
import sys
import os

import numpy as np

# Add parent directory to path
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from mechanics import jetcalc as jc
from mechanics.jetcalc import (
    BracketField,
    DomainError,
    ExpressionField,
    Jet2,
    PartialField,
    ReducedField,
    constant_field,
    coordinate_field,
    fd_jet,
    jet,
    variables,
)


class TestJet2(unittest.TestCase):
    """Test suite for Jet2 arithmetic"""

    def test_product_rule(self):
        """Test value, gradient and Hessian of x * y"""
        x, y = variables([2.0, 3.0])
        j = x * y
        self.assertEqual(j.value, 6.0)
        np.testing.assert_allclose(j.gradient, [3.0, 2.0])
        np.testing.assert_allclose(j.hessian, [[0.0, 1.0], [1.0, 0.0]])

    def test_quotient_and_power(self):
        """Test 1/x and x**3 against closed forms"""
        (x,) = variables([2.0])
        r = 1.0 / x
        self.assertAlmostEqual(r.value, 0.5)
        self.assertAlmostEqual(r.gradient[0], -0.25)
        self.assertAlmostEqual(r.hessian[0, 0], 0.25)
        c = x ** 3
        self.assertAlmostEqual(c.gradient[0], 12.0)
        self.assertAlmostEqual(c.hessian[0, 0], 12.0)

    def test_elementary_functions(self):
        """Test sqrt, exp, log, sin and cos derivatives"""
        (x,) = variables([0.7])
        self.assertAlmostEqual(jc.sqrt(x).gradient[0], 0.5 / np.sqrt(0.7))
        self.assertAlmostEqual(jc.exp(x).hessian[0, 0], np.exp(0.7))
        self.assertAlmostEqual(jc.log(x).hessian[0, 0], -1.0 / 0.49)
        self.assertAlmostEqual(jc.sin(x).gradient[0], np.cos(0.7))
        self.assertAlmostEqual(jc.cos(x).hessian[0, 0], -np.cos(0.7))

    def test_floats_pass_through(self):
        """Test that elementary functions accept plain floats"""
        self.assertAlmostEqual(jc.sqrt(4.0), 2.0)
        self.assertAlmostEqual(jc.cos(0.0), 1.0)

    def test_sqrt_of_non_positive_jet(self):
        """Test that sqrt rejects a jet at zero"""
        (x,) = variables([0.0])
        with self.assertRaises(ValueError):
            jc.sqrt(x)

    def test_first_order_mode(self):
        """Test that order=1 seeds carry no Hessian"""
        x, y = variables([1.0, 2.0], order=1)
        j = x * y + jc.sin(x)
        self.assertIsNone(j.hessian)
        self.assertEqual(j.order, 1)

    def test_division_by_zero_jet(self):
        """Test reciprocal of a jet with zero value"""
        (x,) = variables([0.0])
        with self.assertRaises(ZeroDivisionError):
            1.0 / x


class TestScalarFields(unittest.TestCase):
    """Test suite for fields, guards and composition"""

    def setUp(self):
        """Set up a smooth test field and a point"""
        self.f = ExpressionField(
            lambda z: jc.exp(z[0]) * jc.sin(z[1]) + z[0] * z[1] * z[1] / (1.0 + z[0] * z[0]), 2, name='f')
        self.x = np.array([0.3, -1.1])

    def test_jet_matches_finite_differences(self):
        """Test exact jet against the finite-difference oracle"""
        exact = jet(self.f, self.x)
        approx = fd_jet(self.f, self.x)
        self.assertAlmostEqual(exact.value, approx.value, places=12)
        np.testing.assert_allclose(exact.gradient, approx.gradient, atol=1e-8)
        np.testing.assert_allclose(exact.hessian, approx.hessian, atol=1e-5)

    def test_hessian_symmetric(self):
        """Test that the Hessian is symmetric"""
        H = jet(self.f, self.x).hessian
        np.testing.assert_allclose(H, H.T, atol=1e-14)

    def test_guard_raises_domain_error(self):
        """Test that a guarded field names its guard when violated"""
        g = ExpressionField(lambda z: jc.log(z[0]), 1, guard=lambda x: x[0] > 0, guard_name='x > 0')
        with self.assertRaises(DomainError) as ctx:
            g.evaluate([-1.0])
        self.assertEqual(ctx.exception.guard_name, 'x > 0')
        self.assertFalse(g.admissible([-1.0]))

    def test_wrong_arity(self):
        """Test point size validation"""
        with self.assertRaises(ValueError):
            self.f.evaluate([1.0, 2.0, 3.0])

    def test_chain_rule_composition(self):
        """Test that calling a field on jets composes by the chain rule"""
        inner = ExpressionField(lambda z: z[0] * z[0] + z[1], 2, name='inner')
        outer = ExpressionField(lambda z: jc.sin(z[0]), 1, name='outer')
        composed = ExpressionField(lambda z: outer(inner(*z)), 2)
        direct = ExpressionField(lambda z: jc.sin(z[0] * z[0] + z[1]), 2)
        a, b = jet(composed, [0.4, 0.2]), jet(direct, [0.4, 0.2])
        np.testing.assert_allclose(a.gradient, b.gradient, atol=1e-14)
        np.testing.assert_allclose(a.hessian, b.hessian, atol=1e-14)

    def test_field_arithmetic(self):
        """Test +, - and * between fields and constants"""
        x0, x1 = coordinate_field(0, 2), coordinate_field(1, 2)
        h = x0 * x1 + 2.0 - constant_field(1.0, 2)
        self.assertAlmostEqual(h.evaluate([2.0, 5.0]), 11.0)
        np.testing.assert_allclose(jet(h, [2.0, 5.0]).gradient, [5.0, 2.0])
        self.assertAlmostEqual((-h).evaluate([2.0, 5.0]), -11.0)

    def test_bracket_field_of_coordinates(self):
        """Test {q, p} = 1 on a one-dimensional cotangent bundle"""
        q, p = coordinate_field(0, 2), coordinate_field(1, 2)
        self.assertAlmostEqual(BracketField(q, p, 1).evaluate([0.3, 0.4]), 1.0)
        self.assertAlmostEqual(BracketField(p, q, 1).evaluate([0.3, 0.4]), -1.0)

    def test_bracket_field_gradient(self):
        """Test the exact bracket gradient against finite differences"""
        F = ExpressionField(lambda z: z[0] * z[0] * z[1], 2)
        G = ExpressionField(lambda z: jc.sin(z[0]) + z[1] * z[1] * z[1], 2)
        B = BracketField(F, G, 1)
        x = np.array([0.5, 0.8])
        np.testing.assert_allclose(B.jet(x).gradient, fd_jet(B, x).gradient, atol=1e-7)

    def test_partial_field(self):
        """Test dF/dx as a field"""
        F = ExpressionField(lambda z: z[0] * z[0] * z[1], 2)
        d0 = PartialField(F, 0)
        self.assertAlmostEqual(d0.evaluate([3.0, 2.0]), 12.0)
        with self.assertRaises(ValueError):
            PartialField(F, 5)

    def test_reduced_field_envelope(self):
        """Test elimination of a quadratic variable against the closed form"""
        # U(x, y) = (y - x)^2 + x y has stationary y = x / 2, reduced value 3x^2/4
        U = ExpressionField(lambda z: (z[1] - z[0]) * (z[1] - z[0]) + z[0] * z[1], 2)
        R = ReducedField(U, [1], anchor_seed=[0.0])
        x = 1.3
        j = R.jet([x])
        self.assertAlmostEqual(j.value, 0.75 * x * x, places=10)
        self.assertAlmostEqual(j.gradient[0], 1.5 * x, places=8)
        self.assertAlmostEqual(j.hessian[0, 0], 1.5, places=8)

    def test_reduced_field_needs_seed(self):
        """Test that a reduced field without seed information is refused"""
        U = ExpressionField(lambda z: z[0] * z[1], 2)
        with self.assertRaises(ValueError):
            ReducedField(U, [1])


if __name__ == '__main__':
    unittest.main()
