"""
Test script for bundle points, canonical maps and Poisson brackets
"""

import unittest
import sys
import os

import numpy as np

# Add parent directory to path
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from mechanics import jetcalc as jc
from mechanics.bundles import (
    BaseMismatchError,
    CotangentPoint,
    IteratedTangent,
    PhaseVelocity,
    TangentPoint,
    alpha,
    alpha_inverse,
    alpha_pushforward,
    beta,
    beta_inverse,
    beta_pushforward,
    bracket_field,
    chi_shift,
    dT_function,
    dT_omega,
    dT_theta,
    iT_omega,
    kappa,
    liouville_pair,
    omega_Q,
    poisson_bracket,
    theta_TQ,
    theta_TstarQ,
    tulczyjew_pairing,
)
from mechanics.jetcalc import ExpressionField


class TestBundlePoints(unittest.TestCase):
    """Test suite for coordinate tuples"""

    def test_as_array_round_trip(self):
        """Test flattening and splitting a phase velocity"""
        z = PhaseVelocity([1.0, 2.0], [3.0, 4.0], [5.0, 6.0], [7.0, 8.0])
        back = PhaseVelocity.from_array(z.as_array())
        np.testing.assert_array_equal(back.pdot, [7.0, 8.0])
        self.assertEqual(z.dim, 2)
        np.testing.assert_array_equal(z.base.p, [3.0, 4.0])
        np.testing.assert_array_equal(z.tangent.v, [5.0, 6.0])

    def test_mismatched_components(self):
        """Test that components of different sizes are rejected"""
        with self.assertRaises(ValueError):
            TangentPoint([1.0, 2.0], [1.0])

    def test_points_are_read_only(self):
        """Test that stored vectors cannot be mutated"""
        x = CotangentPoint([1.0], [2.0])
        with self.assertRaises(ValueError):
            x.q[0] = 5.0


class TestCanonicalMaps(unittest.TestCase):
    """Test suite for the involution and the alpha/beta maps"""

    def setUp(self):
        """Set up random points and variations"""
        rng = np.random.default_rng(7)
        self.m = 3
        self.z = PhaseVelocity.from_array(rng.normal(size=4 * self.m))
        self.w = IteratedTangent.from_array(rng.normal(size=4 * self.m))
        self.dz = rng.normal(size=4 * self.m)
        self.dz2 = rng.normal(size=4 * self.m)

    def test_kappa_is_involution(self):
        """Test kappa(kappa(w)) = w"""
        np.testing.assert_array_equal(kappa(kappa(self.w)).as_array(), self.w.as_array())

    def test_alpha_beta_inverses(self):
        """Test that alpha and beta invert exactly"""
        np.testing.assert_array_equal(alpha_inverse(alpha(self.z)).as_array(), self.z.as_array())
        np.testing.assert_array_equal(beta_inverse(beta(self.z)).as_array(), self.z.as_array())

    def test_alpha_pulls_back_liouville(self):
        """Test theta_TQ(alpha(z), alpha_* dz) = d_T theta(z, dz)"""
        lhs = theta_TQ(alpha(self.z), alpha_pushforward(self.dz))
        self.assertAlmostEqual(lhs, dT_theta(self.z, self.dz), places=12)

    def test_beta_pulls_back_liouville(self):
        """Test theta_T*Q(beta(z), beta_* dz) = i_T omega(z, dz)"""
        lhs = theta_TstarQ(beta(self.z), beta_pushforward(self.dz))
        self.assertAlmostEqual(lhs, iT_omega(self.z, self.dz), places=12)

    def test_symplectic_forms_antisymmetric(self):
        """Test antisymmetry of d_T omega and omega_Q"""
        self.assertAlmostEqual(dT_omega(self.dz, self.dz2), -dT_omega(self.dz2, self.dz), places=12)
        a, b = self.dz[:2 * self.m], self.dz2[:2 * self.m]
        self.assertAlmostEqual(omega_Q(a, b), -omega_Q(b, a), places=12)
        self.assertEqual(omega_Q(a, a), 0.0)

    def test_variation_length_checked(self):
        """Test that a variation of the wrong size is rejected"""
        with self.assertRaises(ValueError):
            dT_theta(self.z, np.zeros(5))

    def test_tulczyjew_pairing_base_check(self):
        """Test pairing value and the base-point check"""
        w = IteratedTangent(self.z.q, self.z.qdot, [1.0, 0.0, 0.0], [0.0, 1.0, 0.0])
        expected = self.z.p[1] + self.z.pdot[0]
        self.assertAlmostEqual(tulczyjew_pairing(self.z, w), expected, places=12)
        with self.assertRaises(BaseMismatchError):
            tulczyjew_pairing(self.z, self.w)

    def test_chi_shift(self):
        """Test the force shift and its base check"""
        f = CotangentPoint(self.z.q, [1.0, 2.0, 3.0])
        shifted = chi_shift(self.z, f)
        np.testing.assert_allclose(shifted.pdot, self.z.pdot - [1.0, 2.0, 3.0])
        with self.assertRaises(BaseMismatchError):
            chi_shift(self.z, CotangentPoint(self.z.q + 1.0, [0.0, 0.0, 0.0]))

    def test_base_dimension_mismatch(self):
        """Test that bases of different dimension raise a base mismatch"""
        with self.assertRaises(BaseMismatchError):
            chi_shift(self.z, CotangentPoint([0.0, 0.0], [1.0, 2.0]))

    def test_liouville_pair(self):
        """Test p . qdot"""
        z = PhaseVelocity([0.0, 0.0], [1.0, 2.0], [3.0, -1.0], [0.0, 0.0])
        self.assertEqual(liouville_pair(z), 1.0)

    def test_tangent_lift_of_function(self):
        """Test d_T F = grad F . v for F = x^2 y"""
        F = ExpressionField(lambda z: z[0] * z[0] * z[1], 2)
        x = TangentPoint([1.0, 2.0], [0.5, -1.0])
        self.assertAlmostEqual(dT_function(F, x), 4.0 * 0.5 + 1.0 * -1.0, places=14)


class TestPoissonBracket(unittest.TestCase):
    """Test suite for the canonical Poisson bracket"""

    def setUp(self):
        """Set up three smooth fields on T*R^2"""
        self.F = ExpressionField(lambda z: z[0] * z[2] + jc.sin(z[1]) * z[3], 4, name='F')
        self.G = ExpressionField(lambda z: z[2] * z[2] + z[3] * z[3] + z[0] * z[1], 4, name='G')
        self.K = ExpressionField(lambda z: jc.exp(0.3 * z[0]) * z[3] - z[1] * z[2], 4, name='K')
        self.x = np.array([0.2, -0.4, 0.7, 1.1])

    def test_canonical_relations(self):
        """Test {q^i, p_j} = delta and {q, q} = 0"""
        q0 = jc.coordinate_field(0, 4)
        q1 = jc.coordinate_field(1, 4)
        p0 = jc.coordinate_field(2, 4)
        self.assertAlmostEqual(poisson_bracket(q0, p0, self.x), 1.0)
        self.assertAlmostEqual(poisson_bracket(q1, p0, self.x), 0.0)
        self.assertAlmostEqual(poisson_bracket(q0, q1, self.x), 0.0)

    def test_antisymmetry(self):
        """Test {F, G} = -{G, F}"""
        self.assertAlmostEqual(poisson_bracket(self.F, self.G, self.x),
                               -poisson_bracket(self.G, self.F, self.x), places=12)

    def test_jacobi_identity(self):
        """Test the Jacobi identity with nested bracket fields"""
        F, G, K = self.F, self.G, self.K
        total = (poisson_bracket(F, bracket_field(G, K), self.x)
                 + poisson_bracket(G, bracket_field(K, F), self.x)
                 + poisson_bracket(K, bracket_field(F, G), self.x))
        self.assertLess(abs(total), 1e-9)

    def test_bracket_field_type_check(self):
        """Test that bracket_field rejects plain callables"""
        with self.assertRaises(TypeError):
            bracket_field(lambda z: 0.0, self.G)


if __name__ == '__main__':
    unittest.main()
