"""
Implicit mechanics engine: jets, bundle geometry, generating families,
dynamics, Legendre transformations, constraint algorithm and integration
"""

__version__ = "1.0.0"
