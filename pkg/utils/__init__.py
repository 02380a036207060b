"""
Numerical kernels, run policy and report writers for the mechanics engine
"""

__version__ = "1.0.0"
