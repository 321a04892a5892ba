"""Numerical laboratory for the extended Bogomolny equations on a half-space grid."""

__version__ = "0.1.0"
