"""Numerical differential geometry of locally anisotropic bundles."""

__version__ = "0.1.0"
