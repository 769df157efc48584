"""Rotation-equivariant convolutions with Fourier-series filter parametrization."""

__version__ = "0.1.0"
