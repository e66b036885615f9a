"""Spectrum of the Neumann-Poincare operator on tori via toroidal Fourier modes."""

__version__ = "0.1.0"
