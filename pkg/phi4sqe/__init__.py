"""Pseudo-spectral simulation of the renormalized stochastic quantization equation for Φ⁴ on the 3-torus."""

__version__ = "0.1.0"
