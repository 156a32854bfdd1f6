"""Monte Carlo and quadrature tools for non-local operators with stable-like jump kernels."""

__version__ = "0.1.0"
