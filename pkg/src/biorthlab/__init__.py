"""High-precision laboratory for a biorthogonal ensemble with two
interactions: equilibrium measure, biorthogonal polynomial systems, and
the correlation kernel with its sine and Airy scaling limits."""

__version__ = "0.1.0"
