"""
Spectral-Galerkin simulator for the stochastic Schrodinger-Poisson /
Landau-Lifshitz-Gilbert system, with a diagnostics and verification harness.
"""

__version__ = "1.0.0"
SOFTWARE = f"spllg {__version__}"
