"""Lagrangian calculus on finite metric measure spaces: test plans, exact
Wasserstein transport, polygonal geodesic interpolation across converging
spaces, and Mosco-type liminf experiments for Cheeger energies."""

__version__ = "0.1.0"
