"""Mellin-symbol analysis and boundary integral solvers for the Helmholtz wedge problem."""
__version__ = "0.1.0"
