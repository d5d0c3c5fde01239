"""Optimal constants of weighted Hardy-Sobolev inequalities on a symmetry-reduced grid."""

__version__ = "0.1.0"
