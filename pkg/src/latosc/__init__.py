"""Discrete square functions, variation norms, maximal operators and CZ decompositions on Z^d."""

from .lattice import LatticeFunction, PointSet, Rectangle, lp_norm, rect_average, weak_quasinorm

__all__ = ["LatticeFunction", "PointSet", "Rectangle", "lp_norm", "rect_average", "weak_quasinorm"]
__version__ = "0.1.0"
