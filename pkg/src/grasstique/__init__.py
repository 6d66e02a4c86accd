"""Quasi-Newton methods on products of Grassmannians for low multilinear-rank tensor approximation."""
from .tensor_core import SymmetricTensor, symmetrize
from .manifold import GrassmannPoint
from .objectives import CompositeObjective, GeneralObjective, SymmetricObjective

__all__ = [
    "CompositeObjective",
    "GeneralObjective",
    "GrassmannPoint",
    "SymmetricObjective",
    "SymmetricTensor",
    "symmetrize",
]
