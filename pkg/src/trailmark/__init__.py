"""Trajectory embeddings, clustering and scoring models for behavioral-test recordings."""

from ._kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
