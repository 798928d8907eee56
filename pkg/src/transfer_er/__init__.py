"""Multi-source entity resolution with pairwise transfer learning."""
from .kernels import BACKEND

__version__ = "0.1.0"
