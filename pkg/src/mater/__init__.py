"""Multi-level speech emotion recognition: feature extraction, a fusion network and rank ensembles."""

from ._kernels import BACKEND
from .labels import ATTRIBUTES, CATEGORIES

__version__ = "0.1.0"
__all__ = ["ATTRIBUTES", "BACKEND", "CATEGORIES", "__version__"]
