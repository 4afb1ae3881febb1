"""Wide-area low-frequency oscillation damping laboratory."""
from ._backend import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
