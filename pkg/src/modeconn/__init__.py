"""Tools for building and evaluating low-loss connecting paths between
independently trained fully-connected networks, via optimized sparse
subnetworks, dropout-stability evaluation, and checkable sufficient
conditions."""

from ._kernel import get_backend

__version__ = "0.1.0"

__all__ = ["get_backend", "__version__"]
