"""Figures from the experiment CSV outputs."""

from .figures import KINDS, FigureSpec, render

__version__ = "0.1.0"

__all__ = ["FigureSpec", "KINDS", "render", "__version__"]
