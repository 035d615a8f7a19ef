"""Bifurcation analysis and simulation of an ant curvature-chemotaxis kinetic model."""

__version__ = "0.1.0"

from .model import ModelParams, NumericalError, RescaledConstants, ValidationError, rescale  # noqa: E402

__all__ = ["ModelParams", "NumericalError", "RescaledConstants", "ValidationError", "rescale", "__version__"]
