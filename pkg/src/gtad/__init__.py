"""Forecast-based multivariate time series anomaly detection with a learned sensor graph."""

__version__ = "0.1.0"

from .tensor import Tensor, GradTape, backward, no_grad

__all__ = ["Tensor", "GradTape", "backward", "no_grad", "__version__"]
