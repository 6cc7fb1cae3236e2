"""Depth completion with pseudo-depth supervision: pseudo-class contrastive
learning, scale-invariant pseudo-depth loss and a staged training schedule,
exercised on synthetic scenes with a small differentiable model."""

from .data import DepthGrid, IntensityImage, Scene
from .metrics import compute_metrics, emit_table
from .numerics import RngStream
from .train import TrainConfig

__version__ = "0.1.0"
__all__ = ["DepthGrid", "IntensityImage", "Scene", "RngStream", "TrainConfig",
           "compute_metrics", "emit_table", "__version__"]
