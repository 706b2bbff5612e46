"""Hyperbolic query-transformer analog: Poincaré-ball geometry, a small autodiff tape,
contrastive losses with random query selection, and a desk-scale training pipeline."""

from .estimator import HyperbolicQFormer
from .geometry import BallConfig

__all__ = ["HyperbolicQFormer", "BallConfig"]
__version__ = "0.1.0"
