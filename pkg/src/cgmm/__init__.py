"""Multimodal text-box classification for video frames (numpy only)."""

from .model import CGMM, ModelConfig, make_batch

__version__ = "0.1.0"

__all__ = ["CGMM", "ModelConfig", "make_batch", "__version__"]
