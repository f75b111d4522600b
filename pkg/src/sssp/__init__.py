"""Sketch-conditioned 3D-aware portrait generation.

Core pieces: a tri-plane radiance-field representation with a symmetric
flip constraint, a volume renderer with region-aware sub-frustum cropping,
a style-modulated generator and sketch encoder, a vector-quantized
contour-to-sketch codec, a synthetic paired-data generator, training
stages, and an HTTP service with an interactive browser editor on top.
"""

from .config import TrainConfig, paper_scale_config

__version__ = "0.1.0"

__all__ = ["TrainConfig", "paper_scale_config", "__version__"]
