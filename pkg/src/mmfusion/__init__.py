"""Encoder-decoder caption generation with temporal and multimodal attention."""

__version__ = "0.1.0"
