"""Conditional GANs whose convolution filters are sampled through a low-rank basis generator."""

__version__ = "0.1.0"
