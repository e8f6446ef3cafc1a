"""Synthetic speckle images and subpixel DIC accuracy benchmarks."""

__version__ = "0.1.0"
