"""Segmentation of demonstrated robot motions from position clustering and
contact-force change detection, with per-segment movement primitives."""

__version__ = "0.1.0"
