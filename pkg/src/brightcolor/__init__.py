"""Decoupled low-light image enhancement: brighten the lightness plane,
colorize from the image's own chrominance, and let the user steer the
result with saturation and reference-style controls."""

__version__ = "0.1.0"
