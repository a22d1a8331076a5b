"""Spectral topology design, delayed consensus and surface-assisted V2V links."""

__version__ = "0.1.0"
