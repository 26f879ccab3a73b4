"""Finite-volume Kubo conductivity measures for the Anderson model."""

__version__ = "0.1.0"
