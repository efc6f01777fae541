"""Separable spatio-temporal Poisson intensity models for event data."""

__version__ = "0.1.0"
