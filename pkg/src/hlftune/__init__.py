"""Bayesian-optimization tuner for high-dimensional blockchain node configurations."""

__version__ = "0.1.0"
