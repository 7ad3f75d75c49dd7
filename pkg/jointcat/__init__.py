"""Bayesian joint model of bi-exponential biomarkers and a categorical outcome."""

__version__ = "0.1.0"
