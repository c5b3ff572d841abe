"""Marginalized zero-one-inflated Beta time series models."""

__version__ = "0.1.0"
