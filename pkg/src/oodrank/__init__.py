"""Rank models by out-of-domain performance from few-shot token attributions."""

__version__ = "0.1.0"
