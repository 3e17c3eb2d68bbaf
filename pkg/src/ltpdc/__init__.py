"""Predictive-bias metrics and loss functions for long-tailed classification."""

__version__ = "0.1.0"
