"""Optimal stopping rules, thresholds and payoffs for duration problems."""

__version__ = "0.1.0"
