"""Drift-adaptive streaming inference: texture-based domain detection and
importance-weighted model adaptation under label shift."""

__version__ = "0.1.0"
