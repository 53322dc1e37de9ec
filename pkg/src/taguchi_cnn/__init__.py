"""Taguchi design-of-experiments toolkit for tuning a small sequential CNN."""

__version__ = "0.1.0"
