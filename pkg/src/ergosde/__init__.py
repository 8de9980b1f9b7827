"""Ergodic-error verification toolkit for one-step SDE schemes."""

__version__ = "0.1.0"
