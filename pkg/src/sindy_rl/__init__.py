"""Sparse dynamics discovery and Dyna-style model-based RL for classic control."""

__version__ = "0.1.0"
