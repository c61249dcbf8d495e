"""Hierarchical parameter identification for nonlinear least-squares inverse problems."""
__version__ = "0.1.0"
