"""Proximal splitting solvers with step and relaxation line search."""

__version__ = "0.1.0"
