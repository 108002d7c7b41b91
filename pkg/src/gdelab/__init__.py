"""Generalized dynamical equation toolkit for finite-dimensional models."""

__version__ = "0.1.0"
