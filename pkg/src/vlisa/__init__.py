"""Profiled variable-length instruction encoding and front-end simulation."""

__version__ = "0.1.0"
