"""Pathwise simulation and verification toolkit for singular-drift equations."""

from . import averaging, fields, flow, paths, sewing, verify  # noqa: F401

__version__ = "0.1.0"
