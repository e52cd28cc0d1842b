"""Qubit-probe nanoscale MRI: forward simulation and slice reconstruction."""

__version__ = "0.1.0"
