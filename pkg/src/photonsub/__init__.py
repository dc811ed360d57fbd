"""Conditional photon subtraction from thermal light: statistics, work, information, simulation and tomography."""
__version__ = "0.1.0"
