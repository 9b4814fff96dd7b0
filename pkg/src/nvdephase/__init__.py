"""Simulation and analysis of inhomogeneous dephasing in NV spin ensembles."""

__version__ = "0.1.0"
