"""Simulation and analysis toolkit for trapped-ion / photon entanglement experiments."""

__version__ = "0.1.0"
