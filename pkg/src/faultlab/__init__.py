"""Fault-injection simulator and log analyzer for a 3D-torus interconnect."""

__version__ = "0.1.0"
