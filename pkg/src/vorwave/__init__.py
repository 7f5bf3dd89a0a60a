"""Periodic travelling water waves with vorticity by direct constrained
minimization of the total energy over surface shape and vorticity
rearrangement class, with optimality, hypothesis, and stability
diagnostics."""

from .geometry import GraphSurface, PeriodicCurve
from .minimizer import VorticitySpec, WaveConfig, minimize

__all__ = ["GraphSurface", "PeriodicCurve", "VorticitySpec", "WaveConfig", "minimize"]
__version__ = "0.1.0"
