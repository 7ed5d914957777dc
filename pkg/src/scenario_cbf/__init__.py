"""Scenario-approach safe control with control barrier functions."""
from . import cbf_core, kernels, qp, quadcopter, scenario

__version__ = "0.1.0"

__all__ = ["cbf_core", "kernels", "qp", "quadcopter", "scenario", "__version__"]
