"""Figures for gridlqr trajectory and coupling CSV outputs."""

from .figures import (SchemaError, load_trajectory, plot_coupling,
                      plot_trajectories)

__version__ = "0.1.0"

__all__ = ["SchemaError", "load_trajectory", "plot_coupling",
           "plot_trajectories", "__version__"]
