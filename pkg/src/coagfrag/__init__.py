"""Sectional solver and verification tools for coagulation with multiple
fragmentation under singular collision kernels."""

from .grid import DensityState, Grid, apply, assemble, build_grid, project_initial
from .kernels import (KernelSystem, TruncationParams, breakage, coagulation, selection, truncate,
                      verify_breakage, verify_coagulation_bound, verify_selection_bound)
from .solver import IntegratorConfig, RunOutput, Simulation, integrate, step

__version__ = "0.1.0"
