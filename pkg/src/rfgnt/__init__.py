"""Regularized Newton reconstructions for 2-D inverse scattering with automatic parameter choice."""

from .drivers import (DriverResult, TargetUnreachable, early_stopping_run, gnt_run, lcurve_corner,
                      lcurve_sweep, rfgnt_run)
from .gat import gat_run
from .io import ExperimentConfig, load_config, parse_config_text
from .ledger import RunLedger
from .newton import NewtonConfig, newton_solve
from .objective import ObjectiveContext
from .scattering import GridConfig, attach_data, make_phantom, make_problem
from .sparse import ComplexSparseMatrix, solve_nonhermitian

__all__ = [
    "ComplexSparseMatrix", "DriverResult", "ExperimentConfig", "GridConfig", "NewtonConfig",
    "ObjectiveContext", "RunLedger", "TargetUnreachable", "attach_data", "early_stopping_run", "gat_run",
    "gnt_run", "lcurve_corner", "lcurve_sweep", "load_config", "make_phantom", "make_problem",
    "newton_solve", "parse_config_text", "rfgnt_run", "solve_nonhermitian",
]
