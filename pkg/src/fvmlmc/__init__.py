"""Multilevel Monte Carlo for cell-centred finite volume Darcy flow with
random permeability, including the Coarse Grid Variates estimator."""

__version__ = "0.1.0"

from .assembly import BoundarySpec, Dirichlet, Neumann, StencilSystem, assemble, edge_permeability
from .estimators import LevelAccumulator, MLMCConfig, MLMCResult, RateEstimate, estimate_rates, mc_run, mlmc_run, optimal_allocation
from .fields import GaussianFieldSpec, LayerSample, PermeabilitySample, PiecewiseConstantSpec
from .grid import Grid, GridHierarchy, build_hierarchy, parity_offsets, subgrid_index_map
from .problems import CGV, MODEL_PROBLEM_1, MODEL_PROBLEM_2, STANDARD, DarcyProblem
from .qoi import Box, QoISpec, local_average, outflow
from .solver import SolveReport, direct_solve, pcg, vcycle_preconditioner

__all__ = [
    "BoundarySpec", "Dirichlet", "Neumann", "StencilSystem", "assemble", "edge_permeability",
    "LevelAccumulator", "MLMCConfig", "MLMCResult", "RateEstimate", "estimate_rates", "mc_run", "mlmc_run", "optimal_allocation",
    "GaussianFieldSpec", "LayerSample", "PermeabilitySample", "PiecewiseConstantSpec",
    "Grid", "GridHierarchy", "build_hierarchy", "parity_offsets", "subgrid_index_map",
    "CGV", "MODEL_PROBLEM_1", "MODEL_PROBLEM_2", "STANDARD", "DarcyProblem",
    "Box", "QoISpec", "local_average", "outflow",
    "SolveReport", "direct_solve", "pcg", "vcycle_preconditioner",
]
