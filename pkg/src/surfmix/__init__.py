"""Bayesian spatial spline regression (BSSR) and its mixture (BMSSR) for surface data."""

__version__ = "0.1.0"

from .nbf import NodeGrid, design_matrix, nbf_eval, node_grid
from .datasets import SurfaceDataset, SimulationConfig, load_zipcode, simulate_surfaces
from .bssr import BssrHyper, BssrState, bssr_fit, fitted_surface
from .bmssr import BmssrHyper, BmssrState, MixtureParams, bmssr_fit, cluster_assign
from .metrics import ari, sse

__all__ = [
    "NodeGrid",
    "design_matrix",
    "nbf_eval",
    "node_grid",
    "SurfaceDataset",
    "SimulationConfig",
    "load_zipcode",
    "simulate_surfaces",
    "BssrHyper",
    "BssrState",
    "bssr_fit",
    "fitted_surface",
    "BmssrHyper",
    "BmssrState",
    "MixtureParams",
    "bmssr_fit",
    "cluster_assign",
    "ari",
    "sse",
]
