"""Skew-normal censored mixture regression with spike-and-slab selection."""

from .model import CensoredDataset, Hyperparams, ModelState
from .gibbs import McmcConfig, PosteriorChain, run_chain, run_chains
from .mrf import MrfPrior
from .relmatrix import HierarchyNode, build_relationship_matrix, simulation_R

__version__ = "0.1.0"

__all__ = [
    "CensoredDataset",
    "Hyperparams",
    "ModelState",
    "McmcConfig",
    "PosteriorChain",
    "run_chain",
    "run_chains",
    "MrfPrior",
    "HierarchyNode",
    "build_relationship_matrix",
    "simulation_R",
]
