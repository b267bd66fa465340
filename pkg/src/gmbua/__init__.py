"""Multiscale bundle-based hyperspectral sparse unmixing with
graph-consensus selection of a representative run."""

from .backend import BACKEND
from .bundles import ExtractionConfig, extract_library
from .config import UnmixConfig
from .consensus import gmbua
from .core import (
    AbundanceMatrix,
    BundleLibrary,
    HsiCube,
    load_abundance,
    load_cube,
    load_library,
    save_abundance,
    save_cube,
    save_library,
)
from .evalkit import SynthSpec, gen_cube, monte_carlo, sre
from .penalties import GroupStructure, PenaltySpec, mixed_norm, project_simplex, prox
from .solver import (
    SolverParams,
    admm_unmix,
    aggregate_global,
    fclsu,
    multiscale_unmix,
)
from .superpix import build_operators, coarsen, slic_segment, upsample

__version__ = "0.1.0"

__all__ = [
    "AbundanceMatrix", "BACKEND", "BundleLibrary", "ExtractionConfig",
    "GroupStructure", "HsiCube", "PenaltySpec", "SolverParams", "SynthSpec",
    "UnmixConfig", "admm_unmix", "aggregate_global", "build_operators",
    "coarsen", "extract_library", "fclsu", "gen_cube", "gmbua",
    "load_abundance", "load_cube", "load_library", "mixed_norm",
    "monte_carlo", "multiscale_unmix", "project_simplex", "prox",
    "save_abundance", "save_cube", "save_library", "slic_segment", "sre",
    "upsample",
]
