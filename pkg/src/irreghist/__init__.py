"""Random irregular histograms: Bayesian MAP partitions over a data-driven mesh."""

from .grid import DataError, GridMesh, SupportTransform, build_mesh, default_kn, estimate_support
from .model import HistogramEstimate, KPrior, Partition, PriorConfig
from .search import FitConfig, brute_force_map, dp_map, fit, fit_detailed, greedy_reduce

__version__ = "0.1.0"

__all__ = [
    "DataError",
    "FitConfig",
    "GridMesh",
    "HistogramEstimate",
    "KPrior",
    "Partition",
    "PriorConfig",
    "SupportTransform",
    "brute_force_map",
    "build_mesh",
    "default_kn",
    "dp_map",
    "estimate_support",
    "fit",
    "fit_detailed",
    "greedy_reduce",
]
