"""Command line, configuration, file formats and experiment drivers."""

from .config import ExperimentConfig, load_config, parse_config
from .experiments import run_bench, run_distances, run_sweep
from .matrixio import read_matrices, read_matrix, write_matrices, write_matrix

__all__ = [
    "ExperimentConfig",
    "load_config",
    "parse_config",
    "run_sweep",
    "run_distances",
    "run_bench",
    "read_matrix",
    "read_matrices",
    "write_matrix",
    "write_matrices",
]
