"""Robust cluster analysis by the trimmed determinant criterion.

Given n observations, a cluster count g and a retention count r, find the
r-subset and its g-partition whose pooled within-group scatter matrix has
minimum determinant.  The package bundles the local-search solver, an
exact enumeration oracle, synthetic data generators with planted outliers,
evaluation metrics and breakdown-point probes.
"""

__version__ = "0.1.0"

from ._kernel import backend_name
from .configuration import Configuration, Dataset, PooledStats, pooled_stats, tdc_cost
from .datagen import GeneratorSpec, LabeledDataset, generate
from .oracle import OracleResult, enumerate_optimum, impartial_trimming_oracle
from .solver import (
    SolveReport,
    SolverSettings,
    iterate,
    multistart,
    reduction_step,
    separation_certificate,
)

__all__ = [
    "__version__",
    "backend_name",
    "Configuration",
    "Dataset",
    "GeneratorSpec",
    "LabeledDataset",
    "OracleResult",
    "PooledStats",
    "SolveReport",
    "SolverSettings",
    "enumerate_optimum",
    "generate",
    "impartial_trimming_oracle",
    "iterate",
    "multistart",
    "pooled_stats",
    "reduction_step",
    "separation_certificate",
    "tdc_cost",
]
