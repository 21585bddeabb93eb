"""Distributed regularized model fitting via row-split linearized ADMM.

The solver splits the design matrix by rows across workers; for a fixed
linearization constant its iterates are identical for any partition of the
rows, unlike the consensus-form baseline also provided here.
"""
from .consensus import consensus_solve
from .dataio import Dataset, gen_synthetic, partition, read_csv, read_libsvm
from .modelselect import hbic, lambda_path, support_size
from .solver import SolverConfig, solve
from .types import DesignShard, FitResult, ProblemSpec, objective_value

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "DesignShard",
    "FitResult",
    "ProblemSpec",
    "SolverConfig",
    "consensus_solve",
    "gen_synthetic",
    "hbic",
    "lambda_path",
    "objective_value",
    "partition",
    "read_csv",
    "read_libsvm",
    "solve",
    "support_size",
    "__version__",
]
