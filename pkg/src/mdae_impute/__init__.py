"""Missing-data imputation with a masked-loss denoising autoencoder (mDAE), classical
baselines, and the benchmark harness used to compare them."""

__version__ = "0.1.0"

from .data import CellSet, DataMatrix, StandardizationParams, observed_set, pre_impute, standardize
from .baselines import ImputerSpec, register_imputer, run_imputer
from .mdae import fit_impute, impute
from .network import NetworkStructure, TrainingConfig

__all__ = [
    "CellSet",
    "DataMatrix",
    "ImputerSpec",
    "NetworkStructure",
    "StandardizationParams",
    "TrainingConfig",
    "fit_impute",
    "impute",
    "observed_set",
    "pre_impute",
    "register_imputer",
    "run_imputer",
    "standardize",
]
