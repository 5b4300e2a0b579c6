"""Imputation under MAR missingness: mechanisms, identifiability checks, FCS imputers and scoring."""

from .data import (CompletedDataset, DataError, DataMatrix, IncompleteData, MissingMask, Pattern,
                   apply_mask, extract_patterns, observed_row_index, read_csv, write_csv)
from .evaluation import energy_distance, quantile_downstream, rmse, standardize
from .fcs import FcsConfig, ImputationRun, impute, impute_with_truth
from .mechanisms import CATALOGUE, MechanismSpec, generate, make_spec
from .models import ModelKind, fit_model

__version__ = "0.1.0"

__all__ = [
    "CompletedDataset", "DataError", "DataMatrix", "IncompleteData", "MissingMask", "Pattern",
    "apply_mask", "extract_patterns", "observed_row_index", "read_csv", "write_csv",
    "energy_distance", "quantile_downstream", "rmse", "standardize", "FcsConfig", "ImputationRun",
    "impute", "impute_with_truth", "CATALOGUE", "MechanismSpec", "generate", "make_spec",
    "ModelKind", "fit_model",
]
