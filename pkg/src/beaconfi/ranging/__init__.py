"""Ranging backends turning per-AP beacon observations into (distance, std)."""

from .baselines import (BACKENDS, CalibrationParams, CupidParams, PathLossParams,
                        PolynomialParams, RangingOutput, StdModel, clamp_output, cupid_is_los,
                        cupid_range, edp_ratio, mean_rss, pathloss_distance, pathloss_range,
                        polynomial_distance, polynomial_range)
from .calibration import fit_baselines, fit_pathloss, fit_polynomial, fit_std_model, nmse
from .checkpoint import load_checkpoint, save_checkpoint
from .estimators import CupidRanger, PathLossRanger, PolynomialRanger
from .inputs import ApOffsetTable, RangingInput, build_input, split_features, to_features
from .network import NnModel, Topology, forward, init_params, nn_range

__all__ = [
    "BACKENDS", "ApOffsetTable", "CalibrationParams", "CupidParams", "CupidRanger",
    "NnModel", "PathLossParams", "PathLossRanger", "PolynomialParams",
    "PolynomialRanger", "RangingInput", "RangingOutput", "StdModel", "Topology", "build_input",
    "clamp_output", "cupid_is_los", "cupid_range", "edp_ratio", "fit_baselines", "fit_pathloss",
    "fit_polynomial", "fit_std_model", "forward", "init_params", "load_checkpoint", "mean_rss",
    "nmse", "nn_range", "pathloss_distance", "pathloss_range", "polynomial_distance",
    "polynomial_range", "save_checkpoint", "split_features", "to_features",
]
