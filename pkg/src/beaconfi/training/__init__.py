"""Trajectory alignment, unified cost and end-to-end training of the rangers."""

from ..ranging.calibration import fit_baselines
from .alignment import (AlignmentResult, alignment_residual, closed_form_cost, geometric_cost,
                        optimal_transform, sensor_cost, unified_cost)
from .dataset import EpochObservations, TrainingDataset, build_datasets, epoch_observations
from .diff_ekf import ekf_trajectory
from .estimator import NeuralRanger
from .evaluate import Metrics, empirical_cdf, error_metrics, evaluate, nearest_rank
from .pipeline import evaluate_dataset, locate, range_dataset
from .trainer import History, TrainConfig, TrainingError, dataset_cost, split_indices, train

__all__ = [
    "AlignmentResult", "EpochObservations", "History", "Metrics", "NeuralRanger",
    "TrainConfig", "TrainingDataset", "TrainingError", "alignment_residual", "build_datasets",
    "closed_form_cost", "dataset_cost", "ekf_trajectory", "empirical_cdf", "epoch_observations",
    "error_metrics", "evaluate", "evaluate_dataset", "fit_baselines", "geometric_cost", "locate",
    "nearest_rank", "optimal_transform", "range_dataset", "sensor_cost", "split_indices",
    "train", "unified_cost",
]
