"""Data poisoning experiments for random forests and hash-partitioned ensembles."""

from .dataset import (DataPoint, Dataset, DatasetError, SplitSpec, balance_classes,
                      info_gain_rank, information_gains, load_csv, split_train_test)
from .forest import ForestConfig, RandomForest, accuracy, predict, train_forest
from .hashens import (EnsembleConfig, EnsembleModel, HashAlgorithm, build_assignment,
                      hash_partition_index, predict_ensemble, serialize_point, train_ensemble)
from .pipeline import (EvaluationReport, ExperimentConfig, Grid, delta, run_experiment,
                       run_single, run_sweep)
from .poison import Perturbation, PoisonSpec, poison, select_targets

__all__ = [
    "DataPoint", "Dataset", "DatasetError", "SplitSpec", "balance_classes", "info_gain_rank",
    "information_gains", "load_csv", "split_train_test",
    "ForestConfig", "RandomForest", "accuracy", "predict", "train_forest",
    "EnsembleConfig", "EnsembleModel", "HashAlgorithm", "build_assignment",
    "hash_partition_index", "predict_ensemble", "serialize_point", "train_ensemble",
    "EvaluationReport", "ExperimentConfig", "Grid", "delta", "run_experiment", "run_single",
    "run_sweep", "Perturbation", "PoisonSpec", "poison", "select_targets",
]
