"""Class-wise auxiliary-loss weighting for main-task-focused multi-task learning."""

from .arbiter import ClassWeights, ClasswiseArbiter, LossLedger, WeightAdamState
from .discretize import BinLabeler, discretize
from .estimator import ClasswiseMTLRegressor
from .nn import DenseNet
from .synthlab import MultiTaskDataset, TransferSpec, default_conflict_spec, gen_conflict_dataset
from .trainer import TrainConfig, TrainReport, swap_roles, train

__version__ = "0.1.0"

__all__ = [
    "BinLabeler", "ClassWeights", "ClasswiseArbiter", "ClasswiseMTLRegressor", "DenseNet",
    "LossLedger", "MultiTaskDataset", "TrainConfig", "TrainReport", "TransferSpec",
    "WeightAdamState", "default_conflict_spec", "discretize", "gen_conflict_dataset", "swap_roles", "train",
]
