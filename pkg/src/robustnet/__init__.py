"""Neural-network classifiers that stay accurate when sensors fail or turn noisy.

Training data is corrupted on purpose, either by zeroing (stuck-at-zero
sensors) or by replacing values with Gaussian noise. Robustness is then
measured on a grid of train-corruption x test-corruption accuracies.
"""

from .corruption import CorruptionKind, CorruptionSpec, corrupt, make_variant_suite
from .data import Dataset, SyntheticSpec, generate_synthetic, load_csv, save_csv
from .experiment import AccuracyGrid, GridSpec, best_average_model, run_grid
from .nn import NetworkConfig, TrainConfig, TrainedModel, accuracy, predict, train

__all__ = [
    "AccuracyGrid", "CorruptionKind", "CorruptionSpec", "Dataset", "GridSpec", "NetworkConfig",
    "SyntheticSpec", "TrainConfig", "TrainedModel", "accuracy", "best_average_model", "corrupt",
    "generate_synthetic", "load_csv", "make_variant_suite", "predict", "run_grid", "save_csv", "train",
]
