"""Datasets, CSV ingestion, z-score standardization and synthetic data."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .tensor import Matrix, as_matrix

LABEL_COLUMN = "label"

# Health-state class shares (0%, 10%, 20%, 40%, 60%, 80%, 100% wear). The
# published shares add up to 99.9%, so they are renormalized.
_TABLE2_SHARES = np.array([9.96, 13.98, 3.6, 4.6, 12.8, 47.06, 7.9])
DEFAULT_PRIORS: tuple[float, ...] = tuple((_TABLE2_SHARES / _TABLE2_SHARES.sum()).tolist())

STD_GUARD = 1e-12


class DataError(ValueError):
    """Malformed or inconsistent dataset input."""


@dataclass(frozen=True, eq=False)
class Dataset:
    features: Matrix
    labels: np.ndarray
    class_count: int
    attribute_names: tuple[str, ...]

    def __post_init__(self):
        features = self.features
        if not (isinstance(features, np.ndarray) and features.ndim == 2
                and features.dtype == np.float64 and not features.flags.writeable):
            features = as_matrix(features)
            object.__setattr__(self, "features", features)
        labels = np.array(self.labels, dtype=np.int64).reshape(-1)
        labels.flags.writeable = False
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "attribute_names", tuple(self.attribute_names))

        n, d = features.shape
        if labels.shape[0] != n:
            raise DataError(f"{n} feature rows but {labels.shape[0]} labels")
        if len(self.attribute_names) != d:
            raise DataError(f"{d} feature columns but {len(self.attribute_names)} names")
        if self.class_count < 1:
            raise DataError("class_count must be at least 1")
        if labels.size and (labels.min() < 0 or labels.max() >= self.class_count):
            raise DataError(f"labels must lie in [0, {self.class_count})")
        if not np.all(np.isfinite(features)):
            raise DataError("feature values must be finite")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def with_features(self, features) -> "Dataset":
        """Same labels and names, new feature matrix."""
        return Dataset(features, self.labels, self.class_count, self.attribute_names)

    def rows(self, start: int, stop: int) -> "Dataset":
        return Dataset(self.features[start:stop], self.labels[start:stop],
                       self.class_count, self.attribute_names)

    def same_as(self, other: "Dataset") -> bool:
        """Bit-identical comparison of every field."""
        return (self.class_count == other.class_count
                and self.attribute_names == other.attribute_names
                and self.features.shape == other.features.shape
                and self.features.tobytes() == other.features.tobytes()
                and np.array_equal(self.labels, other.labels))


@dataclass(frozen=True, eq=False)
class StandardizerStats:
    means: np.ndarray
    stds: np.ndarray

    def __post_init__(self):
        means = np.array(self.means, dtype=np.float64).reshape(-1)
        stds = np.array(self.stds, dtype=np.float64).reshape(-1)
        if means.shape != stds.shape:
            raise DataError("means and stds differ in length")
        if not np.all(stds > 0):
            raise DataError("standard deviations must be strictly positive")
        means.flags.writeable = False
        stds.flags.writeable = False
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "stds", stds)

    @property
    def d(self) -> int:
        return self.means.shape[0]


def _format_real(value: float) -> str:
    return format(value, ".17g")


def load_csv(path) -> Dataset:
    """Read a dataset whose last column is the integer ``label``.

    Data rows and columns in error messages are 1-based; row 1 is the first
    line after the header.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, header row expected") from None
        if not header or header[-1].strip() != LABEL_COLUMN:
            raise DataError(f"{path}: last header column must be '{LABEL_COLUMN}'")
        names = [h.strip() for h in header[:-1]]
        width = len(header)
        rows: list[list[float]] = []
        labels: list[int] = []
        for r, record in enumerate(reader, start=1):
            if not record:
                continue
            if len(record) != width:
                raise DataError(
                    f"{path}: row {r} has {len(record)} fields, expected {width}")
            values = []
            for c, cell in enumerate(record[:-1], start=1):
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: non-numeric value {cell!r} at (row {r}, column {c})"
                    ) from None
                if not math.isfinite(v):
                    raise DataError(f"{path}: non-finite value at (row {r}, column {c})")
                values.append(v)
            try:
                label = int(record[-1])
            except ValueError:
                raise DataError(
                    f"{path}: non-integer label {record[-1]!r} at (row {r}, column {width})"
                ) from None
            if label < 0:
                raise DataError(f"{path}: negative label at (row {r}, column {width})")
            rows.append(values)
            labels.append(label)
    if not rows:
        raise DataError(f"{path}: no data rows")
    if not names:
        raise DataError(f"{path}: no feature columns")
    return Dataset(as_matrix(rows), labels, max(labels) + 1, names)


def save_csv(dataset: Dataset, path) -> None:
    """Write ``dataset`` as CSV. The parent directory must already exist."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([*dataset.attribute_names, LABEL_COLUMN])
        for row, label in zip(dataset.features.tolist(), dataset.labels.tolist()):
            writer.writerow([*map(_format_real, row), label])


def fit_standardizer(train: Dataset) -> StandardizerStats:
    """Per-column mean and sample standard deviation (divisor n - 1).

    Columns whose deviation is below 1e-12 get a deviation of 1 so they map
    to all zeros.
    """
    if train.n < 2:
        raise DataError("at least two rows are needed to fit a standardizer")
    means = train.features.mean(axis=0)
    stds = train.features.std(axis=0, ddof=1)
    stds = np.where(stds < STD_GUARD, 1.0, stds)
    return StandardizerStats(means, stds)


def _check_dims(stats: StandardizerStats, d: int) -> None:
    if stats.d != d:
        raise DataError(f"standardizer has {stats.d} columns, data has {d}")


def standardize(stats: StandardizerStats, features: Matrix) -> Matrix:
    _check_dims(stats, features.shape[1])
    return as_matrix((features - stats.means) / stats.stds)


def unstandardize(stats: StandardizerStats, features: Matrix) -> Matrix:
    _check_dims(stats, features.shape[1])
    return as_matrix(features * stats.stds + stats.means)


def apply_standardizer(stats: StandardizerStats, dataset: Dataset) -> Dataset:
    return dataset.with_features(standardize(stats, dataset.features))


def chronological_split(dataset: Dataset, train_fraction: float = 0.7) -> tuple[Dataset, Dataset]:
    """First ``floor(n * train_fraction)`` rows train, the rest test, unshuffled."""
    if not 0.0 < train_fraction < 1.0:
        raise DataError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    cut = math.floor(dataset.n * train_fraction)
    if cut < 1 or cut >= dataset.n:
        raise DataError(f"split of {dataset.n} rows at {train_fraction} leaves an empty part")
    return dataset.rows(0, cut), dataset.rows(cut, dataset.n)


@dataclass(frozen=True)
class SyntheticSpec:
    """Shape of a synthetic health-state dataset.

    ``class_separation`` scales the spread of the class-conditional means of
    the informative attributes, whose within-class noise is standard normal.
    Each redundant attribute blends ``blend_terms`` informative ones.
    """

    n: int
    d: int = 149
    class_priors: Sequence[float] = field(default=DEFAULT_PRIORS)
    informative_count: int = 24
    redundant_count: int = 100
    seed: int = 0
    class_separation: float = 0.7
    redundant_noise: float = 0.1
    blend_terms: int = 2

    def validate(self) -> None:
        if self.n < 1 or self.d < 1:
            raise DataError("n and d must be positive")
        if self.informative_count < 1:
            raise DataError("at least one informative attribute is required")
        if self.redundant_count < 0:
            raise DataError("redundant_count must be non-negative")
        if self.informative_count + self.redundant_count > self.d:
            raise DataError("informative_count + redundant_count exceeds d")
        priors = np.asarray(self.class_priors, dtype=np.float64)
        if priors.ndim != 1 or priors.size < 2 or np.any(priors < 0):
            raise DataError("class_priors must be a list of non-negative reals")
        if abs(priors.sum() - 1.0) > 1e-9:
            raise DataError(f"class_priors sum to {priors.sum()!r}, expected 1")
        if not 1 <= self.blend_terms <= self.informative_count:
            raise DataError("blend_terms must lie in [1, informative_count]")
        if self.class_separation <= 0 or self.redundant_noise < 0:
            raise DataError("class_separation must be positive, redundant_noise non-negative")


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    """Draw a dataset of informative, redundant and pure-noise attributes.

    Columns are laid out informative first, then redundant, then noise. The
    class geometry depends only on the seed, not on ``n``.
    """
    spec.validate()
    priors = np.asarray(spec.class_priors, dtype=np.float64)
    k = priors.size
    structure_seq, sample_seq = np.random.SeedSequence(spec.seed).spawn(2)
    structure = np.random.default_rng(structure_seq)
    rng = np.random.default_rng(sample_seq)

    class_means = structure.normal(0.0, spec.class_separation, size=(k, spec.informative_count))
    blend = np.zeros((spec.informative_count, spec.redundant_count))
    for j in range(spec.redundant_count):
        sources = structure.choice(spec.informative_count, spec.blend_terms, replace=False)
        blend[sources, j] = structure.normal(size=spec.blend_terms)
    blend /= np.linalg.norm(blend, axis=0, keepdims=True)

    labels = rng.choice(k, size=spec.n, p=priors)
    informative = class_means[labels] + rng.standard_normal((spec.n, spec.informative_count))
    redundant = informative @ blend + rng.normal(
        0.0, spec.redundant_noise, size=(spec.n, spec.redundant_count))
    noise_count = spec.d - spec.informative_count - spec.redundant_count
    noise = rng.standard_normal((spec.n, noise_count))

    names = ([f"inf{i}" for i in range(spec.informative_count)]
             + [f"red{i}" for i in range(spec.redundant_count)]
             + [f"noise{i}" for i in range(noise_count)])
    features = np.hstack([informative, redundant, noise])
    return Dataset(as_matrix(features), labels, k, names)
