"""Train-corruption x test-corruption accuracy grids.

One model is trained per training corruption level. Each test suite is
corrupted once and shared by every model. Grid rows follow the training
levels and columns follow the suites, both in the order given.

Corrupted test variants are mapped back to raw units before scoring, so a
cell can be re-derived from the persisted model and variant CSV with
:func:`robustnet.nn.accuracy` alone.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import numpy as np

from . import nn
from .corruption import (CorruptionKind, CorruptionSpec, corrupt, derive_seed,
                         make_variant_suite, parse_variant_label, variant_label)
from .data import (Dataset, StandardizerStats, apply_standardizer, fit_standardizer, save_csv,
                   unstandardize)
from .tensor import Matrix, as_matrix

log = logging.getLogger(__name__)

# stream tags mixed into derived seeds
_TRAIN_STREAM = 1
_TEST_STREAM = 2
_KIND_INDEX = {kind: i for i, kind in enumerate(CorruptionKind)}


class GridError(ValueError):
    pass


class GridFormatError(GridError):
    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.line = line


@dataclass(frozen=True)
class GridSpec:
    train_kind: CorruptionKind
    train_levels: Sequence[int]
    test_suites: Sequence[tuple[CorruptionKind, Sequence[int]]]
    training: nn.TrainConfig = field(default_factory=nn.TrainConfig)
    # None: hidden layers and dropout of the default network, sized to the data
    network: nn.NetworkConfig | None = None
    data_seed: int = 0
    output_dir: Path | None = None
    parallelism: int = 1

    def validate(self, d: int) -> None:
        if not self.train_levels:
            raise GridError("at least one training level is required")
        if not self.test_suites:
            raise GridError("at least one test suite is required")
        if len(set(self.train_levels)) != len(self.train_levels):
            raise GridError(f"duplicate training levels {list(self.train_levels)}")
        kinds = [kind for kind, _ in self.test_suites]
        if len(set(kinds)) != len(kinds):
            raise GridError("each corruption kind may appear in only one test suite")
        levels = list(self.train_levels) + [a for _, lv in self.test_suites for a in lv]
        for alpha in levels:
            if not 0 <= alpha <= d:
                raise GridError(f"level {alpha} outside [0, {d}]")
        for kind, lv in self.test_suites:
            if not lv:
                raise GridError(f"test suite {kind.value} has no levels")
        if self.parallelism < 1:
            raise GridError("parallelism must be at least 1")


@dataclass(frozen=True)
class RunRecord:
    label: str
    train_level: int
    accuracies: dict[str, float]
    wall_time: float
    final_loss: float


@dataclass(frozen=True, eq=False)
class AccuracyGrid:
    train_labels: list[str]
    test_labels: list[str]
    values: Matrix
    metadata: dict = field(default_factory=dict)
    records: list[RunRecord] = field(default_factory=list)

    def __post_init__(self):
        if self.values.shape != (len(self.train_labels), len(self.test_labels)):
            raise GridError(f"values {self.values.shape} do not match "
                            f"{len(self.train_labels)}x{len(self.test_labels)} labels")
        if np.any(self.values < 0) or np.any(self.values > 1):
            raise GridError("accuracies must lie in [0, 1]")

    @property
    def row_means(self) -> np.ndarray:
        return self.values.mean(axis=1)

    def cell(self, train_label: str, test_label: str) -> float:
        return float(self.values[self.train_labels.index(train_label),
                                 self.test_labels.index(test_label)])


def corrupt_raw(stats: StandardizerStats, raw: Dataset, spec: CorruptionSpec) -> Dataset:
    """Corrupt raw data in standardized space and map it back to raw units."""
    if spec.alpha == 0:
        return raw
    z = corrupt(apply_standardizer(stats, raw), spec)
    return z.with_features(unstandardize(stats, z.features))


def _level_of(label: str) -> int:
    return parse_variant_label(label)[1]


def _train_one(spec: GridSpec, network: nn.NetworkConfig, stats: StandardizerStats,
               train_z: Dataset, level: int):
    label = variant_label(spec.train_kind, level)
    started = time.perf_counter()
    data = train_z
    if level:
        seed = derive_seed(spec.data_seed, _TRAIN_STREAM, _KIND_INDEX[spec.train_kind], level)
        data = corrupt(train_z, CorruptionSpec(spec.train_kind, level, seed))
    # V0 and D0 see identical data, so the training seed depends on the level only
    tc = nn.TrainConfig(spec.training.epochs, spec.training.batch_size,
                        spec.training.learning_rate, spec.training.optimizer,
                        derive_seed(spec.training.seed, level))
    log.info("training %s", label)
    model = nn.train(data, network, tc, stats, label=label)
    return model, time.perf_counter() - started


def build_test_variants(spec: GridSpec, stats: StandardizerStats, test_raw: Dataset):
    """All test variants as ``(label, raw dataset)`` in column order."""
    test_z = apply_standardizer(stats, test_raw)
    variants = []
    for kind, levels in spec.test_suites:
        seed = derive_seed(spec.data_seed, _TEST_STREAM, _KIND_INDEX[kind])
        for label, z in make_variant_suite(test_z, kind, levels, seed):
            raw = test_raw if _level_of(label) == 0 else z.with_features(unstandardize(stats, z.features))
            variants.append((label, raw))
    return variants


def run_grid(spec: GridSpec, train_raw: Dataset, test_raw: Dataset) -> AccuracyGrid:
    """Train one model per training level and score it on every test variant.

    ``train_raw`` and ``test_raw`` are unstandardized; the standardizer is
    fitted on ``train_raw`` only. With ``spec.output_dir`` set, models,
    variants, the grid CSV, a report and a manifest are written there.
    """
    if train_raw.d != test_raw.d:
        raise GridError(f"train has {train_raw.d} columns, test has {test_raw.d}")
    spec.validate(train_raw.d)
    started_at = datetime.now(timezone.utc).isoformat()
    classes = max(train_raw.class_count, test_raw.class_count)
    network = spec.network or nn.NetworkConfig.for_data(train_raw.d, classes)
    if network.inputs != train_raw.d or network.classes < classes:
        raise GridError(f"network {network.layer_sizes} does not fit {train_raw.d} columns, {classes} classes")

    stats = fit_standardizer(train_raw)
    train_z = apply_standardizer(stats, train_raw)
    levels = [int(a) for a in spec.train_levels]

    if spec.parallelism == 1:
        trained = [_train_one(spec, network, stats, train_z, a) for a in levels]
    else:
        with ThreadPoolExecutor(max_workers=spec.parallelism) as pool:
            trained = list(pool.map(lambda a: _train_one(spec, network, stats, train_z, a), levels))

    variants = build_test_variants(spec, stats, test_raw)
    test_labels = [label for label, _ in variants]
    values = np.array([[nn.accuracy(model, raw) for _, raw in variants] for model, _ in trained])
    records = [RunRecord(model.label, a, dict(zip(test_labels, row.tolist())), wall, model.final_loss)
               for (model, wall), a, row in zip(trained, levels, values)]
    grid = AccuracyGrid([m.label for m, _ in trained], test_labels, as_matrix(values),
                        {"started": started_at, "data_seed": spec.data_seed,
                         "training_seeds": {m.label: m.seed for m, _ in trained}},
                        records)
    if spec.output_dir is not None:
        _persist(spec, network, grid, [m for m, _ in trained], variants)
    return grid


def _spec_echo(spec: GridSpec, network: nn.NetworkConfig) -> dict:
    tc = spec.training
    return {
        "train_kind": spec.train_kind.value,
        "train_levels": list(spec.train_levels),
        "test_suites": [{"kind": k.value, "levels": list(lv)} for k, lv in spec.test_suites],
        "network": {"layer_sizes": list(network.layer_sizes), "hidden_dropout": network.hidden_dropout,
                    "activation": network.activation.value},
        "training": {"epochs": tc.epochs, "batch_size": tc.batch_size,
                     "learning_rate": tc.learning_rate, "optimizer": tc.optimizer.value, "seed": tc.seed},
        "data_seed": spec.data_seed,
        "parallelism": spec.parallelism,
    }


def _persist(spec, network, grid, models, variants) -> None:
    out = Path(spec.output_dir)
    (out / "models").mkdir(parents=True, exist_ok=True)
    (out / "variants").mkdir(exist_ok=True)
    for model in models:
        nn.save_model(model, out / "models" / f"{model.label}.json")
    for label, raw in variants:
        save_csv(raw, out / "variants" / f"test_{label}.csv")
    write_grid_csv(grid, out / "grid.csv")
    write_report([grid], out / "report.txt", names=["grid.csv"])
    manifest = {
        "spec": _spec_echo(spec, network),
        "seeds": grid.metadata["training_seeds"],
        "started": grid.metadata["started"],
        "finished": datetime.now(timezone.utc).isoformat(),
        "records": [asdict(r) for r in grid.records],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")


def best_average_model(grid: AccuracyGrid) -> str:
    """Label of the row with the highest mean accuracy; ties go to the lower level."""
    if not grid.train_labels or not grid.test_labels:
        raise GridError("empty grid")
    means = grid.row_means
    top = means.max()
    tied = [label for label, m in zip(grid.train_labels, means) if m == top]
    return min(tied, key=_level_of)


def write_grid_csv(grid: AccuracyGrid, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["model", *grid.test_labels])
        for label, row in zip(grid.train_labels, grid.values.tolist()):
            writer.writerow([label, *(f"{v:.6f}" for v in row)])


def read_grid_csv(path) -> AccuracyGrid:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise GridFormatError(path, 1, "empty grid file")
    header = rows[0]
    if len(header) < 2 or header[0] != "model":
        raise GridFormatError(path, 1, "header must be 'model' followed by test labels")
    for label in header[1:]:
        try:
            parse_variant_label(label)
        except ValueError as exc:
            raise GridFormatError(path, 1, str(exc)) from None
    train_labels, values = [], []
    for line, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise GridFormatError(path, line, f"{len(row)} fields, expected {len(header)}")
        try:
            parse_variant_label(row[0])
            cells = [float(v) for v in row[1:]]
        except ValueError as exc:
            raise GridFormatError(path, line, str(exc)) from None
        if not all(0.0 <= v <= 1.0 for v in cells):
            raise GridFormatError(path, line, "accuracy outside [0, 1]")
        train_labels.append(row[0])
        values.append(cells)
    if not values:
        raise GridFormatError(path, 2, "no model rows")
    return AccuracyGrid(train_labels, header[1:], as_matrix(values))


def degradation(grid: AccuracyGrid) -> dict[str, dict[str, float]]:
    """Per row and test kind: accuracy at the highest level minus at the lowest."""
    by_kind: dict[str, list[tuple[int, int]]] = {}
    for j, label in enumerate(grid.test_labels):
        kind, level = parse_variant_label(label)
        by_kind.setdefault(kind.prefix, []).append((level, j))
    out = {}
    for i, label in enumerate(grid.train_labels):
        deltas = {}
        for prefix, cols in by_kind.items():
            lo = min(cols)[1]
            hi = max(cols)[1]
            deltas[prefix] = float(grid.values[i, hi] - grid.values[i, lo])
        out[label] = deltas
    return out


def report_lines(grid: AccuracyGrid, name: str = "grid") -> list[str]:
    best = best_average_model(grid)
    means = dict(zip(grid.train_labels, grid.row_means.tolist()))
    lines = [f"grid {name}", f"best: {best} mean={means[best]:.6f}"]
    lines += [f"mean {label} {m:.6f}" for label, m in means.items()]
    for label, deltas in degradation(grid).items():
        lines += [f"delta {label} {prefix} {d:+.6f}" for prefix, d in deltas.items()]
    return lines


def write_report(grids: Sequence[AccuracyGrid], path, names: Sequence[str] | None = None) -> None:
    """Plain-text summary: best-average model, row means and degradation deltas.

    A delta is the accuracy at a suite's highest test level minus its
    accuracy at the lowest (normally 0) level.
    """
    if not grids:
        raise GridError("no grids to report")
    names = names or [f"grid{i}" for i in range(len(grids))]
    lines = []
    for grid, name in zip(grids, names):
        lines += report_lines(grid, name)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
