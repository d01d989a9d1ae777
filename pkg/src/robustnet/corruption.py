"""Defective-sensor models applied to standardized datasets.

Every instance gets its own uniformly drawn set of ``alpha`` distinct
attribute indices. Depending on the kind, those cells are pinned to zero,
replaced by standard-normal draws, or have standard-normal draws added.
Randomness for row ``r`` comes from a generator seeded with ``(seed, r)``,
so the result does not depend on the order in which rows are processed.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .tensor import as_matrix


class CorruptionError(ValueError):
    pass


class CorruptionKind(enum.Enum):
    STUCK_AT_ZERO = "stuck-zero"
    REPLACE_GAUSSIAN = "replace-gauss"
    ADDITIVE_WHITE = "white"

    @property
    def prefix(self) -> str:
        return _PREFIX[self]

    @classmethod
    def parse(cls, text: str) -> "CorruptionKind":
        try:
            return cls(text)
        except ValueError:
            choices = ", ".join(k.value for k in cls)
            raise CorruptionError(f"unknown corruption kind {text!r} (choose from {choices})") from None

    @classmethod
    def from_prefix(cls, prefix: str) -> "CorruptionKind":
        for kind, p in _PREFIX.items():
            if p == prefix:
                return kind
        raise CorruptionError(f"unknown variant prefix {prefix!r}")


_PREFIX = {
    CorruptionKind.STUCK_AT_ZERO: "D",
    CorruptionKind.REPLACE_GAUSSIAN: "V",
    CorruptionKind.ADDITIVE_WHITE: "W",
}

CANONICAL_LEVELS = tuple(range(0, 141, 20))


@dataclass(frozen=True)
class CorruptionSpec:
    kind: CorruptionKind
    alpha: int
    seed: int = 0

    def __post_init__(self):
        if self.alpha < 0:
            raise CorruptionError(f"alpha must be non-negative, got {self.alpha}")
        if self.seed < 0:
            raise CorruptionError("seed must be non-negative")


def derive_seed(*parts: int) -> int:
    """Stable 64-bit seed mixed from integer parts."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1, np.uint64)[0])


def variant_label(kind: CorruptionKind, alpha: int) -> str:
    """Canonical variant name: kind prefix plus alpha / 10, e.g. ``D8`` for 80."""
    return f"{kind.prefix}{alpha / 10:g}"


def parse_variant_label(label: str) -> tuple[CorruptionKind, int]:
    """Inverse of :func:`variant_label`."""
    if len(label) < 2:
        raise CorruptionError(f"malformed variant label {label!r}")
    kind = CorruptionKind.from_prefix(label[0])
    try:
        tenths = float(label[1:])
    except ValueError:
        raise CorruptionError(f"malformed variant label {label!r}") from None
    return kind, int(round(tenths * 10))


def _draw(n: int, d: int, alpha: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-row index subsets (n x alpha, distinct within a row) and N(0,1) draws."""
    uniforms = np.empty((n, alpha))
    normals = np.empty((n, alpha))
    for r in range(n):
        rng = np.random.default_rng([seed, r])
        uniforms[r] = rng.random(alpha)
        normals[r] = rng.standard_normal(alpha)

    # partial Fisher-Yates, vectorized across rows
    perm = np.tile(np.arange(d), (n, 1))
    rows = np.arange(n)
    for k in range(alpha):
        j = k + np.minimum((uniforms[:, k] * (d - k)).astype(np.int64), d - k - 1)
        picked = perm[rows, j]
        perm[rows, j] = perm[rows, k]
        perm[rows, k] = picked
    return perm[:, :alpha], normals


def corrupt(dataset: Dataset, spec: CorruptionSpec, return_indices: bool = False):
    """Apply ``spec`` to a standardized dataset; labels are left untouched.

    With ``return_indices`` the selected index matrix (n x alpha) is
    returned alongside the corrupted dataset.
    """
    n, d = dataset.features.shape
    if spec.alpha > d:
        raise CorruptionError(f"alpha={spec.alpha} exceeds the {d} available attributes")
    if spec.alpha == 0:
        out = dataset
        indices = np.empty((n, 0), dtype=np.int64)
    else:
        indices, normals = _draw(n, d, spec.alpha, spec.seed)
        features = np.array(dataset.features)
        rows = np.arange(n)[:, None]
        if spec.kind is CorruptionKind.STUCK_AT_ZERO:
            features[rows, indices] = 0.0
        elif spec.kind is CorruptionKind.REPLACE_GAUSSIAN:
            features[rows, indices] = normals
        else:
            features[rows, indices] += normals
        out = dataset.with_features(as_matrix(features))
    if return_indices:
        return out, indices
    return out


def make_variant_suite(dataset: Dataset, kind: CorruptionKind, levels, seed: int = 0):
    """One corrupted copy per level as ``(label, dataset)`` pairs, in level order.

    Level ``alpha`` uses the seed ``derive_seed(seed, alpha)``; level 0 is the
    input itself.
    """
    levels = [int(a) for a in levels]
    if len(set(levels)) != len(levels):
        raise CorruptionError(f"duplicate levels in {levels}")
    for alpha in levels:
        if alpha < 0 or alpha > dataset.d:
            raise CorruptionError(f"level {alpha} outside [0, {dataset.d}]")
    suite = []
    for alpha in levels:
        if alpha == 0:
            variant = dataset
        else:
            variant = corrupt(dataset, CorruptionSpec(kind, alpha, derive_seed(seed, alpha)))
        suite.append((variant_label(kind, alpha), variant))
    return suite


@dataclass(frozen=True)
class NoiseStats:
    changed_per_row: np.ndarray
    count: int
    mean: float
    std: float


def replacement_noise_stats(before: Dataset, after: Dataset, kind: CorruptionKind) -> NoiseStats:
    """Summarize the cells a corruption changed.

    The injected values are the new cell values for replacement and
    stuck-at-zero, and the added offsets for white noise. ``std`` is the
    sample deviation; both statistics are NaN when fewer than two cells
    changed.
    """
    a, b = before.features, after.features
    if a.shape != b.shape:
        raise CorruptionError(f"shape mismatch: {a.shape} vs {b.shape}")
    changed = a != b
    if kind is CorruptionKind.ADDITIVE_WHITE:
        injected = (b - a)[changed]
    else:
        injected = b[changed]
    count = int(injected.size)
    mean = float(injected.mean()) if count else float("nan")
    std = float(injected.std(ddof=1)) if count > 1 else float("nan")
    return NoiseStats(changed.sum(axis=1), count, mean, std)
