import numpy as np
import pytest
from scipy import stats

from robustnet.corruption import (CorruptionError, CorruptionKind, CorruptionSpec, corrupt,
                                  derive_seed, make_variant_suite, parse_variant_label,
                                  replacement_noise_stats, variant_label)
from robustnet.data import Dataset

KINDS = list(CorruptionKind)


def standardized(n, d, seed=0):
    rng = np.random.default_rng(seed)
    # shift away from zero so stuck-at-zero changes are always visible
    x = rng.standard_normal((n, d))
    x[x == 0.0] = 1.0
    return Dataset(x, rng.integers(0, 7, n), 7, [f"a{i}" for i in range(d)])


@pytest.fixture(scope="module")
def ds149():
    return standardized(1000, 149, seed=1)


@pytest.mark.parametrize("kind", KINDS)
def test_alpha_zero_is_identity(kind, ds149):
    out, idx = corrupt(ds149, CorruptionSpec(kind, 0, 5), return_indices=True)
    assert out.same_as(ds149)
    assert idx.shape == (1000, 0)


def test_stuck_at_zero_full():
    ds = standardized(20, 9)
    out = corrupt(ds, CorruptionSpec(CorruptionKind.STUCK_AT_ZERO, 9, 3))
    assert np.all(out.features == 0.0)


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("alpha", [1, 20, 148])
def test_per_row_cardinality(kind, alpha, ds149):
    out, idx = corrupt(ds149, CorruptionSpec(kind, alpha, 9), return_indices=True)
    assert idx.shape == (1000, alpha)
    assert all(len(set(row)) == alpha for row in idx.tolist())
    assert idx.min() >= 0 and idx.max() < 149
    # on continuous data every selected cell changes and nothing else does
    changed = out.features != ds149.features
    expected = np.zeros_like(changed)
    np.put_along_axis(expected, idx, True, axis=1)
    assert np.array_equal(changed, expected)
    assert np.array_equal(out.labels, ds149.labels)


def test_replace_gaussian_injects_standard_normal(ds149):
    spec = CorruptionSpec(CorruptionKind.REPLACE_GAUSSIAN, 20, 17)
    out, idx = corrupt(ds149, spec, return_indices=True)
    injected = np.take_along_axis(out.features, idx, axis=1)
    s = replacement_noise_stats(ds149, out, CorruptionKind.REPLACE_GAUSSIAN)
    assert np.all(s.changed_per_row == 20)
    assert s.count == 20_000
    assert abs(s.mean - injected.mean()) < 1e-12
    assert abs(s.mean) <= 0.05 and abs(s.std - 1.0) <= 0.05


def test_noise_stats_large_sample():
    ds = standardized(10_000, 149, seed=2)
    out = corrupt(ds, CorruptionSpec(CorruptionKind.REPLACE_GAUSSIAN, 40, 4))
    s = replacement_noise_stats(ds, out, CorruptionKind.REPLACE_GAUSSIAN)
    assert s.count == 400_000
    assert abs(s.mean) <= 0.05 and abs(s.std - 1.0) <= 0.05


def test_additive_white_offsets_are_standard_normal(ds149):
    out = corrupt(ds149, CorruptionSpec(CorruptionKind.ADDITIVE_WHITE, 60, 8))
    s = replacement_noise_stats(ds149, out, CorruptionKind.ADDITIVE_WHITE)
    assert s.count == 60_000
    assert abs(s.mean) <= 0.05 and abs(s.std - 1.0) <= 0.05


def test_stuck_at_zero_stats(ds149):
    out = corrupt(ds149, CorruptionSpec(CorruptionKind.STUCK_AT_ZERO, 30, 8))
    changed = out.features != ds149.features
    assert np.all(out.features[changed] == 0.0)
    s = replacement_noise_stats(ds149, ds149, CorruptionKind.STUCK_AT_ZERO)
    assert s.count == 0 and np.all(s.changed_per_row == 0)


def test_noise_stats_shape_mismatch(ds149):
    with pytest.raises(CorruptionError):
        replacement_noise_stats(ds149, standardized(10, 149), CorruptionKind.REPLACE_GAUSSIAN)


@pytest.mark.parametrize("kind", KINDS)
def test_deterministic(kind, ds149):
    spec = CorruptionSpec(kind, 40, 123)
    assert corrupt(ds149, spec).same_as(corrupt(ds149, spec))
    assert not corrupt(ds149, spec).same_as(corrupt(ds149, CorruptionSpec(kind, 40, 124)))


def test_rows_corrupted_independently_of_order(ds149):
    spec = CorruptionSpec(CorruptionKind.REPLACE_GAUSSIAN, 50, 31)
    full = corrupt(ds149, spec)
    # row r depends only on (seed, r): corrupting a prefix gives the same rows
    head = corrupt(ds149.rows(0, 100), spec)
    assert np.array_equal(full.features[:100], head.features)


def test_stuck_at_zero_idempotent(ds149):
    spec = CorruptionSpec(CorruptionKind.STUCK_AT_ZERO, 70, 2)
    once = corrupt(ds149, spec)
    assert corrupt(once, spec).same_as(once)


def test_selection_frequencies_uniform():
    ds = standardized(10_000, 149, seed=3)
    _, idx = corrupt(ds, CorruptionSpec(CorruptionKind.STUCK_AT_ZERO, 20, 6), return_indices=True)
    counts = np.bincount(idx.ravel(), minlength=149)
    assert stats.chisquare(counts).pvalue > 0.01


def test_alpha_above_d_rejected():
    with pytest.raises(CorruptionError):
        corrupt(standardized(5, 4), CorruptionSpec(CorruptionKind.STUCK_AT_ZERO, 5, 0))


class TestSuite:
    def test_canonical_labels(self, ds149):
        suite = make_variant_suite(ds149, CorruptionKind.STUCK_AT_ZERO, range(0, 141, 20), seed=1)
        assert [label for label, _ in suite] == ["D0", "D2", "D4", "D6", "D8", "D10", "D12", "D14"]
        assert suite[0][1].same_as(ds149)

    def test_levels_differ(self, ds149):
        suite = make_variant_suite(ds149, CorruptionKind.REPLACE_GAUSSIAN, [0, 20, 40], seed=1)
        for (_, a), (_, b) in zip(suite, suite[1:]):
            assert np.count_nonzero(a.features != b.features) > 0
        # n * alpha cells changed at level 40
        assert np.count_nonzero(suite[2][1].features != ds149.features) == 1000 * 40

    def test_level_seeds_are_derived(self, ds149):
        suite = make_variant_suite(ds149, CorruptionKind.ADDITIVE_WHITE, [20], seed=9)
        direct = corrupt(ds149, CorruptionSpec(CorruptionKind.ADDITIVE_WHITE, 20, derive_seed(9, 20)))
        assert suite[0][0] == "W2" and suite[0][1].same_as(direct)

    def test_duplicate_levels_rejected(self, ds149):
        with pytest.raises(CorruptionError):
            make_variant_suite(ds149, CorruptionKind.STUCK_AT_ZERO, [0, 20, 20])

    def test_level_above_d_rejected(self, ds149):
        with pytest.raises(CorruptionError):
            make_variant_suite(ds149, CorruptionKind.STUCK_AT_ZERO, [0, 150])


def test_labels_round_trip():
    for kind in KINDS:
        for alpha in (0, 20, 80, 140, 25):
            assert parse_variant_label(variant_label(kind, alpha)) == (kind, alpha)
    assert variant_label(CorruptionKind.STUCK_AT_ZERO, 80) == "D8"
    assert variant_label(CorruptionKind.REPLACE_GAUSSIAN, 25) == "V2.5"
    with pytest.raises(CorruptionError):
        parse_variant_label("Q8")


def test_kind_parse():
    assert CorruptionKind.parse("stuck-zero") is CorruptionKind.STUCK_AT_ZERO
    with pytest.raises(CorruptionError):
        CorruptionKind.parse("zero")
