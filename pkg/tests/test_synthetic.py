import numpy as np
import pytest

from dcforecast.complexity import compute_all
from dcforecast.errors import InputError
from dcforecast.synthetic import (GRID_DENSE, GRID_DROPOUT, GRID_FAMILIES, GRID_FILTERS,
                                  GRID_LR, MetaCorpusSpec, PlantedSpec,
                                  default_architecture_grid, difficulty_to_separation,
                                  generate_dataset, generate_meta_corpus,
                                  multiplicative_depth_offset, zero_offset)


def test_generate_dataset_deterministic():
    spec = PlantedSpec(n=60, d=3, n_classes=2, separation=4.0, seed=7)
    a = generate_dataset(spec)
    b = generate_dataset(spec)
    assert np.array_equal(a.features, b.features)
    assert np.array_equal(a.labels, b.labels)
    c = generate_dataset(PlantedSpec(n=60, d=3, n_classes=2, separation=4.0, seed=8))
    assert not np.array_equal(a.features, c.features)


def test_generate_dataset_shapes_and_counts():
    table = generate_dataset(PlantedSpec(n=90, d=4, n_classes=3, separation=3.0))
    assert table.features.shape == (90, 4)
    assert np.array_equal(np.bincount(table.labels), [30, 30, 30])


def test_planted_proportions_respected():
    spec = PlantedSpec(n=100, d=2, n_classes=2, separation=3.0,
                       proportions=(0.8, 0.2))
    table = generate_dataset(spec)
    assert np.array_equal(np.bincount(table.labels), [80, 20])


def test_separation_controls_measured_difficulty():
    easy = generate_dataset(PlantedSpec(n=200, d=2, n_classes=2, separation=8.0, seed=1))
    hard = generate_dataset(PlantedSpec(n=200, d=2, n_classes=2, separation=0.5, seed=1))
    v_easy = compute_all(easy, seed=0)
    v_hard = compute_all(hard, seed=0)
    assert v_easy.knn3_error < v_hard.knn3_error
    assert v_easy.linear_error < v_hard.linear_error
    assert v_easy.max_fisher_ratio > v_hard.max_fisher_ratio


def test_separable_blobs_have_zero_linear_error():
    table = generate_dataset(PlantedSpec(n=100, d=1, n_classes=2, separation=20.0,
                                         seed=2, clip_sigma=2.0))
    assert compute_all(table, seed=0).linear_error == 0.0


def test_xor_mode_is_hard_linearly_but_locally_easy():
    # overlapping blobs, so the median split yields a true quadrant parity
    spec = PlantedSpec(n=400, d=2, n_classes=2, separation=0.0, nonlinearity="xor",
                       seed=3)
    v = compute_all(generate_dataset(spec), seed=0)
    assert v.linear_error > 0.2       # no linear split works on a quadrant parity
    assert v.knn3_error < v.linear_error


def test_ring_mode_balanced_labels():
    spec = PlantedSpec(n=200, d=3, n_classes=2, separation=1.0, nonlinearity="ring",
                       seed=4)
    table = generate_dataset(spec)
    counts = np.bincount(table.labels)
    assert abs(counts[0] - counts[1]) <= 1


def test_intrinsic_dim_embedding():
    spec = PlantedSpec(n=300, d=8, n_classes=2, separation=5.0, intrinsic_dim=2,
                       seed=5)
    v = compute_all(generate_dataset(spec), seed=0)
    assert v.raw_feature_count == 8
    assert v.pca95_components <= 3    # variance concentrated on the planted plane


def test_planted_spec_validation():
    with pytest.raises(InputError):
        PlantedSpec(n=50, d=2, n_classes=2, separation=1.0, nonlinearity="spiral")
    with pytest.raises(InputError):
        PlantedSpec(n=50, d=2, n_classes=2, separation=1.0, proportions=(0.5, 0.4))
    with pytest.raises(InputError):
        PlantedSpec(n=50, d=2, n_classes=2, separation=1.0, intrinsic_dim=3)
    with pytest.raises(InputError):
        generate_dataset(PlantedSpec(n=50, d=2, n_classes=2, separation=1.0,
                                     proportions=(0.99, 0.01)))  # class with < 2 rows
    with pytest.raises(InputError):
        generate_dataset(PlantedSpec(n=50, d=1, n_classes=2, separation=1.0,
                                     nonlinearity="xor"))  # needs 2 intrinsic dims


# ---------------------------------------------------------------------------
# architecture grid and accuracy laws

def test_default_grid_is_full_factorial():
    grid = default_architecture_grid()
    expected = (len(GRID_FAMILIES) * len(GRID_FILTERS) * len(GRID_DENSE)
                * len(GRID_DROPOUT) * len(GRID_LR))
    assert len(grid) == expected == 324
    assert len({(a.family, a.depth, a.filters, a.dense_units, a.dropout,
                 a.learning_rate) for a in grid}) == 324
    by_family = {f: sum(1 for a in grid if a.family == f)
                 for f, _ in GRID_FAMILIES}
    assert set(by_family.values()) == {108}


def test_offset_laws():
    grid = default_architecture_grid()
    deep = next(a for a in grid if a.depth == 18)
    shallow = next(a for a in grid if a.depth == 5)
    assert zero_offset(deep, 0.9) == 0.0
    # deep gains on hard data, loses on easy; shallow mirrors it
    assert multiplicative_depth_offset(deep, 0.9) > 0
    assert multiplicative_depth_offset(deep, 0.1) < 0
    assert multiplicative_depth_offset(shallow, 0.9) < 0
    assert multiplicative_depth_offset(deep, 0.5) == 0.0


def test_difficulty_to_separation_monotone():
    seps = [difficulty_to_separation(d) for d in np.linspace(0, 1, 11)]
    assert all(a > b for a, b in zip(seps, seps[1:]))
    assert seps[0] == pytest.approx(6.0)
    assert seps[-1] == pytest.approx(0.8)


def test_meta_corpus_counts_and_accuracy_law():
    spec = MetaCorpusSpec(n_datasets=4, offset_law="multiplicative", noise_sigma=0.0,
                          rows_per_dataset=120, n_features=3, seed=6)
    records, tables, diffs = generate_meta_corpus(spec)
    assert len(tables) == 4 and len(records) == 4 * 324
    assert sorted(tables) == sorted(diffs) == [f"synth{i:02d}" for i in range(4)]
    for r in records:
        diff = diffs[r.dataset_id]
        base = spec.base_high - (spec.base_high - spec.base_low) * diff
        expected = min(1.0, max(0.0, base + multiplicative_depth_offset(r.arch, diff)))
        assert r.accuracy == pytest.approx(expected, abs=1e-12)


def test_meta_corpus_difficulty_orders_measured_complexity():
    spec = MetaCorpusSpec(n_datasets=3, rows_per_dataset=200, n_features=3, seed=7)
    _, tables, diffs = generate_meta_corpus(spec)
    ids = sorted(tables)
    errs = [compute_all(tables[i], seed=0).knn3_error for i in ids]
    assert errs[0] < errs[-1]  # hardest dataset measurably harder than easiest


def test_meta_corpus_noise_and_domains():
    spec = MetaCorpusSpec(n_datasets=3, rows_per_dataset=120, n_features=3,
                          noise_sigma=0.05, seed=8)
    records, tables, _ = generate_meta_corpus(spec, domains=["x", "y", "z"])
    assert {t.domain for t in tables.values()} == {"x", "y", "z"}
    # same spec without noise differs record by record
    clean, _, _ = generate_meta_corpus(MetaCorpusSpec(n_datasets=3,
                                                      rows_per_dataset=120,
                                                      n_features=3, seed=8))
    assert any(a.accuracy != b.accuracy for a, b in zip(records, clean))


def test_meta_corpus_spec_validation():
    with pytest.raises(InputError):
        MetaCorpusSpec(difficulty_range=(0.9, 0.1))
    with pytest.raises(InputError):
        MetaCorpusSpec(offset_law="quadratic")
