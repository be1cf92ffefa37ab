import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

import data
from data import (
    GroundTruthGraph,
    TimeSeriesDataset,
    apply_normalization,
    companion_radius,
    generate,
    generate_lag_scm,
    generate_linear_var,
    generate_toy3,
    load_csv,
    load_truth_csv,
    normalize,
    save_csv,
    save_truth_csv,
    sequences,
    split_index,
    window,
)
from errors import ConfigError, ConstantVariableError, CsvParseError, DatasetTooShortError, GenerationError

TOY3_TRUTH = np.array(
    [
        [False, False, True],
        [True, True, True],
        [True, True, False],
    ]
)


def test_toy3_truth_table():
    dataset = generate_toy3(T=50, seed=0)
    assert_array_equal(dataset.truth.adjacency, TOY3_TRUTH)
    assert len(dataset.truth.links()) == 6
    assert (1, 1) in dataset.truth.links()
    assert all(lags == (1,) for lags in dataset.truth.lags.values())


def test_toy3_shape_and_names():
    dataset = generate_toy3(seed=1)
    assert dataset.replicates[0].shape == (4000, 3)
    assert dataset.variable_names == ["X1", "X2", "X3"]


def test_toy3_noise_free_trajectory():
    x = generate_toy3(T=10, seed=0, noise_scale=0.0, burn_in=0).replicates[0]
    assert_allclose(x[0], [1.0, 0.0, 0.0])
    assert_allclose(x[1], [1.0, 0.0, 0.5])
    assert_allclose(x[2], [1.0 + np.tanh(0.5), 0.5, 0.5])
    # X2 leaves 0 once X3 has fed it
    assert x[3, 1] == pytest.approx(0.35 * 0.5 + 0.5)


def test_generators_are_deterministic():
    for make in (generate_toy3, generate_lag_scm):
        assert_array_equal(make(T=200, seed=7).replicates[0], make(T=200, seed=7).replicates[0])
        assert np.any(make(T=200, seed=7).replicates[0] != make(T=200, seed=8).replicates[0])
    a = generate_linear_var(4, 200, 2, 0.5, seed=3)
    b = generate_linear_var(4, 200, 2, 0.5, seed=3)
    assert_array_equal(a.replicates[0], b.replicates[0])
    assert_array_equal(a.truth.adjacency, b.truth.adjacency)


def test_lag_scm_truth_lags():
    dataset = generate_lag_scm(T=100, seed=0)
    assert_array_equal(dataset.truth.adjacency, [[False, True], [True, False]])
    assert dataset.truth.lags == {(1, 0): (3, 4, 5), (0, 1): (2, 4)}
    assert dataset.variable_names == ["X", "Y"]


def test_lag_scm_noise_free_first_step():
    x = generate_lag_scm(T=20, seed=0, noise_scale=0.0, burn_in=0).replicates[0]
    assert_allclose(x[0], [1.0, 0.0])


def test_linear_var_full_density():
    dataset = generate_linear_var(2, 200, 1, 1.0, seed=0)
    assert dataset.truth.adjacency.all()


def test_linear_var_empty_support_is_noise():
    dataset = generate_linear_var(3, 500, 2, 1e-12, seed=0)
    assert not dataset.truth.adjacency.any()
    assert dataset.truth.links() == []
    assert abs(dataset.replicates[0].std() - 1.0) < 0.1


def test_linear_var_stays_bounded():
    dataset = generate_linear_var(5, 10000, 3, 0.6, seed=4)
    x = dataset.replicates[0]
    assert np.all(np.isfinite(x))
    assert np.abs(x).max() < 1e4


def test_linear_var_truth_matches_lags():
    dataset = generate_linear_var(4, 100, 3, 0.4, seed=9)
    for (i, j), lags in dataset.truth.lags.items():
        assert dataset.truth.adjacency[i, j]
        assert lags and all(1 <= k <= 3 for k in lags)
    assert len(dataset.truth.lags) == dataset.truth.adjacency.sum()


def test_companion_radius_of_scalar_ar():
    assert companion_radius(np.array([[[0.5]]])) == pytest.approx(0.5)


def test_linear_var_gives_up_after_repeated_failures(monkeypatch):
    monkeypatch.setattr(data, "companion_radius", lambda coefficients: float("nan"))
    with pytest.raises(GenerationError):
        generate_linear_var(3, 100, 2, 0.5, seed=0)


def test_generate_dispatch():
    assert generate("toy3", T=20, seed=0).N == 3
    assert generate("lag2", T=20, seed=0).N == 2
    assert generate("linear-var", T=20, seed=0, N=4).N == 4
    with pytest.raises(ConfigError):
        generate("toy4", T=20)


def test_generators_reject_tiny_T():
    with pytest.raises(ConfigError):
        generate_toy3(T=3)


def test_csv_round_trip(tmp_path):
    values = np.array([[0.1, -2.5], [1e-17, 3.0], [np.pi, -np.e]])
    path = tmp_path / "table.csv"
    save_csv(TimeSeriesDataset([values], ["a", "b"]), path)
    loaded = load_csv(str(path))
    assert loaded.variable_names == ["a", "b"]
    assert_array_equal(loaded.replicates[0], values)


def test_csv_header_names(tmp_path):
    path = tmp_path / "h.csv"
    path.write_text("a,b\n1,2\n3,4\n")
    dataset = load_csv(str(path))
    assert dataset.variable_names == ["a", "b"]
    assert_array_equal(dataset.replicates[0], [[1.0, 2.0], [3.0, 4.0]])


def test_csv_without_header(tmp_path):
    path = tmp_path / "n.csv"
    path.write_text("1;2\n3;4\n")
    dataset = load_csv(str(path), has_header=False, delimiter=";")
    assert dataset.variable_names == ["x0", "x1"]
    assert dataset.replicates[0].shape == (2, 2)


def test_csv_ragged_row_names_line(tmp_path):
    path = tmp_path / "ragged.csv"
    path.write_text("a,b\n1,2\n3,4,5\n")
    with pytest.raises(CsvParseError) as info:
        load_csv(str(path))
    assert info.value.line == 3


def test_csv_short_row_names_line(tmp_path):
    path = tmp_path / "short.csv"
    path.write_text("a,b\n1,2\n3,4\n5\n")
    with pytest.raises(CsvParseError) as info:
        load_csv(str(path))
    assert info.value.line == 4


def test_csv_short_row_after_blank_line_names_file_line(tmp_path):
    path = tmp_path / "gap.csv"
    path.write_text("a,b\n1,2\n\n3,4\n5\n")
    with pytest.raises(CsvParseError) as info:
        load_csv(str(path))
    assert info.value.line == 5
    assert "ragged" in str(info.value)


def test_csv_blank_lines_are_skipped(tmp_path):
    path = tmp_path / "gap.csv"
    path.write_text("a,b\n1,2\n\n3,4\n\n")
    assert_array_equal(load_csv(str(path)).replicates[0], [[1.0, 2.0], [3.0, 4.0]])


def test_csv_bad_cell_after_blank_line_names_file_line(tmp_path):
    path = tmp_path / "gap.csv"
    path.write_text("a,b\n1,2\n\n3,oops\n")
    with pytest.raises(CsvParseError) as info:
        load_csv(str(path))
    assert (info.value.line, info.value.column) == (4, 2)


def test_csv_non_numeric_cell_names_row_and_column(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1,2\n3,oops\n")
    with pytest.raises(CsvParseError) as info:
        load_csv(str(path))
    assert (info.value.line, info.value.column) == (3, 2)
    assert "oops" in str(info.value)


def test_csv_missing_file_names_path(tmp_path):
    missing = str(tmp_path / "nope.csv")
    with pytest.raises(FileNotFoundError, match="nope.csv"):
        load_csv(missing)


def test_csv_replicates_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    dataset = TimeSeriesDataset([rng.normal(size=(5, 2)), rng.normal(size=(3, 2))], ["u", "v"])
    path = tmp_path / "reps.csv"
    save_csv(dataset, path)
    loaded = load_csv(str(path), replicate_column="replicate")
    assert loaded.variable_names == ["u", "v"]
    assert loaded.lengths == [5, 3]
    for a, b in zip(loaded.replicates, dataset.replicates):
        assert_array_equal(a, b)


def test_csv_one_file_per_replicate(tmp_path):
    paths = []
    for r in range(3):
        path = tmp_path / f"r{r}.csv"
        path.write_text(f"a,b\n{r},1\n{r},2\n{r},3\n")
        paths.append(str(path))
    dataset = load_csv(paths)
    assert len(dataset.replicates) == 3
    assert dataset.replicates[2][0, 0] == 2.0


def test_truth_csv_round_trip(tmp_path):
    truth = GroundTruthGraph(TOY3_TRUTH)
    with_header = tmp_path / "truth_named.csv"
    save_truth_csv(truth, with_header, ["X1", "X2", "X3"])
    assert_array_equal(load_truth_csv(str(with_header)).adjacency, TOY3_TRUTH)

    bare = tmp_path / "truth.csv"
    save_truth_csv(truth, bare)
    assert_array_equal(load_truth_csv(str(bare)).adjacency, TOY3_TRUTH)


def test_truth_csv_rejects_non_binary(tmp_path):
    path = tmp_path / "truth.csv"
    path.write_text("0,2\n1,0\n")
    with pytest.raises(CsvParseError):
        load_truth_csv(str(path))


def test_normalize_standardizes():
    rng = np.random.default_rng(0)
    dataset = TimeSeriesDataset([rng.normal(3.0, 2.0, size=(200, 3)), rng.normal(3.0, 2.0, size=(100, 3))])
    normalized = normalize(dataset)
    stacked = np.concatenate(normalized.replicates)
    assert_allclose(stacked.mean(axis=0), 0.0, atol=1e-9)
    assert_allclose(stacked.std(axis=0), 1.0, atol=1e-9)
    assert normalized.stats is not None


def test_normalize_fit_fraction_uses_leading_rows():
    values = np.concatenate([np.random.default_rng(1).normal(size=(80, 2)), np.full((20, 2), 50.0)])
    normalized = normalize(TimeSeriesDataset([values]), fit_fraction=0.8)
    assert_allclose(normalized.replicates[0][:80].mean(axis=0), 0.0, atol=1e-9)


def test_normalize_is_idempotent():
    dataset = TimeSeriesDataset([np.random.default_rng(2).normal(5.0, 3.0, size=(50, 2))])
    once = normalize(dataset)
    twice = normalize(once)
    assert_allclose(twice.replicates[0], once.replicates[0], atol=1e-12)
    assert_allclose(twice.stats.mean, 0.0, atol=1e-12)
    assert_allclose(twice.stats.std, 1.0, atol=1e-12)


def test_normalize_constant_variable_named():
    values = np.column_stack([np.arange(10.0), np.full(10, 4.0)])
    with pytest.raises(ConstantVariableError, match="flat"):
        normalize(TimeSeriesDataset([values], ["ok", "flat"]))


def test_apply_normalization_uses_given_stats():
    dataset = TimeSeriesDataset([np.arange(12.0).reshape(6, 2)])
    stats = normalize(dataset).stats
    other = TimeSeriesDataset([np.full((3, 2), 100.0)])
    expected = (100.0 - stats.mean) / stats.std
    assert_allclose(apply_normalization(other, stats).replicates[0], np.broadcast_to(expected, (3, 2)))


def test_window_count_for_replicated_short_series():
    rng = np.random.default_rng(0)
    dataset = TimeSeriesDataset([rng.normal(size=(21, 100)) for _ in range(46)])
    windows = window(dataset, 2)
    assert len(windows) == 874
    assert windows.inputs.shape == (874, 100, 2)


def test_window_layout_oldest_lag_first():
    values = np.arange(10.0).reshape(5, 2)
    windows = window(TimeSeriesDataset([values]), 3)
    assert_array_equal(windows.inputs[0, 0], [0.0, 2.0, 4.0])
    assert_array_equal(windows.inputs[0, 1], [1.0, 3.0, 5.0])
    assert_array_equal(windows.targets[0], [6.0, 7.0])
    assert_array_equal(windows.target_index, [3, 4])


def test_windows_never_span_replicates():
    rng = np.random.default_rng(3)
    first, second = rng.normal(size=(8, 2)), rng.normal(size=(8, 2))
    before = window(TimeSeriesDataset([first, second]), 3)
    changed = first.copy()
    changed[-1] += 10.0
    after = window(TimeSeriesDataset([changed, second]), 3)
    in_second = before.replicate == 1
    assert_array_equal(after.inputs[in_second], before.inputs[in_second])
    assert_array_equal(after.targets[in_second], before.targets[in_second])


def test_window_too_short():
    with pytest.raises(DatasetTooShortError):
        window(TimeSeriesDataset([np.zeros((2, 2))]), 2)


def test_sequences_predict_every_row_once():
    dataset = TimeSeriesDataset([np.arange(22.0).reshape(11, 2), np.arange(8.0).reshape(4, 2)])
    seqs = sequences(dataset, length=4, warmup=1)
    predicted = {}
    for c in range(len(seqs)):
        for t in seqs.target_indices(c):
            key = (seqs.replicate[c], int(t))
            predicted[key] = predicted.get(key, 0) + 1
    expected = {(0, t) for t in range(1, 11)} | {(1, t) for t in range(1, 4)}
    assert set(predicted) == expected
    assert set(predicted.values()) == {1}
    assert seqs.n_targets == 13


def test_sequences_validate_lengths():
    dataset = TimeSeriesDataset([np.zeros((5, 2))])
    with pytest.raises(ConfigError):
        sequences(dataset, length=1, warmup=1)
    with pytest.raises(DatasetTooShortError):
        sequences(TimeSeriesDataset([np.zeros((1, 2))]), length=3)


def test_split_index():
    assert split_index(10, 0.2) == 8
    assert split_index(4000, 0.2) == 3200
    assert split_index(21, 0.0) == 21
    assert split_index(2, 0.9) == 1
