import numpy as np
import pandas as pd
import pytest

from cli import main
from data import GroundTruthGraph, load_csv, load_truth_csv, save_truth_csv


@pytest.fixture
def toy3_csv(tmp_path):
    out = tmp_path / "toy3.csv"
    assert main(["generate", "--scm", "toy3", "--T", "200", "--seed", "1", "--out", str(out)]) == 0
    return out


def _train(tmp_path, data, *extra):
    model = tmp_path / "model.navar"
    argv = [
        "train", "--data", str(data), "--out-model", str(model),
        "--K", "2", "--hidden", "4", "--epochs", "3", "--batch", "32", "--seed", "0",
        *extra,
    ]
    assert main(argv) == 0
    return model


def test_generate_writes_series_and_truth(tmp_path):
    out = tmp_path / "toy3.csv"
    assert main(["generate", "--scm", "toy3", "--seed", "7", "--out", str(out)]) == 0
    dataset = load_csv(str(out))
    assert dataset.replicates[0].shape == (4000, 3)
    truth = load_truth_csv(str(tmp_path / "toy3_truth.csv"))
    assert truth.adjacency.shape == (3, 3)


def test_generate_is_deterministic(tmp_path):
    first, second = tmp_path / "a.csv", tmp_path / "b.csv"
    for out in (first, second):
        assert main(["generate", "--scm", "lag2", "--T", "300", "--seed", "3", "--out", str(out)]) == 0
    assert first.read_bytes() == second.read_bytes()


def test_generate_linear_var_options(tmp_path):
    out = tmp_path / "var.csv"
    truth_out = tmp_path / "graph.csv"
    argv = [
        "generate", "--scm", "linear-var", "--T", "500", "--N", "4", "--K", "3",
        "--density", "0.5", "--out", str(out), "--truth-out", str(truth_out),
    ]
    assert main(argv) == 0
    assert load_csv(str(out)).N == 4
    assert load_truth_csv(str(truth_out)).adjacency.shape == (4, 4)


def test_unknown_system_is_a_usage_error(tmp_path):
    assert main(["generate", "--scm", "nope", "--out", str(tmp_path / "x.csv")]) == 2


def test_missing_command_is_a_usage_error():
    assert main([]) == 2


@pytest.mark.parametrize(
    "flags",
    [
        ["--T", "5"],
        ["--T", "ten"],
        ["--scm", "linear-var", "--density", "0"],
        ["--scm", "linear-var", "--density", "1.5"],
        ["--scm", "linear-var", "--N", "0"],
        ["--scm", "linear-var", "--K", "0"],
    ],
)
def test_generator_preconditions_are_usage_errors(tmp_path, flags, capsys):
    argv = ["generate", "--scm", "toy3", "--out", str(tmp_path / "x.csv"), *flags]
    assert main(argv) == 2
    assert "usage:" in capsys.readouterr().err
    assert not (tmp_path / "x.csv").exists()


@pytest.mark.parametrize(
    "argv",
    [
        ["train", "--data", "d.csv"],
        ["score", "--model", "m.navar", "--data", "d.csv"],
        ["eval", "--scores", "s.csv"],
        ["lags", "--model", "m.navar", "--data", "d.csv", "--out", "l.csv"],
        ["contribs", "--model", "m.navar", "--data", "d.csv"],
        ["grid", "--data", "d.csv", "--out", "g.csv"],
        ["bench", "--trials", "1"],
        ["bench", "--scm", "toy3", "--trials", "0"],
        ["bench", "--scm", "toy3", "--T", "3"],
        ["preset"],
    ],
)
def test_missing_or_invalid_flags_are_usage_errors(argv):
    assert main(argv) == 2


def test_score_with_damaged_checkpoint_fails_cleanly(tmp_path, toy3_csv, capsys):
    model = _train(tmp_path, toy3_csv)
    model.write_bytes(model.read_bytes().replace(b'"beta"', b'"bxta"', 1))
    argv = ["score", "--model", str(model), "--data", str(toy3_csv), "--out-scores", str(tmp_path / "s.csv")]
    assert main(argv) == 1
    assert "damaged tensor directory" in capsys.readouterr().err


def test_eval_prints_auroc(tmp_path, capsys):
    truth = tmp_path / "truth.csv"
    save_truth_csv(GroundTruthGraph(np.array([[False, True], [False, False]])), truth, ["a", "b"])
    perfect = tmp_path / "perfect.csv"
    pd.DataFrame([[0.0, 0.9], [0.1, 0.0]], columns=["a", "b"]).to_csv(perfect, index=False)
    tied = tmp_path / "tied.csv"
    pd.DataFrame([[1.0, 1.0], [1.0, 1.0]], columns=["a", "b"]).to_csv(tied, index=False)

    assert main(["eval", "--scores", str(perfect), "--truth", str(truth)]) == 0
    assert capsys.readouterr().out == "1.000000\n"
    assert main(["eval", "--scores", str(tied), "--truth", str(truth)]) == 0
    assert capsys.readouterr().out == "0.500000\n"


def test_eval_writes_roc_and_ranking(tmp_path):
    truth = tmp_path / "truth.csv"
    save_truth_csv(GroundTruthGraph(np.array([[False, True], [False, False]])), truth, ["a", "b"])
    scores = tmp_path / "scores.csv"
    pd.DataFrame([[0.5, 0.9], [0.1, 0.2]], columns=["a", "b"]).to_csv(scores, index=False)
    roc, ranking = tmp_path / "roc.csv", tmp_path / "rank.csv"
    argv = ["eval", "--scores", str(scores), "--truth", str(truth), "--out-roc", str(roc), "--rank-out", str(ranking)]
    assert main(argv) == 0
    assert list(pd.read_csv(roc).columns) == ["fpr", "tpr", "threshold"]
    ranked = pd.read_csv(ranking)
    top = ranked.iloc[0]
    assert (top["source"], top["target"], bool(top["true_link"])) == ("a", "b", True)
    assert top["score"] == pytest.approx(0.9)
    assert len(ranked) == 4


def test_eval_undefined_auroc_fails(tmp_path, capsys):
    truth = tmp_path / "truth.csv"
    save_truth_csv(GroundTruthGraph(np.zeros((2, 2), dtype=bool)), truth, ["a", "b"])
    scores = tmp_path / "scores.csv"
    pd.DataFrame([[0.5, 0.9], [0.1, 0.2]], columns=["a", "b"]).to_csv(scores, index=False)
    assert main(["eval", "--scores", str(scores), "--truth", str(truth)]) == 1
    assert "ERROR" in capsys.readouterr().err


def test_train_score_eval_pipeline(tmp_path, toy3_csv, capsys):
    report = tmp_path / "report.csv"
    model = _train(tmp_path, toy3_csv, "--report", str(report))
    frame = pd.read_csv(report, comment="#")
    assert frame["epoch"].tolist() == [1, 2, 3]

    scores = tmp_path / "scores.csv"
    assert main(["score", "--model", str(model), "--data", str(toy3_csv), "--out-scores", str(scores)]) == 0
    matrix = pd.read_csv(scores)
    assert list(matrix.columns) == ["X1", "X2", "X3"]
    assert matrix.shape == (3, 3)
    assert (matrix.to_numpy() >= 0).all()

    capsys.readouterr()
    truth = tmp_path / "toy3_truth.csv"
    assert main(["eval", "--scores", str(scores), "--truth", str(truth)]) == 0
    value = float(capsys.readouterr().out)
    assert 0.0 <= value <= 1.0


def test_train_report_echoes_preset(tmp_path, toy3_csv):
    report = tmp_path / "report.csv"
    model = tmp_path / "model.navar"
    argv = [
        "train", "--data", str(toy3_csv), "--preset", "nonlinear-var-n3", "--epochs", "2",
        "--out-model", str(model), "--report", str(report),
    ]
    assert main(argv) == 0
    header = [line for line in report.read_text().splitlines() if line.startswith("#")]
    assert "# K=5" in header
    assert "# hidden_units=32" in header
    assert "# penalty=0.1344" in header
    assert "# epochs=2" in header


def test_train_with_config_file(tmp_path, toy3_csv):
    cfg = tmp_path / "navar.cfg"
    cfg.write_text("lambda=0.25\nhidden=4\nepochs=2\n")
    report = tmp_path / "report.csv"
    argv = ["train", "--data", str(toy3_csv), "--config", str(cfg), "--out-model", str(tmp_path / "m"), "--report", str(report)]
    assert main(argv) == 0
    assert "# penalty=0.25" in report.read_text().splitlines()


def test_missing_data_file_fails_with_path(tmp_path, capsys):
    absent = tmp_path / "absent.csv"
    assert main(["train", "--data", str(absent), "--out-model", str(tmp_path / "m")]) == 1
    assert str(absent) in capsys.readouterr().err


def test_invalid_override_fails(tmp_path, toy3_csv, capsys):
    assert main(["train", "--data", str(toy3_csv), "--out-model", str(tmp_path / "m"), "--lr", "-1"]) == 1
    assert "learning_rate" in capsys.readouterr().err


def test_score_rejects_variable_mismatch(tmp_path, toy3_csv):
    model = _train(tmp_path, toy3_csv)
    other = tmp_path / "lag2.csv"
    assert main(["generate", "--scm", "lag2", "--T", "100", "--out", str(other)]) == 0
    assert main(["score", "--model", str(model), "--data", str(other), "--out-scores", str(tmp_path / "s.csv")]) == 1


def test_lags_accepts_names_and_indices(tmp_path, toy3_csv):
    model = _train(tmp_path, toy3_csv)
    by_name, by_index = tmp_path / "by_name.csv", tmp_path / "by_index.csv"
    assert main(["lags", "--model", str(model), "--data", str(toy3_csv), "--pair", "X2,X1", "--out", str(by_name)]) == 0
    assert main(["lags", "--model", str(model), "--data", str(toy3_csv), "--pair", "1,0", "--out", str(by_index)]) == 0
    assert by_name.read_bytes() == by_index.read_bytes()
    assert pd.read_csv(by_name)["lag"].tolist() == [1, 2]


def test_lags_on_lstm_model_fails(tmp_path, toy3_csv, capsys):
    model = _train(tmp_path, toy3_csv, "--backbone", "lstm", "--K", "6")
    out = tmp_path / "lags.csv"
    assert main(["lags", "--model", str(model), "--data", str(toy3_csv), "--pair", "0,1", "--out", str(out)]) == 1
    assert "MLP" in capsys.readouterr().err


def test_contribs_exports_long_format(tmp_path, toy3_csv):
    model = _train(tmp_path, toy3_csv)
    out = tmp_path / "contribs.csv"
    assert main(["contribs", "--model", str(model), "--data", str(toy3_csv), "--out", str(out)]) == 0
    frame = pd.read_csv(out)
    assert len(frame) == 198 * 9
    assert frame["t"].min() == 3 and frame["t"].max() == 200


def test_grid_ranks_points(tmp_path, toy3_csv):
    out = tmp_path / "grid.csv"
    argv = [
        "grid", "--data", str(toy3_csv), "--epochs", "2", "--hidden", "4",
        "--grid", "lambda=0.0,0.5", "--grid", "lr=0.001", "--out", str(out),
    ]
    assert main(argv) == 0
    frame = pd.read_csv(out)
    assert frame["rank"].tolist() == [1, 2]
    assert set(frame.columns) == {"rank", "lambda", "lr", "val_mse"}
    assert frame["val_mse"].is_monotonic_increasing


def test_preset_list_and_show(capsys):
    assert main(["preset", "--list"]) == 0
    listing = capsys.readouterr().out
    assert "nonlinear-var-n3: mlp K=5 hidden=32" in listing
    assert "ecoli1-lstm: lstm K=21" in listing

    assert main(["preset", "--show", "climate"]) == 0
    shown = capsys.readouterr().out.splitlines()
    assert "K=2" in shown
    assert "penalty=0.3924" in shown

    assert main(["preset", "--show", "nope"]) == 1


def test_bench_prints_summary(tmp_path, capsys):
    argv = ["bench", "--scm", "toy3", "--trials", "1", "--T", "150", "--epochs", "2", "--hidden", "4"]
    assert main(argv) == 0
    out = capsys.readouterr().out.strip()
    assert out.startswith("AUROC mean=")
    assert out.endswith("trials=1")
