import json

import pytest
from click.testing import CliRunner

from qtrack import cli as C
from qtrack.cli import cli, main


@pytest.fixture
def runner():
    return CliRunner()


def gen_data(runner, tmp_path, sessions=300, vocab=120):
    out = tmp_path / "syn"
    result = runner.invoke(cli, ["gen-synthetic", "--out-dir", str(out),
                                 "--sessions", str(sessions),
                                 "--vocab-size", str(vocab), "--seed", "0"])
    assert result.exit_code == 0, result.output
    return out


def build_data(runner, tmp_path, logs, min_count=1):
    out = tmp_path / "data"
    result = runner.invoke(cli, ["build-data", "--logs", str(logs),
                                 "--out-dir", str(out),
                                 "--min-count", str(min_count),
                                 "--splits", "0.9,0.05,0.05"])
    assert result.exit_code == 0, result.output
    return out


TRAIN_FLAGS = ["--heads", "2", "--head-dim", "8", "--embed-dim", "16",
               "--max-len", "8", "--dropout", "0.0", "--lr", "0.003",
               "--batch-size", "64", "--epochs", "6", "--patience", "5"]


class TestHelp:
    def test_group_help(self, runner):
        result = runner.invoke(cli, ["--help"])
        assert result.exit_code == 0
        for cmd in ("build-data", "gen-synthetic", "train", "eval",
                    "baseline-slot", "serve", "track"):
            assert cmd in result.output

    def test_subcommand_help(self, runner):
        result = runner.invoke(cli, ["train", "--help"])
        assert result.exit_code == 0 and "--checkpoint-dir" in result.output


class TestGenAndBuild:
    def test_gen_synthetic_outputs(self, runner, tmp_path):
        out = gen_data(runner, tmp_path)
        assert (out / "logs.tsv").exists()
        assert (out / "gold.jsonl").exists()
        assert (out / "kb.tsv").exists()

    def test_build_data_splits_and_stats(self, runner, tmp_path):
        syn = gen_data(runner, tmp_path)
        data = build_data(runner, tmp_path, syn / "logs.tsv")
        stats = json.loads((data / "stats.json").read_text())
        assert stats["triplets"] > 0
        assert stats["train"] + stats["val"] + stats["test"] == stats["triplets"]
        for name in ("train", "val", "test", "rejects"):
            assert (data / f"{name}.jsonl").exists()

    def test_build_data_empty_log_warns_not_fails(self, runner, tmp_path):
        logs = tmp_path / "empty.tsv"
        logs.write_text("")
        result = runner.invoke(cli, ["build-data", "--logs", str(logs),
                                     "--out-dir", str(tmp_path / "o")])
        assert result.exit_code == 0

    def test_missing_log_is_usage_error(self, runner, tmp_path):
        result = runner.invoke(cli, ["build-data", "--logs",
                                     str(tmp_path / "absent.tsv"),
                                     "--out-dir", str(tmp_path / "o")])
        assert result.exit_code == 2

    def test_bad_splits_usage_error(self, runner, tmp_path):
        logs = tmp_path / "l.tsv"
        logs.write_text("")
        result = runner.invoke(cli, ["build-data", "--logs", str(logs),
                                     "--out-dir", str(tmp_path / "o"),
                                     "--splits", "0.5,0.5"])
        assert result.exit_code == 2


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("ws")
    runner = CliRunner()
    syn = gen_data(runner, tmp)
    data = build_data(runner, tmp, syn / "logs.tsv")
    ckpt = tmp / "ckpt"
    result = runner.invoke(cli, ["train",
                                 "--train-data", str(data / "train.jsonl"),
                                 "--val-data", str(data / "val.jsonl"),
                                 "--checkpoint-dir", str(ckpt)] + TRAIN_FLAGS)
    assert result.exit_code == 0, result.output
    return {"syn": syn, "data": data, "ckpt": ckpt}


class TestTrainEvalBaseline:
    def test_train_wrote_checkpoint_and_log(self, workspace):
        ckpt = workspace["ckpt"]
        for name in ("config.json", "vocab.txt", "weights.bin",
                     "training_log.jsonl"):
            assert (ckpt / name).exists()

    def test_eval_checkpoint(self, runner, workspace, tmp_path):
        report = tmp_path / "r.csv"
        result = runner.invoke(cli, ["eval",
                                     "--data", str(workspace["data"] / "test.jsonl"),
                                     "--checkpoint", str(workspace["ckpt"]),
                                     "--report", str(report)])
        assert result.exit_code == 0, result.output
        assert result.output.startswith("EM ")
        assert report.read_text().startswith("variant,em,f1")

    def test_eval_requires_exactly_one_source(self, runner, workspace):
        result = runner.invoke(cli, ["eval", "--data",
                                     str(workspace["data"] / "test.jsonl")])
        assert result.exit_code == 2

    def test_eval_predictions_file(self, runner, workspace, tmp_path):
        from qtrack import data as D
        triplets = D.read_dataset(workspace["data"] / "test.jsonl")
        preds = tmp_path / "p.jsonl"
        with open(preds, "w") as fh:
            for t in triplets:
                fh.write(json.dumps({"labels": list(t.labels)}) + "\n")
        result = runner.invoke(cli, ["eval",
                                     "--data", str(workspace["data"] / "test.jsonl"),
                                     "--predictions", str(preds)])
        assert result.exit_code == 0
        assert "EM 100.00" in result.output

    def test_prediction_count_mismatch(self, runner, workspace, tmp_path):
        preds = tmp_path / "p.jsonl"
        preds.write_text('{"labels": [1]}\n')
        result = runner.invoke(cli, ["eval",
                                     "--data", str(workspace["data"] / "test.jsonl"),
                                     "--predictions", str(preds)])
        assert result.exit_code == 2

    def test_baseline_slot(self, runner, workspace):
        result = runner.invoke(cli, ["baseline-slot",
                                     "--data", str(workspace["data"] / "test.jsonl"),
                                     "--kb", str(workspace["syn"] / "kb.tsv")])
        assert result.exit_code == 0 and result.output.startswith("EM ")

    def test_track_repl(self, runner, workspace):
        result = runner.invoke(cli, ["track", "--checkpoint",
                                     str(workspace["ckpt"])],
                               input="nike shoes\nadidas\n\n")
        assert result.exit_code == 0
        assert "turn 1: nike shoes" in result.output
        assert "turn 2:" in result.output and "adidas" in result.output


class TestExitCodes:
    def test_usage_error_is_2(self, monkeypatch, tmp_path):
        monkeypatch.setattr("sys.argv",
                            ["qtrack", "build-data", "--logs",
                             str(tmp_path / "missing.tsv"),
                             "--out-dir", str(tmp_path / "o")])
        with pytest.raises(SystemExit) as exc:
            main()
        assert exc.value.code == 2

    def test_runtime_error_is_3(self, monkeypatch, tmp_path):
        # Checkpoint dir exists as an argument but has no files inside.
        monkeypatch.setattr("sys.argv",
                            ["qtrack", "eval", "--data",
                             str(tmp_path / "absent.jsonl"),
                             "--checkpoint", str(tmp_path / "nockpt")])
        with pytest.raises(SystemExit) as exc:
            main()
        assert exc.value.code == C.EXIT_RUNTIME
