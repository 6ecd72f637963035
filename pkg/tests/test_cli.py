import json
import os

import numpy as np
from liftwave.cli import main


def run_cli(args):
    return main(args)


class TestVerifyCommand:
    def test_small_grid_passes(self, tmp_path, capsys):
        report = tmp_path / "report.json"
        code = run_cli(
            ["verify", "--grid", "small", "--seed", "0", "--report", str(report)]
        )
        assert code == 0
        out = capsys.readouterr().out
        assert out.count("[PASS]") == 7
        payload = json.loads(report.read_text())
        assert all(entry["passed"] for entry in payload)

    def test_fault_injection_fails_vanishing_moment(self, capsys):
        code = run_cli(
            ["verify", "--suite", "vanishing-moment", "--inject-fault", "flip-update-sign"]
        )
        assert code == 3
        assert "[FAIL] vanishing-moment" in capsys.readouterr().out

    def test_single_suite_filter(self, capsys):
        code = run_cli(["verify", "--suite", "proximal"])
        assert code == 0
        out = capsys.readouterr().out
        assert "proximal-oracle" in out and out.count("]") == 1


class TestPreprocessCommand:
    def test_sbm_preprocess_and_cache_hit(self, tmp_path, capsys):
        run_dir = tmp_path / "run"
        args = [
            "preprocess", "--dataset", "sbm", "--sbm-block-size", "15",
            "--scale", "0.7", "--basis-threshold", "1e-5",
            "--run-dir", str(run_dir), "--seed", "0",
        ]
        assert run_cli(args) == 0
        out = capsys.readouterr().out
        assert "N=30" in out
        assert "split sizes" in out
        assert (run_dir / "resolved-config.json").exists()
        assert run_cli(args) == 0
        assert "cache up to date" in capsys.readouterr().out


class TestTrainCommands:
    def test_train_node_writes_metrics_and_summary(self, tmp_path, capsys):
        run_dir = tmp_path / "run"
        code = run_cli(
            [
                "train", "node", "--dataset", "sbm", "--sbm-block-size", "15",
                "--run-dir", str(run_dir), "--seed", "0", "--seeds", "2",
                "--max-epochs", "25", "--patience", "10",
                "--theta", "0.3", "--dropout", "0.3", "--scale", "1.0",
                "--basis-threshold", "1e-4", "--lr", "0.02",
            ]
        )
        assert code == 0
        summary = json.loads((run_dir / "summary.json").read_text())
        assert summary["runs"] == 2
        assert 0.0 <= summary["mean_test_accuracy"] <= 1.0
        assert (run_dir / "run0.jsonl").exists()
        first = json.loads((run_dir / "run0.jsonl").read_text().splitlines()[0])
        assert first["type"] == "epoch" and "val_loss" in first
        assert "test accuracy over 2 runs" in capsys.readouterr().out

    def test_train_node_ablation_flag(self, tmp_path):
        run_dir = tmp_path / "run"
        code = run_cli(
            [
                "train", "node", "--dataset", "sbm", "--sbm-block-size", "15",
                "--run-dir", str(run_dir), "--max-epochs", "10",
                "--variant", "fixed_lifting",
            ]
        )
        assert code == 0
        resolved = json.loads((run_dir / "resolved-config.json").read_text())
        assert resolved["config"]["variant"] == "fixed_lifting"

    def test_train_graph_folds(self, tmp_path, capsys):
        run_dir = tmp_path / "run"
        code = run_cli(
            [
                "train", "graph", "--dataset", "cycles-trees", "--n-graphs", "30",
                "--run-dir", str(run_dir), "--max-epochs", "8", "--folds", "2",
                "--hidden", "8", "--dropout", "0.2",
            ]
        )
        assert code == 0
        out = capsys.readouterr().out
        assert "fold 0" in out and "fold 1" in out
        assert (run_dir / "fold0.jsonl").exists()


class TestTransformCommand:
    def test_roundtrip(self, tmp_path, capsys):
        cache_dir = tmp_path / "cache"
        run_cli(
            [
                "preprocess", "--dataset", "sbm", "--sbm-block-size", "15",
                "--run-dir", str(tmp_path / "pre"), "--cache-dir", str(cache_dir),
                "--scale", "0.5", "--basis-threshold", "0",
            ]
        )
        cache_file = next(cache_dir.glob("*.lwc"))
        signal = tmp_path / "signal.txt"
        rng = np.random.default_rng(0)
        np.savetxt(signal, rng.normal(size=30))
        out_file = tmp_path / "filtered.txt"
        code = run_cli(
            [
                "transform", "--cache", str(cache_file), "--signal", str(signal),
                "--theta", "0", "--out", str(out_file),
            ]
        )
        assert code == 0
        printed = capsys.readouterr().out
        assert "reconstruction error" in printed
        reconstructed = np.loadtxt(out_file)
        assert np.max(np.abs(reconstructed - np.loadtxt(signal))) <= 1e-8

    def test_size_mismatch_is_data_error(self, tmp_path):
        cache_dir = tmp_path / "cache"
        run_cli(
            [
                "preprocess", "--dataset", "sbm", "--sbm-block-size", "15",
                "--run-dir", str(tmp_path / "pre"), "--cache-dir", str(cache_dir),
            ]
        )
        cache_file = next(cache_dir.glob("*.lwc"))
        bad_signal = tmp_path / "bad.txt"
        np.savetxt(bad_signal, np.zeros(7))
        code = run_cli(["transform", "--cache", str(cache_file), "--signal", str(bad_signal)])
        assert code == 2


class TestExportCommand:
    def test_aggregates_runs(self, tmp_path, capsys):
        run_dir = tmp_path / "runs"
        run_cli(
            [
                "train", "node", "--dataset", "sbm", "--sbm-block-size", "15",
                "--run-dir", str(run_dir / "a"), "--max-epochs", "6", "--seeds", "2",
            ]
        )
        out_dir = tmp_path / "csv"
        code = run_cli(["export", "--runs", str(run_dir), "--out", str(out_dir)])
        assert code == 0
        summary_csv = (out_dir / "summary.csv").read_text().splitlines()
        assert len(summary_csv) == 3  # header + 2 runs
        assert "test_accuracy" in summary_csv[0]
        epochs_csv = (out_dir / "epochs.csv").read_text().splitlines()
        assert len(epochs_csv) > 2

    def test_no_runs_is_data_error(self, tmp_path):
        assert run_cli(["export", "--runs", str(tmp_path), "--out", str(tmp_path / "o")]) == 2


class TestExitCodes:
    def test_usage_error(self):
        assert run_cli(["train", "node"]) == 1  # missing --dataset
        assert run_cli(["bogus-command"]) == 1

    def test_missing_dataset_root(self, tmp_path, monkeypatch):
        monkeypatch.delenv("LIFTWAVE_DATA", raising=False)
        code = run_cli(
            ["train", "node", "--dataset", "cora", "--run-dir", str(tmp_path / "r")]
        )
        assert code == 2

    def test_unknown_dataset(self, tmp_path):
        code = run_cli(
            [
                "train", "node", "--dataset", "not-a-dataset",
                "--data-root", str(tmp_path), "--run-dir", str(tmp_path / "r"),
            ]
        )
        assert code == 2
