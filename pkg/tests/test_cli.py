"""CLI pipeline tests: artifacts, error paths, determinism, input immutability."""

import hashlib
import json
import math
import subprocess
import sys

import pytest

from conftest import write_pipeline_fixture
from oracles import gower_oracle
from simlabel.cli import main
from simlabel.dataset import load_dataset, load_schema

PIPELINE = ("split", "ranges", "calibrate", "match", "augment", "train", "score", "evaluate", "report")


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """One full pipeline run shared by the read-only assertions below."""
    fx = write_pipeline_fixture(tmp_path_factory.mktemp("pipeline"))
    fx["input_hashes"] = {name: sha(fx[name]) for name in ("schema", "labeled", "unlabeled")}
    for command in PIPELINE:
        assert main([command, "--config", str(fx["config"])]) == 0, command
    for command, flags in (
        ("probe-grid", ["--sample-id", "l0000"]),
        ("probe-shell", ["--sample-id", "l0000"]),
    ):
        assert main([command, "--config", str(fx["config"]), *flags]) == 0, command
    return fx


class TestPipelineArtifacts:
    def test_split_files_partition_the_labeled_data(self, pipeline):
        schema = load_schema(pipeline["schema"])
        train = load_dataset(pipeline["out"] / "train.csv", schema)
        test = load_dataset(pipeline["out"] / "test.csv", schema)
        source = load_dataset(pipeline["labeled"], schema)
        assert len(train) + len(test) == len(source)
        assert max(r.timestamp for r in train.rows) < min(r.timestamp for r in test.rows)

    def test_calibrate_writes_the_95th_percentile_d(self, pipeline):
        params = json.loads((pipeline["out"] / "params.json").read_text())
        schema = load_schema(pipeline["schema"])
        train = load_dataset(pipeline["out"] / "train.csv", schema)
        ranges = json.loads((pipeline["out"] / "ranges.json").read_text())["ranges"]
        sims = []
        rows = train.rows
        for i in range(len(rows)):
            for j in range(i + 1, len(rows)):
                sims.append(gower_oracle(rows[i].features, rows[j].features, ranges))
        sims.sort()
        expected = sims[min(max(math.ceil(0.95 * len(sims)) - 1, 0), len(sims) - 1)]
        assert params["d"] == expected
        assert "percentile" in params["provenance"]

    def test_calibrated_c_meets_the_budget_strictly(self, pipeline):
        params = json.loads((pipeline["out"] / "params.json").read_text())
        assert params["matched_fraction_at_c"] < 0.05
        assert "labeled_similarity_distribution" in params

    def test_match_output_shape(self, pipeline):
        lines = (pipeline["out"] / "match_train.csv").read_text().splitlines()
        assert lines[0] == "id,t,y_hat,matched_count,g0,g1"
        assert len(lines) == 801  # header + one row per unlabeled sample
        sidecar = json.loads((pipeline["out"] / "match_train_contributors.json").read_text())
        assert len(sidecar) == 800

    def test_augmented_train_has_provenance_columns(self, pipeline):
        lines = (pipeline["out"] / "augmented_train.csv").read_text().splitlines()
        assert lines[0].endswith("source,vote,matched_count")
        flagged = [line for line in lines[1:] if ",similar," in line]
        assert flagged, "expected similar rows in the augmented training set"

    def test_models_record_stop_reason_and_config_echo(self, pipeline):
        for name in ("model_plain.json", "model_augmented.json"):
            payload = json.loads((pipeline["out"] / name).read_text())
            assert payload["stop_reason"] in ("tolerance", "iteration-budget")
            assert payload["run_config"]["l2"] == 0.1

    def test_report_has_table_one_shape(self, pipeline):
        report = json.loads((pipeline["out"] / "eval_report.json").read_text())
        assert report["models"] == ["logistic regression", "logistic regression*"]
        assert report["testsets"] == ["real", "similar"]
        for model in report["models"]:
            for testset in report["testsets"]:
                assert 0.0 <= report["auc"][model][testset] <= 1.0
        deltas = report["metadata"]["augmented_vs_plain_auc_delta"]["logistic regression"]
        assert set(deltas) == {"real", "similar"}
        text = (pipeline["out"] / "eval_report.txt").read_text()
        assert "logistic regression*" in text
        assert "Algorithm" in text

    def test_probe_artifacts(self, pipeline):
        grid_lines = (pipeline["out"] / "probe_grid_l0000.csv").read_text().splitlines()
        assert grid_lines[0] == "f0,f1,score"
        assert len(grid_lines) == 1 + 25 * 25
        shell_lines = (pipeline["out"] / "shell_l0000.csv").read_text().splitlines()
        assert shell_lines[0] == "id,f0,f1,f2,f3,similarity,score,crossed"
        assert len(shell_lines) == 1 + 64
        recourse = json.loads((pipeline["out"] / "recourse_l0000.json").read_text())
        assert recourse["base_id"] == "l0000"
        assert isinstance(recourse["recourse_found"], bool)
        assert recourse["run_config"]["count"] == 64

    def test_inputs_never_mutated(self, pipeline):
        for name in ("schema", "labeled", "unlabeled"):
            assert sha(pipeline[name]) == pipeline["input_hashes"][name]

    def test_rerun_is_byte_identical(self, pipeline):
        targets = ["match_train.csv", "match_test.csv", "params.json", "eval_report.json"]
        before = {name: sha(pipeline["out"] / name) for name in targets}
        assert main(["calibrate", "--config", str(pipeline["config"])]) == 0
        assert main(["match", "--config", str(pipeline["config"])]) == 0
        assert main(["evaluate", "--config", str(pipeline["config"])]) == 0
        after = {name: sha(pipeline["out"] / name) for name in targets}
        assert before == after

    def test_worker_flag_never_changes_bytes(self, pipeline):
        target = pipeline["out"] / "match_train.csv"
        digests = set()
        for workers in (1, 2, 8):
            assert main(["match", "--config", str(pipeline["config"]), "--workers", str(workers)]) == 0
            digests.add(sha(target))
        assert len(digests) == 1


class TestCliErrors:
    def test_match_before_ranges_names_the_producer(self, tmp_path, capsys):
        fx = write_pipeline_fixture(tmp_path, n_labeled_per=8, n_unlabeled_per=10)
        assert main(["split", "--config", str(fx["config"])]) == 0
        rc = main(["match", "--config", str(fx["config"])])
        captured = capsys.readouterr()
        assert rc == 1
        error = json.loads(captured.err.strip())
        assert error["status"] == "error"
        assert "run `ranges` first" in error["message"]

    def test_score_before_train_names_the_producer(self, tmp_path, capsys):
        fx = write_pipeline_fixture(tmp_path, n_labeled_per=8, n_unlabeled_per=10)
        assert main(["split", "--config", str(fx["config"])]) == 0
        rc = main(["score", "--config", str(fx["config"])])
        assert rc == 1
        assert "run `train` first" in json.loads(capsys.readouterr().err.strip())["message"]

    def test_unknown_config_key_rejected(self, tmp_path, capsys):
        fx = write_pipeline_fixture(tmp_path, n_labeled_per=8, n_unlabeled_per=10)
        payload = json.loads(fx["config"].read_text())
        payload["splitt"] = {"test_fraction": 0.3}
        fx["config"].write_text(json.dumps(payload))
        rc = main(["split", "--config", str(fx["config"])])
        assert rc == 1
        assert "splitt" in json.loads(capsys.readouterr().err.strip())["message"]

    def test_missing_config_file(self, tmp_path, capsys):
        rc = main(["split", "--config", str(tmp_path / "nope.json")])
        assert rc == 1
        assert "not found" in json.loads(capsys.readouterr().err.strip())["message"]

    def test_invalid_fraction_rejected(self, tmp_path, capsys):
        fx = write_pipeline_fixture(tmp_path, n_labeled_per=8, n_unlabeled_per=10)
        rc = main(["split", "--config", str(fx["config"]), "--test-fraction", "1.5"])
        assert rc == 1
        assert "test_fraction" in json.loads(capsys.readouterr().err.strip())["message"]

    def test_probe_unknown_sample_id(self, tmp_path, capsys):
        fx = write_pipeline_fixture(tmp_path, n_labeled_per=8, n_unlabeled_per=10)
        for command in ("split", "ranges", "calibrate"):
            assert main([command, "--config", str(fx["config"])]) == 0
        rc = main(["probe-shell", "--config", str(fx["config"]), "--sample-id", "ghost"])
        assert rc == 1
        assert "ghost" in json.loads(capsys.readouterr().err.strip())["message"]


class TestCliExtras:
    def test_external_scores_join_the_evaluation(self, tmp_path):
        fx = write_pipeline_fixture(tmp_path, n_labeled_per=20, n_unlabeled_per=60)
        for command in PIPELINE[:-2]:
            assert main([command, "--config", str(fx["config"])]) == 0

        scored_ids = [
            line.split(",")[0]
            for line in (fx["out"] / "scores_plain.csv").read_text().splitlines()[1:]
        ]
        external = tmp_path / "external.csv"
        external.write_text(
            "id,score\n" + "".join(f"{sid},0.5\n" for sid in scored_ids), encoding="utf-8"
        )
        payload = json.loads(fx["config"].read_text())
        payload["evaluate"] = {
            "external_scores": [{"name": "svm (rbf)", "path": "external.csv"}]
        }
        fx["config"].write_text(json.dumps(payload))
        assert main(["evaluate", "--config", str(fx["config"])]) == 0
        report = json.loads((fx["out"] / "eval_report.json").read_text())
        assert "svm (rbf)" in report["models"]
        for testset in report["testsets"]:
            assert report["auc"]["svm (rbf)"][testset] == 0.5

    def test_out_dir_env_var(self, tmp_path, monkeypatch):
        fx = write_pipeline_fixture(tmp_path, n_labeled_per=8, n_unlabeled_per=10)
        payload = json.loads(fx["config"].read_text())
        del payload["out_dir"]
        fx["config"].write_text(json.dumps(payload))
        monkeypatch.setenv("SIMLABEL_OUT_DIR", str(tmp_path / "env_out"))
        assert main(["split", "--config", str(fx["config"])]) == 0
        assert (tmp_path / "env_out" / "train.csv").exists()

    def test_module_entry_point(self, tmp_path):
        fx = write_pipeline_fixture(tmp_path, n_labeled_per=8, n_unlabeled_per=10)
        result = subprocess.run(
            [sys.executable, "-m", "simlabel", "split", "--config", str(fx["config"])],
            capture_output=True,
            text=True,
        )
        assert result.returncode == 0
        assert "split:" in result.stdout

    def test_manual_threshold_overrides(self, tmp_path):
        fx = write_pipeline_fixture(tmp_path, n_labeled_per=8, n_unlabeled_per=10)
        for command in ("split", "ranges"):
            assert main([command, "--config", str(fx["config"])]) == 0
        assert main(["calibrate", "--config", str(fx["config"]), "--d", "0.8", "--c", "0.25"]) == 0
        params = json.loads((fx["out"] / "params.json").read_text())
        assert params["d"] == 0.8 and params["c"] == 0.25
        assert "manual" in params["provenance"]
