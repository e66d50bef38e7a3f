import json
import os

import pytest

from sci import cli, data_io, ivf


def run_ok(argv):
    assert cli.run(argv) == 0


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """One small end-to-end pipeline shared by the read-only CLI tests."""
    root = tmp_path_factory.mktemp("pipeline")
    data = str(root / "data")
    model = str(root / "model.scim")
    index = str(root / "index.scix")
    run = str(root / "run.tsv")
    run_ok(["gen-data", "--items", "200", "--queries", "30", "--dim", "8",
            "--clusters", "4", "--misalign", "0.8", "--seed", "1",
            "--out", data])
    run_ok(["train", "--data", data, "--epochs", "3", "--lr", "0.02",
            "--mode", "additive", "--seed", "1", "--out", model])
    run_ok(["build-index", "--model", model, "--items",
            os.path.join(data, "items.sciv"), "--mode", "ci",
            "--variant", "flat", "--nlist", "4", "--seed", "1",
            "--out", index])
    run_ok(["search", "--index", index, "--model", model, "--queries",
            os.path.join(data, "queries.sciv"), "--nprobe", "2", "--k", "10",
            "--out", run])
    return {"root": root, "data": data, "model": model, "index": index,
            "run": run}


class TestGenData:
    def test_writes_expected_files(self, pipeline):
        for name in ("items.sciv", "items.sciv.ids", "queries.sciv",
                     "queries.sciv.ids", "triplets_q.sciv",
                     "triplets_pos.sciv", "triplets_neg.sciv", "qrels.tsv"):
            assert os.path.exists(os.path.join(pipeline["data"], name))

    def test_vector_headers(self, pipeline):
        items, ids = data_io.read_vectors(
            os.path.join(pipeline["data"], "items.sciv"))
        assert items.shape == (200, 8)
        assert len(ids) == 200


class TestTrain:
    def test_model_and_history_written(self, pipeline):
        model = data_io.load_model(pipeline["model"])
        assert model.input_dim == 8
        history = open(pipeline["model"] + ".history.csv").read().strip()
        lines = history.split("\n")
        assert lines[0] == "epoch,loss_original,loss_swap,loss_total"
        assert len(lines) == 4  # header + 3 epochs


class TestDiagnose:
    def test_json_report(self, pipeline, tmp_path):
        out = str(tmp_path / "diag.json")
        run_ok(["diagnose", "--model", pipeline["model"], "--data",
                pipeline["data"], "--out", out])
        report = json.loads(open(out).read())
        assert "alignment_error" in report
        assert report["alignment_error"] >= 0.0
        assert report["cond_q"] >= 1.0


class TestBuildIndex:
    def test_index_loads(self, pipeline):
        index = ivf.load(pipeline["index"])
        assert index.mode == "ci"
        assert index.n_items == 200

    def test_pq_variant(self, pipeline, tmp_path):
        out = str(tmp_path / "pq.scix")
        run_ok(["build-index", "--model", pipeline["model"], "--items",
                os.path.join(pipeline["data"], "items.sciv"), "--mode",
                "standard", "--variant", "pq", "--nlist", "4", "--pq-m", "2",
                "--pq-ksub", "8", "--seed", "1", "--out", out])
        index = ivf.load(out)
        assert index.variant == "pq"
        assert index.codebook.m == 2


class TestSearchEval:
    def test_run_file_shape(self, pipeline):
        run = data_io.read_run(pipeline["run"])
        assert len(run) == 30
        assert all(len(ranked) == 10 for ranked in run.values())

    def test_eval_csv(self, pipeline, tmp_path):
        out = str(tmp_path / "eval.csv")
        run_ok(["eval", "--run", pipeline["run"], "--qrels",
                os.path.join(pipeline["data"], "qrels.tsv"), "--k", "1,10",
                "--out", out])
        lines = open(out).read().strip().split("\n")
        assert lines[0] == "metric,cutoff,value"
        assert len(lines) == 1 + 8  # 4 metrics x 2 cutoffs
        for line in lines[1:]:
            value = float(line.split(",")[2])
            assert 0.0 <= value <= 1.0


class TestSweep:
    def test_sweep_csv(self, pipeline, tmp_path):
        out = str(tmp_path / "sweep.csv")
        run_ok(["sweep", "--model", pipeline["model"], "--items",
                os.path.join(pipeline["data"], "items.sciv"), "--queries",
                os.path.join(pipeline["data"], "queries.sciv"), "--qrels",
                os.path.join(pipeline["data"], "qrels.tsv"), "--nlist", "4",
                "--nprobe", "1,2,4", "--k", "10", "--seed", "1",
                "--out", out])
        lines = open(out).read().strip().split("\n")
        assert lines[0] == "method,nprobe,metric,cutoff,value"
        assert len(lines) == 1 + 2 * 3 * 4  # methods x nprobe x metrics


class TestErrors:
    def test_missing_file_is_exit_1(self, tmp_path):
        assert cli.run(["build-index", "--model", str(tmp_path / "no.scim"),
                        "--items", str(tmp_path / "no.sciv"),
                        "--out", str(tmp_path / "o.scix")]) == 1

    def test_usage_error_is_exit_2(self):
        assert cli.run(["train"]) == 2

    def test_help_is_exit_0(self):
        assert cli.run(["--help"]) == 0

    def test_corrupt_index_is_exit_1(self, pipeline, tmp_path):
        bad = tmp_path / "bad.scix"
        bad.write_bytes(b"JUNKJUNK")
        assert cli.run(["search", "--index", str(bad), "--model",
                        pipeline["model"], "--queries",
                        os.path.join(pipeline["data"], "queries.sciv"),
                        "--out", str(tmp_path / "r.tsv")]) == 1
