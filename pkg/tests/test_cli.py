import json

import numpy as np
import pytest

from sketchcond import load_conditioner, load_csv, read_trace_csv, save_csv
from sketchcond.cli import EXIT_DATA, EXIT_NUMERIC, EXIT_USAGE, main
from sketchcond.data import Dataset


@pytest.fixture
def dataset_file(tmp_path):
    path = tmp_path / "train.csv"
    rc = main(["gen", "--n", "8", "--m", "300", "--p", "3", "--decay-power", "1.5",
               "--noise", "0.2", "--seed", "4", "--out", str(path)])
    assert rc == 0
    return path


class TestGen:
    def test_writes_loadable_dataset(self, dataset_file):
        ds = load_csv(dataset_file)
        assert ds.n == 8 and ds.m == 300 and ds.num_classes == 3

    def test_reproducible_files(self, tmp_path):
        a = tmp_path / "a.csv"
        b = tmp_path / "b.csv"
        for out in (a, b):
            main(["gen", "--n", "4", "--m", "20", "--p", "2", "--seed", "9",
                  "--out", str(out)])
        assert a.read_text() == b.read_text()

    def test_planted_out(self, tmp_path):
        out = tmp_path / "d.csv"
        planted = tmp_path / "w.csv"
        main(["gen", "--n", "6", "--m", "30", "--p", "2", "--seed", "1",
              "--out", str(out), "--planted-out", str(planted)])
        w = np.loadtxt(planted, delimiter=",")
        assert w.shape == (2, 6)


class TestSketch:
    def test_writes_conditioner_and_report(self, dataset_file, tmp_path):
        cond_path = tmp_path / "cond.txt"
        report_path = tmp_path / "report.json"
        rc = main(["sketch", "--data", str(dataset_file), "--k", "3", "--r", "6",
                   "--seed", "2", "--out", str(cond_path), "--report", str(report_path)])
        assert rc == 0
        cond = load_conditioner(cond_path)
        assert cond.rank == 3 and cond.dim == 8
        report = json.loads(report_path.read_text())
        assert report["k"] == 3 and report["r"] == 6
        assert report["trace_ctilde"] <= report["trace_c"] + 1e-10
        assert "elapsed_seconds" in report and "stage_shapes" in report


class TestTrain:
    def test_trace_and_figure(self, dataset_file, tmp_path):
        trace_path = tmp_path / "run.csv"
        rc = main(["train", "--data", str(dataset_file), "--arm", "identity",
                   "--iterations", "200", "--eta", "0.1", "--checkpoint-every", "50",
                   "--trace", str(trace_path)])
        assert rc == 0
        trace = read_trace_csv(trace_path)
        assert trace.checkpoints[-1].iteration == 200
        assert (tmp_path / "run.png").exists()

    def test_no_plot(self, dataset_file, tmp_path):
        trace_path = tmp_path / "run.csv"
        rc = main(["train", "--data", str(dataset_file), "--iterations", "50",
                   "--trace", str(trace_path), "--no-plot"])
        assert rc == 0
        assert not (tmp_path / "run.png").exists()

    def test_conditioner_file_input(self, dataset_file, tmp_path):
        cond_path = tmp_path / "cond.txt"
        main(["sketch", "--data", str(dataset_file), "--k", "2", "--out", str(cond_path)])
        trace_path = tmp_path / "cond_run.csv"
        rc = main(["train", "--data", str(dataset_file), "--conditioner", str(cond_path),
                   "--iterations", "50", "--trace", str(trace_path), "--no-plot"])
        assert rc == 0


class TestBounds:
    def test_spectrum_file(self, tmp_path):
        spec_path = tmp_path / "spectrum.txt"
        spec_path.write_text("4.0\n1.0\n0.25\n")
        out = tmp_path / "bounds.json"
        rc = main(["bounds", "--spectrum", str(spec_path), "--sigma", "1.0",
                   "--rho", "1.0", "--iterations", "100", "--k", "1",
                   "--out", str(out)])
        assert rc == 0
        report = json.loads(out.read_text())
        assert np.isclose(report["full_bound"], 0.1 * (2.0 + 1.0 + 0.5))
        assert np.isclose(report["exact_lowrank_bound"], 0.1 * (2.0 + np.sqrt(2.5)))
        assert report["fast_decay"]["holds"] is True
        assert "conditional on sigma" in report["note"]

    def test_dataset_spectrum(self, dataset_file, capsys):
        rc = main(["bounds", "--data", str(dataset_file), "--iterations", "400"])
        assert rc == 0
        report = json.loads(capsys.readouterr().out)
        assert report["n"] == 8
        assert report["identity_bound"] > report["full_bound"]


class TestCompare:
    def test_end_to_end(self, tmp_path):
        config = {
            "data": {"synthetic": {"n": 10, "m": 400, "p": 3, "decay_power": 1.5,
                                   "noise": 0.2, "seed": 12}},
            "train": {"iterations": 300, "eta": 0.1, "seed": 3, "checkpoint_every": 100},
            "target_loss": 1.0,
            "arms": [
                {"name": "sgd", "conditioner": {"kind": "identity"}},
                {"name": "csgd", "conditioner": {"kind": "full"}},
                {"name": "scsgd", "conditioner": {"kind": "sketched", "k": 3}},
            ],
        }
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(config))
        outdir = tmp_path / "out"
        rc = main(["compare", "--config", str(cfg_path), "--outdir", str(outdir)])
        assert rc == 0
        summary = json.loads((outdir / "summary.json").read_text())
        assert len(summary["arms"]) == 3
        assert (outdir / "sgd_trace.csv").exists()
        assert (outdir / "comparison_loss.png").exists()


class TestExitCodes:
    def test_usage_error_is_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["train", "--data"])  # missing value
        assert exc.value.code == EXIT_USAGE

    def test_config_error_is_2(self, dataset_file, tmp_path):
        rc = main(["sketch", "--data", str(dataset_file), "--k", "99",
                   "--out", str(tmp_path / "c.txt")])
        assert rc == EXIT_USAGE

    def test_data_error_is_3(self, tmp_path):
        rc = main(["train", "--data", str(tmp_path / "missing.csv"),
                   "--iterations", "5", "--trace", str(tmp_path / "t.csv")])
        assert rc == EXIT_DATA

    @pytest.mark.filterwarnings("ignore:overflow")
    def test_numerical_failure_is_4(self, tmp_path):
        g = np.random.default_rng(1)
        ds = Dataset(x=g.standard_normal((2, 20)) * 1e160, y=g.integers(0, 2, 20),
                     num_classes=2)
        path = tmp_path / "huge.csv"
        save_csv(ds, path)
        rc = main(["train", "--data", str(path), "--iterations", "50", "--eta", "1.0",
                   "--trace", str(tmp_path / "t.csv"), "--no-plot"])
        assert rc == EXIT_NUMERIC
