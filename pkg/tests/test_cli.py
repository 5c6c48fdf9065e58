import csv
import json
from pathlib import Path

import numpy as np
import pytest

from cdnet.cli import main
from cdnet.layers import LayerSpec
from cdnet.network import Network, NetworkSpec, cd_mlp_spec

DATA = Path(__file__).resolve().parents[1] / "data" / "digits.csv"
needs_data = pytest.mark.skipif(not DATA.exists(), reason="data/digits.csv not fetched")


def read_json(path):
    return json.loads(Path(path).read_text())


def strip_wall_clock(obj):
    if isinstance(obj, dict):
        return {k: strip_wall_clock(v) for k, v in obj.items() if k != "wall_clock_seconds"}
    if isinstance(obj, list):
        return [strip_wall_clock(v) for v in obj]
    return obj


class TestChecks:
    def test_grad_check_passes(self, tmp_path, capsys):
        out = tmp_path / "g.json"
        assert main(["grad-check", "--json", str(out)]) == 0
        report = read_json(out)
        assert report["passed"]
        assert len(report["checks"]) == 30
        assert "30/30 checks passed" in capsys.readouterr().out

    def test_grad_check_impossible_tolerance_fails(self):
        assert main(["grad-check", "--tolerance", "1e-12"]) == 1

    def test_grad_check_extra_config(self, tmp_path):
        out = tmp_path / "g.json"
        assert main(["grad-check", "--config", "10,15,5", "--json", str(out)]) == 0
        assert [10, 15, 5] in [c["config"] for c in read_json(out)["checks"]]

    def test_bad_config_is_usage_error(self):
        with pytest.raises(SystemExit) as info:
            main(["grad-check", "--config", "8,8,3"])
        assert info.value.code == 2

    def test_verify_theorem1(self, tmp_path):
        out = tmp_path / "t1.json"
        assert main(["verify-theorem1", "--trials", "2", "--json", str(out)]) == 0
        assert read_json(out)["passed"]

    def test_verify_theorem2(self, tmp_path):
        out = tmp_path / "t2.json"
        assert main(["verify-theorem2", "--trials", "10", "--json", str(out)]) == 0
        report = read_json(out)
        assert report["population_kappa"] == 1.0 and report["whitened"]

    def test_verify_theorem2_tight_constant_fails(self):
        assert main(["verify-theorem2", "--trials", "10", "--constant", "1e-6"]) == 1

    def test_unknown_subcommand(self):
        with pytest.raises(SystemExit) as info:
            main(["frobnicate"])
        assert info.value.code == 2


class TestSpectrum:
    def test_identity_dense_model_is_all_ones(self, tmp_path, capsys):
        spec = NetworkSpec((LayerSpec("dense", 64, 64), LayerSpec("relu", 64, 64),
                            LayerSpec("dense", 64, 10)))
        net = Network.init(spec, np.random.default_rng(0))
        net.set_arrays([np.eye(64), np.zeros(64), np.eye(10, 64), np.zeros(10)])
        path = tmp_path / "m.json"
        net.save(path)
        out = tmp_path / "s.csv"
        assert main(["spectrum", str(path), "--synthetic", "gaussian", "--out", str(out)]) == 0
        rows = list(csv.DictReader(out.open()))
        assert {r["method"] for r in rows} == {"dense_svd"}
        np.testing.assert_allclose([float(r["eigenvalue"]) for r in rows], 1.0, atol=1e-12)

    def test_cd_model_on_flat_spectrum_input(self, tmp_path, capsys):
        net = Network.init(cd_mlp_spec(4), np.random.default_rng(0))
        path = tmp_path / "m.json"
        net.save(path)
        js = tmp_path / "s.json"
        assert main(["spectrum", str(path), "--synthetic", "flat_spectrum", "--n", "16",
                     "--json", str(js)]) == 0
        first = read_json(js)["layers"][0]
        assert first["method"] == "cd_fft"
        np.testing.assert_allclose(first["eigenvalues"], 1.0, atol=1e-10)
        assert first["kappa"] == pytest.approx(1.0, abs=1e-9)

    def test_unreadable_model_is_io_error(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert main(["spectrum", str(bad), "--synthetic", "gaussian"]) == 3
        assert main(["spectrum", str(tmp_path / "missing.json"), "--synthetic", "gaussian"]) == 3

    def test_missing_dataset_is_io_error(self, tmp_path):
        path = tmp_path / "m.json"
        Network.init(cd_mlp_spec(4), np.random.default_rng(0)).save(path)
        assert main(["spectrum", str(path), "--data", str(tmp_path / "none.csv")]) == 3


class TestTraining:
    def test_malformed_dataset_is_io_error(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("1,2,3\n")
        assert main(["train", "--data", str(bad), "--epochs", "1", "--out", str(tmp_path)]) == 3

    def test_invalid_hyperparameter_is_usage_error(self, tmp_path):
        assert main(["train", "--lr", "-1", "--data", str(DATA), "--out", str(tmp_path)]) == 2

    def test_unknown_model_in_list(self, tmp_path):
        with pytest.raises(SystemExit) as info:
            main(["reproduce", "--models", "dense,cd_b3", "--out", str(tmp_path)])
        assert info.value.code == 2

    @needs_data
    def test_train_writes_artifacts(self, tmp_path):
        assert main(["train", "--model", "cd_b8", "--epochs", "2", "--data", str(DATA),
                     "--out", str(tmp_path)]) == 0
        run = read_json(tmp_path / "run_cd_b8_0.json")
        assert run["parameter_count"] == 1296 and len(run["train_loss"]) == 2
        assert (tmp_path / "curves_cd_b8_0.csv").exists()
        assert Network.load(tmp_path / "model_cd_b8_0.json").num_params == 1296

    @needs_data
    def test_reproduce_is_idempotent(self, tmp_path):
        args = ["reproduce", "--models", "cd_b8,dense", "--seeds", "0", "--epochs", "2",
                "--data", str(DATA)]
        assert main(args + ["--out", str(tmp_path / "a")]) == 0
        assert main(args + ["--out", str(tmp_path / "b")]) == 0
        a, b = read_json(tmp_path / "a/results.json"), read_json(tmp_path / "b/results.json")
        assert strip_wall_clock(a) == strip_wall_clock(b)
        for name in ["table1.txt", "curves_cd_b8_0.csv", "spectrum_dense.csv",
                     "models/model_dense_0.json"]:
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        assert set(a) == {"config", "summary", "runs"}
