"""End-to-end CLI runs: outputs, determinism (modulo manifest), exit codes."""

import json

import numpy as np
import pytest

from hennkit.cli import main, resolve_config
from hennkit.errors import ConfigError


def run(args):
    return main([str(a) for a in args])


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("gen")
    code = run(
        [
            "gen-data",
            "--out", out,
            "--set", "n_points=120",
            "--set", "radius=0.6",
            "--set", "t_max=6",
            "--set", "n_train=60",
            "--set", "n_test=30",
            "--set", "seed=1",
        ]
    )
    assert code == 0
    return out


class TestConfigHandling:
    def test_gen_data_defaults_match_benchmark(self):
        cfg = resolve_config("gen-data", None, [])
        assert cfg["n_points"] == 500
        assert cfg["radius"] == 0.4
        assert cfg["t_max"] == 30
        assert cfg["noise_sd"] == 0.1
        assert (cfg["n_train"], cfg["n_test"]) == (500, 300)

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown config key"):
            resolve_config("gen-data", None, ["bogus=1"])

    def test_unknown_key_exit_code(self, tmp_path):
        assert run(["gen-data", "--out", tmp_path, "--set", "bogus=1"]) == 2

    def test_config_file_plus_override(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"n_points": 90, "radius": 0.6}))
        resolved = resolve_config("gen-data", cfg, ["n_points=95"])
        assert resolved["n_points"] == 95
        assert resolved["radius"] == 0.6

    def test_missing_config_file(self):
        with pytest.raises(ConfigError, match="not found"):
            resolve_config("gen-data", "/nonexistent.json", [])


class TestGenData:
    def test_outputs_exist(self, data_dir):
        for name in ("dataset.txt", "hypergraph.hg", "gen-data.json", "manifest.json"):
            assert (data_dir / name).exists()

    def test_counts_and_manifest(self, data_dir):
        info = json.loads((data_dir / "gen-data.json").read_text())
        assert info["train"] == 60 and info["test"] == 30
        assert len(info["sources"]) == 10
        manifest = json.loads((data_dir / "manifest.json").read_text())
        assert manifest["command"] == "gen-data"
        assert manifest["config"]["n_points"] == 120
        assert "hennkit" in manifest["versions"]

    def test_idempotent_outside_manifest(self, data_dir, tmp_path):
        code = run(
            [
                "gen-data", "--out", tmp_path,
                "--set", "n_points=120", "--set", "radius=0.6", "--set", "t_max=6",
                "--set", "n_train=60", "--set", "n_test=30", "--set", "seed=1",
            ]
        )
        assert code == 0
        assert (tmp_path / "dataset.txt").read_bytes() == (data_dir / "dataset.txt").read_bytes()
        assert (tmp_path / "hypergraph.hg").read_bytes() == (data_dir / "hypergraph.hg").read_bytes()


class TestSimilarity:
    def test_identical_matrices_epsilon_zero(self, tmp_path):
        m = np.diag([1.0, 2.0, 3.0])
        a = tmp_path / "a.csv"
        np.savetxt(a, m, delimiter=",")
        code = run(["similarity", "--out", tmp_path, "--set", f"a={a}", "--set", f"b={a}"])
        assert code == 0
        report = json.loads((tmp_path / "similarity.json").read_text())
        assert report["epsilon"] <= 1e-12
        assert report["certified"] is True
        assert not report["kernel_mismatch"]

    def test_hypergraph_inputs(self, data_dir, tmp_path):
        hg = data_dir / "hypergraph.hg"
        code = run(
            ["similarity", "--out", tmp_path, "--set", f"hg_a={hg}", "--set", f"hg_b={hg}"]
        )
        assert code == 0
        report = json.loads((tmp_path / "similarity.json").read_text())
        assert report["epsilon"] <= 1e-10

    def test_kernel_mismatch_exit_code_4(self, tmp_path):
        a = tmp_path / "a.csv"
        b = tmp_path / "b.csv"
        np.savetxt(a, np.diag([1.0, 1.0]), delimiter=",")
        np.savetxt(b, np.diag([1.0, 0.0]), delimiter=",")
        code = run(["similarity", "--out", tmp_path, "--set", f"a={a}", "--set", f"b={b}"])
        assert code == 4
        report = json.loads((tmp_path / "similarity.json").read_text())
        assert report["epsilon"] is None
        assert report["kernel_mismatch"] is True

    def test_missing_inputs_config_error(self, tmp_path):
        assert run(["similarity", "--out", tmp_path]) == 2

    def test_numerical_failure_exit_code_3(self, tmp_path):
        # a wildly diverging diffusion overflows to non-finite signals
        code = run(
            [
                "gen-data", "--out", tmp_path,
                "--set", "n_points=120", "--set", "radius=0.6",
                "--set", "step_size=1e12", "--set", "n_train=10", "--set", "n_test=5",
            ]
        )
        assert code == 3


class TestBounds:
    def test_random_operator_certificates(self, tmp_path):
        code = run(["bounds", "--out", tmp_path, "--set", "size=10", "--set", "trials=5"])
        assert code == 0
        report = json.loads((tmp_path / "bounds.json").read_text())
        names = {c["certificate"] for c in report["certificates"]}
        assert names == {
            "perturbation-relative",
            "perturbation-additive",
            "perturbation-combined",
            "filter-transfer",
            "network-transfer",
            "multi-representation-bound",
        }
        assert all(c["holds"] for c in report["certificates"])

    def test_zero_perturbation_zero_deviation(self, tmp_path):
        code = run(
            [
                "bounds", "--out", tmp_path,
                "--set", "size=8", "--set", "delta_r=0", "--set", "delta_a=0",
                "--set", "trials=3",
            ]
        )
        assert code == 0
        report = json.loads((tmp_path / "bounds.json").read_text())
        for cert in report["certificates"]:
            assert cert["holds"]
            assert cert["measured_epsilon"] <= 1e-10
            if "measured_deviation" in cert:
                assert cert["measured_deviation"] <= 1e-10

    def test_hypergraph_operator(self, data_dir, tmp_path):
        code = run(
            [
                "bounds", "--out", tmp_path,
                "--set", f"hg={data_dir / 'hypergraph.hg'}",
                "--set", "kind=hgnn", "--set", "trials=3",
                "--set", "delta_r=0.01", "--set", "delta_a=0.005",
            ]
        )
        assert code == 0


class TestRandStudy:
    def test_study_outputs(self, tmp_path):
        code = run(
            [
                "rand-study", "--out", tmp_path,
                "--set", "sizes=[24,48]", "--set", "trials=3", "--set", "plot=true",
            ]
        )
        assert code == 0
        assert (tmp_path / "study.csv").exists()
        assert (tmp_path / "study.svg").exists()
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["sizes"] == [24, 48]

    def test_deterministic_csv(self, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        for out in (a, b):
            assert run(
                ["rand-study", "--out", out, "--set", "sizes=[24]", "--set", "trials=2"]
            ) == 0
        assert (a / "study.csv").read_bytes() == (b / "study.csv").read_bytes()


class TestTrainEval:
    def test_train_then_eval(self, data_dir, tmp_path):
        code = run(
            [
                "train", "--out", tmp_path,
                "--set", f"dataset={data_dir / 'dataset.txt'}",
                "--set", f"hg={data_dir / 'hypergraph.hg'}",
                "--set", 'architectures=["clique","line"]',
                "--set", "epochs=2", "--set", "shuffles=1", "--set", "features=2",
                "--set", "taps=1",
            ]
        )
        assert code == 0
        report = json.loads((tmp_path / "report.json").read_text())
        assert set(report) == {"clique", "line"}
        assert (tmp_path / "log_clique_shuffle0.csv").exists()
        log = (tmp_path / "log_clique_shuffle0.csv").read_text().splitlines()
        assert log[0] == "step,loss,ce,penalty,lr,max_C"
        checkpoint = tmp_path / "model_clique_shuffle0.json"
        assert checkpoint.exists()

        out2 = tmp_path / "eval"
        code = run(
            [
                "eval", "--out", out2,
                "--set", f"checkpoint={checkpoint}",
                "--set", f"dataset={data_dir / 'dataset.txt'}",
                "--set", f"hg={data_dir / 'hypergraph.hg'}",
            ]
        )
        assert code == 0
        result = json.loads((out2 / "eval.json").read_text())
        assert result["architecture"] == "clique"
        assert 0.0 <= result["test_accuracy"] <= 1.0
        assert result["n_test"] == 30

    def test_train_missing_paths(self, tmp_path):
        assert run(["train", "--out", tmp_path]) == 2

    def test_cross_validation_path(self, data_dir, tmp_path):
        code = run(
            [
                "train", "--out", tmp_path,
                "--set", f"dataset={data_dir / 'dataset.txt'}",
                "--set", f"hg={data_dir / 'hypergraph.hg'}",
                "--set", 'architectures=["clique"]',
                "--set", "cross_validate=true",
                "--set", 'model_space=[{"epochs":1},{"epochs":2}]',
                "--set", "epochs=1", "--set", "features=2", "--set", "taps=1",
                "--set", "folds=3",
            ]
        )
        assert code == 0
        report = json.loads((tmp_path / "report.json").read_text())
        assert report["clique"]["selected"] in ({"epochs": 1}, {"epochs": 2})
