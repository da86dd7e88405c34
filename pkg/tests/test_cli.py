import json

import pytest

from app import cli


@pytest.fixture
def write_config(tmp_path, constants_cache):
    def write(**overrides):
        config = {
            "dim": 3,
            "nu": 1.0,
            "n": 3.0,
            "orders": [4.0],
            "datum": {"kind": "random_band", "k_min": 1.0, "k_max": 2.0},
            "approximant": {"kind": "zero", "samples": 5},
            "constants": {"cache_path": constants_cache},
            "T_max": 1.0,
        }
        config.update(overrides)
        path = tmp_path / "problem.json"
        path.write_text(json.dumps(config), encoding="utf-8")
        return str(path)
    return write


class TestCli:
    def test_certify(self, write_config, tmp_path, capsys):
        out = tmp_path / "out"
        assert cli.main(["certify", "--config", write_config(), "--out", str(out), "--seed", "3"]) == 0
        for name in ("report.json", "bounds.csv", "estimators.csv", "summary.md", "timings.json"):
            assert (out / name).exists()
        assert "T_c =" in capsys.readouterr().out
        report = json.loads((out / "report.json").read_text(encoding="utf-8"))
        assert report["problem"]["seed"] == 3

    def test_outputs_are_reproducible(self, write_config, tmp_path):
        path = write_config(seed=9)
        cli.main(["certify", "--config", path, "--out", str(tmp_path / "a")])
        cli.main(["certify", "--config", path, "--out", str(tmp_path / "b"), "--threads", "3"])
        for name in ("report.json", "bounds.csv", "estimators.csv", "summary.md"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_constants(self, write_config, capsys):
        assert cli.main(["constants", "--config", write_config()]) == 0
        printed = capsys.readouterr().out
        assert "p=4.0 n=3.0" in printed
        assert "p=3.0 n=3.0" in printed

    def test_invalid_config(self, write_config, tmp_path):
        assert cli.main(["certify", "--config", write_config(n=2.0), "--out", str(tmp_path)]) == 2

    def test_unreadable_config(self, tmp_path):
        assert cli.main(["certify", "--config", str(tmp_path / "missing.json")]) == 2

    def test_constants_unavailable(self, write_config, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        path = write_config(constants={"cache_path": str(empty)})
        assert cli.main(["certify", "--config", path, "--out", str(tmp_path / "out")]) == 3
        partial = json.loads((tmp_path / "out" / "report.json").read_text(encoding="utf-8"))
        assert partial["status"] == "partial"

    def test_validate_needs_reference_block(self, write_config, tmp_path):
        assert cli.main(["validate", "--config", write_config(), "--out", str(tmp_path)]) == 2

    def test_validate(self, write_config, tmp_path):
        path = write_config(
            datum={"kind": "random_band", "k_max": 2.0, "seed": 4, "norm_target": {"order": 3.0, "value": 1e-3}},
            validation={"ref_M": 3},
        )
        assert cli.main(["validate", "--config", path, "--out", str(tmp_path)]) == 0
        report = json.loads((tmp_path / "report.json").read_text(encoding="utf-8"))
        assert report["validation"]["passed"]

    def test_reference_not_finer_than_approximant(self, write_config, tmp_path):
        path = write_config(
            datum={"kind": "explicit", "modes": [{"k": [1, 0, 0], "re": [0.0, 0.3, 0.0]}]},
            approximant={"kind": "galerkin", "M": 2, "T_a": 0.1, "samples": 3},
            validation={"ref_M": 2},
        )
        assert cli.main(["validate", "--config", path, "--out", str(tmp_path / "out")]) == 2

    def test_validate_galerkin_taylor_green(self, write_config, tmp_path, capsys):
        path = write_config(
            datum={"kind": "taylor_green", "amplitude": 1.0},
            approximant={"kind": "galerkin", "M": 3, "T_a": 0.05, "samples": 3},
            validation={"ref_M": 5},
        )
        assert cli.main(["validate", "--config", path, "--out", str(tmp_path)]) == 0
        report = json.loads((tmp_path / "report.json").read_text(encoding="utf-8"))
        assert report["status"] == "complete"
        assert report["approximant"]["provenance"] == "galerkin"
        assert set(report["validation"]["adjusted_max_ratio"]) == {"3.0", "4.0"}
        assert "Validation passed" in capsys.readouterr().out

    def test_unknown_command(self, write_config):
        with pytest.raises(SystemExit):
            cli.main(["prove", "--config", write_config()])
