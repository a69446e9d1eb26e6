import csv
import json
import subprocess
import sys

import pytest

from zerobias.cli import (
    EXIT_CHECK_FAILED,
    EXIT_CONFIG,
    EXIT_NUMERIC,
    EXIT_OK,
    ConfigError,
    ExperimentConfig,
    build_family,
    build_function,
    main,
)


def _write(path, data):
    path.write_text(json.dumps(data), encoding="utf-8")
    return path


def _rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


class TestExpand:
    def test_minimal_run(self, tmp_path, capsys):
        cfg = _write(tmp_path / "c.json", {"n_grid": [16], "order": 0, "function": {"name": "call", "k": 0.1}})
        out = tmp_path / "out"
        assert main(["expand", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
        assert sorted(p.name for p in out.iterdir()) == ["expand.csv", "expand.json"]
        assert "C_0" in capsys.readouterr().out
        rows = _rows(out / "expand.csv")
        assert len(rows) == 1 and float(rows[0]["budget"]) >= float(rows[0]["error_0"])
        report = json.loads((out / "expand.json").read_text())
        assert report["schema_version"] == 1 and report["config"]["order"] == 0

    def test_repeat_is_byte_identical(self, tmp_path):
        cfg = _write(tmp_path / "c.json", {"n_grid": [16, 32], "order": 1, "seed": 5})
        out = tmp_path / "out"
        args = ["expand", "--config", str(cfg), "--out", str(out), "--quiet"]
        assert main(args) == EXIT_OK
        first = [(out / f).read_bytes() for f in ("expand.csv", "expand.json")]
        assert main(args) == EXIT_OK
        assert [(out / f).read_bytes() for f in ("expand.csv", "expand.json")] == first

    def test_flags_override_config(self, tmp_path):
        cfg = _write(tmp_path / "c.json", {"n_grid": [16, 32], "order": 1})
        out = tmp_path / "out"
        assert main(["expand", "--config", str(cfg), "--out", str(out), "--n-grid", "16", "--order", "0",
                     "--quiet"]) == EXIT_OK
        report = json.loads((out / "expand.json").read_text())
        assert report["config"]["n_grid"] == [16] and report["config"]["order"] == 0

    def test_missing_moment_order_names_order(self, tmp_path, capsys):
        cfg = _write(tmp_path / "c.json", {"family": {"kind": "two-point", "p": 0.2, "moment_order": 2},
                                           "n_grid": [16]})
        assert main(["expand", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_NUMERIC
        assert "order 3" in capsys.readouterr().err

    def test_monte_carlo_oracle(self, tmp_path):
        cfg = _write(tmp_path / "c.json", {"n_grid": [16], "order": 0, "oracle": "monte-carlo",
                                           "mc_count": 5000, "budget": False})
        out = tmp_path / "out"
        assert main(["expand", "--config", str(cfg), "--out", str(out), "--quiet"]) == EXIT_OK
        assert float(_rows(out / "expand.csv")[0]["oracle_se"]) > 0


class TestVerify:
    def test_selected_suites_pass(self, tmp_path, capsys):
        out = tmp_path / "out"
        assert main(["verify", "--check", "moments", "--check", "zero-bias", "--out", str(out)]) == EXIT_OK
        rows = _rows(out / "verify.csv")
        assert {r["suite"] for r in rows} == {"moments", "zero-bias"}
        assert all(r["passed"] == "1" for r in rows)
        assert "checks passed" in capsys.readouterr().out

    def test_injected_fault_fails_stein_checks(self, tmp_path):
        out = tmp_path / "out"
        code = main(["verify", "--check", "stein", "--inject-fault", "--out", str(out), "--quiet"])
        assert code == EXIT_CHECK_FAILED
        rows = _rows(out / "verify.csv")
        assert any(r["passed"] == "0" and r["check"].startswith("residual") for r in rows)
        assert json.loads((out / "verify.json").read_text())["config"]["inject_fault"] == 1e-3


class TestConcentration:
    def test_small_grid(self, tmp_path):
        cfg = _write(tmp_path / "c.json", {"n_grid": [16], "concentration_grid": 6,
                                           "concentration_alphas": [1.0]})
        out = tmp_path / "out"
        assert main(["concentration", "--config", str(cfg), "--out", str(out), "--quiet"]) == EXIT_OK
        summary = _rows(out / "concentration_summary.csv")
        assert [r["kind"] for r in summary] == ["W", "W^(i)"]
        assert all(r["violations"] == "0" for r in summary)
        assert len(_rows(out / "concentration.csv")) == 2 * 21


class TestOrderFit:
    def test_symmetric_correction_is_degenerate(self, tmp_path):
        cfg = _write(tmp_path / "c.json", {"family": {"kind": "two-point", "p": 0.5}, "n_grid": [16, 32, 64, 128]})
        out = tmp_path / "out"
        assert main(["order-fit", "--config", str(cfg), "--out", str(out), "--quiet"]) == EXIT_OK
        summary = {r["quantity"]: r for r in _rows(out / "order_fit_summary.csv")}
        assert summary["correction"]["degenerate"] == "1"
        assert summary["error"]["degenerate"] == "0"

    def test_call_first_order_slope(self, tmp_path):
        out = tmp_path / "out"
        assert main(["order-fit", "--order", "1", "--out", str(out), "--quiet"]) == EXIT_OK
        summary = {r["quantity"]: r for r in _rows(out / "order_fit_summary.csv")}
        assert -1.2 <= float(summary["error"]["slope"]) <= -0.8


class TestConfig:
    def test_unknown_field(self, tmp_path, capsys):
        cfg = _write(tmp_path / "c.json", {"order": 1, "bogus": 2})
        assert main(["expand", "--config", str(cfg)]) == EXIT_CONFIG
        assert "'bogus'" in capsys.readouterr().err

    def test_json_error_has_position(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text('{"order": 1,\n "seed": }')
        assert main(["expand", "--config", str(cfg)]) == EXIT_CONFIG
        assert f"{cfg}:2:10" in capsys.readouterr().err

    @pytest.mark.parametrize("data,field", [
        ({"order": -1}, "order"),
        ({"alpha": 1.5}, "alpha"),
        ({"n_grid": [32, 16]}, "n_grid"),
        ({"mc_count": 10}, "mc_count"),
        ({"family": {"kind": "gamma"}}, "family"),
        ({"checks": ["nope"]}, "checks"),
    ])
    def test_validation_names_field(self, data, field):
        with pytest.raises(ConfigError, match=f"'{field}'"):
            ExperimentConfig.from_dict(data)

    def test_family_and_function_specs(self):
        d = build_family({"kind": "finite-discrete", "values": [-1, 0, 2], "weights": [0.4, 0.4, 0.2]})
        assert d.variance == pytest.approx(1.2)
        assert build_family({"kind": "uniform-symmetric", "half_width": 2.0}).variance == pytest.approx(4 / 3)
        assert build_function({"name": "polynomial", "coeffs": [0, 0, 1]}).order == 2
        with pytest.raises(ConfigError, match="missing key 'p'"):
            build_family({"kind": "two-point"})
        with pytest.raises(ConfigError, match="unknown keys"):
            build_function({"name": "call", "k": 0.0, "strike": 1})

    def test_round_trip(self):
        cfg = ExperimentConfig(order=2, seed=9)
        assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "zerobias", "verify", "--check", "moments", "--out",
                           str(tmp_path), "--quiet"], capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "verify.csv").exists()
