import json
import subprocess
import sys

import pytest

from gmol.cli import main
from gmol.config import ConfigError, load_config
from gmol.tables import read_table, reference_table


def _run(tmp_path, *args, name="out"):
    out = tmp_path / name
    code = main(["run", *args, "--out-dir", str(out)])
    return code, out


def _summary(out):
    return json.loads((out / "summary.json").read_text())


class TestRun:
    def test_plain_artifacts(self, tmp_path):
        code, out = _run(tmp_path, "--mode", "plain", "--epsilon", "1")
        assert code == 0
        names = {p.name for p in out.iterdir()}
        assert {"coefficients.csv", "coefficients.json", "evaluation.csv", "residual.csv",
                "summary.json"} <= names
        assert _summary(out)["lines"] == 10

    def test_deterministic(self, tmp_path):
        _, a = _run(tmp_path, "--mode", "plain", name="a")
        _, b = _run(tmp_path, "--mode", "plain", name="b")
        for f in ("coefficients.csv", "evaluation.csv"):
            assert (a / f).read_bytes() == (b / f).read_bytes()

    def test_reference_gate(self, tmp_path, capsys):
        code, out = _run(tmp_path, "--mode", "plain", "--paper-compat", "--reference", "plain")
        assert code == 0 and _summary(out)["gates"] == {"reference": True}
        assert "gate reference: pass" in capsys.readouterr().out

    def test_gate_failure(self, tmp_path):
        code, out = _run(tmp_path, "--mode", "plain", "--max-residual", "1e-300")
        assert code == 1 and _summary(out)["passed"] is False

    def test_zero_case(self, tmp_path):
        cfg = tmp_path / "zero.json"
        cfg.write_text(json.dumps({"mode": "plain", "problem": {"g": [0.0], "source": 0.0},
                                   "gates": {"max_residual": 1e-12}}))
        code, out = _run(tmp_path, "--config", str(cfg))
        assert code == 0
        rows = (out / "evaluation.csv").read_text().splitlines()[1:]
        assert rows and all(float(r.split(",")[3]) == 0.0 for r in rows)

    def test_oracle_laplace(self, tmp_path):
        cfg = tmp_path / "lap.json"
        cfg.write_text(json.dumps({
            "mode": "oracle",
            "problem": {"g": [0.0], "source": 0.0, "outer": 1.0},
            "oracle": {"radial_intervals": 100, "theta_points": 16, "stencil": "continuum"},
        }))
        code, out = _run(tmp_path, "--config", str(cfg))
        assert code == 0
        assert _summary(out)["mid_circle_mean"] == pytest.approx(0.5849625, abs=1e-4)

    def test_json_round_trip(self, tmp_path):
        _, out = _run(tmp_path, "--mode", "plain")
        cfg = tmp_path / "again.json"
        cfg.write_text(json.dumps(_summary(out)["config"]))
        assert load_config(cfg) == load_config(None, {"mode": "plain"})

    def test_general_shape(self, tmp_path):
        cfg = tmp_path / "shape.json"
        cfg.write_text(json.dumps({"problem": {"shape": {"mode": "general",
                                                         "r": {"mean": 1.0}}}}))
        code, out = _run(tmp_path, "--config", str(cfg), "--theta-points", "8")
        assert code == 0 and "residual" in _summary(out)

    def test_divergence_exit(self, tmp_path):
        cfg = tmp_path / "cap.json"
        cfg.write_text(json.dumps({"mode": "proximal", "problem": {"epsilon": 0.01},
                                   "discretization": {"lines": 6},
                                   "proximal": {"outer_iterations": 2}}))
        code, out = _run(tmp_path, "--config", str(cfg))
        assert code == 3 and "error" in _summary(out)


class TestConfigErrors:
    @pytest.mark.parametrize("body", [
        "{not json",
        json.dumps({"mode": "nope"}),
        json.dumps({"problem": {"g": [0, 0, 0, 0, 1]}}),
        json.dumps({"problem": {"epsilon": -1}}),
        json.dumps({"unknown": 1}),
        json.dumps({"deterministic": False}),
        json.dumps({"mode": "proximal", "problem": {"shape": {"mode": "general",
                                                              "r": {"mean": 1.0}}}}),
        json.dumps({"gates": {"max_oracle_error": 1e-3}}),
    ])
    def test_exit_2(self, tmp_path, body):
        cfg = tmp_path / "bad.json"
        cfg.write_text(body)
        assert main(["run", "--config", str(cfg), "--out-dir", str(tmp_path / "o")]) == 2

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.json")

    def test_trailing_zero_g(self):
        assert load_config(None, {"problem.g": [0.0, 1.0, 0.0]}).problem.g == [0.0, 1.0]


class TestDiffAndReference:
    def test_reference_to_file(self, tmp_path):
        p = tmp_path / "ref.csv"
        assert main(["reference", "hyper", "-o", str(p)]) == 0
        assert read_table(p) == reference_table("hyper")

    def test_reference_stdout(self, capsys):
        assert main(["reference", "plain"]) == 0
        assert capsys.readouterr().out.startswith("line_id,monomial_signature,coefficient")

    def test_diff_pass_fail(self, tmp_path, capsys):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        main(["reference", "plain", "-o", str(a)])
        text = a.read_text().splitlines()
        n, sig, c = text[1].split(",")
        text[1] = f"{n},{sig},{float(c) * 1.01!r}"
        b.write_text("\n".join(text) + "\n")
        assert main(["diff", str(a), str(a)]) == 0
        capsys.readouterr()
        assert main(["diff", str(a), str(b), "--json"]) == 1
        assert len(json.loads(capsys.readouterr().out)["failures"]) == 1

    def test_diff_bad_file(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("x,y\n")
        assert main(["diff", str(bad), str(bad)]) == 2


def test_console_module(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "gmol.cli", "reference", "proximal"],
                          capture_output=True, text=True, check=True)
    assert proc.stdout.count("\n") > 60
