import io
import json
import subprocess
import sys
from pathlib import Path

import pytest

from eoqsubst.cli import main
from eoqsubst.solvers import SolveReport

ROOT = Path(__file__).resolve().parents[1]
CONFIG = str(ROOT / "configs" / "reference.json")
FIXTURES = Path(__file__).parent / "fixtures"
GOLDEN = Path(__file__).parent / "golden"


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = main(list(argv), out=out, err=err)
    return code, out.getvalue(), err.getvalue()


def fixture(name):
    return str(FIXTURES / name)


@pytest.mark.parametrize("argv,golden", [
    (("solve", "--config", CONFIG), "solve.json"),
    (("verify", "--config", CONFIG), "verify.json"),
    (("sweep", "--config", CONFIG, "--format", "csv"), "sweep.csv"),
    (("sweep", "--config", CONFIG), "sweep.json"),
])
def test_golden_output(argv, golden):
    code, out, _ = run(*argv)
    assert code == 0
    assert out == (GOLDEN / golden).read_text()


def test_identical_bytes_on_rerun():
    assert run("verify", "--config", CONFIG) == run("verify", "--config", CONFIG)


def test_basic_solve():
    code, out, _ = run("solve", "--config", CONFIG, "--model", "basic")
    report = json.loads(out)["report"]
    assert code == 0 and report["mode"] == "partial"
    assert report["runout_time"] == 0.25
    assert round(report["cycle_time"], 5) == 2.09165


def test_screened_without_defects_matches_basic():
    payloads = []
    for model in ("basic", "eoqiss"):
        _, out, _ = run("solve", "--config", CONFIG, "--model", model,
                        "--set", "ep1=0", "--set", "ep2=0")
        report = json.loads(out)["report"]
        payloads.append(json.dumps(
            {k: report[k] for k in ("runout_time", "cycle_time", "lot1", "lot2",
                                    "transferred_volume", "cost", "mode")},
            sort_keys=True))
    assert payloads[0] == payloads[1]


def test_report_round_trip():
    _, out, _ = run("verify", "--config", CONFIG)
    data = json.loads(out)["report"]
    assert SolveReport.from_dict(data).as_dict() == data


def test_csv_dialect():
    _, out, _ = run("sweep", "--config", CONFIG, "--format", "csv")
    lines = out.split("\n")
    assert "\r" not in out and lines[-1] == ""
    body = [line for line in lines if line and not line.startswith("#")]
    assert len(body) == 5
    assert any(line.startswith("# config_digest=") for line in lines)
    assert any(line.startswith("# version=") for line in lines)
    # 17 significant digits
    assert "0.25015931439586275" in out


def test_one_value_axis():
    sweep = '{"axes": [{"param": "ch2", "values": [5]}]}'
    code, out, _ = run("sweep", "--config", CONFIG, "--set", f"sweep={sweep}")
    assert code == 0 and len(json.loads(out)["rows"]) == 1


class TestExitCodes:
    def test_invalid_parameters(self):
        code, out, err = run("solve", "--config", fixture("invalid_holding.json"))
        assert code == 2 and out == ""
        assert "assumption 9" in err

    def test_unknown_and_missing_keys_reported_together(self):
        code, _, err = run("solve", "--config", fixture("bad_keys.json"))
        assert code == 2
        assert "unknown keys: colour" in err
        assert "missing keys: d2, ch2, x1, x2, ep1, ep2, co, ct" in err

    def test_unreadable_file(self, tmp_path):
        bad = tmp_path / "x.json"
        bad.write_text("{not json")
        assert run("solve", "--config", str(bad))[0] == 2
        assert run("solve", "--config", str(tmp_path / "missing.json"))[0] == 2

    def test_validate_command(self):
        assert run("validate", "--config", CONFIG)[0] == 0
        code, out, _ = run("validate", "--config", fixture("invalid_holding.json"))
        assert code == 2 and json.loads(out)["violations"][0]["assumption"] == "A9"

    def test_infeasible(self):
        code, _, err = run("solve", "--config", fixture("infeasible_partial.json"))
        assert code == 3 and "Theorem 1" in err

    def test_nonconvergence(self):
        code, _, _ = run("solve", "--config", CONFIG, "--regime", "partial",
                         "--set", "fp_max_iterations=1", "--set", "fp_tolerance=1e-300")
        assert code == 3

    def test_verification_failure_prints_both_policies(self):
        code, out, _ = run("verify", "--config", fixture("verbatim_none.json"))
        payload = json.loads(out)
        assert code == 4
        assert payload["residual"] > 0.15
        assert payload["solver_policy"][1] != payload["oracle_policy"][1]

    def test_sweep_cap(self):
        code, out, err = run("sweep", "--config", fixture("sweep_over_cap.json"))
        assert code == 5 and out == "" and "cap is 7" in err

    def test_sweep_without_section(self):
        assert run("sweep", "--config", fixture("invalid_holding.json"))[0] == 2

    def test_bad_override(self):
        assert run("solve", "--config", CONFIG, "--set", "ch2")[0] == 2
        assert run("solve", "--config", CONFIG, "--set", "ch2=\"high\"")[0] == 2


def test_region_override_changes_oracle_only():
    code, out, _ = run("verify", "--config", CONFIG, "--seed-region", "0", "1", "0.5", "4",
                       "--resolution", "64")
    report = json.loads(out)["report"]
    assert code == 0 and report["oracle_residual"] < 1e-4


def test_console_script():
    proc = subprocess.run([sys.executable, "-m", "eoqsubst.cli", "solve", "--config", CONFIG],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert proc.stdout == (GOLDEN / "solve.json").read_text()
