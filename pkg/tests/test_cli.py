import json
import subprocess
import sys

import pytest

from lcsc import cli
from lcsc.cli import EXIT_NUMERIC, EXIT_OK, EXIT_USAGE


def run(argv, out):
    return cli.main(argv + ["--out", str(out)])


def test_cycle_outputs(tmp_path):
    assert run(["cycle", "--model", "planar"], tmp_path) == EXIT_OK
    summary = json.loads((tmp_path / "cycle.json").read_text())
    assert summary["period"] == pytest.approx(6.766182958186235, abs=1e-8)
    lines = (tmp_path / "cycle.csv").read_text().splitlines()
    assert lines[0].startswith("# limit cycle")
    assert (tmp_path / "manifest.json").exists()
    assert not list(tmp_path.glob("*.svg"))


def test_prc_without_perturbation_has_no_T1(tmp_path):
    assert run(["prc", "--model", "stickslip"], tmp_path) == EXIT_OK
    summary = json.loads((tmp_path / "prc.json").read_text())
    assert "T1" not in summary
    assert summary["normalization_defect"] < 1e-6


def test_prc_with_perturbation(tmp_path):
    assert run(["prc", "--model", "planar", "--perturb", "alpha"], tmp_path) == EXIT_OK
    summary = json.loads((tmp_path / "prc.json").read_text())
    assert summary["T1"]["T1"] == pytest.approx(3.3484, abs=1e-3)


def test_manifest_rerun_is_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(["ltrc", "--model", "stickslip", "--perturb", "c", "--format", "both"], a) == EXIT_OK
    assert run(["ltrc", "--manifest", str(a / "manifest.json")], b) == EXIT_OK
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    for n in names:
        assert (a / n).read_bytes() == (b / n).read_bytes()


def test_manifest_command_mismatch(tmp_path):
    run(["cycle", "--model", "planar"], tmp_path / "a")
    assert run(["prc", "--manifest", str(tmp_path / "a" / "manifest.json")], tmp_path / "b") == EXIT_USAGE


@pytest.mark.parametrize(
    "argv",
    [
        ["cycle", "--model", "planar", "--param", "zeta=1"],
        ["prc", "--model", "stickslip", "--perturb", "u_belt"],
        ["src", "--model", "planar"],
        ["ltrc", "--model", "planar", "--perturb", "alpha", "--region-mask", "III"],
        ["isochrons", "--model", "stickslip"],
        ["cycle", "--model", "planar", "--guess", "1,2,3"],
    ],
)
def test_usage_errors(argv, tmp_path):
    assert run(argv, tmp_path) == EXIT_USAGE


def test_parser_errors_exit_64(tmp_path):
    with pytest.raises(SystemExit) as exc:
        cli.main(["spin"])
    assert exc.value.code == EXIT_USAGE


def test_numerical_failure_writes_diagnostic(tmp_path, capsys):
    assert run(["cycle", "--model", "planar", "--guess", "0,0"], tmp_path) == EXIT_NUMERIC
    diag = json.loads((tmp_path / "diagnostic.json").read_text())
    assert diag["command"] == "cycle"
    assert diag["error"] == "AnchorError"
    assert capsys.readouterr().err


def test_user_system(tmp_path):
    from test_config import BOX

    spec = tmp_path / "box.json"
    spec.write_text(json.dumps(BOX))
    argv = ["cycle", "--system", str(spec), "--anchor", "liftoff:0", "--guess", "0.5,0"]
    assert run(argv, tmp_path / "o") == EXIT_OK
    summary = json.loads((tmp_path / "o" / "cycle.json").read_text())
    assert summary["period"] == pytest.approx(6.766182958186235, abs=1e-8)


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "lcsc.cli", "cycle", "--model", "stickslip",
                        "--out", str(tmp_path)], capture_output=True, text=True)
    assert r.returncode == 0
    assert (tmp_path / "cycle.csv").exists()
