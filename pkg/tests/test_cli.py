import csv
import json
import subprocess
import sys

import pytest

from boxclim.cli import ReportTable, build_parser, main, resolve_config, write_report


@pytest.fixture(autouse=True)
def isolated(monkeypatch, tmp_path):
    monkeypatch.delenv("BOXCLIM_OUTPUT_DIR", raising=False)
    monkeypatch.setenv("BOXCLIM_DATA_DIR", str(tmp_path / "no-extra-data"))


def _resolve(argv):
    return resolve_config(build_parser().parse_args(argv))


def test_validate_succeeds(tmp_path, capsys):
    assert main(["validate", "--output", str(tmp_path), "--emulator", "3SR"]) == 0
    assert (tmp_path / "validate").exists()


def test_unknown_command_is_an_error(capsys):
    assert main(["frobnicate"]) != 0


def test_config_error_exit_code_and_record(tmp_path, capsys):
    assert main(["pulse", "--alpha", "3", "--output", str(tmp_path)]) == 2
    rec = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert rec["error"] == "ConfigError" and rec["field"] == "alpha" and rec["exit_code"] == 2


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("scenario:\n  nonsense: 1\n")
    assert main(["rcp", "--config", str(cfg), "--output", str(tmp_path)]) == 2


def test_missing_pattern_data_exit_code(tmp_path, capsys):
    assert main(["pattern", "--output", str(tmp_path)]) == 3
    assert json.loads(capsys.readouterr().err.strip())["error"] == "DataError"


def test_flags_override_config_file(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("emulator: 3SR\nalpha: 0.5\nscenario:\n  kappa: 1.0\n")
    rc = _resolve(["rcp", "--config", str(cfg), "--alpha", "-0.25"])
    assert rc.emulator == "3SR" and rc.alpha == -0.25 and rc.scenario["kappa"] == 1.0
    rc = _resolve(["rcp", "--config", str(cfg), "--set", "scenario.kappa=1.4"])
    assert rc.scenario["kappa"] == 1.4


def test_output_root_precedence(tmp_path, monkeypatch):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(f"output: {tmp_path / 'from-file'}\n")
    assert _resolve(["rcp", "--config", str(cfg)]).output == tmp_path / "from-file"
    monkeypatch.setenv("BOXCLIM_OUTPUT_DIR", str(tmp_path / "from-env"))
    assert _resolve(["rcp", "--config", str(cfg)]).output == tmp_path / "from-env"
    assert _resolve(["rcp", "--config", str(cfg), "--output", str(tmp_path / "flag")]).output == tmp_path / "flag"


def test_pulse_outputs(tmp_path, capsys):
    assert main(["pulse", "--emulator", "4PR", "--horizon", "200", "--output", str(tmp_path)]) == 0
    rows = list(csv.reader(open(tmp_path / "pulse" / "fraction.csv")))
    assert rows[0] == ["year", "fraction"]
    assert float(rows[1][1]) == 1.0 and len(rows) == 202
    assert (tmp_path / "pulse" / "masses.csv").exists()


def test_damages_from_flags(tmp_path, capsys):
    assert main(["damages", "--baseline", "9.67", "27.03", "--future", "11.13", "28.8",
                 "--output", str(tmp_path)]) == 0
    rows = list(csv.DictReader(open(tmp_path / "damages" / "damages.csv")))
    assert float(rows[0]["damage"]) == pytest.approx(0.01551, abs=5e-5)
    assert float(rows[1]["damage"]) < 0


def _tables():
    return [ReportTable("demo", ["3SR", "4PR", "4PR-X"], [("2100 m_A", [1363.19, 1361.66, 1439.97])], "GtC")]


def test_report_diff_column_and_determinism(tmp_path):
    a = write_report(_tables(), tmp_path / "a.md")
    b = write_report(_tables(), tmp_path / "b.md")
    assert (tmp_path / "a.md").read_bytes() == (tmp_path / "b.md").read_bytes()
    assert a == b
    assert "diff (1) & (3)" in a
    assert "76.78 GtC (5.63%)" in a


def test_empty_report(tmp_path):
    assert write_report([], tmp_path / "e.md") == ""
    assert (tmp_path / "e.md").read_text() == ""


def test_console_script_help():
    out = subprocess.run([sys.executable, "-m", "boxclim.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for cmd in ("econ-bau", "scc", "pattern", "validate"):
        assert cmd in out.stdout
