import io
from pathlib import Path

import pytest

from vdwe.cli import EXIT_CHECK, EXIT_CONFIG, EXIT_IO, EXIT_OK, build_parser, main, run_command
from vdwe.config import parse_config

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def test_parser_rejects_unknown_subcommand():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["frobnicate", "--config", "x"])


def test_zero_amplitude_simulate(tmp_path):
    assert main(["simulate", "--config", str(CONFIGS / "zero.cfg"), "--out", str(tmp_path)]) == EXIT_OK
    rows = (tmp_path / "series.csv").read_text().splitlines()
    assert len(rows) == 42
    assert "PASS" in (tmp_path / "summary.txt").read_text()


def test_diagnose_rereads_series(tmp_path):
    main(["simulate", "--config", str(CONFIGS / "zero.cfg"), "--out", str(tmp_path)])
    assert main(["diagnose", "--config", str(CONFIGS / "zero.cfg"), "--out", str(tmp_path)]) == EXIT_OK
    assert (tmp_path / "diagnose" / "summary.txt").exists()


def test_eos_check_passes(tmp_path):
    cfg = parse_config((CONFIGS / "eos.cfg").read_text())
    out = io.StringIO()
    assert run_command("eos-check", cfg, tmp_path, out) == EXIT_OK
    text = out.getvalue()
    assert "round trip max rel error" in text and "FAIL" not in text


def test_bad_config_exit_code(tmp_path, capsys):
    path = tmp_path / "bad.cfg"
    path.write_text("gass.b = 0.5\nscheme.cfl = 3\n")
    assert main(["simulate", "--config", str(path)]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "gas.b" in err and "line 2" in err


def test_missing_config_is_io_error(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "nope.cfg")]) == EXIT_IO


def test_domain_too_small_is_config_error(tmp_path):
    path = tmp_path / "small.cfg"
    path.write_text("grid.box = 20\n")
    assert main(["simulate", "--config", str(path)]) == EXIT_CONFIG


def test_cone_negative_control_fails(tmp_path):
    path = tmp_path / "cone.cfg"
    path.write_text((CONFIGS / "cone_inside.cfg").read_text() + "experiment.cone_levels = 128,256\n")
    out = io.StringIO()
    status = run_command("cone-test", parse_config(path.read_text()), tmp_path, out)
    assert status == EXIT_CHECK
    assert "FAIL  cone agreement" in out.getvalue()
    assert "h-independent: True" in out.getvalue()
