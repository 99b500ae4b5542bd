import json
import subprocess
import sys

import pytest

from holder_bounds.cli import main


def run_cli(*args, out):
    return main([*args, "--out", str(out), "--no-timestamp", "--workers", "1"])


def test_modulus_report_is_deterministic(tmp_path, capsys):
    args = ("modulus", "--instance", "example-3.6", "--q", "0.5", "--shells", "12")
    assert run_cli(*args, out=tmp_path / "a") == 0
    assert run_cli(*args, out=tmp_path / "b") == 0
    files_a = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert files_a == sorted(p.name for p in (tmp_path / "b").iterdir())
    for name in files_a:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert "ErUnder" in capsys.readouterr().out


def test_timestamp_line_only_without_flag(tmp_path):
    main(["modulus", "--instance", "example-abs", "--q", "1", "--shells", "6", "--out", str(tmp_path)])
    text = next(p for p in tmp_path.iterdir() if p.suffix == ".txt").read_text()
    assert text.startswith("# generated ")


def test_output_directory_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("HOLDER_BOUNDS_OUT", str(tmp_path / "env"))
    assert main(["modulus", "--instance", "example-abs", "--q", "1", "--shells", "6", "--no-timestamp"]) == 0
    assert any((tmp_path / "env").iterdir())


def test_verify_exit_codes(tmp_path, capsys):
    # hypothesis never fires on |x| with beta < tau, while the promised bound fails
    rc = run_cli("verify", "--instance", "example-abs", "--variant", "p316", "--q", "1",
                 "--tau", "2", "--beta", "0.5", "--delta", "1", out=tmp_path)
    assert rc == 0 and "VACUOUS" in capsys.readouterr().out
    rc = run_cli("verify", "--instance", "example-abs", "--variant", "t31", "--q", "1",
                 "--tau", "1.5", "--delta", "1", out=tmp_path)
    assert rc == 4


def test_parse_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"format": "holder-bounds-instance/1", "name": "x", "kind": "function",
                               "center": [0.0], "function": {"form": "max", "pieces": [{"type": "nope"}]}}))
    assert run_cli("modulus", "--instance", str(bad), out=tmp_path) == 2
    assert "$.function.pieces[0].type" in capsys.readouterr().err


def test_precondition_exit_code(tmp_path):
    # the subset bound is only defined for q in (0, 1]
    assert run_cli("sip", "--instance", "sip-remark", "--upper-bound", "--q", "2", out=tmp_path) == 3


def test_sip_analyze_and_clm(tmp_path, capsys):
    assert run_cli("sip", "--instance", "sip-remark", "--analyze", out=tmp_path) == 0
    out = capsys.readouterr().out
    assert "Slater" in out and "ENC" in out
    assert run_cli("sip", "--instance", "sip-remark", "--clm", "--q", "0.6667", "--shells", "12",
                   out=tmp_path) == 0
    assert "CALM" in capsys.readouterr().out


def test_reproduce_subset_and_corrupt_instance_dir(tmp_path, capsys):
    assert run_cli("reproduce", "--only", "alpha-argmax", "tau-alpha", out=tmp_path) == 0
    assert "2/2 passed" in capsys.readouterr().out
    (tmp_path / "inst").mkdir()
    (tmp_path / "inst" / "example-3.20.json").write_text("{ not json")
    rc = run_cli("reproduce", "--only", "example-3.20", "--instance-dir", str(tmp_path / "inst"), out=tmp_path)
    assert rc == 2


def test_console_script_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "holder_bounds.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "reproduce" in res.stdout
