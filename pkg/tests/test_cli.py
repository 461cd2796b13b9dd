import json
from pathlib import Path

import pytest

from minimax_cert import report as rp
from minimax_cert.cli import main

FIX = Path(__file__).parent / "fixtures"
SADDLE = str(FIX / "p_saddle.txt")
FLIPPED = str(FIX / "p_saddle_flipped.txt")
P2 = str(FIX / "p2.txt")


def _run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_certify_exit_codes(capsys):
    code, out, _ = _run(capsys, "certify", SADDLE)
    assert code == 0 and "sufficient-certified" in out
    assert _run(capsys, "certify", SADDLE, "--x", "0.5", "--y", "0.25")[0] == 3
    assert _run(capsys, "certify", FLIPPED)[0] == 3
    assert _run(capsys, "certify", P2)[0] == 0


def test_input_errors_exit_4(capsys, tmp_path):
    code, _, err = _run(capsys, "certify", str(tmp_path / "missing.txt"))
    assert code == 4 and "cannot read" in err
    assert _run(capsys, "oracle", SADDLE, "--resolution", "2")[0] == 4
    assert _run(capsys, "certify", SADDLE, "--x", "0,0")[0] == 4
    assert _run(capsys, "certify", SADDLE, "--x", "a")[0] == 4
    assert _run(capsys, "certify", SADDLE, "--stages", "first,bogus")[0] == 4
    assert _run(capsys, "nonsense")[0] == 4
    bad = tmp_path / "bad.txt"
    bad.write_text("n = 1\nm = 1\nf = y1 +\n")
    assert _run(capsys, "certify", str(bad), "--x", "0", "--y", "0")[0] == 4


def test_oracle_exit_codes(capsys):
    assert _run(capsys, "oracle", SADDLE, "--resolution", "41")[0] == 0
    assert _run(capsys, "oracle", FLIPPED)[0] == 3
    # growth constants are positive on this fixture, so the oracle passes
    assert _run(capsys, "oracle", P2)[0] == 0


def test_json_report_schema_and_round_trip(capsys):
    code, out, _ = _run(capsys, "certify", SADDLE, "--format", "json")
    report = rp.loads(out)
    assert list(report) == list(rp.TOP_KEYS)
    assert report["schema"] == 1 and report["overall"] == "sufficient-certified"
    assert rp.exit_code(report["overall"]) == code
    assert rp.dumps(report) == out
    assert json.loads(out)["point"] == {"x": [0.0], "y": [0.0]}


def test_json_is_deterministic(capsys):
    a = _run(capsys, "certify", P2, "--format", "json")[1]
    b = _run(capsys, "certify", P2, "--format", "json")[1]
    assert a == b


def test_point_override_from_command_line(capsys):
    out = _run(capsys, "certify", SADDLE, "--x", "0.5", "--y", "0.25", "--format", "json")[1]
    assert rp.loads(out)["point"] == {"x": [0.5], "y": [0.25]}


def test_stage_selection_and_fail_fast(capsys):
    out = _run(capsys, "certify", SADDLE, "--stages", "first", "--format", "json")[1]
    rep = rp.loads(out)
    assert rep["second_order"] is None and rep["oracle"] is None
    assert rep["overall"] == "necessary-consistent"
    out = _run(capsys, "certify", FLIPPED, "--fail-fast", "--format", "json")[1]
    rep = rp.loads(out)
    assert rep["overall"] == "refuted" and rep["oracle"] is None
    out = _run(capsys, "certify", FLIPPED, "--format", "json")[1]
    assert rp.loads(out)["oracle"] is not None
    out = _run(capsys, "certify", SADDLE, "--stages", "first,second,jacobian", "--format", "json")[1]
    assert rp.loads(out)["jacobian"]["overall"] == "pass"


def test_seed_env_var(capsys, monkeypatch):
    monkeypatch.setenv("MINIMAX_CERT_SEED", "7")
    out = _run(capsys, "certify", SADDLE, "--format", "json")[1]
    assert rp.loads(out)["config"]["seed"] == 7


def test_explain(capsys, tmp_path):
    out = _run(capsys, "certify", SADDLE, "--format", "json")[1]
    path = tmp_path / "r.json"
    path.write_text(out)
    code, text, _ = _run(capsys, "explain", str(path))
    assert code == 0
    assert "critical u = (1)" in text and "h* = (0.5)" in text and "SSOSC_u pass" in text
    out = _run(capsys, "certify", SADDLE, "--x", "0.5", "--y", "0.25", "--format", "json")[1]
    path.write_text(out)
    text = _run(capsys, "explain", str(path))[1]
    assert "u = (-1)" in text and "gap" in text and "refuted" in text
    path.write_text("{not json")
    assert _run(capsys, "explain", str(path))[0] == 4
    path.write_text('{"schema": 1}')
    assert _run(capsys, "explain", str(path))[0] == 4


@pytest.mark.parametrize("overall,code", sorted(rp.EXIT_CODES.items()))
def test_exit_code_is_function_of_verdict(overall, code):
    assert rp.exit_code(overall) == code
