import json

import numpy as np
import pytest

from conftest import SCENARIOS, scenario_doc
from sdc.cli import EXIT_ANALYSIS, EXIT_BLOWUP, EXIT_MARGIN, EXIT_OK, EXIT_VALIDATION, build_parser, main


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, json.loads(out) if out else None, err


def write(tmp_path, doc, name="s.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return p


def test_analyze_s2(capsys):
    code, rep, _ = run(capsys, "analyze", SCENARIOS / "s2.json")
    assert code == EXIT_OK
    assert rep["regular"] and rep["ell"] == 1 and rep["impulse_free"] and rep["minimal"]
    assert rep["n1"] == 1 and rep["n2"] == 1 and rep["controllable"] and rep["observable"]
    assert rep["M"] == [-1.0, -1.0]


def test_analyze_zero_pencil(capsys):
    code, rep, _ = run(capsys, "analyze", SCENARIOS / "singular.json")
    assert code == EXIT_OK and rep["regular"] is False and rep["solvable"] is False


def test_malformed_json(capsys, tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"system": {')
    code, rep, err = run(capsys, "analyze", p)
    assert code == EXIT_VALIDATION and rep["error"] == "ValidationError"
    assert "bad.json:1:" in err


def test_unknown_key_rejected(capsys, tmp_path):
    doc = scenario_doc("s2.json")
    doc["system"]["F"] = [[1]]
    code, rep, err = run(capsys, "analyze", write(tmp_path, doc))
    assert code == EXIT_VALIDATION and "F" in err


def test_missing_file(capsys, tmp_path):
    code, _, _ = run(capsys, "analyze", tmp_path / "nope.json")
    assert code == EXIT_VALIDATION


def test_inconsistent_dimensions(capsys, tmp_path):
    doc = scenario_doc("s2.json")
    doc["system"]["b"] = [1, 1, 1]
    code, _, _ = run(capsys, "analyze", write(tmp_path, doc))
    assert code == EXIT_VALIDATION


def test_synthesize_and_round_trip(capsys, tmp_path):
    out = tmp_path / "p.json"
    code, params, _ = run(capsys, "synthesize", SCENARIOS / "s2_known.json", "-o", out)
    assert code == EXIT_OK
    assert params["R0"] == pytest.approx([4.3, 1.0]) and params["S0"] == pytest.approx([0.2, 0.5])
    assert json.loads(out.read_text()) == params
    code, summary, _ = run(capsys, "simulate", SCENARIOS / "s2_known.json", "-o", tmp_path / "a", "--params", out)
    assert code == EXIT_OK
    code, _, _ = run(capsys, "simulate", SCENARIOS / "s2_known.json", "-o", tmp_path / "b")
    # params files carry 15 significant digits
    a, b = (np.loadtxt(tmp_path / d / "trajectory.csv", delimiter=",", skiprows=1) for d in "ab")
    assert np.allclose(a, b, rtol=1e-12, atol=1e-13)


def test_synthesize_non_minimal(capsys):
    code, rep, _ = run(capsys, "synthesize", SCENARIOS / "nonminimal.json")
    assert code == EXIT_ANALYSIS and rep["error"] == "NotMinimal"


def test_synthesize_margin_failure(capsys):
    code, rep, err = run(capsys, "synthesize", SCENARIOS / "large_delay.json")
    assert code == EXIT_MARGIN and rep["margin"] >= 1.0
    assert "margin" in err


def test_simulate_blowup_writes_partial_output(capsys, tmp_path):
    code, rep, _ = run(capsys, "simulate", SCENARIOS / "large_delay_unchecked.json", "-o", tmp_path)
    assert code == EXIT_BLOWUP and rep["step"] > 0
    diag = json.loads((tmp_path / "diagnostics.json").read_text())
    assert diag["blowup"] and diag["blowup_step"] == rep["step"]


def test_estimate_requires_adaptive_section(capsys, tmp_path):
    code, _, _ = run(capsys, "estimate", SCENARIOS / "s2_known.json", "-o", tmp_path)
    assert code == EXIT_VALIDATION


def test_estimate_writes_trace(capsys, tmp_path):
    doc = scenario_doc("s2_adaptive.json")
    doc["sim"]["t_end"] = 5.0
    code, summary, _ = run(capsys, "estimate", write(tmp_path, doc), "-o", tmp_path / "out")
    assert code == EXIT_OK
    header = (tmp_path / "out" / "estimator.csv").read_text().split("\n")[0]
    assert header.startswith("t,y_hat,e,s,b,gamma,theta_1")


def test_flags_parse():
    args = build_parser().parse_args(["simulate", "x.json", "-o", "d", "--margin-line-sign", "+", "--ksyn", "5",
                                      "--seed", "3", "--tol-rank", "1e-9", "--tol-decomp", "1e-7"])
    assert (args.margin_line_sign, args.ksyn, args.seed, args.tol_rank, args.tol_decomp) == (1, 5, 3, 1e-9, 1e-7)
    with pytest.raises(SystemExit):
        build_parser().parse_args(["analyze", "x.json", "--margin-line-sign", "0"])


def test_line_sign_flag_changes_margin(capsys, tmp_path):
    doc = scenario_doc("s2_known.json")
    doc["system"]["d"] = [0.1, 0]
    p = write(tmp_path, doc)
    _, minus, _ = run(capsys, "synthesize", p)
    _, plus, _ = run(capsys, "synthesize", p, "--margin-line-sign", "+")
    assert plus["margin"] < minus["margin"]


def test_ksyn_and_seed_flags(capsys, tmp_path):
    doc = scenario_doc("s2_adaptive.json")
    doc["sim"]["t_end"] = 3.0
    p = write(tmp_path, doc)
    _, a, _ = run(capsys, "simulate", p, "-o", tmp_path / "a")
    _, b, _ = run(capsys, "simulate", p, "-o", tmp_path / "b", "--ksyn", "50")
    assert a["resyntheses"] == 30 and b["resyntheses"] == 6
    run(capsys, "simulate", p, "-o", tmp_path / "c", "--seed", "99")
    ya = (tmp_path / "a" / "trajectory.csv").read_bytes()
    yc = (tmp_path / "c" / "trajectory.csv").read_bytes()
    assert ya != yc


def test_directory_input(capsys, tmp_path):
    for name in ("s2.json", "singular.json"):
        (tmp_path / name).write_text((SCENARIOS / name).read_text())
    code, reps, _ = run(capsys, "analyze", tmp_path)
    assert code == EXIT_OK and set(reps) == {"s2.json", "singular.json"}
    assert reps["singular.json"]["regular"] is False


def test_log_level_env(capsys, monkeypatch):
    monkeypatch.setenv("SDC_LOG_LEVEL", "DEBUG")
    code, _, _ = run(capsys, "analyze", SCENARIOS / "s2.json")
    assert code == EXIT_OK
