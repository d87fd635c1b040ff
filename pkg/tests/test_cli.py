import csv
import json
import math
import subprocess
import sys
from pathlib import Path

import pytest

from conftest import OSCILLATOR_TEMPLATE
from tdscert.cli import main

GOLDEN = Path(__file__).parent / "golden"
SCALAR = {"name": "scalar", "A": [[1]], "Ad": [[-2]], "h": 0.604}


def _keys(doc, prefix=""):
    out = []
    for k, v in doc.items():
        out.append(prefix + k)
    for k, v in doc.items():
        if isinstance(v, dict):
            out += _keys(v, prefix + k + ".")
    return out


def _golden_lines(name):
    return (GOLDEN / name).read_text(encoding="utf-8").splitlines()


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_analyze_json_keys_are_pinned(capsys, write_json):
    code, out, _ = run(capsys, "analyze", write_json("s.json", SCALAR), "--deterministic")
    assert code == 0
    doc = json.loads(out)
    assert _keys(doc) == _golden_lines("analyze_keys.txt")
    assert doc["verdict"] == "Stable" and doc["n_star"] == 13 and doc["wall_time"] is None
    assert doc["schema_version"] == 1


def test_analyze_unstable_is_not_an_error(capsys, write_json):
    code, out, _ = run(capsys, "analyze", write_json("s.json", dict(SCALAR, h=0.605)), "--mode", "sweep")
    doc = json.loads(out)
    assert code == 0 and doc["verdict"] == "Unstable" and doc["mode"] == "sweep"
    assert doc["first_failing_order"] >= 1 and doc["wall_time"] > 0


def test_analyze_is_byte_identical_when_deterministic(capsys, write_json):
    path = write_json("s.json", SCALAR)
    first = run(capsys, "analyze", path, "--deterministic")[1]
    second = run(capsys, "analyze", path, "--deterministic")[1]
    assert first == second


def test_analyze_text_output(capsys, write_json):
    code, out, _ = run(capsys, "analyze", write_json("s.json", SCALAR), "--text", "--deterministic")
    assert code == 0
    assert "verdict              Stable" in out
    assert "wall_time            -" in out


def test_order_keys_are_pinned(capsys, write_json):
    code, out, _ = run(capsys, "order", write_json("s.json", dict(SCALAR, h=0.1)))
    doc = json.loads(out)
    assert code == 0 and doc["n_star"] == 4
    assert _keys(doc)[: len(_golden_lines("order_keys.txt"))] == _golden_lines("order_keys.txt")


def test_lyapunov_violation_exit_code(capsys, write_json):
    code, out, err = run(capsys, "analyze", write_json("z.json", {"A": [[0]], "Ad": [[0]], "h": 1}))
    assert code == 3
    assert "Lyapunov condition" in err
    assert json.loads(out)["verdict"] == "LyapunovConditionViolated"


def test_order_cap_exit_code(capsys, write_json):
    path = write_json("s.json", dict(SCALAR, h=2.0))
    code, out, err = run(capsys, "analyze", path, "--set", "order_cap=5")
    assert code == 4 and "exceeds the cap" in err
    assert json.loads(out)["n_star"] > 5
    assert run(capsys, "order", path, "--set", "order_cap=5")[0] == 4


@pytest.mark.parametrize(
    "doc",
    [
        {"A": [[1, 2]], "Ad": [[1]], "h": 1},
        {"A": [[1]], "Ad": [[1]], "h": -1},
        {"A": [[1]], "Ad": [[1]]},
        {"A": [["x"]], "Ad": [[1]], "h": 1},
        [1, 2],
    ],
)
def test_input_errors_exit_2(capsys, write_json, doc):
    code, _, err = run(capsys, "analyze", write_json("bad.json", doc))
    assert code == 2 and "input error" in err


def test_missing_and_malformed_files(capsys, tmp_path):
    assert run(capsys, "analyze", str(tmp_path / "nope.json"))[0] == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json", encoding="utf-8")
    assert run(capsys, "analyze", str(bad))[0] == 2


def test_numerical_failure_exit_5(capsys, write_json):
    path = write_json("s.json", dict(SCALAR, h=2.0))
    code, _, err = run(capsys, "analyze", path, "--set", "table_method=forward")
    assert code == 5 and "PrecisionLoss" in err


def test_config_precedence(capsys, write_json, tmp_path, monkeypatch):
    path = write_json("s.json", dict(SCALAR, h=2.0))
    cfg = tmp_path / "tds.cfg"
    cfg.write_text("order_cap = 5\n", encoding="utf-8")
    monkeypatch.delenv("TDS_CONFIG", raising=False)
    assert run(capsys, "analyze", path, "--config", str(cfg))[0] == 4
    monkeypatch.setenv("TDS_CONFIG", "order_cap=100")
    assert run(capsys, "analyze", path, "--config", str(cfg))[0] == 0
    assert run(capsys, "analyze", path, "--config", str(cfg), "--set", "order_cap=5")[0] == 4
    monkeypatch.setenv("TDS_CONFIG", "no_such_key=1")
    assert run(capsys, "analyze", path)[0] == 2


def _read_csv(path):
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.reader(fh))


def test_sweep_1d_header_rows_and_single_flip(capsys, write_json, tmp_path):
    template = write_json("t.json", dict(SCALAR, h=None))
    values = [0.1, 0.3, 0.5, 0.6, 0.604, 0.605, 0.7, 1.0, 1.5, 2.0]
    spec = write_json("sp.json", {"parameters": [{"target": "h", "values": values}]})
    out = tmp_path / "o.csv"
    code, _, _ = run(capsys, "sweep", template, "--spec", spec, "-o", str(out), "--deterministic")
    rows = _read_csv(out)
    assert code == 0
    assert ",".join(rows[0]) == _golden_lines("sweep_1d_header.csv")[0]
    verdicts = [r[1] for r in rows[1:]]
    flips = [i for i in range(1, len(verdicts)) if verdicts[i] != verdicts[i - 1]]
    assert flips == [values.index(0.605)]
    assert verdicts[0] == "Stable" and verdicts[-1] == "Unstable"
    # 17 significant digits round-trip exactly
    assert [float(r[0]) for r in rows[1:]] == values
    assert rows[1][0] == "0.10000000000000001"
    assert all(r[-1] == "ok" for r in rows[1:])


def test_sweep_2d_header_order_and_workers(capsys, write_json, tmp_path):
    template = write_json("t.json", OSCILLATOR_TEMPLATE)
    spec = write_json(
        "sp.json",
        {
            "mode": "sweep",
            "parameters": [
                {"target": "K", "values": [1, 20]},
                {"target": "h", "values": {"min": 0, "max": 2, "count": 3, "open_min": True}},
            ],
        },
    )
    serial, pooled = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run(capsys, "sweep", template, "--spec", spec, "-o", str(serial))[0] == 0
    assert run(capsys, "sweep", template, "--spec", spec, "-o", str(pooled), "--workers", "2")[0] == 0
    rows = _read_csv(serial)
    assert ",".join(rows[0]) == _golden_lines("sweep_2d_header.csv")[0]
    assert serial.read_bytes() == pooled.read_bytes()
    # first parameter varies slowest
    assert [(r[0], r[1]) for r in rows[1:3]] == [("1", "0.66666666666666663"), ("1", "1.3333333333333333")]
    for r in rows[1:]:
        u = [int(x) for x in r[6:11]]
        assert u == sorted(u)
        if r[2] == "Unstable" and r[4] and int(r[4]) <= 5:
            assert u[int(r[4]) - 1] == 1


def test_sweep_point_errors_are_recorded_in_row(capsys, write_json, tmp_path):
    template = write_json("t.json", {"A": [["a"]], "Ad": [[0]], "h": 1.0, "parameters": {"a": -1}})
    spec = write_json("sp.json", {"parameters": [{"target": "a", "values": [-1.0, 0.0, -2.0]}]})
    out = tmp_path / "o.csv"
    assert run(capsys, "sweep", template, "--spec", spec, "-o", str(out))[0] == 0
    rows = _read_csv(out)
    assert [r[-1] for r in rows[1:]] == ["ok", "LyapunovConditionViolated", "ok"]
    assert rows[2][1] == "LyapunovConditionViolated"


@pytest.mark.parametrize(
    "spec",
    [
        {"parameters": []},
        {"parameters": [{"target": "h", "values": []}]},
        {"parameters": [{"target": "h", "values": {"min": 1, "max": 1, "count": 3}}]},
        {"parameters": [{"target": "h", "values": {"min": 0, "max": 1, "count": 0}}]},
        {"parameters": [{"target": "q", "values": [1]}]},
        {"parameters": [{"target": "h", "values": [1]}], "mode": "fast"},
        {"parameters": [{"target": "h", "values": [1]}] * 2},
        {"parameters": [{"target": "h", "values": [1]}], "verdict": False},
    ],
)
def test_bad_sweep_specs_exit_2(capsys, write_json, tmp_path, spec):
    template = write_json("t.json", OSCILLATOR_TEMPLATE)
    code, _, err = run(capsys, "sweep", template, "--spec", write_json("sp.json", spec), "-o", str(tmp_path / "o.csv"))
    assert code == 2, err


def test_oracle_scalar_keys_and_bracket(capsys, write_json):
    code, out, _ = run(capsys, "oracle", write_json("s.json", SCALAR), "--step", "0.005", "--horizon", "10")
    doc = json.loads(out)
    assert code == 0
    assert _keys(doc) == _golden_lines("oracle_keys.txt")
    cd = doc["critical_delay"]
    lo, hi = cd["flip_interval"]
    assert lo <= cd["h_c"] <= hi and hi - lo <= 1e-3
    assert cd["h_c"] == pytest.approx(math.pi / (3 * math.sqrt(3)))


def test_oracle_special_cases(capsys, write_json):
    doc = json.loads(run(capsys, "oracle", write_json("s.json", {"A": [[-1]], "Ad": [[0]], "h": 1}), "--critical-delay")[1])
    assert doc["critical_delay"]["status"] == "stable for all delays"
    assert "simulation" not in doc and doc["certificate"] == "Stable"
    osc = {"A": [[0, 0, 1, 0], [0, 0, 0, 1], [-20, 10, 0, 0], [5, -15, 0, -0.25]],
           "Ad": [[0, 0, 0, 0], [0, 0, 0, 0], [10, 0, 0, 0], [0, 0, 0, 0]], "h": 0.552}
    code, out, _ = run(capsys, "oracle", write_json("o.json", osc), "--critical-delay")
    assert code == 0 and json.loads(out)["critical_delay"]["status"] == "NotScalar"
    code, out, _ = run(capsys, "oracle", write_json("o.json", osc), "--simulate", "--horizon", "220.8", "--step", "0.00552")
    doc = json.loads(out)
    assert doc["simulation"]["growth_estimate"] < 0 and doc["certificate"] == "Stable"


def test_console_script_entry_point(tmp_path):
    path = tmp_path / "s.json"
    path.write_text(json.dumps(SCALAR), encoding="utf-8")
    proc = subprocess.run([sys.executable, "-m", "tdscert.cli", "analyze", str(path), "--deterministic"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["verdict"] == "Stable"
