import json
import subprocess
import sys

import numpy as np
import pytest

from macx.cli import main
from macx.suite import binary_adder


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def adder_file(tmp_path):
    w = binary_adder().w
    path = tmp_path / "adder.json"
    path.write_text(json.dumps({"x_size": 2, "y_size": 2, "z_size": 3, "w": w.tolist()}))
    return str(path)


# --- capacity


def test_capacity_inside(capsys, adder_file):
    code, out, _ = run(capsys, "capacity", "--channel", adder_file, "--rates", "0.7", "0.7")
    assert code == 0
    assert json.loads(out)["inside"] is True


def test_capacity_zero_rates(capsys, adder_file):
    assert run(capsys, "capacity", "--channel", adder_file, "--rates", "0", "0")[0] == 0


def test_capacity_outside(capsys, adder_file):
    code, out, _ = run(capsys, "capacity", "--channel", adder_file, "--rates", "0.8", "0.8")
    assert code == 3 and json.loads(out)["inside"] is False


def test_capacity_missing_file(capsys, tmp_path):
    code, _, err = run(capsys, "capacity", "--channel", str(tmp_path / "nope.json"), "--rates", "0", "0")
    assert code == 2 and "nope.json" in err


def test_capacity_malformed_file_cites_index(capsys, tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"x_size": 2, "y_size": 2, "z_size": 2, "w": [[[0.5, 0.5], [1, 0]], [[0, 1], [0.8, 0.0]]]}))
    code, _, err = run(capsys, "capacity", "--channel", str(path), "--rates", "0", "0")
    assert code == 2 and "[1][1]" in err


# --- exponent


def test_exponent_above_capacity_is_zero(capsys):
    code, out, _ = run(capsys, "exponent", "--channel", "builtin:adder_like", "--rates", "1", "1")
    assert code == 0 and json.loads(out)["value"] == 0


def test_exponent_oracle_guard(capsys, tmp_path):
    path = tmp_path / "w.json"
    path.write_text(json.dumps({"x_size": 3, "y_size": 2, "z_size": 2, "w": np.full((3, 2, 2), 0.5).tolist()}))
    code, _, err = run(capsys, "exponent", "--channel", str(path), "--rates", "0.1", "0.1", "--method", "grid_oracle")
    assert code == 2 and "grid oracle" in err


def test_exponent_sphere_packing_vs_oracle(capsys):
    argv = ["exponent", "--channel", "builtin:adder_like", "--rates", "0.1", "0.1"]
    _, out, _ = run(capsys, *argv, "--method", "sphere_packing")
    sp = json.loads(out)["value"]
    _, out, _ = run(capsys, *argv, "--method", "grid_oracle", "--target", "sphere_packing")
    assert abs(sp - json.loads(out)["value"]) <= 1e-2


def test_exponent_infinite_value_is_valid_json(capsys):
    code, out, _ = run(capsys, "exponent", "--channel", "builtin:binary_adder", "--rates", "0.25", "0.25",
                       "--method", "haroutunian")
    assert code == 0 and json.loads(out)["value"] == "inf"


# --- surface


def test_surface_single_row(capsys):
    code, out, _ = run(capsys, "surface", "--channel", "builtin:input_independent", "--r1", "0:0:1", "--r2", "0.1:0.1:1",
                       "--method", "haroutunian")
    assert code == 0
    assert out.splitlines() == ["r1,r2,value,method,converged", "0,0.1,0,haroutunian,true"]


def test_surface_inverted_range(capsys):
    code, _, err = run(capsys, "surface", "--channel", "builtin:adder_like", "--r1", "0.5:0.1:3", "--r2", "0:0:1")
    assert code == 2 and "--r1" in err


def test_surface_is_byte_identical(tmp_path, capsys):
    outs = []
    for k in range(2):
        path = tmp_path / f"s{k}.csv"
        argv = ["surface", "--channel", "builtin:random", "--r1", "0:0.4:3", "--r2", "0:0.4:3",
                "--method", "sphere_packing", "--seed", "3", "--out", str(path)]
        assert run(capsys, *argv)[0] == 0
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]
    assert len(outs[0].decode().splitlines()) == 10


def test_surface_adder_monotone(capsys):
    code, out, _ = run(capsys, "surface", "--channel", "builtin:binary_adder", "--r1", "0:1:8", "--r2", "0:1:8",
                       "--method", "haroutunian")
    rows = [line.split(",") for line in out.splitlines()[1:]]
    vals = np.array([float(r[2]) for r in rows]).reshape(8, 8)
    with np.errstate(invalid="ignore"):
        for axis in (0, 1):
            d = np.diff(vals, axis=axis)
            assert np.all((d <= 1e-3) | np.isnan(d))


# --- simulate


def test_simulate_single_pair(capsys):
    code, out, _ = run(capsys, "simulate", "--channel", "builtin:random", "--type", "1,1,0,1")
    rep = json.loads(out)
    assert code == 0
    assert rep["rates"] == [0, 0]
    assert rep["strong_converse"]["inside"] is True


def test_simulate_size_guard(capsys, tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"n": 16, "u": [[0] * 16], "v": [[0] * 16]}))
    code, _, err = run(capsys, "simulate", "--channel", "builtin:binary_adder", "--code", str(path))
    assert code == 2 and "guard" in err


def test_simulate_precondition_unmet(capsys):
    code, _, err = run(capsys, "simulate", "--channel", "builtin:random", "--type", "1,1,0,1", "--rates", "0.1", "0.1")
    assert code == 3 and "delta" in err


def test_simulate_adder_pipeline(capsys):
    code, out, _ = run(capsys, "simulate", "--channel", "builtin:binary_adder", "--type", "1,1,2,2", "--n", "6",
                       "--m", "4", "--n-codewords", "4", "--rates", "0.25", "0.25", "--lambda", "0.1")
    rep = json.loads(out)
    assert code == 0
    assert rep["stats"]["max_error"] == 0
    assert rep["sphere_packing"]["exponent"] == "inf" and rep["sphere_packing"]["passed"] is True


def test_simulate_bad_type(capsys):
    code, _, err = run(capsys, "simulate", "--channel", "builtin:random", "--type", "1,1,x,1")
    assert code == 2 and "--type" in err


# --- wring


def test_wring_independent_code(capsys, tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"n": 2, "u": [[0, 0], [0, 1], [1, 0], [1, 1]], "v": [[0, 1], [1, 0]]}))
    code, out, _ = run(capsys, "wring", "--channel", "builtin:binary_adder", "--code", str(path), "--lambda", "0.5")
    rep = json.loads(out)
    assert code == 0 and rep["k"] == 0


def test_wring_lambda_one(capsys):
    code, _, _ = run(capsys, "wring", "--channel", "builtin:random", "--type", "1,0,0,1", "--lambda", "1")
    assert code == 2


def test_wring_no_dominant_type(capsys, tmp_path):
    path = tmp_path / "c.json"
    # ML hands every output to pair (0, 0); one pair is below the count threshold 25/16
    path.write_text(json.dumps({"n": 1, "u": [[0]] * 5, "v": [[0]] * 5}))
    code, _, _ = run(capsys, "wring", "--channel", "builtin:input_independent", "--code", str(path), "--lambda", "0")
    assert code == 3


def test_wring_correlated_code(capsys, tmp_path):
    words = [[0, 0, 1, 1, 0, 1], [1, 0, 0, 1, 1, 0], [0, 1, 1, 0, 1, 0], [1, 1, 0, 0, 0, 1]]
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"n": 6, "u": words, "v": words}))
    code, out, _ = run(capsys, "wring", "--channel", "builtin:binary_adder", "--code", str(path), "--lambda", "0.1")
    rep = json.loads(out)
    assert code == 0
    assert rep["k"] <= rep["cap"]
    if not rep["cap_hit"]:
        assert rep["independence_gap"] <= 2 * 6**-0.25 + 1e-9


# --- entry point


def test_help_lists_flags():
    out = subprocess.run([sys.executable, "-m", "macx.cli", "simulate", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for flag in ("--channel", "--rates", "--method", "--resolution", "--seed", "--out", "--lambda", "--delta"):
        assert flag in out.stdout


def test_help_mentions_threads():
    out = subprocess.run([sys.executable, "-m", "macx.cli", "--help"], capture_output=True, text=True)
    assert "MACX_THREADS" in out.stdout.replace("\n", " ")


def test_missing_command_exits_two():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2
