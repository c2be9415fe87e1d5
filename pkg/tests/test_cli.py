import json
import shutil
from pathlib import Path

import pytest

from crestfield.cli import main

PROBLEMS = Path(__file__).resolve().parent.parent / "problems"


def _write(tmp_path, data, name="p.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data) if not isinstance(data, str) else data)
    return str(path)


def _tent(**extra):
    data = json.loads((PROBLEMS / "tent_1d.json").read_text())
    data.update(extra)
    return data


def _body(path):
    return json.loads(Path(path).read_text())["body"]


def test_solve_verify_round_trip(tmp_path):
    prob = _write(tmp_path, _tent())
    assert main(["solve", "--problem", prob, "--out", str(tmp_path)]) == 0
    body = _body(tmp_path / "solve.json")
    assert body["solution"]["method"] == "SAWTOOTH"
    assert body["verification"]["isSolution"] and body["verification"]["isMinimiser"]
    field = str(tmp_path / "field.csv")
    out = tmp_path / "v"
    assert main(["verify", "--problem", prob, "--field", field, "--out", str(out)]) == 0
    assert _body(out / "verify.json")["verification"] == body["verification"]


def test_solve_is_byte_deterministic(tmp_path):
    prob = _write(tmp_path, json.loads((PROBLEMS / "refine_2d.json").read_text()
                                       .replace("129, 129", "33, 33")))
    for d in ("a", "b"):
        main(["solve", "--problem", prob, "--out", str(tmp_path / d), "--seed", "4"])
    assert (tmp_path / "a" / "field.csv").read_bytes() == (tmp_path / "b" / "field.csv").read_bytes()
    assert _body(tmp_path / "a" / "solve.json") == _body(tmp_path / "b" / "solve.json")


def test_evaluate_parabola(tmp_path):
    shutil.copy(PROBLEMS / "parabola_1d.json", tmp_path / "p.json")
    assert main(["evaluate", "--problem", str(tmp_path / "p.json"), "--out", str(tmp_path)]) == 0
    energy = _body(tmp_path / "evaluate.json")["energy"]
    assert abs(energy["E_inf"] - 2.0) < 1e-9
    rows = (tmp_path / "energies.csv").read_text().splitlines()
    assert rows[1] == "p,E_p,crest" and len(rows) == 5


def test_sweep_ladder(tmp_path):
    prob = str(PROBLEMS / "parabola_1d.json")
    assert main(["sweep", "--problem", prob, "--out", str(tmp_path)]) == 0
    body = _body(tmp_path / "sweep.json")
    assert body["monotone"]
    rows = (tmp_path / "sweep.csv").read_text().splitlines()[2:]
    assert [float(r.split(",")[0]) for r in rows] == [2.0 ** k for k in range(9)]
    assert abs(float(rows[-1].split(",")[1]) - 2.0) <= 0.022 * 2.0


def test_expression_field(tmp_path):
    prob = str(PROBLEMS / "parabola_1d.json")
    code = main(["verify", "--problem", prob, "--field", "expr:x1^2", "--out", str(tmp_path)])
    ver = _body(tmp_path / "verify.json")["verification"]
    assert code == 0 and not ver["isSolution"] and not ver["isMinimiser"]


def test_provenance(tmp_path):
    prob = _write(tmp_path, _tent())
    main(["solve", "--problem", prob, "--out", str(tmp_path), "--seed", "9"])
    prov = json.loads((tmp_path / "solve.json").read_text())["provenance"]
    assert prov["seed"] == 9 and prov["command"] == "solve" and len(prov["problem_sha256"]) == 64


@pytest.mark.parametrize("text", ["{not json", '{"domain": {"dim": 1}}', '[]'])
def test_malformed_problem(tmp_path, text, capsys):
    prob = _write(tmp_path, text)
    assert main(["evaluate", "--problem", prob, "--out", str(tmp_path)]) == 2
    assert "error" in capsys.readouterr().err


def test_unknown_key_reports_path(tmp_path, capsys):
    prob = _write(tmp_path, _tent(solver={"method": "SAWTOOTH", "mm": 1}))
    assert main(["solve", "--problem", prob, "--out", str(tmp_path)]) == 2
    assert "/solver" in capsys.readouterr().err


def test_missing_problem_file(tmp_path):
    assert main(["solve", "--problem", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 2


def test_grid_mismatch(tmp_path):
    prob = _write(tmp_path, _tent())
    main(["solve", "--problem", prob, "--out", str(tmp_path)])
    small = _write(tmp_path, _tent(domain={"dim": 1, "bounds": [[0.0, 1.0]], "resolution": [512]}), "s.json")
    assert main(["verify", "--problem", small, "--field", str(tmp_path / "field.csv"),
                 "--out", str(tmp_path)]) == 2


def test_degenerate_energy_exit(tmp_path):
    prob = _write(tmp_path, _tent())
    assert main(["evaluate", "--problem", prob, "--out", str(tmp_path)]) == 3
    assert (tmp_path / "evaluate.json").exists()


def test_infeasible_exit(tmp_path):
    data = _tent(boundary={"catalog": "affine", "coefficients": {"offset": [0.0], "gradient": [[2.0]]}})
    assert main(["solve", "--problem", _write(tmp_path, data), "--out", str(tmp_path)]) == 4


def test_stalled_exit_writes_report(tmp_path):
    data = json.loads((PROBLEMS / "conformal_2d.json").read_text())
    data["domain"]["resolution"] = [33, 33]
    data["solver"]["maxIters"] = 2000
    assert main(["solve", "--problem", _write(tmp_path, data), "--out", str(tmp_path)]) == 5
    sol = _body(tmp_path / "solve.json")["solution"]
    assert sol["status"] == "stalled" and sol["trace"]["kind"] == "gram_residual"


def test_inconsistent_verdict_exit(tmp_path):
    data = json.loads((PROBLEMS / "parabola_1d.json").read_text())
    data["verify"] = {"tolCrest": 10.0, "tolConst": 1e-6}
    prob = _write(tmp_path, data)
    assert main(["verify", "--problem", prob, "--field", "phi", "--out", str(tmp_path)]) == 6
    ver = _body(tmp_path / "verify.json")["verification"]
    assert ver["isMinimiser"] and not ver["isSolution"] and not ver["verdictConsistent"]
