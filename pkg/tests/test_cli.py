import json
import subprocess
import sys

import numpy as np
import pytest

from rqpd import linalg as la
from rqpd.casebook import programs as pg
from rqpd.casebook.scenarios import COMPARABLE_LOOPS, GAP_OBJECTIVE, working_outline_json
from rqpd.cli import EXIT_FAIL, EXIT_PASS, EXIT_USAGE, main
from rqpd.outline_io import predicate_to_json
from rqpd.spaces import Register, RegOp

PAIR = (Register("q<1>", 2), Register("q<2>", 2))


def write(path, obj):
    path.write_text(obj if isinstance(obj, str) else json.dumps(obj))
    return str(path)


def matrix_json(m):
    return [[[float(x.real), float(x.imag)] for x in row] for row in np.asarray(m, dtype=complex)]


@pytest.fixture
def files(tmp_path):
    f = {
        "P1": write(tmp_path / "P1.qw", pg.working_left()),
        "P2": write(tmp_path / "P2.qw", pg.working_right()),
        "Q1": write(tmp_path / "Q1.qw", pg.working_if_left()),
        "Q2": write(tmp_path / "Q2.qw", pg.working_if_right()),
        "mixed": write(tmp_path / "mixed.json", matrix_json(np.array([[5, 1], [1, 1]]) / 6)),
        "half": write(tmp_path / "half.json", matrix_json(np.eye(2) / 2)),
        "plus": write(tmp_path / "plus.json", matrix_json(la.proj(np.ones(2) / np.sqrt(2)))),
        "zero": write(tmp_path / "zero.json", matrix_json(np.diag([1.0, 0]))),
        "gap": write(tmp_path / "gap.json", matrix_json(GAP_OBJECTIVE)),
        "outline": write(tmp_path / "outline.json", working_outline_json()),
        "bad": write(tmp_path / "bad.qw", "var q : 2;\nq := H[r]"),
    }
    sym, eqb = RegOp(la.sym_projector(2), PAIR), RegOp(la.basis_identity(np.eye(2)), PAIR)
    judgment = {"left": "P1.qw", "right": "P2.qw", "pre": predicate_to_json(eqb), "post": predicate_to_json(sym)}
    f["judgment"] = write(tmp_path / "judgment.json", judgment)
    wrong = dict(judgment, post=predicate_to_json(RegOp(np.diag([1.0, 0, 0, 0]), PAIR)))
    f["wrong"] = write(tmp_path / "wrong.json", wrong)
    return f


def test_run_prints_output_state(files, capsys):
    assert main(["run", files["P1"], "--input", files["mixed"], "--json"]) == EXIT_PASS
    out = json.loads(capsys.readouterr().out)
    assert out["trace"] == pytest.approx(1.0)
    assert la.max_abs(la.from_json(out["output"]) - np.array([[1, -1], [-1, 3]]) / 4) < 1e-10


def test_run_rejects_wrong_input_size(files, tmp_path):
    big = write(tmp_path / "big.json", matrix_json(np.eye(4) / 4))
    assert main(["run", files["P1"], "--input", big]) == EXIT_USAGE


def test_bad_program_is_usage_error(files, capsys):
    assert main(["run", files["bad"]]) == EXIT_USAGE
    assert "r" in capsys.readouterr().err


def test_check_judgment(files, capsys):
    assert main(["check", files["judgment"], "--samples", "20", "--json"]) == EXIT_PASS
    assert json.loads(capsys.readouterr().out)["status"] == "passed"
    assert main(["check", files["wrong"], "--samples", "20"]) == EXIT_FAIL


def test_prove_outline(files, capsys):
    assert main(["prove", files["outline"]]) == EXIT_PASS
    text = capsys.readouterr().out
    assert text.startswith("verified") and "IF1" in text
    assert main(["prove", files["outline"], "--policy", "assume-lossless", "--json"]) == EXIT_PASS
    assert json.loads(capsys.readouterr().out)["policy"] == "assume-lossless"


def test_prove_rejects_malformed_outline(files, tmp_path):
    broken = write(tmp_path / "broken.json", {"left": "P1.qw"})
    assert main(["prove", broken]) == EXIT_USAGE
    assert main(["prove", files["outline"], "--policy", "hopeful"]) == EXIT_USAGE


def test_coupling_values(files, capsys):
    assert main(["coupling", files["half"], files["half"], "--objective", files["gap"], "--json"]) == EXIT_PASS
    assert json.loads(capsys.readouterr().out)["value"] == pytest.approx(1.0, abs=1e-5)
    assert main(["coupling", files["half"], files["half"], "--objective", files["gap"], "--ppt", "--json"]) == EXIT_PASS
    assert json.loads(capsys.readouterr().out)["value"] == pytest.approx(2 / 3, abs=1e-4)
    assert main(["coupling", files["half"], files["half"], "--objective", files["half"]]) == EXIT_USAGE


def test_comparable(files, tmp_path, capsys):
    assert main(["comparable", files["Q1"], files["Q2"], "--check", files["plus"], files["zero"]]) == EXIT_PASS
    assert "comparable" in capsys.readouterr().out
    assert main(["comparable", files["Q1"], files["Q2"], "--check", files["zero"], files["zero"]]) == EXIT_FAIL
    loop = write(tmp_path / "W.qw", COMPARABLE_LOOPS[0])
    assert main(["comparable", files["Q1"], loop]) == EXIT_USAGE


def test_casebook_list_and_run(capsys):
    assert main(["casebook", "list", "--json"]) == EXIT_PASS
    ids = [s["id"] for s in json.loads(capsys.readouterr().out)["scenarios"]]
    assert "working-example" in ids
    assert main(["casebook", "run", "semantics-basics", "coupling-gap", "--serial"]) == EXIT_PASS
    assert "semantics-basics: PASS" in capsys.readouterr().out
    assert main(["casebook", "run", "qbf-uniformity", "--serial", "--json"]) == EXIT_FAIL
    assert main(["casebook", "run", "nope"]) == EXIT_USAGE


def test_casebook_json_is_seed_stable(capsys):
    main(["casebook", "run", "working-example", "--json", "--seed", "4"])
    first = capsys.readouterr().out
    main(["casebook", "run", "working-example", "--json", "--seed", "4"])
    assert capsys.readouterr().out == first
    main(["casebook", "run", "working-example", "--json", "--runtime"])
    assert "runtime_seconds" in capsys.readouterr().out


def test_casebook_export(tmp_path, capsys):
    assert main(["casebook", "export", "teleport-correct", str(tmp_path)]) == EXIT_PASS
    assert (tmp_path / "teleport-correct" / "scenario.json").exists()
    assert main(["casebook", "export", "nope", str(tmp_path)]) == EXIT_USAGE


def test_usage_errors():
    assert main(["frobnicate"]) == EXIT_USAGE
    assert main(["run"]) == EXIT_USAGE


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "rqpd.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "casebook" in res.stdout
