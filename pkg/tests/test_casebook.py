import json

import numpy as np
import pytest

from rqpd import linalg as la
from rqpd.casebook import Options, UnknownScenario, export_fixture, get_scenario, list_scenarios, run_scenario
from rqpd.casebook import programs as pg
from rqpd.casebook.scenarios import PROVENANCE, STATUSES
from rqpd.lang import parse_file
from rqpd.outline_io import predicate_from_json, read_outline
from rqpd.outline import check_outline
from rqpd.semantics import run

CHEAP = ["working-example", "semantics-basics", "coupling-gap", "equality-liftings", "qotp-correct"]


def test_catalog_is_large_enough():
    ids = [s["id"] for s in list_scenarios()]
    assert len(ids) >= 12 and len(set(ids)) == len(ids)
    for must in ("working-example", "qbf-uniformity", "teleport-correct", "qotp-secure", "qwalk-equiv", "loop-series"):
        assert must in ids


def test_unknown_scenario():
    with pytest.raises(UnknownScenario):
        get_scenario("no-such-thing")
    with pytest.raises(KeyError):
        run_scenario("no-such-thing")


@pytest.mark.parametrize("sid", CHEAP)
def test_reports_are_reproducible(sid):
    a = run_scenario(sid, Options(seed=3)).to_json()
    b = run_scenario(sid, Options(seed=3)).to_json()
    assert a == b
    obj = json.loads(a)
    assert "runtime_seconds" not in obj
    for chk in obj["checks"]:
        assert chk["status"] in STATUSES and chk["provenance"] in PROVENANCE


def test_runtime_only_on_request():
    rep = run_scenario("semantics-basics")
    assert "runtime_seconds" in rep.to_dict(include_runtime=True)
    assert rep.summary().startswith("semantics-basics: PASS")


def test_export_writes_programs_and_metadata(tmp_path):
    paths = export_fixture("working-example", tmp_path)
    names = {p.name for p in paths}
    assert {"P1.qw", "P2.qw", "scenario.json", "outline.json"} <= names
    root = tmp_path / "working-example"
    meta = json.loads((root / "scenario.json").read_text())
    assert meta["id"] == "working-example" and meta["checks"]
    for rel in meta["programs"].values():
        parse_file(root / rel)
    assert check_outline(read_outline(root / "outline.json")).ok


def test_exported_qotp_output_is_maximally_mixed(tmp_path):
    export_fixture("qotp-secure", tmp_path)
    root = tmp_path / "qotp-secure"
    meta = json.loads((root / "scenario.json").read_text())
    expected = predicate_from_json(meta["predicates"]["expected_output"]).matrix
    prog = parse_file(root / meta["programs"]["QOTP_enc"])
    rng = np.random.default_rng(0)
    for _ in range(5):
        # key registers start in arbitrary states; they are reset before use
        out, regs = run(prog, np.kron(la.random_density(2, rng), la.random_density(4, rng)))
        assert [r.name for r in regs] == ["p"]
        assert la.max_abs(out - expected) < 1e-12


def test_decryption_restores_message():
    prog = pg.load(pg.qotp(1))
    rng = np.random.default_rng(1)
    rho = la.random_density(2, rng)
    assert la.max_abs(run(prog, np.kron(rho, la.random_density(4, rng)))[0] - rho) < 1e-12


def test_export_rejects_unknown(tmp_path):
    with pytest.raises(UnknownScenario):
        export_fixture("nope", tmp_path)


def test_crashing_check_is_reported_as_failure(monkeypatch):
    from rqpd.casebook import scenarios

    sc = scenarios.REGISTRY["semantics-basics"]
    original = sc.build

    def broken(opts):
        b = original(opts)
        b.checks[0].run = lambda: 1 / 0
        return b

    monkeypatch.setattr(sc, "build", broken)
    rep = run_scenario("semantics-basics")
    assert rep.status == "fail"
    assert "ZeroDivisionError" in rep.checks[0].detail["error"]
