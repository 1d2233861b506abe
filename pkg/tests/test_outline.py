import copy
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rqpd import linalg as la
from rqpd.casebook import programs as pg
from rqpd.casebook.scenarios import working_outline_json
from rqpd.judgment import MeasEq
from rqpd.lang import IfMeas, Skip, parse, seq
from rqpd.lang.builtins import H
from rqpd.outline import POLICIES, ProofOutline, Segment, check_outline
from rqpd.outline_io import (
    OutlineFormatError,
    _premise_key,
    load_matrix,
    outline_from_json,
    predicate_from_json,
    predicate_to_json,
    read_outline,
    resolve_fragment,
)
from rqpd.rules import RuleInstance
from rqpd.spaces import Register, RegOp

PAIR = (Register("q<1>", 2), Register("q<2>", 2))


def working(**changes):
    obj = copy.deepcopy(working_outline_json())
    obj.pop("left"), obj.pop("right")
    obj["left_source"], obj["right_source"] = pg.working_left(), pg.working_right()
    obj.update(changes)
    return obj


def test_working_outline_verifies():
    rep = check_outline(outline_from_json(working()))
    assert rep.status == "verified", [s.message for s in rep.steps]
    assert rep.conclusion is not None
    assert la.max_abs(rep.conclusion.post.matrix - la.sym_projector(2)) < 1e-12
    assert [s.rule for s in rep.steps] == ["Conseq", "Weaken", "IF1", "UT-R"]
    json.dumps(rep.to_dict())


def test_changed_postcondition_is_refuted():
    obj = working()
    obj["predicates"]["Sym"] = predicate_to_json(RegOp(np.eye(4) * 0.5, PAIR))
    rep = check_outline(outline_from_json(obj))
    assert rep.status == "refuted"
    assert rep.steps[-1].status == "mismatch"


def test_missing_side_condition_is_refuted():
    obj = working()
    obj["segments"][2]["gamma"] = []
    obj["segments"][1]["gamma"] = []
    rep = check_outline(outline_from_json(obj))
    assert rep.status == "refuted"
    assert "side conditions" in rep.steps[2].message


def test_segments_must_cover_programs():
    obj = working()
    obj["segments"] = obj["segments"][:-1]
    rep = check_outline(outline_from_json(obj))
    assert rep.status == "refuted" and "cover" in rep.notes[0]
    assert check_outline(outline_from_json(working(segments=[]))).status == "refuted"


def test_unknown_policy():
    with pytest.raises(ValueError):
        check_outline(outline_from_json(working()), policy="optimistic")
    assert POLICIES == ("strict", "assume-lossless")


STUCK = "var q : 2;\nlet M = meas {0: [[1,0],[0,0]], 1: [[0,0],[0,1]]};\nwhile M[q] = 1 do skip od"


def stuck_outline():
    p = parse(STUCK)
    # outcomes agree: the skip body leaves this invariant fixed
    agree = RegOp(np.diag([1.0, 0, 0, 1.0]), PAIR)
    loop = RuleInstance("LP", p.body, p.body, {"body": RuleInstance("Skip", p.body.body, p.body.body)}, {"invariant": agree})
    return ProofOutline(p, p, [Segment(loop, agree, RegOp(np.eye(4), PAIR), ())])


def test_divergent_loop_fails_strict_policy():
    rep = check_outline(stuck_outline(), "strict")
    failed = [o for o in rep.obligations if o.status == "failed"]
    assert rep.status == "refuted"
    assert failed and all(o.kind == "losslessness" for o in failed)
    assert failed[0].residual == pytest.approx(1.0)


def test_assume_lossless_policy_records_the_assumption():
    rep = check_outline(stuck_outline(), "assume-lossless")
    assert rep.status == "verified", [(s.status, s.message) for s in rep.steps]
    assert "losslessness assumed without checking" in rep.notes
    assert all(o.discharge == "unchecked-assumption" for o in rep.obligations if o.kind == "losslessness")


def test_projective_outline_needs_projective_rules():
    obj = working(projective=True)
    rep = check_outline(outline_from_json(obj))
    assert rep.status == "refuted"
    assert rep.steps[0].status == "error"


def test_resolve_fragment_paths():
    body = parse(pg.working_left()).body
    assert resolve_fragment(body, "0") == body.stmts[0]
    assert isinstance(resolve_fragment(body, "2"), IfMeas)
    assert resolve_fragment(body, "2/1") == body.stmts[2].branch(1)
    assert resolve_fragment(body, "1:") == seq(*body.stmts[1:])
    assert isinstance(resolve_fragment(body, None), Skip)
    for bad in ("7", "0/1", "2/body", "x"):
        with pytest.raises(OutlineFormatError):
            resolve_fragment(body, bad)


def test_premise_keys():
    assert _premise_key("inner") == "inner"
    assert _premise_key("3") == 3
    assert _premise_key("0,1") == (0, 1)
    with pytest.raises(OutlineFormatError):
        _premise_key("left")


@given(st.integers(0, 2**31 - 1))
def test_predicate_json_round_trip(seed):
    rng = np.random.default_rng(seed)
    op = RegOp(la.random_predicate(4, rng), PAIR)
    back = predicate_from_json(json.loads(json.dumps(predicate_to_json(op))))
    assert back.regs == op.regs
    assert la.max_abs(back.matrix - op.matrix) == 0


def test_load_matrix_formats():
    m = load_matrix([[1, "1i"], [[0, -1], 0]])
    assert np.allclose(m, [[1, 1j], [-1j, 0]])
    with pytest.raises(OutlineFormatError):
        load_matrix([1, 2])
    with pytest.raises(OutlineFormatError):
        predicate_from_json({"matrix": [[1]]})


def test_format_errors(tmp_path):
    with pytest.raises(OutlineFormatError):
        outline_from_json({"right_source": pg.working_right()})
    obj = working()
    obj["segments"][0]["pre"] = "Nowhere"
    with pytest.raises(OutlineFormatError):
        outline_from_json(obj)
    obj = working()
    obj["segments"][0]["gamma"] = [{"kind": "telepathy"}]
    with pytest.raises(OutlineFormatError):
        outline_from_json(obj)
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(OutlineFormatError):
        read_outline(bad)


def test_read_outline_resolves_relative_programs(tmp_path):
    (tmp_path / "P1.qw").write_text(pg.working_left())
    (tmp_path / "P2.qw").write_text(pg.working_right())
    (tmp_path / "outline.json").write_text(json.dumps(working_outline_json()))
    outline = read_outline(tmp_path / "outline.json")
    assert outline.name == "working-example"
    gamma = outline.segments[2].gamma[0]
    assert isinstance(gamma, MeasEq) and gamma.left_regs == ("q<1>",)
    assert check_outline(outline).ok


def test_hadamard_predicate_in_outline():
    pred = working_outline_json()["predicates"]["B"]
    b = predicate_from_json(pred).matrix
    hr = np.kron(np.eye(2), H)
    # B is the symmetric projector seen through H on the right copy
    assert la.max_abs(hr @ b @ hr - la.sym_projector(2)) < 1e-12
