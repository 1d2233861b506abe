import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rqpd.casebook import programs
from rqpd.lang import (
    IfMeas,
    Init,
    ParseError,
    Skip,
    TraceOut,
    Unitary,
    WellFormednessError,
    WhileMeas,
    parse,
    pretty,
    seq,
    tag_copy,
    tokenize,
    variables,
)


def test_parse_working_example_shape():
    p = parse(programs.working_left())
    assert [r.name for r in p.registers] == ["q"]
    stmts = p.body.stmts
    assert isinstance(stmts[0], Init)
    assert isinstance(stmts[1], Unitary) and stmts[1].gate.name == "H"
    assert isinstance(stmts[2], IfMeas) and stmts[2].meas.outcomes == (0, 1)


@pytest.mark.parametrize(
    "source",
    [
        programs.working_left(),
        programs.working_right(),
        programs.teleport("phaseflip", 0.5),
        programs.qotp(2),
        programs.walk(programs.BALANCED_COIN, 4),
        programs.depolarize(3),
        programs.qbf(np.eye(2)),
    ],
)
def test_pretty_round_trip(source):
    p = parse(source)
    assert parse(pretty(p)) == p


def test_complex_literals_and_comments():
    p = parse("var q : 2;\n# a comment\nlet G = [[0, -1i], [1i, 0]];\nq := G[q]")
    assert np.allclose(p.body.gate.matrix, [[0, -1j], [1j, 0]])
    assert [t.kind for t in tokenize("q := |0>")][:3] == ["IDENT", "ASSIGN", "KET0"]


def test_trace_out_changes_output_registers():
    p = parse("var q : 2, r : 2;\ntrout r")
    assert isinstance(p.body, TraceOut)
    assert [r.name for r in p.output_regs] == ["q"]


def test_while_loop_and_variables():
    p = parse(programs.walk_loop(programs.BALANCED_COIN, 4))
    assert isinstance(p.body, WhileMeas)
    assert set(variables(p.body)) == {"c", "p"}


def test_tag_copy_renames_everything():
    p = tag_copy(parse(programs.working_left()), 1)
    assert [r.name for r in p.registers] == ["q<1>"]
    assert set(variables(p.body)) == {"q<1>"}


def test_seq_flattens():
    a = Init("q")
    assert seq(Skip(), a, seq(a, Skip())) == seq(a, a)
    assert isinstance(seq(), Skip)


@pytest.mark.parametrize(
    "source, fragment",
    [
        ("var q : 2;\nq := H[r]", "r"),
        ("var q : 2;\nlet U = [[1, 1], [0, 1]];\nq := U[q]", "unitary"),
        ("var q : 2;\nlet M = meas {0: [[1,0],[0,0]]};\nif M[q] = 0 -> skip fi", "M"),
        ("var q : 2;\nlet E = kraus {[[1,0],[0,1]], [[1,0],[0,1]]};\nq := E[q]", "trace-preserving"),
        ("var q : 2;\nq := ", ""),
        ("var q : 2;\nif fi", ""),
        ("var q : 2;\nwhile", ""),
        ("var q 2; skip", ""),
        ("var q : 2;\nq := @", ""),
    ],
)
def test_rejects_bad_programs(source, fragment):
    with pytest.raises((ParseError, WellFormednessError)) as info:
        parse(source)
    assert fragment in str(info.value)


def test_parse_error_carries_position():
    with pytest.raises(ParseError) as info:
        parse("var q : 2;\nskip;\nq := ")
    assert info.value.line == 3


ALPHABET = list("qrM01[]{}(),;:=->|<> \n") + ["skip", "if", "fi", "while", "do", "od", "var", "meas", "H", "trout", " := ", "[]", "|0>"]


@given(st.lists(st.sampled_from(ALPHABET), max_size=40))
def test_parser_fuzz_only_raises_documented_errors(tokens):
    text = "".join(tokens)
    try:
        parse(text)
    except (ParseError, WellFormednessError):
        pass


@given(st.lists(st.sampled_from(["q := H[q]", "q := X[q]", "q := |0>", "skip", "if M[q] = 0 -> q := Z[q] [] 1 -> skip fi"]), min_size=1, max_size=6))
def test_generated_programs_round_trip(stmts):
    source = "var q : 2;\nlet M = meas {0: [[1,0],[0,0]], 1: [[0,0],[0,1]]};\n" + ";\n".join(stmts)
    p = parse(source)
    assert parse(pretty(p)) == p
