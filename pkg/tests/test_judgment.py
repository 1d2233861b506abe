import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rqpd import linalg as la
from rqpd.casebook import programs as pg
from rqpd.judgment import (
    Judgment,
    MeasEq,
    MeasLoopEq,
    Sampler,
    Separability,
    check_couple_entailment,
    check_judgment,
    check_meas_eq,
    check_meas_judgment,
    check_meas_loop_eq,
    check_projective_judgment,
    check_separability,
    judgment_margin,
    loop_effects,
    sample_inputs,
)
from rqpd.lang import parse
from rqpd.semantics import loop_registers, run
from rqpd.spaces import Register, RegOp

Q1, Q2 = Register("q<1>", 2), Register("q<2>", 2)
PAIR = (Q1, Q2)
SYM = RegOp(la.sym_projector(2), PAIR)
IDENTITY = "var q : 2;\nskip"
seeds = st.integers(0, 2**31 - 1)


def comp_meas():
    return parse(pg.working_if_left()).body.meas


def plus_meas():
    return parse(pg.working_if_right()).body.meas


def test_meas_eq_on_states():
    cond = MeasEq(comp_meas(), ("q",), comp_meas(), ("q",))
    assert cond.left_regs == ("q<1>",)
    zero_zero = np.kron(la.ket(0, 2), la.ket(0, 2))
    zero_one = np.kron(la.ket(0, 2), la.ket(1, 2))
    assert check_meas_eq(cond, zero_zero, (Q1,), (Q2,))
    assert not check_meas_eq(cond, zero_one, (Q1,), (Q2,))
    mixed = MeasEq(comp_meas(), ("q",), plus_meas(), ("q",))
    plus = np.ones(2) / np.sqrt(2)
    assert not check_meas_eq(mixed, np.kron(la.ket(0, 2), la.ket(0, 2)), (Q1,), (Q2,))
    assert check_meas_eq(mixed, np.kron(plus, la.ket(0, 2)), (Q1,), (Q2,))


def test_meas_eq_needs_matching_outcomes():
    three = parse(pg.qotp(1)).body.stmts[4].meas  # four-outcome key measurement
    with pytest.raises(ValueError):
        MeasEq(comp_meas(), ("q",), three, ("a", "b"))
    with pytest.raises(ValueError):
        MeasEq(None, (), None, ())


def test_loop_effects_sum_to_exit_probability():
    loop = parse(pg.walk_loop(pg.BALANCED_COIN, 3)).body
    local = loop_registers(loop, parse(pg.walk_loop(pg.BALANCED_COIN, 3)).input_regs)
    effects = loop_effects(loop, local, 200)
    assert la.max_abs(sum(effects) - np.eye(8)) < 1e-6
    cond = MeasLoopEq(loop, loop)
    regs1 = tuple(r.tagged(1) for r in local)
    regs2 = tuple(r.tagged(2) for r in local)
    rho = la.random_density(8, np.random.default_rng(0))
    assert check_meas_loop_eq(cond, np.kron(rho, rho), regs1, regs2)


def test_separability_classification():
    cond = Separability((("q<1>",), ("q<2>",)))
    assert check_separability(cond, np.eye(4) / 4, PAIR) == "yes"
    assert check_separability(cond, la.max_entangled(2), PAIR) == "no"
    werner = 0.2 * la.proj(la.max_entangled(2)) + 0.8 * np.eye(4) / 4
    assert check_separability(cond, werner, PAIR) == "yes"  # PPT is exact on 2x2
    with pytest.raises(ValueError):
        Separability((("a",), ("a",)))


def test_identity_preserves_symmetric_equality():
    p = parse(IDENTITY)
    v = check_judgment(Judgment(p, p, SYM, SYM), Sampler(count=40))
    assert v.status == "passed"
    assert v.worst_margin >= -1e-6


def test_flip_breaks_basis_equality():
    p, flip = parse(IDENTITY), parse(pg.flip_program())
    eq = RegOp(la.proj(np.kron(la.ket(0, 2), la.ket(0, 2))) + la.proj(np.kron(la.ket(1, 2), la.ket(1, 2))), PAIR)
    v = check_judgment(Judgment(p, flip, eq, eq), Sampler(count=40))
    assert v.status == "falsified"
    assert v.counterexample is not None and v.worst_margin < 0
    d = v.to_dict()
    assert d["status"] == "falsified" and d["counterexample"] is not None


def test_margin_uses_trace_mismatch():
    stuck = parse("var q : 2;\nlet M = meas {0: [[1,0],[0,0]], 1: [[0,0],[0,1]]};\nwhile M[q] = 1 do skip od")
    p = parse(IDENTITY)
    j = Judgment(p, stuck, RegOp(np.eye(4), PAIR), RegOp(np.eye(4), PAIR))
    res = judgment_margin(j, np.kron(la.proj(la.ket(1, 2)), la.proj(la.ket(1, 2))))
    assert res.margin < 0


def test_judgment_rejects_foreign_registers():
    p = parse(IDENTITY)
    with pytest.raises(ValueError):
        Judgment(p, p, RegOp(np.eye(2), (Register("z<1>", 2),)), SYM)


@settings(max_examples=10)
@given(seeds)
def test_sampled_inputs_respect_measurement_condition(seed):
    cond = MeasEq(comp_meas(), ("q",), plus_meas(), ("q",))
    for label, state, _ in sample_inputs((cond,), (Q1,), (Q2,), Sampler(count=5, seed=seed)):
        assert check_meas_eq(cond, state, (Q1,), (Q2,), 1e-7), label


def test_projective_check_and_general_check_differ():
    # X on one side maps |00>+|11> to |10>+|01>, whose marginals still admit a Bell lifting
    p, flip = parse(IDENTITY), parse(pg.flip_program())
    bell = RegOp(la.proj(la.max_entangled(2)), PAIR)
    assert check_projective_judgment(flip, p, bell, bell, Sampler(count=10)).status == "passed"
    v = check_judgment(Judgment(flip, p, bell, bell), Sampler(count=20))
    assert v.status == "falsified"


def test_couple_entailment_through_identity():
    p = parse(IDENTITY)
    cond = MeasEq(comp_meas(), ("q",), comp_meas(), ("q",))
    assert check_couple_entailment((cond,), (cond,), p, p, Sampler(count=20)).status == "passed"
    flip = parse(pg.flip_program())
    assert check_couple_entailment((cond,), (cond,), p, flip, Sampler(count=20)).status == "falsified"
    sep = Separability((("q<1>",), ("q<2>",)))
    assert check_couple_entailment((), (sep,), p, p).status == "inconclusive"


def test_measurement_judgment_with_synchronized_precondition():
    cond = MeasEq(comp_meas(), ("q",), comp_meas(), ("q",))
    rng = np.random.default_rng(2)
    b0, b1 = la.random_predicate(4, rng), la.random_predicate(4, rng)
    m0, m1 = np.kron(np.diag([1.0, 0]), np.diag([1.0, 0])), np.kron(np.diag([0, 1.0]), np.diag([0, 1.0]))
    pre = RegOp(m0 @ b0 @ m0 + m1 @ b1 @ m1, PAIR)
    posts = {0: RegOp(b0, PAIR), 1: RegOp(b1, PAIR)}
    for label, state, _ in sample_inputs((cond,), (Q1,), (Q2,), Sampler(count=10)):
        res = check_meas_judgment(cond, pre, posts, state, (Q1,), (Q2,))
        assert res.status == "holds", label
    too_strong = RegOp(np.eye(4), PAIR)
    zero = {0: RegOp(np.zeros((4, 4)), PAIR), 1: RegOp(np.zeros((4, 4)), PAIR)}
    state = np.kron(la.proj(la.ket(0, 2)), la.proj(la.ket(0, 2)))
    assert check_meas_judgment(cond, too_strong, zero, state, (Q1,), (Q2,)).status == "fails"


def test_teleport_output_is_input():
    t = parse(pg.teleport())
    rng = np.random.default_rng(5)
    psi = la.haar_state(2, rng)
    out, regs = run(t, np.kron(la.proj(psi), np.diag([1.0, 0, 0, 0])))
    from rqpd.spaces import lookup, reduce_to

    assert la.max_abs(reduce_to(out, regs, lookup(regs, ["r"])) - la.proj(psi)) < 1e-9
