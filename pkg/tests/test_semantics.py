import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rqpd import linalg as la
from rqpd.casebook import programs as pg
from rqpd.lang import parse
from rqpd.lang.builtins import H, X, Z
from rqpd.semantics import (
    Configuration,
    LoopDivergenceError,
    denote,
    expand,
    is_lossless,
    outcome_profile,
    run,
    run_dual,
    step,
)

MIXED = np.array([[5, 1], [1, 1]]) / 6
seeds = st.integers(0, 2**31 - 1)

RANDOM_SOURCES = [
    pg.working_left(),
    pg.working_right(),
    pg.teleport(),
    pg.teleport("bitflip", 0.7),
    pg.qbf(la.haar_unitary(2, np.random.default_rng(3))),
    pg.walk_loop(pg.BALANCED_COIN, 3),
    "var q : 2, r : 3;\nlet E = kraus {[[1,0],[0,0],[0,0]], [[0,0],[0,0],[0,1]]};\nr := E[q]",
]


def test_working_example_outputs():
    p1, p2, q2 = (pg.load(s) for s in (pg.working_left(), pg.working_right(), pg.working_if_right()))
    target = np.array([[1, -1], [-1, 3]]) / 4
    assert la.max_abs(run(p1, MIXED)[0] - target) <= 1e-10
    assert la.max_abs(run(p2, MIXED)[0] - target) <= 1e-10
    assert la.max_abs(run(q2, MIXED)[0] - np.array([[1, -1], [-1, 2]]) / 3) <= 1e-10


def test_hand_computed_if_statement():
    # M measures in the computational basis, then X on 0 and H on 1
    q1 = pg.load(pg.working_if_left())
    p0, p1 = np.diag([1.0, 0]), np.diag([0, 1.0])
    expected = X @ p0 @ MIXED @ p0 @ X.conj().T + H @ p1 @ MIXED @ p1 @ H.conj().T
    assert la.max_abs(run(q1, MIXED)[0] - expected) < 1e-12


@pytest.mark.parametrize("source", RANDOM_SOURCES)
def test_run_agrees_with_denotation(source):
    p = parse(source)
    rng = np.random.default_rng(0)
    e = denote(p)
    for _ in range(3):
        d = int(np.prod([r.dim for r in p.input_regs]))
        rho = la.random_density(d, rng)
        out, regs = run(p, rho)
        assert [r.name for r in regs] == [r.name for r in p.output_regs]
        assert la.max_abs(e(rho) - out) < 1e-9


@pytest.mark.parametrize("source", RANDOM_SOURCES)
def test_dual_is_adjoint_of_run(source):
    p = parse(source)
    rng = np.random.default_rng(1)
    din = int(np.prod([r.dim for r in p.input_regs]))
    dout = int(np.prod([r.dim for r in p.output_regs]))
    for _ in range(3):
        rho, a = la.random_density(din, rng), la.random_predicate(dout, rng)
        out, _ = run(p, rho)
        pulled, _ = run_dual(p, a)
        assert abs(np.trace(a @ out) - np.trace(pulled @ rho)) < 1e-9


@given(seeds)
def test_channel_outputs_are_states(seed):
    rng = np.random.default_rng(seed)
    p = pg.load(pg.teleport("bitphaseflip", 0.6))
    psi = la.haar_state(2, rng)
    rho = np.kron(la.proj(psi), np.diag([1.0, 0, 0, 0]))
    out, _ = run(p, rho)
    assert la.is_density(out, 1e-9, partial=False)


def test_losslessness_reports():
    assert is_lossless(pg.load(pg.working_if_right())).lossless
    assert is_lossless(pg.load(pg.walk_loop(pg.BALANCED_COIN, 4))).lossless
    stuck = parse("var q : 2;\nlet M = meas {0: [[1,0],[0,0]], 1: [[0,0],[0,1]]};\nwhile M[q] = 1 do skip od")
    rep = is_lossless(stuck)
    assert not rep.lossless
    assert rep.trace_defect == pytest.approx(1.0)
    assert rep.certificate_agrees


def test_hadamard_loop_keeps_bell_weight():
    rep = is_lossless(pg.load(pg.qbf(H)))
    assert not rep.lossless and rep.certificate_agrees


def test_divergent_loop_drops_weight_in_run():
    stuck = parse("var q : 2;\nlet M = meas {0: [[1,0],[0,0]], 1: [[0,0],[0,1]]};\nwhile M[q] = 1 do skip od")
    out, _ = run(stuck, np.eye(2) / 2)
    assert np.trace(out).real == pytest.approx(0.5)


def test_loop_divergence_error_is_arithmetic():
    assert issubclass(LoopDivergenceError, ArithmeticError)


def test_step_labels_and_weights():
    q1 = pg.load(pg.working_if_left())
    succ = step(Configuration(q1.body, MIXED, q1.input_regs))
    assert [label for label, _ in succ] == [0, 1]
    assert sum(c.weight for _, c in succ) == pytest.approx(1.0)
    assert succ[0][1].weight == pytest.approx(5 / 6)


def test_branch_tree_matches_run_for_loop_free_program():
    p = pg.load(pg.working_left())
    tree = expand(Configuration(p.body, MIXED, p.input_regs), depth=10)
    assert la.max_abs(tree.terminated_sum() - run(p, MIXED)[0]) < 1e-12


@given(seeds)
def test_outcome_profile_mass(seed):
    rng = np.random.default_rng(seed)
    p = pg.load(pg.walk_loop(pg.BALANCED_COIN, 3))
    rho = la.random_density(8, rng)
    prof = outcome_profile(p.body, rho, p.input_regs, 6, {r.name: r for r in p.registers})
    assert sum(prof.values()) == pytest.approx(1.0, abs=1e-9)
    halted = sum(v for k, v in prof.items() if k and k[-1] == "halt")
    assert halted <= 1.0 + 1e-12


def test_measurement_arithmetic():
    # N measures in the |+>,|-> basis; the state of the working example
    q2 = pg.load(pg.working_if_right())
    succ = step(Configuration(q2.body, MIXED, q2.input_regs))
    (l0, c0), (l1, c1) = succ
    assert c0.weight == pytest.approx(2 / 3, abs=1e-12)
    assert c1.weight == pytest.approx(1 / 3, abs=1e-12)
    plus, minus = np.ones(2) / np.sqrt(2), np.array([1, -1]) / np.sqrt(2)
    assert la.max_abs(c0.state / c0.weight - la.proj(plus)) < 1e-12
    assert la.max_abs(c1.state / c1.weight - la.proj(minus)) < 1e-12


def test_init_and_unitary_basics():
    p = parse("var q : 2;\nq := |0>; q := Z[q]")
    out, _ = run(p, np.diag([0.0, 1.0]))
    assert la.max_abs(out - np.diag([1.0, 0])) < 1e-12
