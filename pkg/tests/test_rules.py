import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rqpd import linalg as la
from rqpd import soundness as sh
from rqpd.lang import Skip, parse, tag_copy
from rqpd.outline import discharge
from rqpd.rules import (
    Context,
    RuleError,
    RuleInstance,
    derive,
    derive_forward,
    loewner_residual,
    precondition_of,
    predicate_violation,
    qpd_wp,
)
from rqpd.semantics import run
from rqpd.spaces import Register, RegOp

seeds = st.integers(0, 2**31 - 1)

# rules whose precondition is exactly the dual of the joint program
EXACT_RULES = ["Skip", "Init", "Init-L", "Init-R", "UT", "UT-L", "UT-R", "SO", "SO-L", "SO-R", "SC", "IF-L", "IF-R", "Frame"]
FORWARD_RULES = ["Skip-P", "UT-P", "UT-P-L", "UT-P-R", "Init-P", "Init-P-L", "Init-P-R", "SO-P", "SO-P-L", "SO-P-R", "SC-P", "Frame-P"]


def joint_run(trial, rho):
    ctx = Context.of_programs(trial.p1, trial.p2)
    decl = ctx.decl_map
    out, regs = run(tag_copy(trial.p1.body, 1), rho, ctx.joint, decl)
    return run(tag_copy(trial.p2.body, 2), out, regs, decl)


def _all_pairs_if(rng):
    t = sh.gen_if(rng, "IF")
    l, r = t.inst.left, t.inst.right
    t.inst.premises = {(m, n): sh._branch_rule(l.branch(m), r.branch(n)) for m in (0, 1) for n in (0, 1)}
    return t


@settings(max_examples=8)
@given(seeds, st.sampled_from(EXACT_RULES + ["IF"]))
def test_backward_rules_are_adjoint_to_semantics(seed, rule):
    rng = np.random.default_rng(seed)
    trial = _all_pairs_if(rng) if rule == "IF" else sh.GENERATORS[rule](rng)
    ctx = Context.of_programs(trial.p1, trial.p2)
    pre = derive(trial.inst, trial.given, ctx).pre
    d = int(np.prod([r.dim for r in ctx.joint]))
    for _ in range(3):
        rho = la.random_density(d, rng)
        out, regs = joint_run(trial, rho)
        assert abs(pre.expect(rho, ctx.joint) - trial.given.expect(out, regs)) < 1e-9


@settings(max_examples=8)
@given(seeds, st.sampled_from(EXACT_RULES))
def test_backward_rules_preserve_predicates(seed, rule):
    rng = np.random.default_rng(seed)
    trial = sh.GENERATORS[rule](rng)
    pre = precondition_of(trial.inst, trial.given, Context.of_programs(trial.p1, trial.p2))
    assert predicate_violation(pre) <= 1e-9


@settings(max_examples=8)
@given(seeds, st.sampled_from(FORWARD_RULES))
def test_forward_rules_contain_every_image(seed, rule):
    rng = np.random.default_rng(seed)
    trial = sh.GENERATORS[rule](rng)
    ctx = Context.of_programs(trial.p1, trial.p2)
    d_ = derive_forward(trial.inst, trial.given, ctx)
    assert la.is_projector(d_.post.matrix)
    a = trial.given.on(ctx.joint)
    for _ in range(3):
        psi = a @ la.haar_state(a.shape[0], rng)
        if np.linalg.norm(psi) < 1e-9:
            continue
        out, regs = joint_run(trial, la.proj(psi / np.linalg.norm(psi)))
        post = d_.post.on(regs)
        assert la.max_abs(post @ out @ post - out) < 1e-8


def test_loop_invariant_obligation_is_reported():
    rng = np.random.default_rng(0)
    trial = sh.GENERATORS["LP"](rng)
    ctx = Context.of_programs(trial.p1, trial.p2)
    trial.inst.payload["invariant"] = RegOp(np.eye(4), ctx.joint)
    d = derive(trial.inst, trial.given, ctx)
    kinds = [o.kind for o in d.obligations]
    assert "loewner" in kinds and kinds.count("losslessness") == 2
    inv = next(o for o in d.obligations if o.kind == "loewner")
    # the identity is not below the body precondition of a random postcondition
    assert discharge(inv).status == "failed"


def test_if1_emits_side_condition():
    rng = np.random.default_rng(1)
    trial = sh.GENERATORS["IF1"](rng)
    ctx = Context.of_programs(trial.p1, trial.p2)
    trial.inst.payload["pre"] = RegOp(np.zeros((4, 4)), ctx.joint)
    d = derive(trial.inst, trial.given, ctx)
    assert len(d.gamma) == 1
    assert any(o.kind == "measurement-judgment" for o in d.obligations)


def test_rule_errors():
    rng = np.random.default_rng(2)
    ut = sh.GENERATORS["UT"](rng)
    init = sh.GENERATORS["Init"](rng)
    ctx = Context.of_programs(ut.p1, ut.p2)
    with pytest.raises(RuleError):
        derive(RuleInstance("UT", init.p1.body, init.p2.body), ut.given, ctx)
    with pytest.raises(RuleError):
        derive(RuleInstance("Nope", ut.p1.body, ut.p2.body), ut.given, ctx)
    with pytest.raises(RuleError):
        derive(RuleInstance("UT-P", ut.p1.body, ut.p2.body), ut.given, ctx)
    with pytest.raises(RuleError):
        derive(RuleInstance("LP", Skip(), Skip()), ut.given, ctx)
    bad_case = RuleInstance("Case", ut.p1.body, ut.p2.body, {"cases": [ut.inst]}, {"probs": [0.5]})
    with pytest.raises(RuleError):
        derive(bad_case, ut.given, ctx)


def test_frame_rejects_used_registers():
    rng = np.random.default_rng(3)
    trial = sh.GENERATORS["Frame"](rng)
    ctx = Context.of_programs(trial.p1, trial.p2)
    q_frame = RegOp(np.eye(4) * 0.5, (Register("q<1>", 2), Register("q<2>", 2)))
    trial.inst.payload["frame"] = q_frame
    with pytest.raises(RuleError):
        derive(trial.inst, trial.given, ctx)


def test_conseq_and_case_weaken_preconditions():
    rng = np.random.default_rng(4)
    for rule in ("Conseq", "Case"):
        trial = sh.GENERATORS[rule](rng)
        ctx = Context.of_programs(trial.p1, trial.p2)
        d = derive(trial.inst, trial.given, ctx)
        exact = derive(RuleInstance("UT", trial.p1.body, trial.p2.body), trial.given, ctx).pre
        assert loewner_residual(d.pre, exact) >= -1e-9
        assert all(discharge(o).status == "passed" for o in d.obligations)


def test_partial_correctness_of_loop_rule():
    checked = 0
    for k in range(15):
        rng = np.random.default_rng(100 + k)
        p, pre, post, d = sh.partial_correctness_trial(rng)
        if not all(discharge(o).status == "passed" for o in d.obligations):
            continue
        checked += 1
        for _ in range(20):
            rho = la.random_density(2, rng)
            assert sh.partial_correctness_margin(p, pre, post, rho) >= -1e-9
    assert checked >= 10


def test_qpd_axioms_on_straight_line_code():
    p = parse("var q : 2;\nq := |0>; q := H[q]")
    q = (Register("q", 2),)
    post = RegOp(la.proj(np.ones(2) / np.sqrt(2)), q)
    init, had = p.body.stmts
    wp = qpd_wp([RuleInstance("Ax.Init", init), RuleInstance("Ax.UT", had)], post, q)
    # every input ends in |+>
    assert la.max_abs(wp.matrix - np.eye(2)) < 1e-12


def test_qpd_rejects_relational_rules():
    q = (Register("q", 2),)
    with pytest.raises(RuleError):
        qpd_wp(RuleInstance("UT", Skip()), RegOp(np.eye(2), q), q)
