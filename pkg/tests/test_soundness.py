import numpy as np
import pytest

from rqpd import linalg as la
from rqpd.outline import discharge
from rqpd.rules import PROJECTIVE_RULES, RULES
from rqpd.soundness import GENERATORS, partial_correctness_margin, partial_correctness_trial, rule_outcome


def test_every_relational_rule_has_a_generator():
    # the single-program loop rule is covered by the partial-correctness check below
    assert set(GENERATORS) == (set(RULES) | set(PROJECTIVE_RULES)) - {"R.LP"}


@pytest.mark.parametrize("rule", sorted(GENERATORS))
def test_random_instances_are_valid(rule):
    out = rule_outcome(rule)
    assert out.instances == 10, out.failures
    assert out.falsified == 0 and out.inconclusive == 0, out.failures
    assert out.worst_margin >= -1e-6


def test_single_program_loop_rule():
    trials = 0
    for k in range(10):
        rng = np.random.default_rng([7, k])
        p, pre, post, d = partial_correctness_trial(rng)
        if any(discharge(o).status != "passed" for o in d.obligations):
            continue
        trials += 1
        worst = min(partial_correctness_margin(p, pre, post, la.random_density(2, rng)) for _ in range(100))
        assert worst >= -1e-9
    assert trials >= 5
