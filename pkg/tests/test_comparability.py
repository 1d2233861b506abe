import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rqpd import linalg as la
from rqpd.casebook import programs as pg
from rqpd.casebook.scenarios import COMPARABLE_LOOPS
from rqpd.comparability import (
    ComparabilityError,
    check_comparability,
    collect_constraints,
    loop_bound,
    profile_gap,
    sample_comparable,
)

seeds = st.integers(0, 2**31 - 1)
TWO_IFS = """var q : 2;
let M = meas {0: [[1,0],[0,0]], 1: [[0,0],[0,1]]};
if M[q] = 0 -> q := H[q] [] 1 -> skip fi;
if M[q] = 0 -> skip [] 1 -> q := X[q] fi"""
TWO_IFS_RIGHT = """var q : 2;
let N = meas {0: [[0.5,0.5],[0.5,0.5]], 1: [[0.5,-0.5],[-0.5,0.5]]};
if N[q] = 0 -> skip [] 1 -> q := H[q] fi;
q := H[q];
if N[q] = 0 -> q := Z[q] [] 1 -> skip fi"""


def load_pair(a, b):
    return pg.load(a), pg.load(b)


def test_loop_bounds():
    assert loop_bound(2, 2) == 9
    assert loop_bound(2, 2, "tight") == 7
    assert loop_bound(2, 4, "tight") == 19
    with pytest.raises(ValueError):
        loop_bound(2, 2, "guess")


def test_working_if_constraints():
    q1, q2 = load_pair(pg.working_if_left(), pg.working_if_right())
    c = collect_constraints(q1, q2)
    plus, zero = la.proj(np.ones(2) / np.sqrt(2)), la.proj(la.ket(0, 2))
    assert check_comparability(c, plus, zero)
    assert profile_gap(q1, q2, plus, zero) < 1e-12
    assert not check_comparability(c, zero, zero)
    assert profile_gap(q1, q2, zero, zero) > 0.1
    json.dumps(c.to_dict())


@settings(max_examples=25)
@given(seeds)
def test_constraints_are_exact_for_loop_free_programs(seed):
    rng = np.random.default_rng(seed)
    q1, q2 = load_pair(TWO_IFS, TWO_IFS_RIGHT)
    c = collect_constraints(q1, q2)
    rho1, rho2 = la.random_density(2, rng), la.random_density(2, rng)
    assert check_comparability(c, rho1, rho2, 1e-6) == (profile_gap(q1, q2, rho1, rho2) <= 1e-6)
    pair = sample_comparable(c, rng)
    if pair is not None:
        assert profile_gap(q1, q2, *pair) <= 1e-7


def test_mismatched_shapes_raise():
    q1 = pg.load(pg.working_if_left())
    w = pg.load(COMPARABLE_LOOPS[0])
    with pytest.raises(ComparabilityError):
        collect_constraints(q1, w)
    with pytest.raises(ComparabilityError):
        collect_constraints(q1, pg.load(TWO_IFS))


def test_pruning_keeps_the_solution_set():
    w1, w2 = load_pair(*COMPARABLE_LOOPS)
    full = collect_constraints(w1, w2, dedup=False)
    pruned = collect_constraints(w1, w2)
    assert len(pruned) <= 4 + 16 < len(full)
    rng = np.random.default_rng(8)
    for _ in range(5):
        pair = sample_comparable(pruned, rng)
        assert pair is not None
        assert check_comparability(full, *pair, tol=1e-7)


@pytest.mark.parametrize("bound", ["algorithm", "tight"])
def test_sampled_inputs_branch_identically_at_depth_eight(bound):
    w1, w2 = load_pair(*COMPARABLE_LOOPS)
    c = collect_constraints(w1, w2, bound=bound)
    rng = np.random.default_rng(9)
    used = 0
    for _ in range(15):
        pair = sample_comparable(c, rng)
        if pair is None:
            continue
        rho1, rho2 = pair
        assert la.is_density(rho1, 1e-7, partial=False) and la.is_density(rho2, 1e-7, partial=False)
        assert profile_gap(w1, w2, rho1, rho2, max_events=8) <= 1e-7
        used += 1
    assert used >= 12


def test_identical_programs_need_equal_statistics():
    q1 = pg.load(pg.working_if_left())
    c = collect_constraints(q1, q1)
    rho = la.random_density(2, np.random.default_rng(1))
    assert check_comparability(c, rho, rho)
