import cvxpy as cp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rqpd import linalg as la
from rqpd.casebook.scenarios import GAP_OBJECTIVE
from rqpd.coupling import (
    CouplingProblem,
    is_coupling,
    is_separable_2x2,
    lifting_exists,
    make_coupling,
    marginals,
    max_coupling_value,
    max_split_coupling_value,
)

seeds = st.integers(0, 2**31 - 1)


def oracle_value(rho1, rho2, objective, ppt=False):
    """Same problem posed directly in cvxpy (real embedding of the complex variable)."""
    d1, d2 = rho1.shape[0], rho2.shape[0]
    n = d1 * d2
    sigma = cp.Variable((n, n), hermitian=True)
    cons = [sigma >> 0, cp.partial_trace(sigma, (d1, d2), 1) == rho1, cp.partial_trace(sigma, (d1, d2), 0) == rho2]
    if ppt:
        cons.append(cp.partial_transpose(sigma, (d1, d2), 1) >> 0)
    prob = cp.Problem(cp.Maximize(cp.real(cp.trace(objective @ sigma))), cons)
    prob.solve(solver="CLARABEL")
    return prob.value


def test_gap_values():
    half = np.eye(2) / 2
    full = max_coupling_value(CouplingProblem(half, half, GAP_OBJECTIVE))
    ppt = max_coupling_value(CouplingProblem(half, half, GAP_OBJECTIVE, ppt=True))
    assert full.value == pytest.approx(1.0, abs=1e-5)
    assert ppt.value == pytest.approx(2 / 3, abs=1e-4)
    assert is_coupling(full.witness, half, half)


@settings(max_examples=12)
@given(seeds, st.sampled_from([(2, 2), (2, 3), (3, 2)]), st.booleans())
def test_value_matches_cvxpy(seed, shape, ppt):
    rng = np.random.default_rng(seed)
    d1, d2 = shape
    rho1, rho2 = la.random_density(d1, rng), la.random_density(d2, rng)
    a = la.random_hermitian(d1 * d2, rng)
    sol = max_coupling_value(CouplingProblem(rho1, rho2, a, ppt=ppt))
    assert sol.ok
    assert sol.value == pytest.approx(oracle_value(rho1, rho2, a, ppt), abs=1e-5)
    assert is_coupling(sol.witness, rho1, rho2, 1e-6)
    assert np.real(np.trace(a @ sol.witness)) == pytest.approx(sol.value, abs=1e-6)


@given(seeds)
def test_rank_deficient_marginals(seed):
    rng = np.random.default_rng(seed)
    rho1 = la.random_density(3, rng, rank=1)
    rho2 = la.random_density(2, rng)
    a = la.random_hermitian(6, rng)
    sol = max_coupling_value(CouplingProblem(rho1, rho2, a))
    # a pure marginal forces the product coupling
    assert sol.value == pytest.approx(np.real(np.trace(a @ np.kron(rho1, rho2))), abs=1e-6)


def test_mismatched_traces_are_infeasible():
    sol = max_coupling_value(CouplingProblem(np.eye(2) / 2, np.eye(2) / 4, np.eye(4)))
    assert sol.status == "infeasible"


def test_problem_validates_shapes():
    with pytest.raises(ValueError):
        CouplingProblem(np.eye(2) / 2, np.eye(2) / 2, np.eye(3))


@given(seeds)
def test_constructions_are_couplings(seed):
    rng = np.random.default_rng(seed)
    rho1, rho2 = la.random_density(2, rng), la.random_density(3, rng)
    assert is_coupling(make_coupling("tensor", rho1, rho2), rho1, rho2)
    rho = la.random_density(3, rng)
    sigma = make_coupling("basis_identity", rho)
    assert is_coupling(sigma, rho, rho)
    assert la.max_abs(la.sym_projector(3) @ sigma @ la.sym_projector(3) - sigma) < 1e-9
    u = la.haar_unitary(3, rng)
    unif = make_coupling("unitary_unif", 3, u)
    m1, m2 = marginals(unif, 3, 3)
    assert la.max_abs(m1 - np.eye(3) / 3) < 1e-12 and la.max_abs(m2 - np.eye(3) / 3) < 1e-12


def test_unknown_construction():
    with pytest.raises(ValueError):
        make_coupling("nonsense")


@settings(max_examples=15)
@given(seeds)
def test_symmetric_lifting_iff_equal(seed):
    rng = np.random.default_rng(seed)
    sym = la.sym_projector(2)
    rho = la.random_density(2, rng)
    assert lifting_exists(rho, rho, sym).ok
    other = la.random_density(2, rng)
    if la.max_abs(other - rho) > 1e-3:
        sol = lifting_exists(rho, other, sym)
        assert not sol.ok and sol.residuals["lifting_gap"] > 1e-6


def test_split_coupling_bounds_whole():
    rng = np.random.default_rng(4)
    rho1, rho2 = la.random_density(2, rng), la.random_density(2, rng)
    a = la.random_predicate(4, rng)
    whole = max_coupling_value(CouplingProblem(rho1, rho2, a))
    # splitting rho1 in two and giving each part the same objective reproduces the whole problem
    sol = max_split_coupling_value([rho1 / 2, rho1 / 2], rho2, [a, a])
    assert sol.value == pytest.approx(whole.value, abs=1e-5)


def test_separability_2x2():
    assert is_separable_2x2(np.eye(4) / 4)
    assert not is_separable_2x2(la.proj(la.max_entangled(2)))
