import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rqpd import linalg as la
from rqpd.spaces import Register, RegOp, conjugate_local, embed, extend, reduce_to, reduce_vector, reorder, trace_out

A, B, C = Register("a", 2), Register("b", 3), Register("c", 2)
seeds = st.integers(0, 2**31 - 1)


def test_register_validation_and_tags():
    with pytest.raises(ValueError):
        Register("x", 0)
    assert A.tagged(2).name == "a<2>"


def test_regop_shape_is_checked():
    with pytest.raises(ValueError):
        RegOp(np.eye(3), (A,))


@given(seeds)
def test_embed_matches_explicit_kron(seed):
    rng = np.random.default_rng(seed)
    op = la.random_hermitian(2, rng)
    full = embed(op, (C,), (A, B, C))
    assert la.max_abs(full - np.kron(np.eye(6), op)) < 1e-12


@given(seeds)
def test_conjugate_local_agrees_with_dense_conjugation(seed):
    rng = np.random.default_rng(seed)
    rho = la.random_density(12, rng)
    kraus = la.random_channel(6, 6, rng, 2)
    layout = (A, B, C)
    # channel on (c, b) in that order
    dense = sum(embed(k, (C, B), layout) @ rho @ embed(k, (C, B), layout).conj().T for k in kraus)
    assert la.max_abs(conjugate_local(kraus, rho, layout, (C, B)) - dense) < 1e-10


@given(seeds)
def test_conjugate_local_batches(seed):
    rng = np.random.default_rng(seed)
    batch = np.stack([la.random_density(4, rng) for _ in range(3)])
    u = la.haar_unitary(2, rng)
    out = conjugate_local([u], batch, (A, C), (A,))
    for i in range(3):
        assert la.max_abs(out[i] - conjugate_local([u], batch[i], (A, C), (A,))) < 1e-12


@given(seeds)
def test_reorder_and_reduce(seed):
    rng = np.random.default_rng(seed)
    ra, rb = la.random_density(2, rng), la.random_density(3, rng)
    m = np.kron(ra, rb)
    assert la.max_abs(reorder(m, (A, B), (B, A)) - np.kron(rb, ra)) < 1e-12
    assert la.max_abs(reduce_to(m, (A, B), (B,)) - rb) < 1e-12
    psi = la.haar_state(6, rng)
    assert la.max_abs(reduce_vector(psi, (A, B), (B,)) - reduce_to(la.proj(psi), (A, B), (B,))) < 1e-12


def test_trace_out_keeps_order():
    rho = la.tensor(np.diag([1.0, 0]), np.eye(3) / 3, np.diag([0, 1.0]))
    out, regs = trace_out(rho, (A, B, C), (B,))
    assert [r.name for r in regs] == ["a", "c"]
    assert la.max_abs(out - np.diag([0, 1.0, 0, 0])) < 1e-12


def test_regop_expect_and_arithmetic():
    op = RegOp(np.diag([1.0, 0.0]), (A,))
    rho = np.kron(np.diag([0.25, 0.75]), np.eye(2) / 2)
    assert op.expect(rho, (A, C)) == pytest.approx(0.25)
    total = op + RegOp(np.diag([0.0, 1.0]), (C,))
    assert total.regs == (A, C)
    assert la.max_abs(total.on((C, A)) - (extend(np.diag([1.0, 0]), (A,), (C, A)) + np.kron(np.diag([0.0, 1.0]), np.eye(2)))) < 1e-12
    assert (0.5 * op).close_to(RegOp(np.diag([0.5, 0.0]), (A,)))
