import numpy as np
import pytest
from hypothesis import given, strategies as st

from knitbound import channel as ch
from knitbound import symmetry as S
from knitbound import tensor


def dense(p, n):
    return S.pauli_matrix(p, n).toarray()


@given(st.integers(1, 3), st.data())
def test_pauli_matrices_are_hermitian_involutions(n, data):
    p = data.draw(st.integers(0, 4**n - 1))
    m = dense(p, n)
    np.testing.assert_allclose(m, m.conj().T, atol=1e-15)
    np.testing.assert_allclose(m @ m, np.eye(2**n), atol=1e-15)


@given(st.integers(1, 3), st.data())
def test_symplectic_form_matches_commutation(n, data):
    a = data.draw(st.integers(0, 4**n - 1))
    b = data.draw(st.integers(0, 4**n - 1))
    ma, mb = dense(a, n), dense(b, n)
    sign = -1 if S.symplectic(a, b, n) else 1
    np.testing.assert_allclose(ma @ mb, sign * mb @ ma, atol=1e-14)


def test_pauli_coefficients_match_traces():
    rng = np.random.default_rng(3)
    n = 2
    m = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    t = S.pauli_coefficients(m, n)
    for p in range(16):
        x, z = S.split(p, n)
        assert t[x, z] == pytest.approx(np.trace(dense(p, n) @ m), abs=1e-12)


def test_apply_pauli_matches_matrix():
    rng = np.random.default_rng(4)
    v = rng.normal(size=(8, 3)) + 1j * rng.normal(size=(8, 3))
    for p in (0, 5, 37, 63):
        np.testing.assert_allclose(S.apply_pauli(p, 3, v), dense(p, 3) @ v, atol=1e-14)


def test_gf2_basis_spans_generators():
    gens = [0b0110, 0b1100, 0b1010, 0b0001]
    basis = S.gf2_basis(gens)
    assert len(basis) == 3
    sub = S.PauliSubspace(2, gens)
    assert all(sub.contains(g) for g in gens)
    assert len(sub.elements) == 8


def test_restrict_prefix_keeps_identity_tail_strings():
    n = 2
    zz = (0 << n) | 0b11
    zi = (0 << n) | 0b10
    sub = S.PauliSubspace(n, [zz, zi])
    pre = sub.restrict_prefix(1)
    assert pre.elements == (0, 1)  # I and Z on the first qubit


def test_symplectic_basis_structure():
    c = ch.gate_channel("toffoli", "1|23")
    sub = S.PauliSubspace.from_operators(6, c.matrix)
    center, pairs = sub.symplectic_basis()
    assert len(center) + 2 * len(pairs) == sub.rank
    for z in center:
        assert all(S.symplectic(z, e, 6) == 0 for e in sub.basis)
    for i, (a, b) in enumerate(pairs):
        assert S.symplectic(a, b, 6) == 1
        for j, (c2, d2) in enumerate(pairs):
            if i != j:
                assert S.symplectic(a, c2, 6) == S.symplectic(a, d2, 6) == 0


@pytest.mark.parametrize("gate,cut", [("cnot", None), ("swap", None), ("toffoli", "1|23"), ("cswap", "12|3")])
def test_blocks_reproduce_spectrum(gate, cut):
    c = ch.gate_channel(gate, cut)
    n = len(c.layout)
    jt = tensor.partial_transpose(c.matrix, c.layout, c.b_labels)
    sub = S.PauliSubspace.from_operators(n, c.matrix, jt)
    blocks = sub.blocks()
    assert blocks is not None
    mult = sub.block_multiplicity()
    for m in (c.matrix, jt):
        spec = np.concatenate([np.linalg.eigvalsh(u.conj().T @ m @ u) for u in blocks])
        full = np.linalg.eigvalsh(m)
        np.testing.assert_allclose(np.sort(np.repeat(spec, mult)), full, atol=1e-9)


def test_blocks_are_orthonormal_isometries():
    c = ch.gate_channel("swap")
    sub = S.PauliSubspace.from_operators(4, c.matrix)
    blocks = sub.blocks()
    stacked = np.concatenate(blocks, axis=1)
    assert stacked.shape[1] * sub.block_multiplicity() == 16
    np.testing.assert_allclose(stacked.conj().T @ stacked, np.eye(stacked.shape[1]), atol=1e-12)


def test_full_subspace_has_no_blocks():
    rng = np.random.default_rng(0)
    m = rng.normal(size=(4, 4))
    sub = S.PauliSubspace.from_operators(2, m + m.T)
    assert sub.is_full
    assert sub.blocks() is None


def test_qubit_count():
    assert S.qubit_count([2, 2, 2]) == 3
    assert S.qubit_count([2, 3]) is None
