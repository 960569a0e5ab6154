import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from knitbound import channel as ch
from knitbound import tensor
from knitbound.tensor import Factor, LayoutError, NotHermitianError, SystemLayout

X = np.array([[0, 1], [1, 0]], dtype=complex)
Z = np.diag([1.0, -1.0]).astype(complex)
ZERO = np.diag([1.0, 0.0]).astype(complex)


def two_party(da=2, db=2):
    return SystemLayout((Factor("A", da, "A", "input"), Factor("B", db, "B", "input")))


# -- examples ------------------------------------------------------------------


def test_kron_examples():
    np.testing.assert_array_equal(tensor.kron(np.eye(2), np.eye(2)), np.eye(4))
    np.testing.assert_array_equal(tensor.kron(ZERO, X), np.block([[X, np.zeros((2, 2))], [np.zeros((2, 2)), np.zeros((2, 2))]]))
    ket00 = tensor.ket(0, 4)
    np.testing.assert_array_equal(tensor.kron(X, X) @ ket00, tensor.ket(3, 4))


def test_partial_trace_product_state():
    rho = np.array([[0.7, 0.2j], [-0.2j, 0.3]])
    sigma = np.array([[0.4, 0.1], [0.1, 0.6]]) * 2.0
    out = tensor.partial_trace(np.kron(rho, sigma), two_party(), ["A"])
    np.testing.assert_allclose(out, rho * np.trace(sigma), atol=1e-14)


def test_partial_trace_max_entangled_marginal():
    out = tensor.partial_trace(tensor.max_entangled(2), two_party(), ["A"])
    np.testing.assert_allclose(out, np.eye(2) / 2, atol=1e-15)


def test_partial_trace_cnot_choi_marginal():
    c = ch.gate_channel("cnot")
    out = tensor.partial_trace(c.matrix, c.layout, c.input_labels)
    np.testing.assert_allclose(out, np.eye(4), atol=1e-12)


def test_partial_transpose_product():
    rho = np.array([[0.7, 0.2j], [-0.2j, 0.3]])
    sigma = np.array([[0.5, 0.1 - 0.3j], [0.1 + 0.3j, 0.5]])
    out = tensor.partial_transpose(np.kron(rho, sigma), two_party(), ["B"])
    np.testing.assert_allclose(out, np.kron(rho, sigma.T), atol=1e-15)


def test_partial_transpose_max_entangled_is_swap():
    out = tensor.partial_transpose(tensor.max_entangled(2), two_party(), ["B"])
    np.testing.assert_allclose(out, tensor.swap_operator(2) / 2, atol=1e-15)
    np.testing.assert_allclose(tensor.hermitian_eigenvalues(out), [-0.5, 0.5, 0.5, 0.5], atol=1e-12)


def test_cnot_choi_is_not_ppt():
    c = ch.gate_channel("cnot")
    pt = tensor.partial_transpose(c.matrix, c.layout, c.b_labels)
    assert tensor.min_eigenvalue(pt) < -0.5


def test_eigenvalue_examples():
    np.testing.assert_allclose(tensor.hermitian_eigenvalues(np.eye(4)), [1, 1, 1, 1])
    np.testing.assert_allclose(tensor.hermitian_eigenvalues(Z), [-1, 1])


def test_spectral_norm_examples():
    assert tensor.spectral_norm(np.eye(5)) == pytest.approx(1.0)
    assert tensor.spectral_norm(3 * Z) == pytest.approx(3.0)
    assert tensor.spectral_norm(ch.gate_channel("cnot").matrix) == pytest.approx(4.0)


def test_non_hermitian_rejected():
    with pytest.raises(NotHermitianError):
        tensor.hermitian_eigenvalues(np.array([[0, 1], [0, 0]], dtype=complex))
    with pytest.raises(NotHermitianError):
        tensor.spectral_norm(np.array([[1, 1e-9], [0, 1]], dtype=complex))


def test_layout_errors():
    lay = two_party()
    with pytest.raises(LayoutError):
        tensor.partial_trace(np.eye(4), lay, ["C"])
    with pytest.raises(LayoutError):
        tensor.partial_transpose(np.eye(4), lay, ["Q"])
    with pytest.raises(LayoutError):
        tensor.partial_trace(np.eye(3), lay, ["A"])
    with pytest.raises(LayoutError):
        SystemLayout((Factor("A", 2, "A", "input"), Factor("A", 2, "B", "input")))
    with pytest.raises(LayoutError):
        Factor("A", 2, "C", "input")


def test_layout_selection_and_round_trip():
    c = ch.gate_channel("toffoli", "1|23")
    lay = c.layout
    assert lay.select(side="B", role="input") == ("q2", "q3")
    assert lay.select(role="output") == ("q1'", "q2'", "q3'")
    assert SystemLayout.from_dict(lay.to_dict()) == lay
    assert lay.dim == c.matrix.shape[0]


# -- properties ----------------------------------------------------------------

dims_strategy = st.lists(st.integers(1, 3), min_size=1, max_size=3).filter(lambda d: int(np.prod(d)) <= 16)


@st.composite
def hermitian_on(draw, dims=None):
    if dims is None:
        dims = draw(dims_strategy)
    n = int(np.prod(dims))
    floats = st.floats(-5, 5, allow_nan=False, allow_infinity=False)
    re = draw(arrays(float, (n, n), elements=floats))
    im = draw(arrays(float, (n, n), elements=floats))
    m = re + 1j * im
    return dims, (m + m.conj().T) / 2


@given(hermitian_on(), st.data())
def test_partial_transpose_involution(dm, data):
    dims, m = dm
    sel = data.draw(st.lists(st.integers(0, len(dims) - 1), unique=True))
    twice = tensor.partial_transpose(tensor.partial_transpose(m, dims, sel), dims, sel)
    assert np.max(np.abs(twice - m), initial=0) <= 1e-15


@given(hermitian_on(), st.data())
def test_partial_trace_preserves_trace(dm, data):
    dims, m = dm
    keep = data.draw(st.lists(st.integers(0, len(dims) - 1), unique=True))
    out = tensor.partial_trace(m, dims, keep)
    assert abs(np.trace(out) - np.trace(m)) <= 1e-12 * len(m) * max(1, np.abs(m).max())


@given(hermitian_on(dims=[2]), hermitian_on(dims=[3]))
def test_partial_trace_of_product(a, b):
    a, b = a[1], b[1]
    out = tensor.partial_trace(np.kron(a, b), [2, 3], [0])
    np.testing.assert_allclose(out, a * np.trace(b), atol=1e-11)


@given(hermitian_on(dims=[2, 2]), hermitian_on(dims=[2, 2]))
def test_spectral_norm_subadditive(a, b):
    a, b = a[1], b[1]
    assert tensor.spectral_norm(a + b) <= tensor.spectral_norm(a) + tensor.spectral_norm(b) + 1e-9


@given(hermitian_on(), st.data())
def test_partial_transpose_preserves_eigenvalue_sum(dm, data):
    dims, m = dm
    sel = data.draw(st.lists(st.integers(0, len(dims) - 1), unique=True))
    pt = tensor.partial_transpose(m, dims, sel)
    assert tensor.is_hermitian(pt)
    assert abs(tensor.hermitian_eigenvalues(pt).sum() - tensor.hermitian_eigenvalues(m).sum()) <= 1e-9 * len(m) * max(1, np.abs(m).max())


@given(hermitian_on())
def test_eigenvalues_sorted_and_sum_to_trace(dm):
    _, m = dm
    w = tensor.hermitian_eigenvalues(m)
    assert len(w) == len(m)
    assert np.all(np.diff(w) >= 0)
    assert abs(w.sum() - np.trace(m).real) <= 1e-9 * len(m) * max(1, np.abs(m).max())


@given(hermitian_on(), st.data())
def test_index_maps_match_dense_operations(dm, data):
    dims, m = dm
    sel = data.draw(st.lists(st.integers(0, len(dims) - 1), unique=True))
    perm = tensor.transpose_index(dims, sel)
    np.testing.assert_array_equal(m.reshape(-1)[perm], tensor.partial_transpose(m, dims, sel).reshape(-1))
    src, dst, dk = tensor.trace_index(dims, sel)
    out = np.zeros(dk * dk, dtype=complex)
    np.add.at(out, dst, m.reshape(-1)[src])
    np.testing.assert_allclose(out.reshape(dk, dk), tensor.partial_trace(m, dims, sel), atol=1e-12)
