import json

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from knitbound import tensor
from knitbound.sdpsolver import (
    CompiledSdp, ModelError, Problem, embed_hermitian, extract_hermitian, solve,
)
from corpus import corpus
from oracle import cutting_plane

CORPUS = corpus()


# -- small programs with known optima ------------------------------------------


def test_scalar_lmi():
    p = Problem("scalar")
    t = p.scalar("t")
    p.add_psd(t - 2.5)
    p.minimize(t)
    sol = solve(p)
    assert sol.optimal
    assert sol.primal_objective == pytest.approx(2.5, abs=1e-7)
    assert sol["t"] == pytest.approx(2.5, abs=1e-6)


def test_trace_above_identity():
    p = Problem("trace")
    x = p.hermitian("X", 2, psd=True)
    p.add_psd(x - np.eye(2))
    p.minimize(x.trace())
    sol = solve(p)
    assert sol.optimal
    assert sol.primal_objective == pytest.approx(2.0, abs=1e-7)
    np.testing.assert_allclose(sol["X"], np.eye(2), atol=1e-5)


def test_ppt_overlap_with_maximally_entangled_state():
    # PPT states have overlap at most 1/2 with a two-qubit maximally entangled state
    phi = tensor.max_entangled(2)
    p = Problem("ppt-overlap")
    x = p.hermitian("X", 4, psd=True)
    p.add_eq(x.trace() - 1.0)
    p.add_psd(x.ptranspose([2, 2], [1]))
    p.maximize(x.inner(phi))
    sol = solve(p)
    assert sol.optimal
    assert sol.primal_objective == pytest.approx(0.5, abs=1e-6)


def test_marginal_norm_with_partial_trace_and_kron():
    p = Problem("marginal")
    t = p.scalar("t")
    x = p.hermitian("X", 4, psd=True)
    p.add_eq(x.trace() - 1.0)
    p.add_psd(t.times(np.eye(2)) - x.ptrace([2, 2], [0]))
    # kron_eye leaves the optimum alone here; it only has to compile consistently
    p.add_psd(t.times(np.eye(2)).kron_eye(2) - x.ptrace([2, 2], [0]).kron_eye(2))
    p.minimize(t)
    sol = solve(p)
    assert sol.optimal
    assert sol.primal_objective == pytest.approx(0.5, abs=1e-6)


def test_maximize_reports_user_sense():
    p = Problem("max")
    x = p.scalar("x")
    p.add_psd(3.0 - x)
    p.maximize(x * 2.0)
    sol = solve(p)
    assert sol.primal_objective == pytest.approx(6.0, abs=1e-6)
    assert sol.dual_objective == pytest.approx(6.0, abs=1e-5)


# -- status detection ------------------------------------------------------------


def test_infeasible_detected():
    p = Problem("infeasible")
    x = p.scalar("x")
    p.add_psd(x - 1.0)
    p.add_psd(-x)
    p.minimize(x)
    assert solve(p).status == "infeasible"


def test_unbounded_detected():
    p = Problem("unbounded")
    x = p.scalar("x")
    p.add_psd(-x)
    p.minimize(x)
    assert solve(p).status == "unbounded"


def test_iteration_cap_returns_best_iterate():
    sol = solve(CORPUS[0].problem, max_iters=2)
    assert sol.status == "numerical-failure"
    assert sol.iterations == 2
    assert sol.x is not None and np.all(np.isfinite(sol.x))


@pytest.mark.parametrize("tol", [1e-11, 1e-3])
def test_tolerance_range_enforced(tol):
    with pytest.raises(ValueError):
        solve(CORPUS[0].problem, tol=tol)


def test_model_errors():
    p = Problem("errors")
    x = p.hermitian("X", 2)
    with pytest.raises(ModelError):
        x + np.eye(3)
    with pytest.raises(ModelError):
        x * 1j
    q = Problem("other")
    with pytest.raises(ModelError):
        q.add_psd(x)
    with pytest.raises(ModelError):
        p.minimize(x)


# -- determinism, serialization, embedding ----------------------------------------


def test_determinism():
    a = solve(CORPUS[2].problem)
    b = solve(CORPUS[2].problem)
    assert abs(a.primal_objective - b.primal_objective) <= 1e-9
    assert a.iterations == b.iterations


def test_json_dump_replays_to_same_optimum():
    case = CORPUS[3]
    cp = case.problem.compile()
    data = json.loads(cp.dumps())
    assert data["schema"] == "knitbound.sdp/1"
    again = CompiledSdp.from_json(data)
    assert solve(again).primal_objective == pytest.approx(solve(cp).primal_objective, abs=1e-8)


def test_embed_identity():
    e = embed_hermitian(np.eye(2))
    np.testing.assert_array_equal(e, np.eye(4))
    np.testing.assert_allclose(np.linalg.eigvalsh(e), [1, 1, 1, 1])


def test_embed_pauli_y():
    y = np.array([[0, -1j], [1j, 0]])
    e = embed_hermitian(y)
    assert np.all(e == e.T)
    np.testing.assert_allclose(np.linalg.eigvalsh(e), [-1, -1, 1, 1], atol=1e-12)


def test_embed_partial_transpose_of_max_entangled():
    pt = tensor.partial_transpose(tensor.max_entangled(2), [2, 2], [1])
    assert np.linalg.eigvalsh(embed_hermitian(pt))[0] == pytest.approx(-0.5)


@st.composite
def hermitian_matrices(draw, max_dim=6):
    n = draw(st.integers(1, max_dim))
    floats = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
    re = draw(arrays(float, (n, n), elements=floats))
    im = draw(arrays(float, (n, n), elements=floats))
    m = re + 1j * im
    return (m + m.conj().T) / 2


@given(hermitian_matrices())
def test_embed_round_trip(h):
    back = extract_hermitian(embed_hermitian(h))
    assert np.max(np.abs(back - h)) <= 1e-12
    assert np.max(np.abs(back - back.conj().T)) <= 1e-12


@given(hermitian_matrices())
def test_embed_doubles_spectrum(h):
    w = np.linalg.eigvalsh(h)
    we = np.linalg.eigvalsh(embed_hermitian(h))
    np.testing.assert_allclose(we, np.sort(np.repeat(w, 2)), atol=1e-9 * max(1, np.abs(w).max()))


# -- random corpus ---------------------------------------------------------------------


@pytest.mark.parametrize("case", CORPUS, ids=[f"{c.kind}-{'c' if c.cplx else 'r'}{c.dim}-{i}" for i, c in enumerate(CORPUS)])
def test_corpus_against_cutting_plane(case):
    sol = solve(case.problem)
    assert sol.optimal
    lower, upper, _ = cutting_plane(case.lmi)
    ref = case.sign * 0.5 * (lower + upper)
    assert abs(sol.primal_objective - ref) <= 1e-4
    # objectives agree to the stopping tolerance; their difference can take either sign
    # by up to that much because iterates are feasible only to feastol
    tol = 1e-7
    assert abs(sol.primal_objective - sol.dual_objective) <= tol * (1 + abs(sol.primal_objective))


@pytest.mark.parametrize("case", [c for c in CORPUS if c.cplx])
def test_corpus_embedding_matches_native(case):
    native = solve(case.problem)
    real = solve(case.problem, embed=True)
    assert real.optimal
    assert abs(native.primal_objective - real.primal_objective) <= 1e-5
