import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from knitbound import channel as ch
from knitbound import measures as M
from knitbound import qpdsim as Q
from knitbound.qpdsim import EstimationTask, TaskError


def make_task(choi, state, obs, delta=0.05, epsilon=0.05, seed=7):
    _, qpd, _ = M.gamma_ppt(choi)
    return EstimationTask(qpd, Q.product_state(state, choi.input_labels),
                          Q.pauli_observable(obs, choi.output_labels), delta, epsilon, seed)


@pytest.fixture(scope="module")
def cnot_task():
    return make_task(ch.gate_channel("cnot"), "+0", "ZZ")


@pytest.fixture(scope="module")
def spread_task():
    # both terms carry value +-kappa here, so the estimator has real variance
    return make_task(ch.gate_channel("cnot"), "00", "II")


# -- sample counts ------------------------------------------------------------------


def test_required_samples_examples():
    assert Q.required_samples(1.0, 0.1, 0.05) == 738
    assert Q.required_samples(3.0, 0.1, 0.05) == 9 * 738
    assert Q.required_samples(3.0, 0.05, 0.05) == 26568
    assert Q.required_samples(1.0, 1.0, 2 / math.e ** 2) == 4


@pytest.mark.parametrize("args", [(0.5, 0.1, 0.1), (math.nan, 0.1, 0.1), (1, 0, 0.1), (1, 1.5, 0.1),
                                  (1, 0.1, 0), (1, 0.1, 1)])
def test_required_samples_rejects(args):
    with pytest.raises(TaskError):
        Q.required_samples(*args)


@given(st.floats(1, 20), st.floats(1e-3, 1), st.floats(1e-6, 0.999))
def test_required_samples_meets_hoeffding(kappa, delta, epsilon):
    n = Q.required_samples(kappa, delta, epsilon)
    assert n >= 2 * kappa ** 2 * math.log(2 / epsilon) / delta ** 2 * (1 - 1e-9)


@given(st.integers(1, 30), st.floats(1e-2, 1), st.floats(1e-4, 0.9))
def test_integer_kappa_scales_exactly(k, delta, epsilon):
    assert Q.required_samples(k, delta, epsilon) == k * k * Q.required_samples(1, delta, epsilon)


# -- states and observables -------------------------------------------------------------


def test_natural_order_follows_qubit_numbers():
    assert Q.natural_order(["q2", "q1", "q3"]) == [1, 0, 2]
    assert Q.natural_order(["q1#1", "q1#2", "q2#1", "q2#2"]) == [0, 2, 1, 3]


def test_product_state_respects_cut_order():
    c = ch.gate_channel("toffoli", "2|13")
    rho = Q.product_state("100", c.input_labels)
    # layout order q2 q1 q3: the excited qubit q1 sits in the second factor
    v = np.zeros(8)
    v[0b010] = 1
    np.testing.assert_allclose(rho, np.outer(v, v))


def test_spec_errors():
    labels = ("q1", "q2")
    with pytest.raises(TaskError):
        Q.product_state("0", labels)
    with pytest.raises(TaskError):
        Q.product_state("0x", labels)
    with pytest.raises(TaskError):
        Q.pauli_observable("ZQ", labels)


# -- estimates ----------------------------------------------------------------------------


def test_cnot_truth(cnot_task):
    # CNOT maps |+0> to a Bell state, on which ZZ has value 1
    assert cnot_task.truth() == pytest.approx(1.0, abs=1e-12)


def test_identity_channel_zz_samples_are_all_one():
    task = make_task(ch.identity_channel(), "00", "ZZ")
    assert np.all(Q.sample_values(task) == 1.0)
    assert Q.estimate_expectation(task)[0] == 1.0


def test_identity_channel_is_exact():
    task = make_task(ch.identity_channel(), "+r", "XY", delta=0.1)
    assert task.kappa == 1.0
    res = Q.run_task(task)
    assert res.abs_error <= 1e-12
    assert res.truth == pytest.approx(1.0)


def test_depolarized_truth_is_zero():
    task = make_task(ch.noisy_cnot(1.0), "+0", "ZZ", delta=0.2)
    assert task.truth() == pytest.approx(0.0, abs=1e-12)
    assert abs(Q.run_task(task).estimate) <= 0.2


def test_term_values_average_to_truth(spread_task):
    p, vals = spread_task.term_values()
    assert p * vals[0] + (1 - p) * vals[1] == pytest.approx(spread_task.truth(), abs=1e-9)
    assert np.all(np.abs(vals) <= spread_task.kappa + 1e-9)


def test_unbiased_with_bounded_variance(spread_task):
    x = Q.sample_values(spread_task, 100_000)
    assert x.var() <= spread_task.kappa ** 2 + 1e-9
    se = x.std() / math.sqrt(len(x))
    assert abs(x.mean() - spread_task.truth()) <= 5 * se


def test_estimate_matches_sample_sequence(spread_task):
    est, n = Q.estimate_expectation(spread_task)
    assert n == spread_task.samples
    assert est == pytest.approx(Q.sample_values(spread_task).mean(), abs=1e-12)


def test_deterministic_given_seed(spread_task):
    a = Q.estimate_expectation(spread_task)
    assert Q.estimate_expectation(spread_task) == a
    assert Q.estimate_expectation(spread_task.with_seed(8)) != a


def test_parallel_matches_sequential():
    task = make_task(ch.gate_channel("cnot"), "00", "II", delta=0.01)
    assert task.samples > 5 * Q.CHUNK
    assert Q.estimate_expectation(task, workers=3) == Q.estimate_expectation(task, workers=1)


def test_coverage(cnot_task, spread_task):
    for task in (cnot_task, spread_task):
        rep = Q.run_trials(task, 200)
        assert rep.trials == 200
        assert rep.coverage >= 1 - task.epsilon - 0.03
        assert rep.samples == task.samples


def test_trials_independent_of_workers(spread_task):
    a = Q.run_trials(spread_task, 6, workers=1)
    b = Q.run_trials(spread_task, 6, workers=2)
    assert a.to_json() == b.to_json()


def test_trial_seeds():
    s = Q.trial_seeds(1, 50)
    assert len(set(s)) == 50
    assert s == Q.trial_seeds(1, 50)
    assert all(0 <= x < 1 << 64 for x in s)


# -- serialization and validation ---------------------------------------------------------


def test_task_json_round_trip(cnot_task):
    data = json.loads(json.dumps(cnot_task.to_json()))
    assert data["rng"] == Q.RNG_NAME
    back = EstimationTask.from_json(data)
    assert back.kappa == cnot_task.kappa
    assert Q.estimate_expectation(back) == Q.estimate_expectation(cnot_task)


def test_result_json(cnot_task):
    data = Q.run_task(cnot_task).to_json()
    assert data["schema"] == Q.RESULT_SCHEMA
    assert data["seed"] == cnot_task.seed
    assert data["within_delta"] is True


def test_task_validation(cnot_task):
    qpd, rho, obs = cnot_task.qpd, cnot_task.input_state, cnot_task.observable
    bad = [
        (qpd, np.eye(8) / 8, obs, 0.1, 0.1, 1),
        (qpd, np.diag([1.5, -0.5, 0, 0]), obs, 0.1, 0.1, 1),
        (qpd, rho * 2, obs, 0.1, 0.1, 1),
        (qpd, rho, 2 * obs, 0.1, 0.1, 1),
        (qpd, rho, np.triu(np.ones((4, 4))) / 4, 0.1, 0.1, 1),
        (qpd, rho, obs, 0.0, 0.1, 1),
        (qpd, rho, obs, 0.1, 1.0, 1),
        (qpd, rho, obs, 0.1, 0.1, -1),
    ]
    for args in bad:
        with pytest.raises(TaskError):
            EstimationTask(*args)
    with pytest.raises(TaskError):
        EstimationTask.from_json({"schema": "other"})
    with pytest.raises(TaskError):
        Q.run_trials(cnot_task, 0)
