"""Monte Carlo estimation of expectation values through a two-term QPD.

A decomposition N = c1 M1 - c2 M2 with kappa = c1 + c2 is simulated by drawing
term j with probability c_j / kappa and recording kappa * sign_j * tr(O M_j(rho)).
The terms are applied exactly through their Choi matrices, so a sample's value
depends only on which term was drawn and the estimator reduces to counting.

Randomness comes from numpy's Philox counter-based generator.  The N draws of
one estimate are cut into fixed chunks of ``CHUNK`` draws; chunk k is driven by
``SeedSequence(seed, spawn_key=(k,))``, the same stream ``SeedSequence(seed).spawn``
would hand out, so any partition of chunks over workers reproduces the
sequential counts exactly.
"""

from __future__ import annotations

import json
import math
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensor
from .channel import ChoiRepresentation, apply_channel
from .measures import QpdDecomposition

HOEFFDING_CONSTANT = 2.0
OBSERVABLE_TOL = 1e-9
STATE_TOL = 1e-9
CHUNK = 1 << 16
RNG_NAME = "philox4x64-10/seedsequence"
TASK_SCHEMA = "knitbound.task/1"
RESULT_SCHEMA = "knitbound.estimate/1"
# slack for floating error in the sample-count formula before rounding up
_CEIL_SLACK = 1e-12


class TaskError(ValueError):
    pass


def _ceil(x: float) -> int:
    return math.ceil(x - _CEIL_SLACK * max(1.0, abs(x)))


def required_samples(kappa: float, delta: float, epsilon: float) -> int:
    """Hoeffding sample count for outcomes in [-kappa, kappa].

    Returns ceil(kappa^2 * ceil(2 ln(2/epsilon) / delta^2)).  The inner rounding
    makes the count exactly proportional to kappa^2 whenever kappa^2 is an
    integer and never undercuts 2 kappa^2 ln(2/epsilon) / delta^2.
    """
    if not (math.isfinite(kappa) and kappa >= 1.0):
        raise TaskError(f"kappa must be >= 1, got {kappa}")
    if not 0.0 < delta <= 1.0:
        raise TaskError(f"delta must lie in (0, 1], got {delta}")
    if not 0.0 < epsilon < 1.0:
        raise TaskError(f"epsilon must lie in (0, 1), got {epsilon}")
    base = _ceil(HOEFFDING_CONSTANT * math.log(2.0 / epsilon) / delta ** 2)
    return _ceil(kappa * kappa * base)


# ----------------------------------------------------------------------------
# States and observables by qubit
# ----------------------------------------------------------------------------

_KETS = {
    "0": np.array([1, 0], dtype=complex),
    "1": np.array([0, 1], dtype=complex),
    "+": np.array([1, 1], dtype=complex) / math.sqrt(2),
    "-": np.array([1, -1], dtype=complex) / math.sqrt(2),
    "r": np.array([1, 1j], dtype=complex) / math.sqrt(2),
    "l": np.array([1, -1j], dtype=complex) / math.sqrt(2),
}

_PAULIS = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

_LABEL = re.compile(r"q(\d+)'?(?:#(\d+))?$")


def natural_order(labels) -> list[int]:
    """Positions of ``labels`` sorted by (copy, qubit number).

    Layouts list A-side factors first, so for a cut like "2|13" the factor
    order is q2, q1, q3.  Specs on the command line are written in qubit order.
    """
    keys = []
    for i, lb in enumerate(labels):
        m = _LABEL.match(lb)
        if m is None:
            return list(range(len(labels)))
        keys.append((int(m.group(2) or 1), int(m.group(1)), i))
    return [k[2] for k in sorted(keys)]


def _to_layout(ops: list[np.ndarray], labels) -> np.ndarray:
    """Tensor single-factor operators given in natural order into layout order."""
    order = natural_order(labels)
    placed = [None] * len(labels)
    for op, pos in zip(ops, order):
        placed[pos] = op
    return tensor.kron(*placed)


def product_state(spec: str, labels) -> np.ndarray:
    """Density matrix of a product of single-qubit states such as "+0"."""
    if len(spec) != len(labels):
        raise TaskError(f"state {spec!r} has {len(spec)} qubits, the channel takes {len(labels)}")
    try:
        kets = [_KETS[ch] for ch in spec]
    except KeyError as exc:
        raise TaskError(f"unknown single-qubit state {exc.args[0]!r}; use one of {''.join(_KETS)}") from None
    return _to_layout([np.outer(k, k.conj()) for k in kets], labels)


def pauli_observable(spec: str, labels) -> np.ndarray:
    """Pauli string such as "ZZ" on the output factors."""
    spec = spec.upper()
    if len(spec) != len(labels):
        raise TaskError(f"observable {spec!r} has {len(spec)} qubits, the channel outputs {len(labels)}")
    try:
        ops = [_PAULIS[ch] for ch in spec]
    except KeyError as exc:
        raise TaskError(f"unknown Pauli {exc.args[0]!r}") from None
    return _to_layout(ops, labels)


# ----------------------------------------------------------------------------
# Task
# ----------------------------------------------------------------------------


@dataclass
class EstimationTask:
    qpd: QpdDecomposition
    input_state: np.ndarray
    observable: np.ndarray
    delta: float
    epsilon: float
    seed: int

    def __post_init__(self):
        target = self.qpd.target
        self.input_state = np.asarray(self.input_state, dtype=complex)
        self.observable = np.asarray(self.observable, dtype=complex)
        if self.input_state.shape != (target.d_in, target.d_in):
            raise TaskError(f"input state shape {self.input_state.shape} does not match input dimension {target.d_in}")
        if self.observable.shape != (target.d_out, target.d_out):
            raise TaskError(f"observable shape {self.observable.shape} does not match output dimension {target.d_out}")
        if not tensor.is_hermitian(self.input_state, STATE_TOL) or tensor.min_eigenvalue(self.input_state) < -STATE_TOL:
            raise TaskError("input state is not positive semidefinite")
        if abs(np.trace(self.input_state).real - 1.0) > STATE_TOL:
            raise TaskError("input state does not have unit trace")
        if not tensor.is_hermitian(self.observable, OBSERVABLE_TOL):
            raise TaskError("observable is not Hermitian")
        if tensor.spectral_norm(self.observable) > 1.0 + OBSERVABLE_TOL:
            raise TaskError("observable has spectral norm above 1")
        if not (0.0 < self.delta <= 1.0 and 0.0 < self.epsilon < 1.0):
            raise TaskError("delta must lie in (0, 1] and epsilon in (0, 1)")
        if not 0 <= int(self.seed) < 1 << 64:
            raise TaskError("seed must be a 64-bit unsigned integer")
        self.seed = int(self.seed)

    @property
    def kappa(self) -> float:
        return self.qpd.kappa

    @property
    def samples(self) -> int:
        return required_samples(self.kappa, self.delta, self.epsilon)

    def truth(self) -> float:
        """tr(O N(rho)) computed directly from the target channel."""
        out = apply_channel(self.qpd.target, self.input_state)
        return float(np.real(np.trace(self.observable @ out)))

    def term_values(self) -> tuple[float, np.ndarray]:
        """Probability of drawing the first term and the value of each term's samples."""
        kappa = self.kappa
        vals = []
        for coef, m in self.qpd.terms:
            out = apply_channel(m, self.input_state)
            vals.append(kappa * math.copysign(1.0, coef) * float(np.real(np.trace(self.observable @ out))))
        if len(vals) == 1:
            vals.append(0.0)
        return self.qpd.c1 / kappa, np.array(vals)

    def with_seed(self, seed: int) -> "EstimationTask":
        return EstimationTask(self.qpd, self.input_state, self.observable, self.delta, self.epsilon, seed)

    def to_json(self) -> dict:
        def enc(m):
            return {"re": np.real(m).tolist(), "im": np.imag(m).tolist()}

        return {
            "schema": TASK_SCHEMA,
            "c1": self.qpd.c1,
            "c2": self.qpd.c2,
            "target": self.qpd.target.to_json(),
            "m1": self.qpd.choi_m1.to_json(),
            "m2": None if self.qpd.choi_m2 is None else self.qpd.choi_m2.to_json(),
            "input_state": enc(self.input_state),
            "observable": enc(self.observable),
            "delta": self.delta,
            "epsilon": self.epsilon,
            "seed": self.seed,
            "rng": RNG_NAME,
        }

    @classmethod
    def from_json(cls, data: dict) -> "EstimationTask":
        if data.get("schema") != TASK_SCHEMA:
            raise TaskError(f"unsupported task schema {data.get('schema')!r}")

        def dec(d):
            return np.asarray(d["re"], dtype=float) + 1j * np.asarray(d["im"], dtype=float)

        m2 = data.get("m2")
        qpd = QpdDecomposition(
            float(data["c1"]), float(data["c2"]),
            ChoiRepresentation.from_json(data["m1"]),
            None if m2 is None else ChoiRepresentation.from_json(m2),
            ChoiRepresentation.from_json(data["target"]),
        )
        return cls(qpd, dec(data["input_state"]), dec(data["observable"]),
                   float(data["delta"]), float(data["epsilon"]), int(data["seed"]))


# ----------------------------------------------------------------------------
# Sampling
# ----------------------------------------------------------------------------


def _chunk_generator(seed: int, k: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(k,))))


def _chunk_sizes(n: int) -> list[int]:
    full, rest = divmod(n, CHUNK)
    return [CHUNK] * full + ([rest] if rest else [])


def _draw(seed: int, k: int, size: int, p_first: float) -> np.ndarray:
    """Term indices (0 or 1) of chunk k."""
    return (_chunk_generator(seed, k).random(size) >= p_first).astype(np.int8)


def _count_first(seed: int, p_first: float, chunks: list[tuple[int, int]]) -> int:
    return sum(int(size - np.count_nonzero(_draw(seed, k, size, p_first))) for k, size in chunks)


def sample_indices(task: EstimationTask, n: int | None = None) -> np.ndarray:
    """The full sequence of drawn term indices (0 for M1, 1 for M2)."""
    n = task.samples if n is None else int(n)
    p_first, _ = task.term_values()
    parts = [_draw(task.seed, k, size, p_first) for k, size in enumerate(_chunk_sizes(n))]
    return np.concatenate(parts) if parts else np.zeros(0, dtype=np.int8)


def sample_values(task: EstimationTask, n: int | None = None) -> np.ndarray:
    """Per-sample values kappa * sign_j * tr(O M_j(rho))."""
    _, vals = task.term_values()
    return vals[sample_indices(task, n)]


def _first_counts(task: EstimationTask, n: int, p_first: float, workers: int) -> int:
    chunks = list(enumerate(_chunk_sizes(n)))
    if workers <= 1 or len(chunks) <= 1:
        return _count_first(task.seed, p_first, chunks)
    parts = [chunks[i::workers] for i in range(workers)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_count_first, task.seed, p_first, part) for part in parts if part]
        return sum(f.result() for f in futures)


def estimate_expectation(task: EstimationTask, workers: int = 1) -> tuple[float, int]:
    """Sample mean of the QPD estimator and the number of samples drawn."""
    task.qpd.validate()
    n = task.samples
    p_first, vals = task.term_values()
    n1 = _first_counts(task, n, p_first, workers)
    # integer counts keep the merged result independent of the partition
    return float((n1 * vals[0] + (n - n1) * vals[1]) / n), n


@dataclass
class EstimationResult:
    seed: int
    samples: int
    estimate: float
    truth: float
    abs_error: float
    kappa: float
    delta: float
    epsilon: float
    rng: str = RNG_NAME

    @property
    def within_delta(self) -> bool:
        return self.abs_error <= self.delta

    def to_json(self) -> dict:
        out = asdict(self)
        out["schema"] = RESULT_SCHEMA
        out["within_delta"] = self.within_delta
        return out


def run_task(task: EstimationTask, workers: int = 1) -> EstimationResult:
    est, n = estimate_expectation(task, workers)
    truth = task.truth()
    return EstimationResult(task.seed, n, est, truth, abs(est - truth), task.kappa, task.delta, task.epsilon)


def trial_seeds(master_seed: int, trials: int) -> list[int]:
    """Independent 64-bit seeds derived from one master seed."""
    children = np.random.SeedSequence(int(master_seed)).spawn(int(trials))
    return [int(c.generate_state(1, np.uint64)[0]) for c in children]


@dataclass
class CoverageReport:
    master_seed: int
    trials: int
    delta: float
    epsilon: float
    kappa: float
    samples: int
    truth: float
    coverage: float
    max_abs_error: float
    results: list = field(default_factory=list)

    def to_json(self, include_trials: bool = True) -> dict:
        out = {k: v for k, v in asdict(self).items() if k != "results"}
        out["schema"] = RESULT_SCHEMA
        out["rng"] = RNG_NAME
        if include_trials:
            out["results"] = [r.to_json() for r in self.results]
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)


def run_trials(task: EstimationTask, trials: int, workers: int = 1) -> CoverageReport:
    """Repeat the estimate with seeds derived from ``task.seed``; report coverage of delta.

    With several workers whole trials are farmed out; each trial's draws depend
    only on its own seed, so the report does not depend on ``workers``.
    """
    if trials < 1:
        raise TaskError("need at least one trial")
    tasks = [task.with_seed(s) for s in trial_seeds(task.seed, trials)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_task, tasks))
    else:
        results = [run_task(t) for t in tasks]
    hits = sum(r.within_delta for r in results)
    return CoverageReport(
        master_seed=task.seed,
        trials=trials,
        delta=task.delta,
        epsilon=task.epsilon,
        kappa=task.kappa,
        samples=results[0].samples,
        truth=results[0].truth,
        coverage=hits / trials,
        max_abs_error=max(r.abs_error for r in results),
        results=results,
    )
