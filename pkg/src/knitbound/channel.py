"""Bipartite channels in unnormalized Choi form.

A channel N: AB -> A'B' is stored as ``J = sum_ij |i><j|_{AB} (x) N(|i><j|)``
with trace ``d_A d_B``.  One tensor factor per qubit: input factor ``q<k>``
and output factor ``q<k>'`` for gate qubit ``k`` (1-based), ordered A-side
inputs, B-side inputs, A-side outputs, B-side outputs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import tensor
from .tensor import Factor, LayoutError, SystemLayout

CHOI_TOL = 1e-9
UNITARY_TOL = 1e-10
DEFAULT_DIM_CAP = 4096
CHANNEL_SCHEMA = "knitbound.channel/1"


class ChannelError(ValueError):
    """Invalid channel, gate, cut or noise specification."""


# ----------------------------------------------------------------------------
# Gate library
# ----------------------------------------------------------------------------


def _perm_unitary(perm: Sequence[int]) -> np.ndarray:
    u = np.zeros((len(perm), len(perm)), dtype=complex)
    for src, dst in enumerate(perm):
        u[dst, src] = 1.0
    return u


def _library() -> dict[str, np.ndarray]:
    iswap = np.eye(4, dtype=complex)
    iswap[1:3, 1:3] = [[0, 1j], [1j, 0]]
    return {
        "identity": np.eye(4, dtype=complex),
        "cnot": _perm_unitary([0, 1, 3, 2]),
        "swap": _perm_unitary([0, 2, 1, 3]),
        "iswap": iswap,
        "toffoli": _perm_unitary([0, 1, 2, 3, 4, 5, 7, 6]),
        "cswap": _perm_unitary([0, 1, 2, 3, 4, 6, 5, 7]),
    }


GATE_UNITARIES = _library()
GATE_NAMES = tuple(GATE_UNITARIES) + ("custom",)


def parse_cut(cut: str | Mapping[int, str], n_qubits: int) -> dict[int, str]:
    """Turn ``"1|23"`` (or an explicit qubit -> side map) into ``{1: "A", 2: "B", 3: "B"}``."""
    if isinstance(cut, str):
        parts = cut.split("|")
        if len(parts) != 2:
            raise ChannelError(f"cut {cut!r} must look like '1|23'")
        sides = {}
        for side, part in zip("AB", parts):
            for ch in part.replace(",", " ").split() if ("," in part or " " in part) else part:
                if not ch.strip():
                    continue
                try:
                    q = int(ch)
                except ValueError:
                    raise ChannelError(f"bad qubit index {ch!r} in cut {cut!r}") from None
                if q in sides:
                    raise ChannelError(f"qubit {q} appears twice in cut {cut!r}")
                sides[q] = side
    else:
        sides = {int(q): str(s) for q, s in cut.items()}
    if sorted(sides) != list(range(1, n_qubits + 1)):
        raise ChannelError(f"cut must assign each of qubits 1..{n_qubits} exactly once, got {sorted(sides)}")
    if set(sides.values()) != {"A", "B"}:
        raise ChannelError("both sides of the cut must be nonempty")
    return sides


def default_cut(n_qubits: int) -> str:
    return "1|" + "".join(str(q) for q in range(2, n_qubits + 1))


@dataclass(frozen=True)
class GateSpec:
    name: str
    cut: str | Mapping[int, str] | None = None
    unitary: np.ndarray | None = field(default=None, compare=False)

    def matrix(self) -> np.ndarray:
        if self.name == "custom":
            if self.unitary is None:
                raise ChannelError("custom gate needs a unitary")
            return np.asarray(self.unitary, dtype=complex)
        try:
            return GATE_UNITARIES[self.name]
        except KeyError:
            raise ChannelError(f"unknown gate {self.name!r}; choose from {GATE_NAMES}") from None

    @property
    def n_qubits(self) -> int:
        d = self.matrix().shape[0]
        n = int(round(np.log2(d)))
        if 2**n != d:
            raise ChannelError(f"gate dimension {d} is not a power of two")
        return n

    def sides(self) -> dict[int, str]:
        n = self.n_qubits
        return parse_cut(self.cut if self.cut is not None else default_cut(n), n)

    @property
    def label(self) -> str:
        cut = self.cut if isinstance(self.cut, str) else None
        return self.name if cut is None else f"{self.name}[{cut}]"


def qubit_layout(sides: Mapping[int, str]) -> tuple[SystemLayout, list[int]]:
    """Layout for one qubit per factor plus the natural-order -> layout permutation.

    Natural order is ``q1..qn`` inputs then ``q1'..qn'`` outputs.
    """
    n = len(sides)
    qa = [q for q in sorted(sides) if sides[q] == "A"]
    qb = [q for q in sorted(sides) if sides[q] == "B"]
    factors = []
    order = []
    for role, prime, offset in (("input", "", 0), ("output", "'", n)):
        for side, qs in (("A", qa), ("B", qb)):
            for q in qs:
                factors.append(Factor(f"q{q}{prime}", 2, side, role))
                order.append(offset + q - 1)
    return SystemLayout(tuple(factors)), order


# ----------------------------------------------------------------------------
# Choi representation
# ----------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ChoiRepresentation:
    matrix: np.ndarray
    layout: SystemLayout
    name: str = "channel"

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        object.__setattr__(self, "matrix", m)
        self.layout.check(m)
        roles = [f.role for f in self.layout.factors]
        if roles != sorted(roles, key=lambda r: r != "input"):
            raise LayoutError("Choi layout must list all input factors before output factors")
        validate_choi(m, self.layout)

    # -- views ---------------------------------------------------------------
    @property
    def input_labels(self) -> tuple[str, ...]:
        return self.layout.select(role="input")

    @property
    def output_labels(self) -> tuple[str, ...]:
        return self.layout.select(role="output")

    @property
    def b_labels(self) -> tuple[str, ...]:
        return self.layout.select(side="B")

    @property
    def d_in(self) -> int:
        return self.layout.restrict(self.input_labels).dim

    @property
    def d_out(self) -> int:
        return self.layout.restrict(self.output_labels).dim

    @property
    def input_layout(self) -> SystemLayout:
        return self.layout.restrict(self.input_labels)

    @property
    def output_layout(self) -> SystemLayout:
        return self.layout.restrict(self.output_labels)

    def normalized(self) -> np.ndarray:
        """Choi state J / (d_A d_B)."""
        return self.matrix / self.d_in

    def ptranspose_b(self) -> np.ndarray:
        return tensor.partial_transpose(self.matrix, self.layout, self.b_labels)

    def input_marginal(self) -> np.ndarray:
        return tensor.partial_trace(self.matrix, self.layout, self.input_labels)

    def renamed(self, name: str) -> "ChoiRepresentation":
        return ChoiRepresentation(self.matrix, self.layout, name)

    # -- serialization -------------------------------------------------------
    def to_json(self) -> dict:
        flat = self.matrix.reshape(-1)
        return {
            "schema": CHANNEL_SCHEMA,
            "name": self.name,
            "layout": self.layout.to_dict(),
            "dim": int(self.matrix.shape[0]),
            "entries": [[float(z.real), float(z.imag)] for z in flat],
        }

    @classmethod
    def from_json(cls, data: dict) -> "ChoiRepresentation":
        if data.get("schema") != CHANNEL_SCHEMA:
            raise ChannelError(f"unsupported channel schema {data.get('schema')!r}")
        layout = SystemLayout.from_dict(data["layout"])
        entries = np.asarray(data["entries"], dtype=float)
        dim = int(data["dim"])
        if entries.shape != (dim * dim, 2):
            raise ChannelError(f"expected {dim * dim} complex entries, got array of shape {entries.shape}")
        m = (entries[:, 0] + 1j * entries[:, 1]).reshape(dim, dim)
        return cls(m, layout, data.get("name", "channel"))

    def dumps(self) -> str:
        return json.dumps(self.to_json())


def validate_choi(m: np.ndarray, layout: SystemLayout, tol: float = CHOI_TOL) -> None:
    """Raise ChannelError unless ``m`` is the Choi matrix of a CPTP map."""
    if not tensor.is_hermitian(m, tol=tol):
        raise ChannelError("Choi matrix is not Hermitian")
    if not tensor.is_psd(m, tol=tol * max(1.0, float(np.real(np.trace(m))))):
        raise ChannelError("Choi matrix is not positive semidefinite")
    ins = layout.select(role="input")
    d_in = layout.restrict(ins).dim
    marg = tensor.partial_trace(m, layout, ins)
    if np.max(np.abs(marg - np.eye(d_in))) > tol * max(1, d_in):
        raise ChannelError("Choi matrix is not trace preserving (tr_out J != I)")
    if abs(np.trace(m) - d_in) > tol * d_in:
        raise ChannelError("Choi trace differs from input dimension")


def _raw_choi(u: np.ndarray) -> np.ndarray:
    """Choi matrix of ``rho -> U rho U^dag`` in natural (inputs, outputs) order."""
    d = u.shape[0]
    v = u.T.reshape(-1)  # v[i*d + a] = U[a, i]
    return np.outer(v, v.conj())


def choi_from_unitary(gate: GateSpec) -> ChoiRepresentation:
    u = gate.matrix()
    d = u.shape[0]
    if u.shape != (d, d):
        raise ChannelError(f"unitary must be square, got {u.shape}")
    if np.max(np.abs(u @ u.conj().T - np.eye(d))) > UNITARY_TOL:
        raise ChannelError("gate matrix is not unitary")
    sides = gate.sides()
    layout, order = qubit_layout(sides)
    j = tensor.permute_systems(_raw_choi(u), [2] * (2 * gate.n_qubits), order)
    return ChoiRepresentation(j, layout, gate.label)


def identity_channel(n_a: int = 1, n_b: int = 1) -> ChoiRepresentation:
    n = n_a + n_b
    cut = "".join(str(q) for q in range(1, n_a + 1)) + "|" + "".join(str(q) for q in range(n_a + 1, n + 1))
    return choi_from_unitary(GateSpec("custom", cut, np.eye(2**n))).renamed("identity")


def gate_channel(name: str, cut: str | None = None) -> ChoiRepresentation:
    return choi_from_unitary(GateSpec(name, cut))


def apply_channel(choi: ChoiRepresentation, rho: np.ndarray) -> np.ndarray:
    """N(rho) = tr_in[(rho^T (x) I) J]; rho is ordered like the input factors."""
    d_in, d_out = choi.d_in, choi.d_out
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (d_in, d_in):
        raise LayoutError(f"state of shape {rho.shape} does not match input dimension {d_in}")
    j = choi.matrix.reshape(d_in, d_out, d_in, d_out)
    # sum_ij rho[i, j] N(|i><j|)
    return np.einsum("ij,iajb->ab", rho, j)


def _expand_output_op(choi: ChoiRepresentation, labels: Sequence[str], op: np.ndarray) -> np.ndarray:
    """Operator acting as ``op`` on the given output factors (in the order given) and I elsewhere."""
    lay = choi.layout
    idx = [lay.index(lb) for lb in labels]
    rest = [i for i in range(len(lay)) if i not in idx]
    dims = lay.dims
    d_rest = int(np.prod([dims[i] for i in rest]))
    full = np.kron(op, np.eye(d_rest))
    # full acts on (labels..., rest...); move factors back to layout order
    cur = idx + rest
    back = [cur.index(i) for i in range(len(lay))]
    return tensor.permute_systems(full, [dims[i] for i in cur], back)


# ----------------------------------------------------------------------------
# Noise
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class NoiseModel:
    """Depolarizing (``p``) or amplitude damping (``gamma``) on output qubits.

    ``targets`` name gate qubits (``"q2"``) or output factors (``"q2'"``);
    ``None`` for depolarizing means every output.
    """

    kind: str
    rate: float
    targets: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.kind not in ("depolarizing", "amplitude_damping"):
            raise ChannelError(f"unknown noise kind {self.kind!r}")
        if not 0.0 <= self.rate <= 1.0:
            raise ChannelError(f"noise parameter {self.rate} outside [0, 1]")
        if self.targets is not None:
            object.__setattr__(self, "targets", tuple(self.targets))
        if self.kind == "amplitude_damping" and (self.targets is None or len(self.targets) != 1):
            raise ChannelError("amplitude damping acts on exactly one target qubit")

    @classmethod
    def depolarizing(cls, p: float, targets: Sequence[str] | None = None) -> "NoiseModel":
        return cls("depolarizing", float(p), None if targets is None else tuple(targets))

    @classmethod
    def amplitude_damping(cls, gamma: float, target: str) -> "NoiseModel":
        return cls("amplitude_damping", float(gamma), (target,))


def _output_targets(choi: ChoiRepresentation, targets: Sequence[str] | None) -> list[str]:
    outs = choi.output_labels
    if targets is None:
        return list(outs)
    resolved = []
    for t in targets:
        lb = t if t.endswith("'") else t + "'"
        if lb not in outs:
            raise ChannelError(f"noise target {t!r} is not an output of this channel ({outs})")
        resolved.append(lb)
    return resolved


def amplitude_damping_kraus(gamma: float) -> tuple[np.ndarray, np.ndarray]:
    k0 = np.array([[1.0, 0.0], [0.0, np.sqrt(1.0 - gamma)]], dtype=complex)
    k1 = np.array([[0.0, np.sqrt(gamma)], [0.0, 0.0]], dtype=complex)
    return k0, k1


def attach_noise(choi: ChoiRepresentation, noise: NoiseModel) -> ChoiRepresentation:
    """Compose ``noise`` after ``choi`` on the targeted output factors."""
    targets = _output_targets(choi, noise.targets)
    lay = choi.layout
    j = choi.matrix
    if noise.kind == "depolarizing":
        p = noise.rate
        if p == 0.0:
            return choi
        idx = lay.indices(targets)
        keep = [i for i in range(len(lay)) if i not in idx]
        d_t = int(np.prod([lay.dims[i] for i in idx]))
        reduced = tensor.partial_trace(j, lay.dims, keep)
        # reduced acts on (keep...), append the traced factors as I/d and reorder
        full = np.kron(reduced, np.eye(d_t) / d_t)
        cur = keep + idx
        back = [cur.index(i) for i in range(len(lay))]
        replaced = tensor.permute_systems(full, [lay.dims[i] for i in cur], back)
        new = (1.0 - p) * j + p * replaced
        tag = f"dep(p={p:g})"
    else:
        g = noise.rate
        if g == 0.0:
            return choi
        new = np.zeros_like(j)
        for k in amplitude_damping_kraus(g):
            kk = _expand_output_op(choi, targets, k)
            new += kk @ j @ kk.conj().T
        tag = f"ad(g={g:g})"
    new = tensor.hermitian_part(new)
    return ChoiRepresentation(new, lay, f"{choi.name}+{tag}")


# ----------------------------------------------------------------------------
# Parallel copies and composition
# ----------------------------------------------------------------------------


def tensor_parallel(choi: ChoiRepresentation, n: int, dim_cap: int = DEFAULT_DIM_CAP) -> ChoiRepresentation:
    """Choi matrix of N^{(x)n} regrouped into A-in, B-in, A-out, B-out blocks."""
    if n < 1:
        raise ChannelError("number of copies must be at least 1")
    if n == 1:
        return choi
    dim = choi.matrix.shape[0] ** n
    if dim > dim_cap:
        raise ChannelError(f"Choi dimension {dim} for {n} copies exceeds the cap {dim_cap}")
    lay = choi.layout
    k = len(lay)
    big = tensor.kron(*([choi.matrix] * n))
    # factor c*k + i is factor i of copy c
    order = []
    factors = []
    for role in ("input", "output"):
        for side in ("A", "B"):
            for c in range(n):
                for i, f in enumerate(lay.factors):
                    if f.role == role and f.side == side:
                        order.append(c * k + i)
                        factors.append(Factor(f"{f.label}#{c + 1}", f.dim, side, role))
    m = tensor.permute_systems(big, list(lay.dims) * n, order)
    return ChoiRepresentation(m, SystemLayout(tuple(factors)), f"{choi.name}^{n}")


def tensor_product(first: ChoiRepresentation, second: ChoiRepresentation,
                   dim_cap: int = DEFAULT_DIM_CAP) -> ChoiRepresentation:
    """Choi matrix of ``first (x) second`` in the global ordering."""
    dim = first.matrix.shape[0] * second.matrix.shape[0]
    if dim > dim_cap:
        raise ChannelError(f"Choi dimension {dim} exceeds the cap {dim_cap}")
    k = len(first.layout)
    big = np.kron(first.matrix, second.matrix)
    allf = [(f, i) for i, f in enumerate(first.layout.factors)] + [
        (f, k + i) for i, f in enumerate(second.layout.factors)
    ]
    order, factors = [], []
    for role in ("input", "output"):
        for side in ("A", "B"):
            for f, i in allf:
                if f.role == role and f.side == side:
                    order.append(i)
                    tag = 1 if i < k else 2
                    factors.append(Factor(f"{f.label}#{tag}", f.dim, side, role))
    dims = list(first.layout.dims) + list(second.layout.dims)
    m = tensor.permute_systems(big, dims, order)
    return ChoiRepresentation(m, SystemLayout(tuple(factors)), f"{first.name}*{second.name}")


def _strip(label: str) -> str:
    return label[:-1] if label.endswith("'") else label


def compose(second: ChoiRepresentation, first: ChoiRepresentation) -> ChoiRepresentation:
    """Choi matrix of ``second o first``."""
    out1 = [(_strip(f.label), f.dim, f.side) for f in first.output_layout.factors]
    in2 = [(f.label, f.dim, f.side) for f in second.input_layout.factors]
    if out1 != in2:
        raise LayoutError(f"cannot compose: outputs {out1} do not match inputs {in2}")
    d0, d1, d2 = first.d_in, first.d_out, second.d_out
    s1 = first.matrix.reshape(d0, d1, d0, d1).transpose(1, 3, 0, 2).reshape(d1 * d1, d0 * d0)
    s2 = second.matrix.reshape(d1, d2, d1, d2).transpose(1, 3, 0, 2).reshape(d2 * d2, d1 * d1)
    s = s2 @ s1
    j = s.reshape(d2, d2, d0, d0).transpose(2, 0, 3, 1).reshape(d0 * d2, d0 * d2)
    layout = SystemLayout(first.input_layout.factors + second.output_layout.factors)
    return ChoiRepresentation(tensor.hermitian_part(j), layout, f"{second.name}o{first.name}")


def conjugate_local(choi: ChoiRepresentation, before: np.ndarray, after: np.ndarray) -> ChoiRepresentation:
    """Choi of ``rho -> after N(before rho before^dag) after^dag`` for local unitaries.

    ``before`` acts on the input factors, ``after`` on the outputs, both in layout order.
    """
    d_in, d_out = choi.d_in, choi.d_out
    if before.shape != (d_in, d_in) or after.shape != (d_out, d_out):
        raise LayoutError("unitary dimensions do not match the channel")
    w = np.kron(before.T, after)
    return ChoiRepresentation(tensor.hermitian_part(w @ choi.matrix @ w.conj().T), choi.layout, choi.name)


def noisy_cnot(p: float) -> ChoiRepresentation:
    """CNOT followed by two-qubit global depolarizing noise of strength p."""
    return attach_noise(gate_channel("cnot"), NoiseModel.depolarizing(p))


def damped_swap(gamma: float) -> ChoiRepresentation:
    """SWAP followed by amplitude damping on the second output qubit."""
    return attach_noise(gate_channel("swap"), NoiseModel.amplitude_damping(gamma, "q2"))


def build_channel(gate: str, cut: str | None = None, noise: NoiseModel | None = None,
                  unitary: np.ndarray | None = None) -> ChoiRepresentation:
    spec = GateSpec(gate, cut, unitary)
    ch = choi_from_unitary(spec)
    if noise is not None:
        ch = attach_noise(ch, noise)
    return ch
