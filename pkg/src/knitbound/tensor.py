"""Dense linear algebra on multipartite tensor-product spaces.

Matrices are plain complex ``numpy`` arrays.  Tensor factors are ordered
row-major (lexicographic) in layout order, so ``kron(a, b)`` places ``a`` on
the first factor.  Channel Choi matrices always use the global ordering
``A (x) B (x) A' (x) B'``: A-side inputs, B-side inputs, A-side outputs,
B-side outputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Sequence

import numpy as np

HERMITIAN_TOL = 1e-12

SIDES = ("A", "B")
ROLES = ("input", "output")


class LayoutError(ValueError):
    """A label or dimension does not match the subsystem layout."""


class NotHermitianError(ValueError):
    """A matrix required to be Hermitian is not."""


@dataclass(frozen=True)
class Factor:
    label: str
    dim: int
    side: str
    role: str

    def __post_init__(self):
        if self.dim < 1:
            raise LayoutError(f"factor {self.label!r} has non-positive dimension {self.dim}")
        if self.side not in SIDES:
            raise LayoutError(f"factor {self.label!r}: side must be one of {SIDES}")
        if self.role not in ROLES:
            raise LayoutError(f"factor {self.label!r}: role must be one of {ROLES}")


@dataclass(frozen=True)
class SystemLayout:
    """Ordered tensor factors annotating a square matrix."""

    factors: tuple[Factor, ...]

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))
        labels = [f.label for f in self.factors]
        if len(set(labels)) != len(labels):
            raise LayoutError(f"duplicate labels in layout: {labels}")
        if not self.factors:
            raise LayoutError("layout needs at least one factor")

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(f.label for f in self.factors)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(f.dim for f in self.factors)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    def __len__(self):
        return len(self.factors)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise LayoutError(f"unknown label {label!r}; layout has {self.labels}") from None

    def indices(self, labels: Iterable[str]) -> list[int]:
        return sorted(self.index(lb) for lb in labels)

    def select(self, side: str | None = None, role: str | None = None) -> tuple[str, ...]:
        """Labels of the factors matching the given side and/or role, in layout order."""
        return tuple(
            f.label
            for f in self.factors
            if (side is None or f.side == side) and (role is None or f.role == role)
        )

    def restrict(self, labels: Iterable[str]) -> "SystemLayout":
        keep = self.indices(labels)
        return SystemLayout(tuple(self.factors[i] for i in keep))

    def check(self, m: np.ndarray) -> None:
        if m.shape != (self.dim, self.dim):
            raise LayoutError(f"matrix of shape {m.shape} does not match layout dimension {self.dim}")

    def to_dict(self) -> list[dict]:
        return [dict(label=f.label, dim=f.dim, side=f.side, role=f.role) for f in self.factors]

    @classmethod
    def from_dict(cls, items: Sequence[dict]) -> "SystemLayout":
        return cls(tuple(Factor(str(d["label"]), int(d["dim"]), str(d["side"]), str(d["role"])) for d in items))


def kron(*ops: np.ndarray) -> np.ndarray:
    """Kronecker product of any number of matrices, first factor outermost."""
    return reduce(np.kron, ops)


def _resolve(layout: SystemLayout | Sequence[int], systems) -> tuple[list[int], list[int]]:
    """Return (dims, factor indices) for either a layout + labels or dims + indices."""
    if isinstance(layout, SystemLayout):
        return list(layout.dims), layout.indices(systems)
    dims = [int(d) for d in layout]
    idx = sorted(int(i) for i in systems)
    for i in idx:
        if not 0 <= i < len(dims):
            raise LayoutError(f"subsystem index {i} out of range for dims {dims}")
    return dims, idx


def partial_trace(m: np.ndarray, layout: SystemLayout | Sequence[int], keep) -> np.ndarray:
    """Trace out every factor not in ``keep``; kept factors stay in layout order."""
    dims, kept = _resolve(layout, keep)
    n = len(dims)
    total = int(np.prod(dims))
    if m.shape != (total, total):
        raise LayoutError(f"matrix of shape {m.shape} does not match dims {dims}")
    drop = [i for i in range(n) if i not in kept]
    dk = int(np.prod([dims[i] for i in kept])) if kept else 1
    dd = int(np.prod([dims[i] for i in drop])) if drop else 1
    t = m.reshape(dims + dims).transpose(kept + drop + [n + i for i in kept] + [n + i for i in drop])
    return np.einsum("ijkj->ik", t.reshape(dk, dd, dk, dd))


def partial_transpose(m: np.ndarray, layout: SystemLayout | Sequence[int], transpose) -> np.ndarray:
    """Transpose the indices of the selected factors only."""
    dims, sel = _resolve(layout, transpose)
    n = len(dims)
    total = int(np.prod(dims))
    if m.shape != (total, total):
        raise LayoutError(f"matrix of shape {m.shape} does not match dims {dims}")
    axes = list(range(2 * n))
    for i in sel:
        axes[i], axes[n + i] = axes[n + i], axes[i]
    return m.reshape(dims + dims).transpose(axes).reshape(total, total)


def permute_systems(m: np.ndarray, dims: Sequence[int], order: Sequence[int]) -> np.ndarray:
    """Reorder tensor factors: factor ``order[k]`` of the input becomes factor ``k``."""
    dims = list(dims)
    n = len(dims)
    total = int(np.prod(dims))
    order = list(order)
    t = m.reshape(dims + dims).transpose(order + [n + i for i in order])
    return t.reshape(total, total)


def permute_vector(v: np.ndarray, dims: Sequence[int], order: Sequence[int]) -> np.ndarray:
    return v.reshape(list(dims)).transpose(list(order)).reshape(-1)


def is_hermitian(m: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        return False
    scale = max(1.0, float(np.max(np.abs(m)))) if m.size else 1.0
    return bool(np.max(np.abs(m - m.conj().T), initial=0.0) <= tol * scale)


def check_hermitian(m: np.ndarray, tol: float = HERMITIAN_TOL) -> None:
    if not is_hermitian(m, tol):
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise NotHermitianError(f"expected a square matrix, got shape {m.shape}")
        defect = float(np.max(np.abs(m - m.conj().T)))
        raise NotHermitianError(f"matrix is not Hermitian (defect {defect:.3e})")


def hermitian_part(m: np.ndarray) -> np.ndarray:
    return (m + m.conj().T) / 2


def hermitian_eigenvalues(m: np.ndarray) -> np.ndarray:
    """Ascending real eigenvalues of a Hermitian matrix."""
    check_hermitian(m)
    return np.linalg.eigvalsh(hermitian_part(m))


def spectral_norm(m: np.ndarray) -> float:
    """Largest eigenvalue magnitude of a Hermitian matrix."""
    ev = hermitian_eigenvalues(m)
    return float(max(abs(ev[0]), abs(ev[-1])))


def min_eigenvalue(m: np.ndarray) -> float:
    return float(hermitian_eigenvalues(m)[0])


def is_psd(m: np.ndarray, tol: float = 1e-9) -> bool:
    """Cheap PSD test by Cholesky of ``m + tol*I`` (exact up to the shift)."""
    check_hermitian(m, tol=max(HERMITIAN_TOL, tol))
    shifted = hermitian_part(m) + tol * np.eye(m.shape[0])
    try:
        np.linalg.cholesky(shifted)
    except np.linalg.LinAlgError:
        return False
    return True


def ket(index: int, dim: int) -> np.ndarray:
    v = np.zeros(dim, dtype=complex)
    v[index] = 1.0
    return v


def max_entangled(d: int) -> np.ndarray:
    """Normalized maximally entangled state (1/d) sum_ij |ii><jj|."""
    v = np.zeros(d * d, dtype=complex)
    v[:: d + 1] = 1.0
    return np.outer(v, v) / d


def swap_operator(d: int) -> np.ndarray:
    f = np.zeros((d * d, d * d), dtype=complex)
    for i in range(d):
        for j in range(d):
            f[i * d + j, j * d + i] = 1.0
    return f


# ----------------------------------------------------------------------------
# Index maps used to build sparse linear operators on row-major vec(M)
# ----------------------------------------------------------------------------


def transpose_index(dims: Sequence[int], systems: Sequence[int]) -> np.ndarray:
    """Permutation p with ``vec(M^{T_S}) == vec(M)[p]``."""
    total = int(np.prod(dims))
    idx = np.arange(total * total).reshape(total, total)
    return partial_transpose(idx, dims, systems).reshape(-1)


def trace_index(dims: Sequence[int], keep: Sequence[int]) -> tuple[np.ndarray, np.ndarray, int]:
    """Source and target positions for ``vec(tr_drop M)``.

    Returns ``(src, dst, dk)``: the reduced matrix is ``out[dst] += vec(M)[src]``
    with ``out`` of length ``dk**2``.
    """
    dims = list(dims)
    n = len(dims)
    keep = sorted(keep)
    drop = [i for i in range(n) if i not in keep]
    dk = int(np.prod([dims[i] for i in keep])) if keep else 1
    dd = int(np.prod([dims[i] for i in drop])) if drop else 1
    total = dk * dd
    idx = np.arange(total * total).reshape(dims + dims)
    t = idx.transpose(keep + drop + [n + i for i in keep] + [n + i for i in drop]).reshape(dk, dd, dk, dd)
    src = np.einsum("ijkj->ikj", t).reshape(-1)
    dst = np.repeat(np.arange(dk * dk), dd)
    return src, dst, dk
