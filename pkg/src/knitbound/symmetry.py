"""Pauli-twirl symmetry reduction for semidefinite programs on qubit operators.

If every constant in a program lies in the span of a set S of Pauli strings,
and every linear map in it (partial traces, partial transposes, tensoring with
identities) commutes with conjugation by Pauli strings up to sign, then the
program is invariant under twirling with the group of strings commuting with
all of S.  Optimal points can therefore be taken in the commutant of that
group, which is the span of the GF(2) closure V of S.  That algebra splits as
a direct sum of full matrix algebras, one per character of the center of V,
so every PSD constraint reduces to a few small blocks.

Pauli strings are encoded as integers ``(x << n) | z`` where bit ``n-1-q`` of
``x``/``z`` belongs to qubit ``q`` (qubit 0 is the most significant tensor
factor).  The operator is ``i^{|x&z|} X^x Z^z``, which is Hermitian.
"""

from __future__ import annotations

import itertools
from functools import cached_property

import numpy as np
import scipy.sparse as sp

SUPPORT_TOL = 1e-10


def split(p: int, n: int) -> tuple[int, int]:
    mask = (1 << n) - 1
    return (p >> n) & mask, p & mask


def symplectic(a: int, b: int, n: int) -> int:
    """1 if the two strings anticommute, else 0."""
    ax, az = split(a, n)
    bx, bz = split(b, n)
    return ((ax & bz).bit_count() + (az & bx).bit_count()) & 1


def _phases(p: int, n: int) -> tuple[int, np.ndarray]:
    x, z = split(p, n)
    j = np.arange(1 << n, dtype=np.int64)
    sign = 1 - 2 * (np.bitwise_count(j & z).astype(np.int64) & 1)
    return x, (1j ** (x & z).bit_count()) * sign


def pauli_matrix(p: int, n: int) -> sp.csr_matrix:
    x, ph = _phases(p, n)
    j = np.arange(1 << n)
    return sp.csr_matrix((ph, (j ^ x, j)), shape=(1 << n, 1 << n))


def apply_pauli(p: int, n: int, v: np.ndarray) -> np.ndarray:
    """P @ v for a vector or a matrix of column vectors."""
    x, ph = _phases(p, n)
    out = np.empty_like(v, dtype=complex)
    j = np.arange(1 << n)
    if v.ndim == 1:
        out[j ^ x] = ph * v
    else:
        out[j ^ x] = ph[:, None] * v
    return out


def fwht(a: np.ndarray) -> np.ndarray:
    """Unnormalized Walsh-Hadamard transform along axis 0."""
    a = np.array(a, dtype=complex)
    d = a.shape[0]
    h = 1
    while h < d:
        a = a.reshape(d // (2 * h), 2, h, *a.shape[1:])
        top = a[:, 0] + a[:, 1]
        bot = a[:, 0] - a[:, 1]
        a = np.stack([top, bot], axis=1).reshape(d, *a.shape[3:])
        h *= 2
    return a


def pauli_coefficients(m: np.ndarray, n: int) -> np.ndarray:
    """T[x, z] = tr(P_{x,z} m) for all 4^n strings."""
    d = 1 << n
    k = np.arange(d)
    # column x holds m[k, k^x]
    cols = m[k[:, None], k[:, None] ^ k[None, :]]
    t = fwht(cols).T
    xs, zs = np.meshgrid(k, k, indexing="ij")
    return t * (1j ** (np.bitwise_count(xs & zs).astype(np.int64) % 4))


def support(m: np.ndarray, n: int, tol: float = SUPPORT_TOL) -> list[int]:
    t = pauli_coefficients(m, n)
    scale = max(1.0, float(np.max(np.abs(t))))
    xs, zs = np.nonzero(np.abs(t) > tol * scale)
    return sorted(int((x << n) | z) for x, z in zip(xs, zs))


def gf2_basis(vectors) -> list[int]:
    """Reduced echelon basis of the GF(2) span of integer bit vectors."""
    rows: list[int] = []
    for v in vectors:
        for r in rows:
            v = min(v, v ^ r)
        if v:
            rows = [min(r, r ^ v) for r in rows]
            rows.append(v)
            rows.sort(reverse=True)
    return rows


class PauliSubspace:
    """A GF(2) subspace of n-qubit Pauli strings and the algebra it spans."""

    def __init__(self, n: int, generators):
        self.n = int(n)
        self.basis = gf2_basis(int(g) for g in generators)

    @classmethod
    def from_operators(cls, n: int, *ops: np.ndarray, tol: float = SUPPORT_TOL) -> "PauliSubspace":
        gens = set()
        for op in ops:
            gens.update(support(np.asarray(op), n, tol))
        return cls(n, gens)

    @property
    def rank(self) -> int:
        return len(self.basis)

    @property
    def is_full(self) -> bool:
        return self.rank == 2 * self.n

    @cached_property
    def elements(self) -> tuple[int, ...]:
        out = [0]
        for b in self.basis:
            out += [e ^ b for e in out]
        return tuple(sorted(out))

    def contains(self, p: int) -> bool:
        for r in self.basis:
            p = min(p, p ^ r)
        return p == 0

    def restrict_prefix(self, k: int) -> "PauliSubspace":
        """Strings P on the first k qubits with P (x) I in this subspace."""
        low = self.n - k
        lowmask = (1 << low) - 1
        keep = []
        for e in self.elements:
            x, z = split(e, self.n)
            if x & lowmask == 0 and z & lowmask == 0:
                keep.append(((x >> low) << k) | (z >> low))
        return PauliSubspace(k, keep)

    def hermitian_basis(self) -> sp.csc_matrix:
        """Columns are row-major vec(P) for every string in the subspace."""
        d = 1 << self.n
        j = np.arange(d)
        rows, cols, vals = [], [], []
        for c, p in enumerate(self.elements):
            x, ph = _phases(p, self.n)
            rows.append((j ^ x) * d + j)
            cols.append(np.full(d, c))
            vals.append(ph)
        return sp.csc_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(d * d, len(self.elements)),
        )

    def symplectic_basis(self) -> tuple[list[int], list[tuple[int, int]]]:
        """Center generators and hyperbolic pairs (xbar, zbar) spanning the subspace."""
        rest = list(self.basis)
        center, pairs = [], []
        while rest:
            a = rest.pop(0)
            partner = next((i for i, b in enumerate(rest) if symplectic(a, b, self.n)), None)
            if partner is None:
                center.append(a)
                continue
            b = rest.pop(partner)
            rest = [c ^ (b if symplectic(c, a, self.n) else 0) ^ (a if symplectic(c, b, self.n) else 0) for c in rest]
            pairs.append((a, b))
        return center, pairs

    def blocks(self) -> list[np.ndarray] | None:
        """Isometries U_chi with X in the algebra PSD iff every U^H X U is PSD.

        Returns None when the subspace is the full Pauli group (no reduction).
        """
        if self.is_full:
            return None
        center, pairs = self.symplectic_basis()
        d = 1 << self.n
        mats = {p: pauli_matrix(p, self.n) for p in center + [zb for _, zb in pairs]}
        out = []
        for chi in itertools.product((1, -1), repeat=len(center)):
            proj = np.eye(d, dtype=complex)
            for p, s in list(zip(center, chi)) + [(zb, 1) for _, zb in pairs]:
                proj = 0.5 * (proj + s * (mats[p] @ proj))
            norms = np.linalg.norm(proj, axis=0)
            i = int(np.argmax(norms))
            v0 = proj[:, i] / norms[i]
            cols = []
            for a in range(1 << len(pairs)):
                v = v0
                for bit, (xb, _) in enumerate(pairs):
                    if a >> bit & 1:
                        v = apply_pauli(xb, self.n, v)
                cols.append(v)
            out.append(np.stack(cols, axis=1))
        return out

    def block_multiplicity(self) -> int:
        center, pairs = self.symplectic_basis()
        return 1 << (self.n - len(center) - len(pairs))


def qubit_count(dims) -> int | None:
    """Number of qubits if every factor is a qubit, else None."""
    dims = list(dims)
    return len(dims) if all(int(d) == 2 for d in dims) else None
