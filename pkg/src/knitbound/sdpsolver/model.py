"""Modeling layer: affine expressions over real-parametrized Hermitian variables.

Every variable is a real coefficient vector ``x_v`` with ``vec(X) = B_v x_v``
for a fixed Hermitian basis ``B_v`` (row-major vec).  An affine expression of
side ``n`` keeps one sparse ``(n*n, size_v)`` block per variable plus a
constant, so partial traces, partial transposes and tensoring with identities
are sparse row operations and never materialize transposed variables.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .. import tensor
from .compiled import CompiledSdp, PsdBlockMap, VariableInfo

HERMITIAN_TOL = 1e-10


class ModelError(ValueError):
    """Inconsistent dimensions or non-Hermitian data in a problem."""


def full_hermitian_basis(n: int) -> sp.csc_matrix:
    """Orthonormal real basis of n x n Hermitian matrices as vec columns."""
    rows, cols, vals = [], [], []
    k = 0
    s = 1 / np.sqrt(2)
    for i in range(n):
        rows.append(i * n + i)
        cols.append(k)
        vals.append(1.0)
        k += 1
    for i in range(n):
        for j in range(i + 1, n):
            rows += [i * n + j, j * n + i]
            cols += [k, k]
            vals += [s, s]
            k += 1
            rows += [i * n + j, j * n + i]
            cols += [k, k]
            vals += [1j * s, -1j * s]
            k += 1
    return sp.csc_matrix((np.array(vals, dtype=complex), (rows, cols)), shape=(n * n, n * n))


def real_symmetric_basis(n: int) -> sp.csc_matrix:
    """Orthonormal basis of real symmetric n x n matrices (a subspace of the Hermitian ones)."""
    full = full_hermitian_basis(n)
    keep = [k for k in range(full.shape[1]) if not np.any(np.imag(full[:, k].toarray()))]
    return sp.csc_matrix(full[:, keep])


@dataclass
class Variable:
    name: str
    dim: int
    basis: sp.csc_matrix
    index: int

    @property
    def size(self) -> int:
        return self.basis.shape[1]


class Expr:
    """Affine Hermitian-matrix-valued expression of side ``dim``."""

    __array_priority__ = 100

    def __init__(self, problem: "Problem", dim: int, terms: dict, const: np.ndarray):
        self.problem = problem
        self.dim = int(dim)
        self.terms = terms
        self.const = const

    # -- construction helpers ------------------------------------------------
    def _lift(self, other) -> "Expr":
        if isinstance(other, Expr):
            if other.problem is not self.problem:
                raise ModelError("expressions belong to different problems")
            if other.dim != self.dim:
                raise ModelError(f"dimension mismatch: {self.dim} vs {other.dim}")
            return other
        m = np.asarray(other, dtype=complex)
        if m.ndim == 0:
            if self.dim != 1:
                m = m * np.eye(self.dim)
            else:
                m = m.reshape(1, 1)
        if m.shape != (self.dim, self.dim):
            raise ModelError(f"constant of shape {m.shape} does not match expression side {self.dim}")
        return Expr(self.problem, self.dim, {}, m.reshape(-1).copy())

    def _map_rows(self, op: sp.spmatrix, new_dim: int) -> "Expr":
        terms = {k: sp.csc_matrix(op @ v) for k, v in self.terms.items()}
        return Expr(self.problem, new_dim, terms, op @ self.const)

    # -- arithmetic ------------------------------------------------------------
    def __add__(self, other):
        o = self._lift(other)
        terms = dict(self.terms)
        for k, v in o.terms.items():
            terms[k] = terms[k] + v if k in terms else v
        return Expr(self.problem, self.dim, terms, self.const + o.const)

    __radd__ = __add__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, a):
        if not np.isscalar(a) or np.iscomplexobj(a):
            raise ModelError("expressions can only be scaled by real numbers; use times() for matrices")
        a = float(a)
        return Expr(self.problem, self.dim, {k: v * a for k, v in self.terms.items()}, self.const * a)

    __rmul__ = __mul__

    def __truediv__(self, a):
        return self * (1.0 / float(a))

    # -- linear maps -----------------------------------------------------------
    def ptranspose(self, dims: Sequence[int], systems: Sequence[int]) -> "Expr":
        self._check_dims(dims)
        perm = tensor.transpose_index(dims, systems)
        n2 = self.dim * self.dim
        op = sp.csr_matrix((np.ones(n2), (np.arange(n2), perm)), shape=(n2, n2))
        return self._map_rows(op, self.dim)

    def ptrace(self, dims: Sequence[int], keep: Sequence[int]) -> "Expr":
        self._check_dims(dims)
        src, dst, dk = tensor.trace_index(dims, keep)
        op = sp.csr_matrix((np.ones(len(src)), (dst, src)), shape=(dk * dk, self.dim * self.dim))
        return self._map_rows(op, dk)

    def kron_eye(self, k: int) -> "Expr":
        """X (x) I_k."""
        n = self.dim
        i, j, a = np.meshgrid(np.arange(n), np.arange(n), np.arange(k), indexing="ij")
        rows = ((i * k + a) * (n * k) + (j * k + a)).reshape(-1)
        cols = (i * n + j).reshape(-1)
        op = sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(n * n * k * k, n * n))
        return self._map_rows(op, n * k)

    def times(self, mat) -> "Expr":
        """Scalar expression times a constant Hermitian matrix."""
        if self.dim != 1:
            raise ModelError("times() needs a scalar expression")
        m = np.asarray(mat, dtype=complex)
        tensor.check_hermitian(m, HERMITIAN_TOL)
        col = sp.csc_matrix(m.reshape(-1, 1))
        terms = {k: sp.csc_matrix(col @ v) for k, v in self.terms.items()}
        return Expr(self.problem, m.shape[0], terms, m.reshape(-1) * self.const[0])

    def trace(self) -> "Expr":
        n = self.dim
        op = sp.csr_matrix((np.ones(n), (np.zeros(n, dtype=int), np.arange(n) * (n + 1))), shape=(1, n * n))
        return self._map_rows(op, 1)

    def inner(self, mat) -> "Expr":
        """tr(mat X) as a scalar expression."""
        m = np.asarray(mat, dtype=complex)
        if m.shape != (self.dim, self.dim):
            raise ModelError(f"matrix of shape {m.shape} does not match expression side {self.dim}")
        op = sp.csr_matrix(m.T.reshape(1, -1))
        return self._map_rows(op, 1)

    def _check_dims(self, dims):
        if int(np.prod(dims)) != self.dim:
            raise ModelError(f"dims {list(dims)} do not multiply to expression side {self.dim}")

    # -- evaluation ------------------------------------------------------------
    def value(self, x: np.ndarray) -> np.ndarray:
        """Evaluate at a global coefficient vector (see CompiledSdp.variables)."""
        out = self.const.copy()
        for k, v in self.terms.items():
            var = self.problem.variables[k]
            sl = self.problem.slice_of(var)
            out = out + v @ x[sl]
        if self.dim == 1:
            return out[0]
        return out.reshape(self.dim, self.dim)

    def global_coef(self, offsets: Sequence[int], total: int) -> sp.csc_matrix:
        blocks = []
        for k, var in enumerate(self.problem.variables):
            if k in self.terms:
                blocks.append(self.terms[k])
            else:
                blocks.append(sp.csc_matrix((self.dim * self.dim, var.size)))
        if not blocks:
            return sp.csc_matrix((self.dim * self.dim, 0))
        return sp.csc_matrix(sp.hstack(blocks))


@dataclass
class _Constraint:
    expr: Expr
    name: str
    blocks: list | None = None


@dataclass
class Problem:
    """min/max of a real affine objective subject to PSD and equality constraints."""

    name: str = "sdp"
    variables: list = field(default_factory=list)
    psd: list = field(default_factory=list)
    eqs: list = field(default_factory=list)
    objective: Expr | None = None
    sense: str = "min"

    # -- variables -------------------------------------------------------------
    def _add_var(self, name: str, dim: int, basis: sp.spmatrix) -> Expr:
        if any(v.name == name for v in self.variables):
            raise ModelError(f"duplicate variable name {name!r}")
        basis = sp.csc_matrix(basis, dtype=complex)
        if basis.shape[0] != dim * dim:
            raise ModelError(f"basis for {name!r} has {basis.shape[0]} rows, expected {dim * dim}")
        var = Variable(name, dim, basis, len(self.variables))
        self.variables.append(var)
        return Expr(self, dim, {var.index: basis}, np.zeros(dim * dim, dtype=complex))

    def scalar(self, name: str, nonneg: bool = False) -> Expr:
        e = self._add_var(name, 1, sp.csc_matrix(np.ones((1, 1))))
        if nonneg:
            self.add_psd(e, name=f"{name}>=0")
        return e

    def hermitian(self, name: str, dim: int, basis: sp.spmatrix | None = None,
                  psd: bool = False, blocks: list | None = None) -> Expr:
        if basis is None:
            basis = full_hermitian_basis(dim)
        e = self._add_var(name, dim, basis)
        if psd:
            self.add_psd(e, blocks=blocks, name=f"{name}>=0")
        return e

    def slice_of(self, var: Variable) -> slice:
        start = sum(v.size for v in self.variables[: var.index])
        return slice(start, start + var.size)

    # -- constraints -----------------------------------------------------------
    def constant(self, mat) -> Expr:
        m = np.asarray(mat, dtype=complex)
        if m.ndim == 0:
            m = m.reshape(1, 1)
        return Expr(self, m.shape[0], {}, m.reshape(-1).copy())

    def add_psd(self, expr: Expr, blocks: list | None = None, name: str | None = None) -> None:
        """expr >= 0; ``blocks`` are isometries splitting the constraint (see symmetry)."""
        if expr.problem is not self:
            raise ModelError("expression belongs to another problem")
        if blocks is not None:
            rows = {int(np.asarray(u).shape[0]) for u in blocks}
            if rows != {expr.dim}:
                raise ModelError("block isometries must have as many rows as the expression side")
        self.psd.append(_Constraint(expr, name or f"psd{len(self.psd)}", blocks))

    def add_eq(self, expr: Expr, name: str | None = None) -> None:
        """expr == 0."""
        if expr.problem is not self:
            raise ModelError("expression belongs to another problem")
        self.eqs.append(_Constraint(expr, name or f"eq{len(self.eqs)}"))

    def minimize(self, expr: Expr) -> None:
        self._set_objective(expr, "min")

    def maximize(self, expr: Expr) -> None:
        self._set_objective(expr, "max")

    def _set_objective(self, expr: Expr, sense: str) -> None:
        if expr.dim != 1:
            raise ModelError("objective must be scalar")
        self.objective = expr
        self.sense = sense

    # -- compilation -----------------------------------------------------------
    def compile(self) -> CompiledSdp:
        if self.objective is None:
            raise ModelError("problem has no objective")
        sizes = [v.size for v in self.variables]
        offsets = list(np.cumsum([0] + sizes))
        m = int(offsets[-1])

        obj = self.objective.global_coef(offsets, m)
        sign = 1.0 if self.sense == "min" else -1.0
        c = sign * np.real(obj.toarray()[0])
        offset = sign * float(np.real(self.objective.const[0]))

        a_rows, b_rows, eq_names = [], [], []
        for con in self.eqs:
            coef = con.expr.global_coef(offsets, m).toarray()
            for part in (np.real, np.imag):
                rows = part(coef)
                rhs = -part(con.expr.const)
                keep = np.any(np.abs(rows) > 0, axis=1) | (np.abs(rhs) > 0)
                a_rows.append(rows[keep])
                b_rows.append(rhs[keep])
                eq_names += [con.name] * int(keep.sum())
        a = np.vstack(a_rows) if a_rows else np.zeros((0, m))
        b = np.concatenate(b_rows) if b_rows else np.zeros(0)

        lp_g, lp_h, blocks, maps = [], [], [], []
        for con in self.psd:
            e = con.expr
            coef = e.global_coef(offsets, m)
            cm = e.const.reshape(e.dim, e.dim)
            tensor.check_hermitian(cm, HERMITIAN_TOL)
            isos = con.blocks if con.blocks is not None else [None]
            for bi, f, f0 in _split_blocks(coef, cm, e.dim, isos):
                if not np.any(f):
                    # constant block: either trivially satisfied or the problem is infeasible
                    if np.linalg.eigvalsh(f0)[0] < -1e-9:
                        raise ModelError(f"constraint {con.name!r} has an infeasible constant block")
                    continue
                if f0.shape[0] == 1:
                    lp_g.append(-np.real(f[:, 0, 0]))
                    lp_h.append(float(np.real(f0[0, 0])))
                    maps.append(PsdBlockMap(con.name, bi, "lp", len(lp_h) - 1))
                else:
                    real = not (np.iscomplexobj(f) and np.any(np.abs(np.imag(f)) > 0)) and not (
                        np.any(np.abs(np.imag(f0)) > 0))
                    g = -f if not real else -np.real(f)
                    h = f0 if not real else np.real(f0)
                    blocks.append((g, h))
                    maps.append(PsdBlockMap(con.name, bi, "sdp", len(blocks) - 1))

        variables = [
            VariableInfo(v.name, v.dim, v.basis, int(offsets[i]), int(offsets[i + 1]))
            for i, v in enumerate(self.variables)
        ]
        return CompiledSdp(
            c=c,
            offset=offset,
            sense=self.sense,
            a=a,
            b=b,
            lp_g=np.array(lp_g).reshape(len(lp_g), m),
            lp_h=np.array(lp_h, dtype=float),
            blocks=blocks,
            variables=variables,
            block_maps=maps,
            name=self.name,
            eq_names=eq_names,
        )


def _column_operator(coef: sp.spmatrix, n: int) -> sp.csr_matrix:
    """Sparse S with (S @ U)[k*n:(k+1)*n] == M_k @ U for the columns M_k of ``coef``."""
    coo = sp.coo_matrix(coef)
    m = coef.shape[1]
    i, j = np.divmod(coo.row, n)
    return sp.csr_matrix((coo.data, (coo.col * n + i, j)), shape=(m * n, n))


def _split_blocks(coef: sp.spmatrix, const: np.ndarray, n: int, isos, chunk: int = 1 << 22):
    """Yield (block index, F stack (m,b,b), F0) for each block of a PSD constraint.

    Block k of the constraint ``F0 + sum_i x_i F_i >= 0`` is ``U_k^H (.) U_k``.
    """
    m = coef.shape[1]
    if len(isos) == 1 and isos[0] is None:
        f = np.asarray(coef.T.toarray()).reshape(m, n, n)
        yield 0, 0.5 * (f + np.conj(np.swapaxes(f, 1, 2))), 0.5 * (const + const.conj().T)
        return
    s = _column_operator(coef, n)
    isos = [np.asarray(u, dtype=complex) for u in isos]
    start = 0
    while start < len(isos):
        # group consecutive blocks so the dense product stays bounded
        stop, width = start, 0
        while stop < len(isos) and (stop == start or (width + isos[stop].shape[1]) * m * n <= chunk):
            width += isos[stop].shape[1]
            stop += 1
        y = np.asarray(s @ np.hstack(isos[start:stop])).reshape(m, n, width)
        col = 0
        for bi in range(start, stop):
            u = isos[bi]
            b = u.shape[1]
            f = np.einsum("ia,kib->kab", u.conj(), y[:, :, col:col + b])
            col += b
            f0 = u.conj().T @ const @ u
            yield bi, 0.5 * (f + np.conj(np.swapaxes(f, 1, 2))), 0.5 * (f0 + f0.conj().T)
        start = stop
