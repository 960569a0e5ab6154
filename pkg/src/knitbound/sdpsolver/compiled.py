"""Standard-form problem data shared by the modeling layer and the solver.

Primal:  minimize c^T x + offset  s.t.  A x = b,  G x + s = h,  s in K
Dual:    maximize -b^T y - h^T z + offset  s.t.  A^T y + G^T z + c = 0,  z in K

K is a nonnegative orthant (rows of ``lp_g``) times PSD blocks.  A PSD block
stores ``g`` with shape (m, n, n) so that ``G x`` on that block is
``sum_i x_i g[i]``; blocks are Hermitian (complex) or real symmetric.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

SCHEMA = "knitbound.sdp/1"


@dataclass
class VariableInfo:
    name: str
    dim: int
    basis: sp.csc_matrix
    start: int
    stop: int

    def matrix(self, x: np.ndarray):
        v = self.basis @ x[self.start:self.stop]
        if self.dim == 1:
            return float(np.real(v[0]))
        m = np.asarray(v).reshape(self.dim, self.dim)
        return 0.5 * (m + m.conj().T)


@dataclass
class PsdBlockMap:
    constraint: str
    block: int
    cone: str
    position: int


@dataclass
class CompiledSdp:
    c: np.ndarray
    offset: float
    sense: str
    a: np.ndarray
    b: np.ndarray
    lp_g: np.ndarray
    lp_h: np.ndarray
    blocks: list
    variables: list = field(default_factory=list)
    block_maps: list = field(default_factory=list)
    name: str = "sdp"
    eq_names: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.c.shape[0]

    @property
    def degree(self) -> int:
        return self.lp_h.shape[0] + sum(h.shape[0] for _, h in self.blocks)

    def user_objective(self, value: float) -> float:
        """Convert an internal (minimization) value to the caller's sense."""
        return value if self.sense == "min" else -value

    def values(self, x: np.ndarray) -> dict:
        return {v.name: v.matrix(x) for v in self.variables}

    def summary(self) -> dict:
        return {
            "name": self.name,
            "n_vars": int(self.n),
            "n_eq": int(self.a.shape[0]),
            "n_lp": int(self.lp_h.shape[0]),
            "psd_blocks": [int(h.shape[0]) for _, h in self.blocks],
        }

    # -- JSON dump -------------------------------------------------------------
    def to_json(self) -> dict:
        """Sparse coefficient lists for replaying the problem in another solver."""

        def entries(mat):
            nz = np.argwhere(np.abs(mat) > 0)
            return [[int(i) for i in idx] + [float(np.real(mat[tuple(idx)])), float(np.imag(mat[tuple(idx)]))]
                    for idx in nz]

        return {
            "schema": SCHEMA,
            "name": self.name,
            "sense": self.sense,
            "n_vars": int(self.n),
            "objective": {"c": [float(v) for v in self.c], "offset": float(self.offset)},
            "equalities": {"A": entries(self.a), "b": [float(v) for v in self.b], "shape": list(self.a.shape)},
            "lp": {"G": entries(self.lp_g), "h": [float(v) for v in self.lp_h], "shape": list(self.lp_g.shape)},
            "psd": [
                {"dim": int(h.shape[0]), "G": entries(g), "h": entries(h)}
                for g, h in self.blocks
            ],
            "variables": [{"name": v.name, "dim": v.dim, "start": v.start, "stop": v.stop} for v in self.variables],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json())

    @classmethod
    def from_json(cls, data: dict) -> "CompiledSdp":
        if data.get("schema") != SCHEMA:
            raise ValueError(f"unsupported problem schema {data.get('schema')!r}")
        m = int(data["n_vars"])

        def dense(items, shape, complex_=False):
            out = np.zeros(shape, dtype=complex if complex_ else float)
            for it in items:
                idx = tuple(it[:-2])
                out[idx] = it[-2] + 1j * it[-1] if complex_ else it[-2]
            return out

        a = dense(data["equalities"]["A"], tuple(data["equalities"]["shape"]))
        lp_g = dense(data["lp"]["G"], tuple(data["lp"]["shape"]))
        blocks = []
        for blk in data["psd"]:
            n = blk["dim"]
            g = dense(blk["G"], (m, n, n), True)
            h = dense(blk["h"], (n, n), True)
            if not np.any(np.imag(g)) and not np.any(np.imag(h)):
                g, h = np.real(g), np.real(h)
            blocks.append((g, h))
        return cls(
            c=np.asarray(data["objective"]["c"], dtype=float),
            offset=float(data["objective"]["offset"]),
            sense=data["sense"],
            a=a,
            b=np.asarray(data["equalities"]["b"], dtype=float),
            lp_g=lp_g,
            lp_h=np.asarray(data["lp"]["h"], dtype=float),
            blocks=blocks,
            name=data.get("name", "sdp"),
        )
