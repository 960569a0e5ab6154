"""Seeded generator of random strictly feasible SDPs with oracle counterparts."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from knitbound.sdpsolver import Problem, real_symmetric_basis
from oracle import Lmi


def _herm(rng, n, cplx):
    a = rng.normal(size=(n, n)) + (1j * rng.normal(size=(n, n)) if cplx else 0)
    return (a + a.conj().T) / 2


def _pd(rng, n, cplx):
    g = rng.normal(size=(n, n)) + (1j * rng.normal(size=(n, n)) if cplx else 0)
    return g @ g.conj().T / n + 0.1 * np.eye(n)


@dataclass
class Case:
    kind: str
    problem: Problem
    lmi: Lmi
    # the solver's objective equals sign * (oracle optimum)
    sign: float
    cplx: bool
    dim: int


def lmi_case(rng, cplx: bool) -> Case:
    """minimize c^T x s.t. F0 + sum x_i F_i >= 0, both sides strictly feasible."""
    n, m = int(rng.integers(2, 9)), int(rng.integers(1, 5))
    fs = [_herm(rng, n, cplx) for _ in range(m)]
    x0 = rng.normal(size=m)
    f0 = _pd(rng, n, cplx) - sum(a * f for a, f in zip(x0, fs))
    z0 = _pd(rng, n, cplx)
    c = np.array([np.real(np.trace(f @ z0)) for f in fs])
    p = Problem("lmi")
    xs = [p.scalar(f"x{i}") for i in range(m)]
    expr = p.constant(f0)
    for x, f in zip(xs, fs):
        expr = expr + x.times(f)
    p.add_psd(expr)
    obj = xs[0] * c[0]
    for x, ci in zip(xs[1:], c[1:]):
        obj = obj + x * ci
    p.minimize(obj)
    return Case("lmi", p, Lmi(c, f0, fs, x0), 1.0, cplx, n)


def standard_case(rng, cplx: bool) -> Case:
    """minimize tr(C X) s.t. tr(A_i X) = b_i, X >= 0; checked through its dual LMI.

    Dual: maximize b^T y s.t. C - sum y_i A_i >= 0, i.e. -(min -b^T y).
    Fewer constraints than the space dimension keeps the A_i independent, so
    the dual optimal set is bounded.
    """
    n = int(rng.integers(2, 9))
    space = n * n if cplx else n * (n + 1) // 2
    m = int(rng.integers(1, min(5, space)))
    a_mats = [_herm(rng, n, cplx) for _ in range(m)]
    x_int = _pd(rng, n, cplx)
    b = np.array([np.real(np.trace(a @ x_int)) for a in a_mats])
    y0 = rng.normal(size=m)
    cmat = _pd(rng, n, cplx) + sum(yi * a for yi, a in zip(y0, a_mats))
    p = Problem("standard")
    if cplx:
        x = p.hermitian("X", n, psd=True)
    else:
        x = p.hermitian("X", n, basis=real_symmetric_basis(n), psd=True)
    for i, (a, bi) in enumerate(zip(a_mats, b)):
        p.add_eq(x.inner(a) - bi, name=f"row{i}")
    p.minimize(x.inner(cmat))
    lmi = Lmi(-b, cmat, [-a for a in a_mats], y0)
    return Case("standard", p, lmi, -1.0, cplx, n)


def corpus(seed: int = 2024, size: int = 20) -> list[Case]:
    rng = np.random.default_rng(seed)
    out = []
    for k in range(size):
        make = lmi_case if k % 2 == 0 else standard_case
        out.append(make(rng, cplx=(k // 2) % 2 == 1))
    return out
