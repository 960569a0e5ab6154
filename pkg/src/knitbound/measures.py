"""Cutting-overhead measures of bipartite channels.

Every quantity is an SDP over operators on the Choi space.  ``T`` below is the
partial transpose on all B-side factors (inputs and outputs) and ``tr_out``
traces out every output factor.

* gamma_ppt: min 2c - 1 over PPT-channel decompositions ``N = c M1 - (c-1) M2``.
* w_hat: gamma_ppt's program without the PPT condition on M2, in the
  ``(gamma + 1) / 2`` scale, solved as a primal/dual pair.
* ln_max: log2 of the max-logarithmic-negativity program.
* max_rains: log2 of Gamma, the bidirectional max-Rains program, primal and dual.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from typing import Sequence

import numpy as np

from . import tensor
from .channel import ChannelError, ChoiRepresentation, tensor_parallel, DEFAULT_DIM_CAP
from .sdpsolver import DEFAULT_TOL, Problem, SdpSolution, solve
from .symmetry import PauliSubspace, qubit_count

RAINS_AGREEMENT = 1e-4
PLATEAU_TOL = 1e-4
ONE_TERM_TOL = 1e-6
CERT_TOL = 1e-9

CSV_COLUMNS = (
    "parameter", "gamma_ppt", "ln_max", "max_rains", "w_hat",
    "bound_ln_max", "bound_max_rains", "gap_ppt_solver", "iterations",
)
QUANTITIES = ("gamma_ppt", "ln_max", "max_rains", "w_hat")
REPORT_SCHEMA = "knitbound.report/1"


class SolverError(RuntimeError):
    """An SDP did not reach optimality."""

    def __init__(self, quantity: str, solution: SdpSolution):
        self.quantity = quantity
        self.solution = solution
        super().__init__(f"{quantity}: solver status {solution.status} after {solution.iterations} iterations"
                         f" (pres {solution.primal_residual:.2e}, dres {solution.dual_residual:.2e}) {solution.message}")


class ConsistencyError(RuntimeError):
    """Primal and dual values of the same program disagree."""


# ----------------------------------------------------------------------------
# Program context
# ----------------------------------------------------------------------------


@dataclass
class _Space:
    """Dimensions, transposed systems and symmetry data of one Choi matrix."""

    choi: ChoiRepresentation
    symmetric: bool
    dims: list = field(init=False)
    b_all: list = field(init=False)
    inputs: list = field(init=False)
    in_dims: list = field(init=False)
    b_in: list = field(init=False)
    d: int = field(init=False)
    d_in: int = field(init=False)
    d_out: int = field(init=False)

    def __post_init__(self):
        lay = self.choi.layout
        self.dims = list(lay.dims)
        self.b_all = lay.indices(lay.select(side="B"))
        self.inputs = lay.indices(lay.select(role="input"))
        self.in_dims = [self.dims[i] for i in self.inputs]
        in_lay = self.choi.input_layout
        self.b_in = in_lay.indices(in_lay.select(side="B"))
        self.d, self.d_in, self.d_out = lay.dim, self.choi.d_in, self.choi.d_out
        self.full_basis = self.in_basis = self.full_blocks = self.in_blocks = None
        n = qubit_count(self.dims)
        if self.symmetric and n is not None:
            space = PauliSubspace.from_operators(n, self.choi.matrix)
            if not space.is_full:
                sub = space.restrict_prefix(len(self.inputs))
                self.full_basis = space.hermitian_basis()
                self.full_blocks = space.blocks()
                self.in_basis = sub.hermitian_basis()
                self.in_blocks = sub.blocks()
        self.j = self.choi.matrix
        self.jt = tensor.partial_transpose(self.j, self.dims, self.b_all)

    def full(self, p: Problem, name: str, psd: bool = False):
        return p.hermitian(name, self.d, basis=self.full_basis, psd=psd, blocks=self.full_blocks)

    def inp(self, p: Problem, name: str, psd: bool = False):
        return p.hermitian(name, self.d_in, basis=self.in_basis, psd=psd, blocks=self.in_blocks)

    def pt(self, e):
        return e.ptranspose(self.dims, self.b_all)

    def pt_in(self, e):
        return e.ptranspose(self.in_dims, self.b_in)

    def tr_out(self, e):
        return e.ptrace(self.dims, self.inputs)


def _solve(p: Problem, quantity: str, tol: float) -> SdpSolution:
    sol = solve(p, tol=tol)
    if not sol.optimal:
        raise SolverError(quantity, sol)
    return sol


# ----------------------------------------------------------------------------
# Decomposition
# ----------------------------------------------------------------------------


@dataclass
class QpdDecomposition:
    """N = c1 M1 - c2 M2 with PPT channels M1, M2 (M2 absent when c2 = 0)."""

    c1: float
    c2: float
    choi_m1: ChoiRepresentation
    choi_m2: ChoiRepresentation | None
    target: ChoiRepresentation

    @property
    def kappa(self) -> float:
        return self.c1 + self.c2

    @property
    def terms(self) -> list[tuple[float, ChoiRepresentation]]:
        """Signed coefficients and channels."""
        out = [(self.c1, self.choi_m1)]
        if self.choi_m2 is not None:
            out.append((-self.c2, self.choi_m2))
        return out

    def violations(self) -> dict:
        """Magnitude of each invariant defect (all should be tiny)."""
        recon = sum(a * m.matrix for a, m in self.terms)
        sp = _Space(self.target, symmetric=False)
        out = {
            "coefficients": abs(self.c1 - self.c2 - 1.0),
            "reconstruction": float(np.linalg.norm(recon - self.target.matrix, 2)),
            "ppt_m1": max(0.0, -tensor.min_eigenvalue(tensor.partial_transpose(self.choi_m1.matrix, sp.dims, sp.b_all))),
        }
        if self.choi_m2 is not None:
            out["ppt_m2"] = max(0.0, -tensor.min_eigenvalue(
                tensor.partial_transpose(self.choi_m2.matrix, sp.dims, sp.b_all)))
        return out

    def validate(self) -> None:
        v = self.violations()
        limits = {"coefficients": 1e-7, "reconstruction": 1e-6, "ppt_m1": 1e-7, "ppt_m2": 1e-7}
        bad = {k: x for k, x in v.items() if x > limits[k]}
        if bad:
            raise ChannelError(f"invalid decomposition: {bad}")


def _polish_gamma(space: _Space, jm: np.ndarray, c: float):
    """Move a numerically optimal (J_M, c) onto the exact feasible set.

    Fixes the marginal by an orthogonal correction and then adds a multiple
    of the replacer channel so all PSD conditions hold exactly.
    """
    d_out = space.d_out
    jm = tensor.hermitian_part(jm)
    marg = tensor.partial_trace(jm, space.dims, space.inputs)
    corr = np.kron(marg - c * np.eye(space.d_in), np.eye(d_out) / d_out)
    jm = jm - corr
    jmt = tensor.partial_transpose(jm, space.dims, space.b_all)
    eps = max(0.0, -tensor.min_eigenvalue(jmt), -tensor.min_eigenvalue(jm - space.j),
              -tensor.min_eigenvalue(jmt - space.jt))
    if eps > 0:
        # adding delta * I / d_out lifts every eigenvalue by delta / d_out
        delta = (2 * eps + 1e-13) * d_out
        jm = jm + delta * np.eye(space.d) / d_out
        c = c + delta
    return jm, c


# ----------------------------------------------------------------------------
# Programs
# ----------------------------------------------------------------------------


def gamma_ppt_problem(space: _Space) -> Problem:
    p = Problem("gamma_ppt")
    c = p.scalar("c")
    jm = space.full(p, "J_M")
    jmt = space.pt(jm)
    p.add_psd(jmt, blocks=space.full_blocks, name="ppt_m1")
    p.add_eq(space.tr_out(jm) - c.times(np.eye(space.d_in)), name="marginal")
    p.add_psd(jm - space.j, blocks=space.full_blocks, name="m2_psd")
    p.add_psd(jmt - space.jt, blocks=space.full_blocks, name="ppt_m2")
    p.minimize(2 * c - 1)
    return p


def gamma_ppt(choi: ChoiRepresentation, tol: float = DEFAULT_TOL, symmetry: bool = True):
    """Optimal PPT sampling overhead and a two-term decomposition attaining it.

    The returned value is the overhead kappa of the decomposition after it has
    been moved onto the exact feasible set, so it is an upper bound on the true
    optimum that exceeds the solver's primal value by at most a few tolerances.
    The raw solver values stay available on the returned solution.
    """
    space = _Space(choi, symmetry)
    sol = _solve(gamma_ppt_problem(space), "gamma_ppt", tol)
    jm, c = _polish_gamma(space, sol["J_M"], sol["c"])
    c = max(c, 1.0)
    lay = choi.layout
    if c - 1.0 <= ONE_TERM_TOL:
        qpd = QpdDecomposition(1.0, 0.0, choi, None, choi)
    else:
        m1 = ChoiRepresentation(jm / c, lay, f"{choi.name}:M1")
        m2 = ChoiRepresentation(tensor.hermitian_part(jm - choi.matrix) / (c - 1.0), lay, f"{choi.name}:M2")
        qpd = QpdDecomposition(c, c - 1.0, m1, m2, choi)
    return qpd.kappa, qpd, sol


def ln_max_problem(space: _Space) -> Problem:
    p = Problem("ln_max")
    t = p.scalar("t")
    pp = space.full(p, "P", psd=True)
    ppt = space.pt(pp)
    p.add_psd(ppt - space.jt, blocks=space.full_blocks, name="upper")
    p.add_psd(ppt + space.jt, blocks=space.full_blocks, name="lower")
    marg = space.tr_out(pp)
    eye = t.times(np.eye(space.d_in))
    p.add_psd(eye - marg, blocks=space.in_blocks, name="norm")
    p.add_psd(eye - space.pt_in(marg), blocks=space.in_blocks, name="norm_pt")
    p.minimize(t)
    return p


def ln_max(choi: ChoiRepresentation, tol: float = DEFAULT_TOL, symmetry: bool = True):
    """log2 of the max-logarithmic-negativity program; returns (value, solution)."""
    space = _Space(choi, symmetry)
    sol = _solve(ln_max_problem(space), "ln_max", tol)
    return math.log2(sol.primal_objective), sol


def rains_primal_problem(space: _Space) -> Problem:
    p = Problem("rains_primal")
    mu = p.scalar("mu")
    v = space.full(p, "V", psd=True)
    y = space.full(p, "Y", psd=True)
    p.add_psd(space.pt(v - y) - space.j, blocks=space.full_blocks, name="sandwich")
    p.add_psd(mu.times(np.eye(space.d_in)) - space.tr_out(v + y), blocks=space.in_blocks, name="norm")
    p.minimize(mu)
    return p


def rains_dual_problem(space: _Space) -> Problem:
    p = Problem("rains_dual")
    y = space.full(p, "Y", psd=True)
    r = space.inp(p, "R", psd=True)
    p.add_eq(r.trace() - 1.0, name="normalization")
    rr = r.kron_eye(space.d_out)
    yt = space.pt(y)
    p.add_psd(rr - yt, blocks=space.full_blocks, name="upper")
    p.add_psd(rr + yt, blocks=space.full_blocks, name="lower")
    p.maximize(y.inner(space.j))
    return p


@dataclass
class PrimalDual:
    primal: float
    dual: float
    primal_solution: SdpSolution
    dual_solution: SdpSolution

    @property
    def disagreement(self) -> float:
        return abs(self.primal - self.dual)


def max_rains(choi: ChoiRepresentation, tol: float = DEFAULT_TOL, symmetry: bool = True):
    """log2 of Gamma from the primal program, plus both raw values.

    Raises ConsistencyError when primal and dual differ by more than 1e-4.
    """
    space = _Space(choi, symmetry)
    ps = _solve(rains_primal_problem(space), "max_rains(primal)", tol)
    ds = _solve(rains_dual_problem(space), "max_rains(dual)", tol)
    pair = PrimalDual(ps.primal_objective, ds.primal_objective, ps, ds)
    if pair.disagreement > RAINS_AGREEMENT:
        raise ConsistencyError(f"max-Rains primal {pair.primal:.9g} and dual {pair.dual:.9g} disagree")
    return math.log2(pair.primal), pair


def w_hat_primal_problem(space: _Space) -> Problem:
    p = Problem("w_hat_primal")
    c = p.scalar("c", nonneg=True)
    jm = space.full(p, "J_M")
    p.add_psd(space.pt(jm), blocks=space.full_blocks, name="ppt")
    p.add_psd(jm - space.j, blocks=space.full_blocks, name="dominates")
    p.add_psd(c.times(np.eye(space.d_in)) - space.tr_out(jm), blocks=space.in_blocks, name="marginal")
    p.minimize(c)
    return p


def w_hat_dual_problem(space: _Space) -> Problem:
    p = Problem("w_hat_dual")
    y = space.full(p, "Y", psd=True)
    r = space.inp(p, "R", psd=True)
    p.add_psd(1.0 - r.trace(), name="trace")
    p.add_psd(space.pt_in(r).kron_eye(space.d_out) - space.pt(y), blocks=space.full_blocks, name="sandwich")
    p.maximize(y.inner(space.j))
    return p


@dataclass
class Certificate:
    y: np.ndarray
    r: np.ndarray

    def to_json(self, gate: str | None = None) -> dict:
        def enc(m):
            return {"dim": int(m.shape[0]), "entries": [[float(z.real), float(z.imag)] for z in m.reshape(-1)]}

        out = {"schema": "knitbound.certificate/1", "Y": enc(self.y), "R": enc(self.r)}
        if gate is not None:
            out["gate"] = gate
        return out

    @classmethod
    def from_json(cls, data: dict) -> "Certificate":
        def dec(d):
            e = np.asarray(d["entries"], dtype=float)
            n = int(d["dim"])
            if e.shape != (n * n, 2):
                raise ValueError(f"expected {n * n} complex entries, got shape {e.shape}")
            m = (e[:, 0] + 1j * e[:, 1]).reshape(n, n)
            tensor.check_hermitian(m, 1e-10)
            return m

        return cls(dec(data["Y"]), dec(data["R"]))


def _polish_certificate(space: _Space, y: np.ndarray, r: np.ndarray) -> Certificate:
    """Turn an approximately feasible dual point into an exactly feasible one."""
    w, v = np.linalg.eigh(tensor.hermitian_part(y))
    y = (v * np.clip(w, 0, None)) @ v.conj().T
    w, v = np.linalg.eigh(tensor.hermitian_part(r))
    r = (v * np.clip(w, 0, None)) @ v.conj().T
    rt = tensor.partial_transpose(r, space.in_dims, space.b_in)
    lmi = np.kron(rt, np.eye(space.d_out)) - tensor.partial_transpose(y, space.dims, space.b_all)
    eps = max(0.0, -tensor.min_eigenvalue(lmi))
    if eps > 0:
        r = r + (2 * eps + 1e-13) * np.eye(space.d_in)
    tr = float(np.real(np.trace(r)))
    if tr > 1:
        y, r = y / tr, r / tr
    return Certificate(y, r)


def w_hat(choi: ChoiRepresentation, tol: float = DEFAULT_TOL, symmetry: bool = True):
    """Optimal value from the primal, plus the dual certificate and both values."""
    space = _Space(choi, symmetry)
    ps = _solve(w_hat_primal_problem(space), "w_hat(primal)", tol)
    ds = _solve(w_hat_dual_problem(space), "w_hat(dual)", tol)
    cert = _polish_certificate(space, ds["Y"], ds["R"])
    return ps.primal_objective, cert, PrimalDual(ps.primal_objective, ds.primal_objective, ps, ds)


# ----------------------------------------------------------------------------
# Certificates
# ----------------------------------------------------------------------------


@dataclass
class CertificateReport:
    feasible: bool
    bound: float | None
    violations: dict

    def describe(self) -> str:
        if self.feasible:
            return f"feasible, bound {self.bound:.6f}"
        name, amount = max(self.violations.items(), key=lambda kv: kv[1])
        return f"infeasible: {name} violation {amount:.6g}"


def verify_certificate(choi: ChoiRepresentation, y: np.ndarray, r: np.ndarray,
                       tol: float = CERT_TOL) -> CertificateReport:
    """Check a dual point for the w_hat program and return its certified lower bound."""
    space = _Space(choi, symmetric=False)
    y = np.asarray(y, dtype=complex)
    r = np.asarray(r, dtype=complex)
    if y.shape != (space.d, space.d):
        raise tensor.LayoutError(f"Y has shape {y.shape}, expected {(space.d, space.d)}")
    if r.shape != (space.d_in, space.d_in):
        raise tensor.LayoutError(f"R has shape {r.shape}, expected {(space.d_in, space.d_in)}")
    tensor.check_hermitian(y, 1e-10)
    tensor.check_hermitian(r, 1e-10)
    rt = tensor.partial_transpose(r, space.in_dims, space.b_in)
    lmi = np.kron(rt, np.eye(space.d_out)) - tensor.partial_transpose(y, space.dims, space.b_all)
    violations = {
        "Y psd": max(0.0, -tensor.min_eigenvalue(y)),
        "R psd": max(0.0, -tensor.min_eigenvalue(r)),
        "trace": max(0.0, float(np.real(np.trace(r))) - 1.0),
        "LMI": max(0.0, -tensor.min_eigenvalue(lmi)),
    }
    bad = {k: v for k, v in violations.items() if v > tol}
    if bad:
        return CertificateReport(False, None, bad)
    return CertificateReport(True, float(np.real(np.trace(y @ choi.matrix))), {})


# ----------------------------------------------------------------------------
# Derived bounds and reports
# ----------------------------------------------------------------------------


def effective_gamma_bound(choi: ChoiRepresentation, n: int, tol: float = DEFAULT_TOL,
                          direct: bool = True, dim_cap: int = DEFAULT_DIM_CAP,
                          ln: float | None = None, rains: float | None = None) -> dict:
    """Per-gate lower bounds on the overhead of cutting n parallel copies.

    ``bound`` uses single-copy values:
    max((2^{n LN} - 1)^{1/n}, (2^{n R + 1} - 1)^{1/n}).  When the n-copy Choi
    matrix fits the cap, ``direct`` is gamma_ppt(N^{(x)n})^{1/n}.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if ln is None:
        ln = ln_max(choi, tol)[0]
    if rains is None:
        rains = max_rains(choi, tol)[0]
    from_ln = max(2.0 ** (n * ln) - 1.0, 1.0) ** (1.0 / n)
    from_rains = (2.0 ** (n * rains + 1) - 1.0) ** (1.0 / n)
    out = {"n": n, "from_ln_max": from_ln, "from_max_rains": from_rains, "bound": max(from_ln, from_rains),
           "direct": None}
    if direct and choi.matrix.shape[0] ** n <= dim_cap:
        big = tensor_parallel(choi, n, dim_cap)
        out["direct"] = gamma_ppt(big, tol)[0] ** (1.0 / n)
    return out


@dataclass
class MeasureReport:
    channel_id: str
    gamma_ppt: float | None = None
    ln_max: float | None = None
    max_rains: float | None = None
    w_hat: float | None = None
    max_rains_dual: float | None = None
    w_hat_dual: float | None = None
    parameter: float | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def bound_from_ln_max(self) -> float | None:
        return None if self.ln_max is None else 2.0 ** self.ln_max

    @property
    def bound_from_max_rains(self) -> float | None:
        return None if self.max_rains is None else 2.0 ** self.max_rains

    def check_invariants(self, tol: float = 1e-5) -> list[str]:
        """Names of violated ordering relations (empty when all hold)."""
        bad = []
        g = self.gamma_ppt
        if g is not None:
            if g < 1 - 1e-9:
                bad.append("gamma_ppt >= 1")
            if self.ln_max is not None and g < 2 ** self.ln_max - 1 - tol:
                bad.append("gamma_ppt >= 2^ln_max - 1")
            if self.max_rains is not None and g < 2 * 2 ** self.max_rains - 1 - tol:
                bad.append("gamma_ppt >= 2 Gamma - 1")
            if self.w_hat is not None and g < 2 * self.w_hat - 1 - tol:
                bad.append("gamma_ppt >= 2 w_hat - 1")
        return bad

    def to_json(self) -> dict:
        out = asdict(self)
        out["schema"] = REPORT_SCHEMA
        out["bound_from_ln_max"] = self.bound_from_ln_max
        out["bound_from_max_rains"] = self.bound_from_max_rains
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)

    def csv_row(self) -> list[str]:
        gap = self.diagnostics.get("gamma_ppt", {}).get("gap")
        iters = sum(d.get("iterations", 0) for d in self.diagnostics.values())
        vals = [self.parameter, self.gamma_ppt, self.ln_max, self.max_rains, self.w_hat,
                self.bound_from_ln_max, self.bound_from_max_rains, gap]
        return [format_number(v) for v in vals] + [str(int(iters))]


def format_number(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return f"{float(v):.9g}"


def measure(choi: ChoiRepresentation, quantities: Sequence[str] = QUANTITIES, tol: float = DEFAULT_TOL,
            parameter: float | None = None, symmetry: bool = True) -> MeasureReport:
    unknown = set(quantities) - set(QUANTITIES)
    if unknown:
        raise ValueError(f"unknown quantities {sorted(unknown)}")
    rep = MeasureReport(choi.name, parameter=parameter)
    if "gamma_ppt" in quantities:
        val, _, sol = gamma_ppt(choi, tol, symmetry)
        rep.gamma_ppt = val
        rep.diagnostics["gamma_ppt"] = sol.diagnostics()
    if "ln_max" in quantities:
        val, sol = ln_max(choi, tol, symmetry)
        rep.ln_max = val
        rep.diagnostics["ln_max"] = sol.diagnostics()
    if "max_rains" in quantities:
        val, pair = max_rains(choi, tol, symmetry)
        rep.max_rains = val
        rep.max_rains_dual = math.log2(pair.dual)
        rep.diagnostics["max_rains_primal"] = pair.primal_solution.diagnostics()
        rep.diagnostics["max_rains_dual"] = pair.dual_solution.diagnostics()
    if "w_hat" in quantities:
        val, _, pair = w_hat(choi, tol, symmetry)
        rep.w_hat = val
        rep.w_hat_dual = pair.dual
        rep.diagnostics["w_hat_primal"] = pair.primal_solution.diagnostics()
        rep.diagnostics["w_hat_dual"] = pair.dual_solution.diagnostics()
    return rep


def gamma_tot_bound(reports: Sequence[MeasureReport]) -> dict:
    """Lower bound on the squared total overhead of cutting several gates.

    ``proxy`` is prod_j max(2^{LN_j} - 1, 1)^2; ``direct`` is prod_j gamma_j^2
    when every report carries gamma_ppt.
    """
    if not reports:
        raise ValueError("need at least one report")
    factors = []
    for r in reports:
        if r.ln_max is None:
            raise ValueError(f"report {r.channel_id!r} lacks ln_max")
        factors.append(max(2.0 ** r.ln_max - 1.0, 1.0) ** 2)
    direct = None
    if all(r.gamma_ppt is not None for r in reports):
        direct = float(np.prod([r.gamma_ppt ** 2 for r in reports]))
    return {"proxy": float(np.prod(factors)), "factors": factors, "direct": direct}
