"""Primal-dual interior-point method on the homogeneous self-dual embedding.

Nesterov-Todd scaling, Mehrotra predictor-corrector, dense Cholesky on the
Schur complement.  Hermitian PSD blocks are handled natively in complex
arithmetic; real symmetric blocks and the nonnegative orthant are special
cases.  The structure follows the conelp method of CVXOPT.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .compiled import CompiledSdp

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-7
MIN_TOL = 1e-10
MAX_TOL = 1e-4
DEFAULT_MAX_ITERS = 200
STEP = 0.99


class NumericalFailure(RuntimeError):
    pass


@dataclass
class SdpSolution:
    status: str
    primal_objective: float
    dual_objective: float
    gap: float
    variable_values: dict
    iterations: int
    primal_residual: float = float("nan")
    dual_residual: float = float("nan")
    x: np.ndarray | None = None
    y: np.ndarray | None = None
    z_lp: np.ndarray | None = None
    z_blocks: list = field(default_factory=list)
    message: str = ""

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"

    def __getitem__(self, name):
        return self.variable_values[name]

    def diagnostics(self) -> dict:
        return {
            "status": self.status,
            "primal_objective": self.primal_objective,
            "dual_objective": self.dual_objective,
            "gap": self.gap,
            "iterations": self.iterations,
            "primal_residual": self.primal_residual,
            "dual_residual": self.dual_residual,
            "message": self.message,
        }


# ----------------------------------------------------------------------------
# Cone vectors are pairs (lp array, [block matrices])
# ----------------------------------------------------------------------------


def _cv_add(u, v, a=1.0):
    return u[0] + a * v[0], [p + a * q for p, q in zip(u[1], v[1])]


def _cv_scale(u, a):
    return a * u[0], [a * p for p in u[1]]


def _cv_dot(u, v) -> float:
    return float(u[0] @ v[0] + sum(np.vdot(p, q).real for p, q in zip(u[1], v[1])))


def _cv_norm(u) -> float:
    return float(np.sqrt(max(_cv_dot(u, u), 0.0)))


def _herm(m):
    return 0.5 * (m + m.conj().T)


class _Scaling:
    """NT scaling W with W z = W^{-T} s = lambda (diagonal)."""

    def __init__(self, nl: int, sizes, dtypes):
        self.d = np.ones(nl)
        self.lam_lp = np.ones(nl)
        self.r = [np.eye(n, dtype=dt) for n, dt in zip(sizes, dtypes)]
        self.rti = [np.eye(n, dtype=dt) for n, dt in zip(sizes, dtypes)]
        self.lam = [np.ones(n) for n in sizes]

    def lam_vec(self):
        return self.lam_lp.copy(), [np.diag(l).astype(r.dtype) for l, r in zip(self.lam, self.r)]

    def w(self, v):
        return self.d * v[0], [_herm(r.conj().T @ m @ r) for r, m in zip(self.r, v[1])]

    def wt(self, v):
        return self.d * v[0], [_herm(r @ m @ r.conj().T) for r, m in zip(self.r, v[1])]

    def winv(self, v):
        return v[0] / self.d, [_herm(t @ m @ t.conj().T) for t, m in zip(self.rti, v[1])]

    def winvt(self, v):
        return v[0] / self.d, [_herm(t.conj().T @ m @ t) for t, m in zip(self.rti, v[1])]

    def update(self, st, zt):
        """Move to the NT scaling of (W^T st, W^{-1} zt) given scaled iterates."""
        if np.any(st[0] <= 0) or np.any(zt[0] <= 0):
            raise NumericalFailure("orthant iterate left the cone")
        self.d = self.d * np.sqrt(st[0] / zt[0])
        self.lam_lp = np.sqrt(st[0] * zt[0])
        for k, (s, z) in enumerate(zip(st[1], zt[1])):
            try:
                ls = np.linalg.cholesky(_herm(s))
                lz = np.linalg.cholesky(_herm(z))
            except np.linalg.LinAlgError:
                raise NumericalFailure("PSD iterate left the cone") from None
            u, sv, vh = np.linalg.svd(lz.conj().T @ ls)
            isq = 1.0 / np.sqrt(sv)
            self.r[k] = self.r[k] @ ls @ (vh.conj().T * isq)
            self.rti[k] = self.rti[k] @ lz @ (u * isq)
            self.lam[k] = sv


def _sprod(a, b):
    return _herm(a @ b)


def _sinv(lam, r):
    """Solve lam o t = r for t with lam diagonal."""
    return 2.0 * r / (lam[:, None] + lam[None, :])


def _max_step_block(lam, ds) -> float:
    isq = 1.0 / np.sqrt(lam)
    ev = np.linalg.eigvalsh(_herm(ds * isq[:, None] * isq[None, :]))[0]
    return np.inf if ev >= 0 else -1.0 / ev


def _max_step(lam_lp, lam, ds) -> float:
    a = np.inf
    if lam_lp.size:
        ratio = ds[0] / lam_lp
        if ratio.min() < 0:
            a = -1.0 / ratio.min()
    for l, m in zip(lam, ds[1]):
        a = min(a, _max_step_block(l, m))
    return a


def reduce_equalities(a: np.ndarray, b: np.ndarray, tol: float = 1e-10):
    """Drop linearly dependent rows; return (A, b, consistent)."""
    if a.shape[0] == 0:
        return a, b, True
    _, r, piv = sla.qr(a.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    rank = int(np.sum(diag > tol * max(1.0, diag[0] if diag.size else 0.0)))
    keep = np.sort(piv[:rank])
    a2, b2 = a[keep], b[keep]
    if rank < a.shape[0]:
        x0 = np.linalg.lstsq(a2, b2, rcond=None)[0]
        if np.linalg.norm(a @ x0 - b) > 1e-8 * max(1.0, np.linalg.norm(b)):
            return a2, b2, False
    return a2, b2, True


class _Kkt:
    """Factorization of [[0, A^T, G^T], [A, 0, 0], [G, 0, -W^T W]]."""

    def __init__(self, prob: "_Data", sc: _Scaling):
        self.p, self.sc = prob, sc
        m = prob.m
        h = prob.lp_g.T @ (prob.lp_g / (sc.d ** 2)[:, None]) if prob.lp_g.shape[0] else np.zeros((m, m))
        for (g3, gf), rti in zip(prob.blocks, sc.rti):
            q = rti @ rti.conj().T
            t = np.matmul(np.matmul(q, g3), q).reshape(m, -1)
            h = h + (gf.conj() @ t.T).real
        k = h + prob.a.T @ prob.a
        k = 0.5 * (k + k.T)
        self.kf = self._cholesky(k)
        if prob.a.shape[0]:
            self.kinv_at = sla.cho_solve(self.kf, prob.a.T)
            self.sf = self._cholesky(prob.a @ self.kinv_at)

    @staticmethod
    def _cholesky(k):
        scale = max(1.0, float(np.max(np.abs(np.diag(k))))) if k.size else 1.0
        for eps in (0.0, 1e-14, 1e-12, 1e-10, 1e-8):
            try:
                return sla.cho_factor(k + eps * scale * np.eye(k.shape[0]), lower=True)
            except np.linalg.LinAlgError:
                continue
        raise NumericalFailure("Schur complement is not positive definite")

    def _solve_once(self, bx, by, bz):
        p, sc = self.p, self.sc
        rhs = bx + p.gt(sc.winv(sc.winvt(bz)))
        if p.a.shape[0]:
            w = sla.cho_solve(self.kf, rhs + p.a.T @ by)
            dy = sla.cho_solve(self.sf, p.a @ w - by)
            dx = w - self.kinv_at @ dy
        else:
            dx = sla.cho_solve(self.kf, rhs)
            dy = np.zeros(0)
        dz = sc.winv(sc.winvt(_cv_add(p.g(dx), bz, -1.0)))
        return dx, dy, dz

    def solve(self, bx, by, bz, refine: int = 1):
        p, sc = self.p, self.sc
        dx, dy, dz = self._solve_once(bx, by, bz)
        for _ in range(refine):
            ex = bx - p.a.T @ dy - p.gt(dz)
            ey = by - p.a @ dx
            ez = _cv_add(bz, _cv_add(p.g(dx), sc.wt(sc.w(dz)), -1.0), -1.0)
            cx, cy, cz = self._solve_once(ex, ey, ez)
            dx, dy, dz = dx + cx, dy + cy, _cv_add(dz, cz)
        return dx, dy, dz


class _Data:
    def __init__(self, cp: CompiledSdp, a, b):
        self.m = cp.n
        self.c = cp.c
        self.a, self.b = a, b
        self.lp_g, self.lp_h = cp.lp_g, cp.lp_h
        self.blocks = [(g, g.reshape(self.m, -1)) for g, _ in cp.blocks]
        self.h = (cp.lp_h.copy(), [h.copy() for _, h in cp.blocks])
        self.sizes = [h.shape[0] for _, h in cp.blocks]
        self.dtypes = [np.result_type(g.dtype, h.dtype) for g, h in cp.blocks]

    def g(self, x):
        return self.lp_g @ x, [(x @ gf).reshape(n, n) for (_, gf), n in zip(self.blocks, self.sizes)]

    def gt(self, z):
        out = self.lp_g.T @ z[0]
        for (_, gf), zk in zip(self.blocks, z[1]):
            out = out + (gf.conj() @ zk.reshape(-1)).real
        return out


def solve_compiled(cp: CompiledSdp, tol: float = DEFAULT_TOL, feastol: float | None = None,
                   max_iters: int = DEFAULT_MAX_ITERS, refine: int = 1) -> SdpSolution:
    if not MIN_TOL <= tol <= MAX_TOL:
        raise ValueError(f"tolerance {tol} outside [{MIN_TOL:g}, {MAX_TOL:g}]")
    feastol = 10 * tol if feastol is None else feastol
    a, b, consistent = reduce_equalities(cp.a, cp.b)
    if not consistent:
        return SdpSolution("infeasible", np.nan, np.nan, np.nan, {}, 0,
                           message="equality constraints are inconsistent")
    p = _Data(cp, a, b)
    m, deg = p.m, cp.degree
    sc = _Scaling(cp.lp_h.shape[0], p.sizes, p.dtypes)
    x, y = np.zeros(m), np.zeros(a.shape[0])
    tau = kappa = 1.0
    nb, nc, nh = max(1.0, np.linalg.norm(b)), max(1.0, np.linalg.norm(p.c)), max(1.0, _cv_norm(p.h))

    best = None
    status, message = "numerical-failure", "iteration limit reached"
    it = 0
    for it in range(max_iters + 1):
        lam = sc.lam_vec()
        s, z = sc.wt(lam), sc.winv(lam)
        gx = p.g(x)
        r1 = a.T @ y + p.gt(z) + p.c * tau
        r2 = a @ x - b * tau
        r3 = _cv_add(_cv_add(gx, s), p.h, -tau)
        cx, by_, hz = float(p.c @ x), float(b @ y), _cv_dot(p.h, z)
        r4 = kappa + cx + by_ + hz
        sz = _cv_dot(s, z)
        mu = (sz + tau * kappa) / (deg + 1)
        pcost, dcost = cx / tau, -(by_ + hz) / tau
        pres = max(np.linalg.norm(r2) / tau / nb, _cv_norm(r3) / tau / nh)
        dres = np.linalg.norm(r1) / tau / nc
        gap = sz / tau ** 2
        scale = 1.0 + abs(pcost)
        relgap = max(gap, abs(pcost - dcost)) / scale
        log.debug("it %3d pcost %.9e dcost %.9e gap %.2e pres %.2e dres %.2e k/t %.2e",
                  it, pcost, dcost, gap, pres, dres, kappa / tau)
        merit = max(pres, dres, relgap)
        if best is None or merit < best[0]:
            best = (merit, x / tau, y / tau, _cv_scale(z, 1 / tau), pcost, dcost, pres, dres, it)

        if pres <= feastol and dres <= feastol and relgap <= tol:
            status, message = "optimal", ""
            break
        if hz + by_ < 0:
            pinf = np.linalg.norm(a.T @ y + p.gt(z)) / nc / (-(hz + by_))
            if pinf <= feastol:
                status, message = "infeasible", f"primal infeasibility certificate residual {pinf:.2e}"
                break
        if cx < 0:
            dinf = max(np.linalg.norm(a @ x) / nb, _cv_norm(_cv_add(gx, s)) / nh) / (-cx)
            if dinf <= feastol:
                status, message = "unbounded", f"dual infeasibility certificate residual {dinf:.2e}"
                break
        if it == max_iters:
            break

        try:
            kkt = _Kkt(p, sc)
            u2x, u2y, u2z = kkt.solve(-p.c, b, p.h, refine)
            denom0 = -_cv_dot(sc.w(u2z), sc.w(u2z))
            lamsq = (sc.lam_lp ** 2, [np.diag(l ** 2).astype(d.dtype) for l, d in zip(sc.lam, lam[1])])
            aff = None
            for phase in (0, 1):
                if phase == 0:
                    sigma, eta = 0.0, 1.0
                    rs = _cv_scale(lamsq, -1.0)
                    rk = -tau * kappa
                else:
                    sigma = (1.0 - min(1.0, aff[0])) ** 3
                    eta = 1.0 - sigma
                    ds_a, dz_a, dt_a, dk_a = aff[1:]
                    rs = (-lamsq[0] - ds_a[0] * dz_a[0] + sigma * mu,
                          [-l2 - _sprod(da, za) + sigma * mu * np.eye(l2.shape[0])
                           for l2, da, za in zip(lamsq[1], ds_a[1], dz_a[1])])
                    rk = -tau * kappa - dt_a * dk_a + sigma * mu
                t = (rs[0] / sc.lam_lp, [_sinv(l, r) for l, r in zip(sc.lam, rs[1])])
                bx = -eta * r1
                by = -eta * r2
                bz = _cv_add(_cv_scale(r3, -eta), sc.wt(t), -1.0)
                rt = -eta * r4 - rk / tau
                u1x, u1y, u1z = kkt.solve(bx, by, bz, refine)
                dtau = (rt - (p.c @ u1x + b @ u1y + _cv_dot(p.h, u1z))) / (denom0 - kappa / tau)
                dx, dy = u1x + dtau * u2x, u1y + dtau * u2y
                dz = _cv_add(u1z, u2z, dtau)
                dzs = sc.w(dz)
                dss = _cv_add(t, dzs, -1.0)
                dkappa = (rk - kappa * dtau) / tau
                alpha = min(_max_step(sc.lam_lp, sc.lam, dss), _max_step(sc.lam_lp, sc.lam, dzs))
                if dtau < 0:
                    alpha = min(alpha, -tau / dtau)
                if dkappa < 0:
                    alpha = min(alpha, -kappa / dkappa)
                if phase == 0:
                    aff = (alpha, dss, dzs, dtau, dkappa)
            step = min(1.0, STEP * alpha)
            x, y = x + step * dx, y + step * dy
            tau, kappa = tau + step * dtau, kappa + step * dkappa
            st = _cv_add(lam, dss, step)
            zt = _cv_add(lam, dzs, step)
            sc.update(st, zt)
        except (NumericalFailure, np.linalg.LinAlgError) as exc:
            message = f"numerical failure: {exc}"
            break

    if status in ("infeasible", "unbounded"):
        return SdpSolution(status, np.nan, np.nan, np.nan, {}, it, message=message)
    if status == "optimal":
        xs, ys, zs = x / tau, y / tau, _cv_scale(z, 1 / tau)
        pc, dc, pr, dr = pcost, dcost, pres, dres
    else:
        _, xs, ys, zs, pc, dc, pr, dr, _ = best
    po = cp.user_objective(pc + cp.offset)
    do = cp.user_objective(dc + cp.offset)
    return SdpSolution(
        status=status,
        primal_objective=po,
        dual_objective=do,
        gap=pc - dc,
        variable_values=cp.values(xs),
        iterations=it,
        primal_residual=pr,
        dual_residual=dr,
        x=xs,
        y=ys,
        z_lp=zs[0],
        z_blocks=zs[1],
        message=message,
    )
