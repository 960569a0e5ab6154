"""Semidefinite programming over Hermitian matrices: modeling layer and solver."""

from __future__ import annotations

from .compiled import CompiledSdp
from .embed import embed_complex, embed_hermitian, extract_hermitian
from .ipm import DEFAULT_MAX_ITERS, DEFAULT_TOL, MAX_TOL, MIN_TOL, SdpSolution, solve_compiled
from .model import Expr, ModelError, Problem, full_hermitian_basis, real_symmetric_basis


def solve(problem: Problem | CompiledSdp, tol: float = DEFAULT_TOL, feastol: float | None = None,
          max_iters: int = DEFAULT_MAX_ITERS, embed: bool = False) -> SdpSolution:
    """Solve a problem; ``embed`` runs on the real symmetric embedding instead of complex blocks."""
    cp = problem.compile() if isinstance(problem, Problem) else problem
    if embed:
        cp = embed_complex(cp)
    return solve_compiled(cp, tol=tol, feastol=feastol, max_iters=max_iters)


__all__ = [
    "CompiledSdp", "Expr", "ModelError", "Problem", "SdpSolution", "embed_complex",
    "embed_hermitian", "extract_hermitian", "full_hermitian_basis", "real_symmetric_basis", "solve", "DEFAULT_TOL", "MAX_TOL", "MIN_TOL",
]
