"""Real symmetric embedding of Hermitian PSD blocks.

H = A + iB maps to [[A, -B], [B, A]]; the embedding has the spectrum of H with
every eigenvalue doubled.  The decision vector is already real, so objective
values are unchanged and the optimal dual block is half the embedded dual.
"""

from __future__ import annotations

import numpy as np

from .compiled import CompiledSdp


def embed_hermitian(h: np.ndarray) -> np.ndarray:
    h = np.asarray(h)
    re, im = np.real(h), np.imag(h)
    top = np.concatenate([re, -im], axis=-1)
    bot = np.concatenate([im, re], axis=-1)
    return np.concatenate([top, bot], axis=-2)


def extract_hermitian(e: np.ndarray) -> np.ndarray:
    """Inverse of embed_hermitian, averaging the two redundant copies."""
    e = np.asarray(e, dtype=float)
    n = e.shape[-1] // 2
    re = 0.5 * (e[..., :n, :n] + e[..., n:, n:])
    im = 0.5 * (e[..., n:, :n] - e[..., :n, n:])
    h = re + 1j * im
    return 0.5 * (h + np.conj(np.swapaxes(h, -1, -2)))


def embed_complex(cp: CompiledSdp) -> CompiledSdp:
    """Same problem with every complex PSD block replaced by its real embedding."""
    blocks = []
    for g, h in cp.blocks:
        if np.iscomplexobj(g) or np.iscomplexobj(h):
            blocks.append((embed_hermitian(g), embed_hermitian(h)))
        else:
            blocks.append((g, h))
    return CompiledSdp(
        c=cp.c, offset=cp.offset, sense=cp.sense, a=cp.a, b=cp.b,
        lp_g=cp.lp_g, lp_h=cp.lp_h, blocks=blocks, variables=cp.variables,
        block_maps=cp.block_maps, name=cp.name + "[real]", eq_names=cp.eq_names,
    )
