"""Pulling point sets back along a reference orbit, one inverse branch at a time.

A chain ``x_0, ..., x_L`` with ``f(x_j) = x_{j+1}`` determines a local
inverse of ``f^L`` near ``x_L``.  Points near ``x_L`` are pulled back by
Newton on the branch through each ``x_j``.  The branch is accepted only if
the pulled-back set stays within half the distance from ``x_j`` to the
nearest *other* pre-image of ``x_{j+1}``; otherwise two sheets could be
confused and :class:`BranchUndefined` is raised.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BranchUndefined
from .torus import reduce, torus_distance, wrap


def sheet_separation(f, chain):
    """For each step ``j``, distance from ``x_j`` to the other pre-images of ``x_{j+1}``."""
    chain = np.asarray(chain, float)
    if f.degree == 1:
        return np.full(len(chain) - 1, np.inf)
    pre = f.inverse_branches(chain[1:])  # (L, N, n)
    d = torus_distance(pre, chain[:-1, None, :])
    d.sort(axis=1)
    return d[:, 1]


@dataclass
class PullBack:
    points: np.ndarray  # (L + 1, m, n): points[j] lies near chain[j]
    max_offset: np.ndarray  # (L,) largest |z_j - x_j| at each step
    separation: np.ndarray  # (L,)
    residual: float  # largest |f(z_j) - z_{j+1}|


def pull_back(f, chain, points, separation=None, strict: bool = True) -> PullBack:
    """Pull ``points`` (near ``chain[-1]``) back along ``chain``."""
    chain = reduce(np.asarray(chain, float))
    Z = reduce(np.atleast_2d(np.asarray(points, float)))
    L = len(chain) - 1
    if separation is None:
        separation = sheet_separation(f, chain)
    out = np.empty((L + 1,) + Z.shape)
    out[L] = Z
    offs = np.zeros(L)
    for j in range(L - 1, -1, -1):
        w, conv = f.local_inverse(out[j + 1], chain[j])
        w = reduce(w)
        off = torus_distance(w, chain[j])
        offs[j] = float(np.max(off)) if len(off) else 0.0
        if strict and (not np.all(conv) or offs[j] >= 0.5 * separation[j]):
            raise BranchUndefined(
                f"branch at step {j} not injective on the pulled-back set "
                f"(offset {offs[j]:.3e}, separation {separation[j]:.3e})",
                step=j,
            )
        out[j] = w
    resid = 0.0
    if L:
        resid = float(np.max(torus_distance(f.evaluate(out[:-1].reshape(-1, f.dim)), out[1:].reshape(-1, f.dim))))
    return PullBack(out, offs, np.asarray(separation), resid)


def pull_back_ragged(f, chains, lengths, which, points, record_at=None):
    """Pull each point back along its own chain.

    ``chains`` has shape ``(C, Lmax + 1, n)`` with chain ``c`` occupying the
    first ``lengths[c] + 1`` rows; ``which[i]`` selects the chain for point
    ``i``, which must lie near ``chains[c, lengths[c]]``.  Returns the fully
    pulled-back points and, when ``record_at`` (per-point step index) is
    given, also the intermediate point at that index.  No injectivity check
    is made here: the chains are assumed certified already.
    """
    chains = np.asarray(chains, float)
    lengths = np.asarray(lengths, int)
    which = np.asarray(which, int)
    Z = reduce(np.atleast_2d(np.asarray(points, float))).copy()
    m = len(Z)
    L_i = lengths[which]
    rec = None
    if record_at is not None:
        record_at = np.asarray(record_at, int)
        rec = np.empty_like(Z)
        hit = record_at == L_i
        rec[hit] = Z[hit]
    Lmax = int(L_i.max()) if m else 0
    for t in range(Lmax):
        j = L_i - 1 - t
        act = j >= 0
        if not np.any(act):
            break
        idx = np.nonzero(act)[0]
        anchors = chains[which[idx], j[idx]]
        w, _ = f.local_inverse(Z[idx], anchors)
        Z[idx] = reduce(w)
        if rec is not None:
            hit = record_at[idx] == j[idx]
            rec[idx[hit]] = Z[idx[hit]]
    return (Z, rec) if rec is not None else Z


def sphere_samples(n: int, count: int) -> np.ndarray:
    """Deterministic, roughly uniform unit vectors in R^n."""
    if n == 1:
        return np.array([[-1.0], [1.0]])
    if n == 2:
        ang = 2 * np.pi * np.arange(count) / count
        return np.stack([np.cos(ang), np.sin(ang)], -1)
    # Fibonacci-like lattice through a fixed low-discrepancy sequence
    from scipy.stats import qmc

    g = qmc.Halton(d=n, scramble=False).random(count + 1)[1:]
    from scipy.special import ndtri

    v = ndtri(np.clip(g, 1e-12, 1 - 1e-12))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def ball_samples(center, radius: float, n_boundary: int, n_interior: int, shrink: float = 1.0):
    """Boundary points of the ball plus a deterministic interior lattice (centre first)."""
    c = np.asarray(center, float)
    n = c.shape[0]
    bd = c + radius * shrink * sphere_samples(n, n_boundary)
    if n_interior <= 0:
        return reduce(np.vstack([c[None], bd]))
    from scipy.stats import qmc

    u = qmc.Halton(d=n, scramble=False).random(n_interior * 2 + 8)[1:]
    v = 2 * u - 1
    r = np.linalg.norm(v, axis=1)
    v = v[(r < 1) & (r > 1e-9)][:n_interior]
    inner = c + radius * shrink * v
    return reduce(np.vstack([c[None], bd, inner]))
