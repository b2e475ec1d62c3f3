"""Flat-torus arithmetic on T^n = R^n / Z^n.

Points are stored reduced to ``[0, 1)^n``; lifts only appear transiently
(inside distances, Newton steps and derivative chains).  Every function
accepts either a single point of shape ``(n,)`` or a batch ``(m, n)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

__all__ = [
    "TorusPoint",
    "TorusVector",
    "Ball",
    "reduce",
    "wrap",
    "torus_distance",
    "is_epsilon_dense",
    "DENSITY_FLOOR_LEVEL",
]


def reduce(x):
    """Reduce coordinates mod 1 into ``[0, 1)``.

    ``np.mod`` can return exactly 1.0 for tiny negative inputs; those are
    folded back to 0 so that reduction is idempotent.
    """
    y = np.mod(np.asarray(x, dtype=float), 1.0)
    return np.where(y >= 1.0, 0.0, y)


def wrap(d):
    """Shortest representative of a displacement, in ``[-1/2, 1/2)``."""
    d = np.asarray(d, dtype=float)
    return d - np.floor(d + 0.5)


def torus_distance(x, y):
    """Flat distance on the torus (minimum over integer translates)."""
    return np.linalg.norm(wrap(np.asarray(x, float) - np.asarray(y, float)), axis=-1)


@dataclass(frozen=True)
class TorusPoint:
    coords: tuple

    def __init__(self, coords):
        c = reduce(np.atleast_1d(np.asarray(coords, dtype=float)))
        object.__setattr__(self, "coords", tuple(float(v) for v in c))

    @property
    def dim(self) -> int:
        return len(self.coords)

    def array(self) -> np.ndarray:
        return np.array(self.coords)

    def distance(self, other: "TorusPoint") -> float:
        return float(torus_distance(self.array(), other.array()))


@dataclass(frozen=True)
class TorusVector:
    components: tuple

    def __init__(self, components):
        c = np.atleast_1d(np.asarray(components, dtype=float))
        object.__setattr__(self, "components", tuple(float(v) for v in c))

    def norm(self) -> float:
        return float(np.linalg.norm(self.components))


@dataclass(frozen=True)
class Ball:
    center: TorusPoint
    radius: float

    def __post_init__(self):
        if not isinstance(self.center, TorusPoint):
            object.__setattr__(self, "center", TorusPoint(self.center))
        if not (0.0 < self.radius < 0.5):
            raise ValueError(f"ball radius must lie in (0, 1/2), got {self.radius}")

    @property
    def dim(self) -> int:
        return self.center.dim

    def contains(self, x, strict: bool = True):
        d = torus_distance(x, self.center.array())
        return d < self.radius if strict else d <= self.radius

    def to_dict(self) -> dict:
        return {"center": list(self.center.coords), "radius": self.radius}


# Deepest dyadic level the density refinement may reach, per dimension.  It is
# fixed (independent of eps) so that certificates are monotone in eps.
DENSITY_FLOOR_LEVEL = {1: 26, 2: 15, 3: 10}
_DENSITY_MAX_CELLS = 4_000_000


def is_epsilon_dense(points, eps: float, floor_level: int | None = None) -> bool:
    """Certify that the open eps-balls around ``points`` cover the torus.

    The torus is covered by a dyadic grid whose mesh is at most ``eps/2``.
    A grid cell with centre ``c`` and half-diagonal ``rho`` is accepted when
    ``dist(c, S) + rho < eps``; a centre with ``dist(c, S) >= eps`` is an
    explicit uncovered point and ends the search with ``False``.  Undecided
    cells are bisected down to a fixed floor level, where they count as
    failures.

    ``True`` is therefore a proof of eps-density.  Conversely, any set that is
    eps'-dense for some eps' < eps is certified once the grid is finer than
    ``eps - eps'``.  Because the floor does not depend on eps, certifying at
    eps implies certifying at every larger eps.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.size == 0:
        raise ValueError("point set must be non-empty")
    n = pts.shape[1]
    tree = cKDTree(reduce(pts), boxsize=1.0)
    floor = floor_level if floor_level is not None else DENSITY_FLOOR_LEVEL.get(n, max(4, 30 // n))
    level = max(0, math.ceil(math.log2(2.0 / eps)))
    floor = max(floor, level)
    side = 2 ** level
    axes = [np.arange(side)] * n
    idx = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    offsets = np.stack(np.meshgrid(*([np.arange(2)] * n), indexing="ij"), axis=-1).reshape(-1, n)
    while True:
        h = 0.5 ** level
        centers = (idx + 0.5) * h
        d, _ = tree.query(centers)
        if np.any(d >= eps):
            return False
        rho = 0.5 * h * math.sqrt(n)
        open_cells = idx[d + rho >= eps]
        if open_cells.shape[0] == 0:
            return True
        if level >= floor or open_cells.shape[0] * 2 ** n > _DENSITY_MAX_CELLS:
            return False
        idx = (2 * open_cells[:, None, :] + offsets[None, :, :]).reshape(-1, n)
        level += 1
