"""Forward orbits, pre-orbit trees, periodic points and the hypothesis checks
for derived-from-expanding maps (expansion off ``U0``, internal radius growth,
arc escape, pre-images off ``U1``).

Limit sets are never computed; they are represented by finite eps-density
certificates (see :func:`zoomtower.torus.is_epsilon_dense`).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .branches import ball_samples, pull_back, sheet_separation
from .errors import BranchUndefined, BudgetExceeded, Inconclusive, OrbitEntersU0
from .maps import derivative_cocycle, exact_orbit, is_linear, orbit
from .torus import Ball, TorusPoint, is_epsilon_dense, reduce, torus_distance, wrap

log = logging.getLogger(__name__)

PERIODIC_TOL = 1e-10
HYPER_MARGIN = 1e-6


@dataclass
class PeriodicOrbit:
    point: TorusPoint
    period: int
    multiplier_matrix: np.ndarray
    classification: str

    @property
    def eigenvalues(self):
        return np.linalg.eigvals(self.multiplier_matrix)

    def to_dict(self):
        ev = self.eigenvalues
        return {
            "point": list(self.point.coords),
            "period": self.period,
            "multiplier_matrix": np.asarray(self.multiplier_matrix).tolist(),
            "eigenvalue_moduli": sorted(float(v) for v in np.abs(ev)),
            "complex_pair": bool(np.any(np.abs(ev.imag) > 1e-9)),
            "classification": self.classification,
        }


def classify(matrix, margin: float = HYPER_MARGIN) -> str:
    mod = np.abs(np.linalg.eigvals(np.atleast_2d(matrix)))
    if np.any(np.abs(mod - 1.0) <= margin):
        return "nonhyperbolic"
    if np.all(mod > 1.0):
        return "source"
    if np.all(mod < 1.0):
        return "sink"
    return "saddle"


class PeriodicOrbitList(list):
    """List of :class:`PeriodicOrbit` that also remembers dropped seeds."""

    dropped: int = 0


@dataclass
class PreOrbitTree:
    root: TorusPoint
    depth: int
    levels: list = field(default_factory=list)  # levels[j-1] is f^{-j}(root), shape (N^j, n)

    def level(self, j: int) -> np.ndarray:
        return self.levels[j - 1]


@dataclass
class DensityCertificate:
    certified: bool
    depth_used: int
    eps: float
    cell_size: float
    n_points: int
    frontier_sizes: list

    def __iter__(self):
        yield self.certified
        yield self.depth_used

    def to_dict(self):
        return {
            "certified": self.certified,
            "depth_used": self.depth_used,
            "eps": self.eps,
            "cell_size": self.cell_size,
            "n_points": self.n_points,
            "frontier_sizes": list(self.frontier_sizes),
        }


def forward_orbit_density(f, x, n_max: int, eps: float):
    """Whether ``{x, ..., f^{n_max} x}`` is eps-dense, and the shortest dense prefix.

    Returns ``(dense, first_n)`` where ``first_n`` is the smallest ``n`` with
    ``{x, ..., f^n x}`` eps-dense (``None`` when not dense).

    Coordinates given as ``Fraction`` or ``mpmath.mpf`` are iterated
    exactly when the map is linear (see :func:`~zoomtower.maps.exact_orbit`).
    """
    if n_max < 1 or not eps > 0:
        raise ValueError("need n_max >= 1 and eps > 0")
    x = np.atleast_1d(np.asarray(x, dtype=object))
    if x.dtype == object and not all(isinstance(v, float) for v in x) and is_linear(f):
        pts = exact_orbit(f, list(x), n_max)
    else:
        pts = orbit(f, np.asarray(x, float), n_max)
    if not is_epsilon_dense(pts, eps):
        return False, None
    lo, hi = 0, n_max
    while lo < hi:
        mid = (lo + hi) // 2
        if is_epsilon_dense(pts[: mid + 1], eps):
            hi = mid
        else:
            lo = mid + 1
    return True, lo


def build_preorbit_tree(f, x, depth_max: int, node_budget: int = 10**6) -> PreOrbitTree:
    if depth_max < 1:
        raise ValueError("depth_max must be >= 1")
    if f.degree**depth_max > node_budget:
        feasible = int(math.floor(math.log(node_budget) / math.log(f.degree) + 1e-12)) if f.degree > 1 else depth_max
        raise BudgetExceeded(
            f"degree^depth = {f.degree}^{depth_max} exceeds the node budget {node_budget}",
            largest_feasible=feasible,
        )
    root = reduce(np.asarray(x, float))
    tree = PreOrbitTree(TorusPoint(root), depth_max)
    level = root[None, :]
    for _ in range(depth_max):
        level = f.inverse_branches(level).reshape(-1, f.dim)
        tree.levels.append(level)
    return tree


def _first_per_cell(points, cell_size):
    idx = np.floor(reduce(points) / cell_size).astype(np.int64)
    _, first = np.unique(idx, axis=0, return_index=True)
    first.sort()
    return first, idx[first]


def preorbit_density_certificate(
    f, x, eps: float, depth_max: int, node_budget: int = 10**6, cell_size: float | None = None
) -> DensityCertificate:
    """eps-density of the pre-orbit of ``x`` up to ``depth_max``, with frontier pruning.

    At every level only the first pre-image falling in each cell of a grid of
    mesh ``cell_size`` (default ``eps/4``) is kept and expanded, so memory is
    bounded by the grid rather than by ``degree^depth``.  Density is checked
    on the union of kept points of levels ``1..d`` after each level; the
    smallest successful ``d`` is ``depth_used``.  For a fixed ``cell_size``
    the result is monotone in eps.

    Raises :class:`Inconclusive` if a level would need more than
    ``node_budget`` branch evaluations.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    h = cell_size if cell_size is not None else eps / 4
    frontier = reduce(np.atleast_2d(np.asarray(x, float)))
    kept_cells: set = set()
    union = []
    sizes = []
    for depth in range(1, depth_max + 1):
        if len(frontier) * f.degree > node_budget:
            raise Inconclusive(f"level {depth} needs {len(frontier) * f.degree} nodes > budget {node_budget}")
        pre = f.inverse_branches(frontier).reshape(-1, f.dim)
        first, cells = _first_per_cell(pre, h)
        frontier = pre[first]
        sizes.append(len(frontier))
        for p, c in zip(frontier, map(tuple, cells)):
            if c not in kept_cells:
                kept_cells.add(c)
                union.append(p)
        if is_epsilon_dense(np.array(union), eps):
            return DensityCertificate(True, depth, eps, h, len(union), sizes)
    return DensityCertificate(False, depth_max, eps, h, len(union), sizes)


def _periodic_newton(f, X, k, iters=50, tol=1e-12):
    for _ in range(iters):
        G = wrap(f.iterate(X, k) - X)
        if np.all(np.abs(G) < tol):
            break
        J = derivative_cocycle(f, X, k) - np.eye(f.dim)
        step = np.linalg.solve(J, G[..., None])[..., 0]
        X = reduce(X - step)
    G = wrap(f.iterate(X, k) - X)
    return X, np.all(np.abs(G) < tol, axis=-1) & np.all(np.isfinite(X), axis=-1)


def find_periodic_points(f, period_k: int, seed_grid_resolution: int = 64, dedupe_tol: float = 1e-7):
    """Points with ``f^k(x) = x`` found by Newton from every seed of a grid.

    Returns a :class:`PeriodicOrbitList`; ``dropped`` counts seeds that did
    not converge.  Each point is classified from the eigenvalues of
    ``Df^k`` at the point.
    """
    if period_k < 1:
        raise ValueError("period_k must be >= 1")
    g = (np.arange(seed_grid_resolution) + 0.5) / seed_grid_resolution
    seeds = np.stack(np.meshgrid(*([g] * f.dim), indexing="ij"), -1).reshape(-1, f.dim)
    with np.errstate(all="ignore"):
        X, ok = _periodic_newton(f, seeds, period_k)
    out = PeriodicOrbitList()
    out.dropped = int(np.sum(~ok))
    X = X[ok]
    if len(X) == 0:
        return out
    # collapse seeds that converged to the same point before the pair search
    _, first = np.unique(np.round(reduce(X) / dedupe_tol).astype(np.int64), axis=0, return_index=True)
    X = X[np.sort(first)]
    tree = cKDTree(reduce(X), boxsize=1.0)
    keep = np.ones(len(X), bool)
    for i, j in sorted(tree.query_pairs(dedupe_tol)):
        if keep[i] and keep[j]:
            keep[j] = False
    X = X[keep]
    X = X[np.lexsort(X.T[::-1])]
    mats = derivative_cocycle(f, X, period_k)
    for x, M in zip(X, mats):
        out.append(PeriodicOrbit(TorusPoint(x), period_k, M, classify(M)))
    if out.dropped:
        log.info("find_periodic_points: %d seeds did not converge", out.dropped)
    return out


def _grid(dim, resolution):
    g = (np.arange(resolution) + 0.5) / resolution
    return np.stack(np.meshgrid(*([g] * dim), indexing="ij"), -1).reshape(-1, dim)


def verify_expanding_off_U0(f, U0: Ball | None, grid_resolution: int = 256, margin: float = 0.0):
    """Smallest singular value of ``Df`` over grid points outside ``U0``.

    Returns ``(expanding, min_singular_value)``.
    """
    pts = _grid(f.dim, grid_resolution)
    if U0 is not None:
        pts = pts[~U0.contains(pts)]
    best = np.inf
    for chunk in np.array_split(pts, max(1, len(pts) // 65536)):
        sv = np.linalg.svd(f.derivative(chunk), compute_uv=False)
        best = min(best, float(sv.min()))
    return bool(best > 1.0 + margin), best


def verify_irg(f, x, n_steps: int, eps: float, R_target: float, U0: Ball | None = None, n_interior: int = 64):
    """Internal radius growth along the orbit of ``x``.

    Finds the smallest ``N <= n_steps`` such that the inverse branch of
    ``f^N`` along the orbit maps ``B_R(f^N x)`` into ``B_eps(x)``, which
    implies ``B_R(f^N x) ⊂ f^N(B_eps(x))``.  Checked on ``64 n`` boundary
    points plus an interior lattice.  Returns ``(True, N)`` or
    ``(False, None)``; raises :class:`OrbitEntersU0` if the orbit meets U0.
    """
    chain = orbit(f, np.asarray(x, float), n_steps)
    if U0 is not None:
        inside = np.nonzero(U0.contains(chain))[0]
        if len(inside):
            raise OrbitEntersU0(f"orbit enters U0 at step {inside[0]}", step=int(inside[0]))
    sep = sheet_separation(f, chain)
    for N in range(1, n_steps + 1):
        samples = ball_samples(chain[N], R_target, 64 * f.dim, n_interior)
        try:
            pb = pull_back(f, chain[: N + 1], samples, separation=sep[:N])
        except BranchUndefined:
            continue
        if np.all(torus_distance(pb.points[0], chain[0]) < eps):
            return True, N
    return False, None


def verify_preimages_off_U1(f, U1: Ball, grid_resolution: int = 128):
    """Every grid point outside ``U1`` has a pre-image outside ``U1``.

    Returns ``(ok, worst)`` where ``worst`` is the smallest over grid points
    of the largest distance from a pre-image to the centre of ``U1`` minus
    its radius (positive means a pre-image lies outside).
    """
    pts = _grid(f.dim, grid_resolution)
    pts = pts[~U1.contains(pts, strict=False)]
    pre = f.inverse_branches(pts)
    d = torus_distance(pre, U1.center.array()) - U1.radius
    margin = d.max(axis=1)
    return bool(np.all(margin > 0)), float(margin.min())


def _arc_survivors(f, start, direction, U1: Ball, length, points, horizon):
    """Refinement search for arc parameters whose orbits avoid ``U1`` for ``horizon`` steps.

    After each step only parameters whose orbit is still outside ``U1`` are
    kept, and each is replaced by four children at a quarter of the current
    spacing (the map expands by about its degree per step), capped at
    ``points`` parameters.  Returns the number of survivors after ``horizon``.
    """
    s = np.linspace(0.0, length, points)
    h = length / (points - 1)
    for k in range(1, horizon + 1):
        X = reduce(start + s[:, None] * direction)
        alive = np.ones(len(s), bool)
        for _ in range(k):
            X = f.evaluate(X)
            alive &= ~U1.contains(X, strict=False)
        s = s[alive]
        if len(s) == 0:
            return 0
        if k == horizon:
            break
        s = np.unique(np.clip((s[:, None] + h * np.array([-0.375, -0.125, 0.125, 0.375])).ravel(), 0.0, length))
        h /= 4
        if len(s) > points:
            s = s[np.linspace(0, len(s) - 1, points).round().astype(int)]
    return len(s)


def arc_escape_falsifier(
    f, U1: Ball, delta0: float, n_arcs: int = 64, points_per_arc: int = 512, horizon: int = 12, seed: int = 0, U0: Ball | None = None
):
    """Sampled search for arcs that violate the escape hypothesis.

    Random straight arcs of length ``delta0`` lying outside ``U0`` are drawn;
    an arc passes if the refinement search of :func:`_arc_survivors` finds a
    parameter whose orbit stays outside ``U1`` for ``horizon`` steps.  A pass
    is evidence only: the hypothesis quantifies over all arcs and all future
    times, and a failure only says the search found no escaping point.
    """
    rng = np.random.default_rng(seed)
    failures, survivors, tried = 0, [], 0
    while tried < n_arcs:
        start = rng.random(f.dim)
        direction = rng.normal(size=f.dim)
        direction /= np.linalg.norm(direction)
        arc = reduce(start + np.linspace(0.0, delta0, points_per_arc)[:, None] * direction)
        if U0 is not None and np.any(U0.contains(arc, strict=False)):
            continue
        tried += 1
        n = _arc_survivors(f, start, direction, U1, delta0, points_per_arc, horizon)
        failures += n == 0
        survivors.append(n)
    return {
        "arcs": tried,
        "failures": failures,
        "horizon": horizon,
        "min_surviving_points": int(min(survivors)) if survivors else 0,
        "passed": failures == 0,
        "note": "sampled falsifier with survivor refinement; a pass is evidence, not proof",
    }
