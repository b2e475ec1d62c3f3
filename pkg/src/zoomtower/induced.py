"""Base ball around a source, first-zooming-return cells and the induced map.

Cells are discovered by scanning a deterministic low-discrepancy set of seeds
in the base forward under ``f~ = f^ell``: whenever a seed lands back in the
base, the base is pulled back along the seed's orbit to give a candidate
cell.  For short return times, where the backward tree of the base centre is
small, its pre-images inside the base are added as candidates too, which
makes those levels complete.  Candidates are then certified from scratch by
backward pull-back (numerically stable, unlike forward iteration), so the
discovery step only decides which cells are looked at, never what a cell is.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .branches import ball_samples, pull_back
from .errors import (
    BranchUndefined,
    BudgetExceeded,
    MarkovViolation,
    NoCellsFound,
    RadiusTooLarge,
)
from .torus import Ball, TorusPoint, reduce, torus_distance, wrap
from .zooming import SourceZoomingData, ZoomingContraction

RESIDUAL_TOL = 1e-9


@dataclass
class InducedBase:
    center: TorusPoint
    r: float
    delta: float
    ell: int

    @property
    def Delta(self) -> Ball:
        return Ball(self.center, self.r)

    @property
    def dim(self) -> int:
        return self.center.dim

    @property
    def volume(self) -> float:
        n = self.dim
        return math.pi ** (n / 2) / math.gamma(n / 2 + 1) * self.r**n

    def to_dict(self):
        return {
            "center": list(self.center.coords),
            "r": self.r,
            "delta": self.delta,
            "ell": self.ell,
            "series_bound": self.r / 7,
            "nested_ball_approximation": True,
        }

    @classmethod
    def from_dict(cls, doc):
        return cls(TorusPoint(doc["center"]), float(doc["r"]), float(doc["delta"]), int(doc["ell"]))


def build_base(f, source_data: SourceZoomingData, r: float) -> InducedBase:
    """Base ball ``B_r(p')`` around the source representative, ``r < delta/4``."""
    if not 0 < r < source_data.delta / 4:
        raise RadiusTooLarge(f"need 0 < r < delta/4 = {source_data.delta / 4:.6g}, got r = {r}")
    return InducedBase(TorusPoint(source_data.orbit_points[0]), float(r), float(source_data.delta), int(source_data.ell))


@dataclass
class Cell:
    id: int
    return_time: int  # in blocks of ell steps
    itinerary: tuple  # index of the one-step branch taken at each f-step
    chain: np.ndarray = field(repr=False)  # f-orbit from the cell centre to the base centre
    boundary: np.ndarray = field(repr=False)  # pull-back of boundary samples of the base
    derivative_bound: float = 0.0  # smallest singular value of DF over the samples
    volume: float = 0.0
    radius: float = 0.0
    zooming_margin: float = 0.0

    @property
    def center(self) -> np.ndarray:
        return self.chain[0]

    def to_dict(self):
        return {
            "id": self.id,
            "R": self.return_time,
            "itinerary": list(self.itinerary),
            "center": self.center.tolist(),
            "radius": self.radius,
            "volume": self.volume,
            "derivative_bound": self.derivative_bound,
            "zooming_margin": self.zooming_margin,
            "chain": self.chain.tolist(),
            "boundary": self.boundary.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            int(d["id"]),
            int(d["R"]),
            tuple(d["itinerary"]),
            np.asarray(d["chain"], float),
            np.asarray(d["boundary"], float),
            float(d["derivative_bound"]),
            float(d["volume"]),
            float(d["radius"]),
            float(d["zooming_margin"]),
        )


@dataclass
class InducedMarkovMap:
    f: object
    base: InducedBase
    alpha: ZoomingContraction
    cells: list
    max_R: int
    report: dict = field(default_factory=dict)

    @property
    def ell(self) -> int:
        return self.base.ell

    @property
    def return_times(self) -> np.ndarray:
        return np.array([c.return_time for c in self.cells], int)

    def cell(self, cid):
        return self.cells[cid]

    def to_dict(self):
        return {
            "map": self.f.to_dict(),
            "base": self.base.to_dict(),
            "alpha": self.alpha.to_dict(),
            "max_R": self.max_R,
            "cells": [c.to_dict() for c in self.cells],
            "truncation": self.report,
        }

    @classmethod
    def from_dict(cls, doc, f=None):
        from .maps import map_from_dict

        if f is None:
            f = map_from_dict(doc["map"])
        cells = [Cell.from_dict(c) for c in doc["cells"]]
        return cls(f, InducedBase.from_dict(doc["base"]), ZoomingContraction(doc["alpha"]["rate"]), cells, int(doc["max_R"]), doc.get("truncation", {}))


def base_seeds(base: InducedBase, count: int) -> np.ndarray:
    """Kronecker sequence with the generalized golden ratio, clipped to the base ball.

    The sequence is generated in 64-bit fixed point so every seed carries a
    full mantissa (float ``i * a mod 1`` loses a bit per doubling of ``i``,
    and the lost bits come back as spurious exact returns under maps such as
    ``x -> 2x``).  Coordinates are returned in ``[-1/2, 1/2)``.
    """
    n = base.dim
    g = 2.0
    for _ in range(60):  # root of x^(n+1) = x + 1
        g = (1 + g) ** (1.0 / (n + 1))
    A = np.array([int((1.0 / g) ** (k + 1) * 2.0**64) for k in range(n)], dtype=np.uint64)
    out, i, total = [], 1, 0
    while total < count:
        idx = np.arange(i, i + 2 * count, dtype=np.uint64)[:, None]
        u = ((idx * A + np.uint64(1 << 63)) >> np.uint64(11)).astype(float) / 2.0**53
        v = 2 * u - 1
        v = v[np.linalg.norm(v, axis=1) < 1]
        out.append(v)
        total += len(v)
        i += 2 * count
    v = np.vstack(out)[:count]
    # centred representative: values near 0 keep their full mantissa, which
    # reducing small negatives to just below 1 would throw away
    return wrap(base.center.array() + base.r * v)


def _base_samples(base: InducedBase, n_interior: int = 32):
    nb = 2 if base.dim == 1 else 64
    return ball_samples(base.center.array(), base.r, nb, n_interior), nb


def _pull_points(f, anchors, pts):
    """Pull ``pts`` (m, n) back along per-point anchor chains (m, L+1, n)."""
    L = anchors.shape[1] - 1
    out = np.empty_like(anchors)
    out[:, L] = pts
    for j in range(L - 1, -1, -1):
        w, _ = f.local_inverse(out[:, j + 1], anchors[:, j])
        out[:, j] = reduce(w)
    return out


def _chain_structure(f, chains):
    """Branch index and sheet separation at each step of each chain.

    The index is the position of ``x_j`` among the pre-images of ``x_{j+1}``;
    the separation is the distance from ``x_j`` to the nearest other one.
    """
    C, L1, n = chains.shape
    if f.degree == 1 or L1 < 2:
        return np.zeros((C, L1 - 1), int), np.full((C, L1 - 1), np.inf)
    pre = f.inverse_branches(chains[:, 1:].reshape(-1, n)).reshape(C, L1 - 1, f.degree, n)
    d = torus_distance(pre, chains[:, :-1, None, :])
    itin = np.argmin(d, axis=-1)
    d.sort(axis=-1)
    return itin, d[..., 1]


def _derivative_bound(f, Z):
    """Smallest singular value of the cocycle along pulled-back chains ``Z`` (L+1, m, n)."""
    L, m, n = Z.shape[0] - 1, Z.shape[1], Z.shape[2]
    M = np.broadcast_to(np.eye(n), (m, n, n)).copy()
    s = np.zeros(m)
    logdet = np.zeros(m)
    for j in range(L):
        D = f.derivative(Z[j])
        logdet += np.log(np.abs(np.linalg.det(D)))
        M = D @ M
        big = np.max(np.abs(M), axis=(1, 2))
        hit = big > 1e150
        if np.any(hit):
            M[hit] /= big[hit, None, None]
            s[hit] += np.log(big[hit])
    sv = np.linalg.svd(M, compute_uv=False)[:, -1]
    # stays exact (e.g. a power of 64) when no rescaling happened
    return np.where(s == 0, sv, np.exp(np.log(sv) + s)), logdet


def _pull_batch(f, chains, samples, sep):
    """Pull the same sample set back along many chains ending at its centre.

    Returns ``(Z, ok, residual)`` with ``Z`` of shape ``(L + 1, C, m, n)``;
    ``ok[c]`` is False when some step of chain ``c`` is not injective on
    the pulled-back set.
    """
    C, L1, n = chains.shape
    L, m = L1 - 1, len(samples)
    Z = np.empty((L1, C, m, n))
    Z[L] = samples[None]
    ok = np.ones(C, bool)
    for j in range(L - 1, -1, -1):
        anchors = np.repeat(chains[:, j], m, axis=0)
        w, conv = f.local_inverse(Z[j + 1].reshape(-1, n), anchors)
        w = reduce(w)
        off = torus_distance(w, anchors).reshape(C, m)
        ok &= conv.reshape(C, m).all(axis=1) & (off.max(axis=1) < 0.5 * sep[:, j])
        Z[j] = w.reshape(C, m, n)
    if L:
        img = f.evaluate(Z[:-1].reshape(-1, n)).reshape(L, C, m, n)
        res = torus_distance(img, Z[1:]).max(axis=(0, 2))
    else:
        res = np.zeros(C)
    return Z, ok, res


def _zooming_batch(f, chains, sep, ell, alpha, delta, tol):
    """Vectorised form of :func:`zooming_along_chain` for chains of equal length."""
    from .zooming import _pair_schedule

    C, L1, n = chains.shape
    k = (L1 - 1) // ell
    n_pairs = 32 * k
    m = max(8, int(math.ceil(math.sqrt(2 * n_pairs))) + 3)
    nb = 2 if n == 1 else max(8, m // 2)
    samples = ball_samples(chains[0, -1], delta, nb, m - 1 - nb)
    Z, ok, _ = _pull_batch(f, chains, samples, sep)
    Z = Z[::ell]
    i, j = _pair_schedule(len(samples), n_pairs)
    d = torus_distance(Z[:, :, i, :], Z[:, :, j, :])  # (k + 1, C, P)
    steps = k - np.arange(k)
    bound = alpha.rate ** steps[:, None, None] * d[k][None]
    slack = bound - d[:k]
    ok &= slack.min(axis=(0, 2)) >= -tol
    rel = (slack / np.where(bound > 0, bound, 1.0)).min(axis=(0, 2))
    return ok, rel


def _certify_batch(f, base: InducedBase, alpha, chains, chunk: int = 256):
    """Certify candidate cells given by chains of equal length ending at the base centre.

    Returns one ``(fields, None)`` or ``(None, reason)`` per chain.
    """
    from .zooming import SAMPLE_TOL

    out = []
    samples, nb = _base_samples(base)
    inner = np.r_[0, np.arange(1 + nb, len(samples))]
    c = base.center.array()
    for s0 in range(0, len(chains), chunk):
        ch = np.asarray(chains[s0 : s0 + chunk])
        _, sep = _chain_structure(f, ch)
        Z, ok, res = _pull_batch(f, ch, samples, sep)
        inside = torus_distance(Z[0], c).max(axis=1) < base.r
        zok, zrel = _zooming_batch(f, ch, sep, base.ell, alpha, base.delta, SAMPLE_TOL)
        L1, C, m, n = Z.shape
        svs, logdet = _derivative_bound(f, Z.reshape(L1, C * m, n))
        svs, logdet = svs.reshape(C, m), logdet.reshape(C, m)
        for q in range(len(ch)):
            if not ok[q]:
                out.append((None, "branch"))
            elif not inside[q]:
                out.append((None, "outside"))
            elif res[q] > RESIDUAL_TOL:
                out.append((None, "residual"))
            elif not zok[q]:
                out.append((None, "zooming"))
            else:

                vol = base.volume * float(np.mean(np.exp(-logdet[q, inner])))
                bd = Z[0, q, 1 : 1 + nb]
                rad = float(np.max(torus_distance(bd, Z[0, q, 0])))
                fields = dict(boundary=bd, derivative_bound=float(np.min(svs[q])), volume=vol, radius=rad, zooming_margin=float(zrel[q]))
                out.append((fields, None))
    return out


def _certify_cell(f, base: InducedBase, alpha, chain):
    return _certify_batch(f, base, alpha, np.asarray(chain)[None])[0]


def _cell_interval(cell):
    off = wrap(cell.boundary[:, 0] - cell.center[0])
    return float(off.min()), float(off.max())


def _overlaps(cell_center, cell_radius, interval, cells):
    """Open-set overlap test against committed cells (intervals in 1-D, circumscribed balls otherwise)."""
    for q in cells:
        if interval is not None:
            lo, hi = interval
            qlo, qhi = _cell_interval(q)
            s = float(wrap(q.center[0] - cell_center[0]))
            if s + qlo < hi and s + qhi > lo:
                return True
        elif torus_distance(q.center, cell_center) < cell_radius + q.radius:
            return True
    return False


class _Committed:
    """Committed cells plus cached centre/radius arrays for overlap queries."""

    def __init__(self, dim):
        self.cells = []
        self.dim = dim
        self._C = np.empty((0, dim))
        self._R = np.empty(0)

    def add(self, cell):
        self.cells.append(cell)
        self._C = np.vstack([self._C, cell.center[None]])
        self._R = np.append(self._R, cell.radius)

    def near(self, center, radius):
        if not self.cells:
            return []
        d = torus_distance(self._C, center)
        return [self.cells[i] for i in np.nonzero(d < radius + self._R + 1e-15)[0]]

    def find(self, center):
        if not self.cells:
            return None
        d = torus_distance(self._C, center)
        i = int(np.argmin(d))
        return self.cells[i] if d[i] < 1e-12 else None


def build_induced_map(
    f,
    base: InducedBase,
    alpha: ZoomingContraction,
    max_R: int,
    cell_budget: int = 2000,
    n_seeds: int = 4096,
    strict_budget: bool = False,
    exhaustive_nodes: int = 2**16,
) -> InducedMarkovMap:
    """First-zooming-return induced map on the base, truncated at ``max_R`` blocks.

    Candidate cells at return time ``k`` come from two sources: forward
    seeds of the base whose orbit is back in the base after ``k`` blocks,
    and, while ``degree^(ell k) <= exhaustive_nodes``, every pre-image of
    the base centre under ``f^(ell k)`` that lies in the base (these levels
    are then enumerated completely and listed as ``exhaustive_levels``).

    Cells are claimed level by level (increasing return time), ties inside a
    level broken by the lexicographic order of the branch itinerary.  A
    candidate is dropped if it is not certified (branch not injective, not
    inside the base, zooming inequality fails) or if it meets a cell claimed
    earlier, including the cell defined by a shorter prefix of its own
    branch.  Reaching ``cell_budget`` stops the search (or raises
    :class:`BudgetExceeded` when ``strict_budget``).
    """
    if max_R < 1:
        raise ValueError("max_R must be >= 1")
    ell = base.ell
    c0 = base.center.array()
    seeds = base_seeds(base, n_seeds)
    traj = np.empty((len(seeds), ell * max_R + 1, base.dim))
    traj[:, 0] = seeds
    for t in range(ell * max_R):
        traj[:, t + 1] = wrap(f.lift(traj[:, t]))
    returned = np.zeros(len(seeds), bool)
    store = _Committed(base.dim)
    prefix_status = {}  # (itinerary prefix) -> committed cell or None
    per_level, candidates, rejected = [], [], {"branch": 0, "outside": 0, "residual": 0, "zooming": 0, "overlap": 0}
    budget_hit = False
    frontier = c0[None, :]
    exhaustive = []

    for k in range(1, max_R + 1):
        L = ell * k
        hit = ~returned & (torus_distance(traj[:, L], c0) < base.r)
        idx = np.nonzero(hit)[0]
        anchors = [traj[idx, : L + 1]]
        if frontier is not None and len(frontier) * f.degree**ell <= exhaustive_nodes:
            for _ in range(ell):
                frontier = f.inverse_branches(frontier).reshape(-1, base.dim)
            pts = frontier[torus_distance(frontier, c0) < base.r]
            orb = np.empty((len(pts), L + 1, base.dim))
            orb[:, 0] = wrap(pts)
            for t in range(L):
                orb[:, t + 1] = wrap(f.lift(orb[:, t]))
            anchors.append(orb)
            exhaustive.append(k)
        else:
            frontier = None
        anchors = np.concatenate(anchors)
        n_new = 0
        if len(anchors):
            chains = _pull_points(f, anchors, np.broadcast_to(c0, (len(anchors), base.dim)))
            its, _ = _chain_structure(f, chains)
            keys = [tuple(row) for row in its]
            order = sorted(range(len(anchors)), key=lambda i: keys[i])
            groups = {}
            for i in order:
                groups.setdefault(keys[i], []).append(i)
            candidates.append(len(groups))
            reps = [members[0] for members in groups.values()]
            results = _certify_batch(f, base, alpha, chains[reps])
            for (key, members), result in zip(groups.items(), results):
                chain = chains[members[0]]
                status = _claim(f, base, alpha, key, chain, store, prefix_status, rejected, result)
                if status is not None:
                    seed_members = [m for m in members if m < len(idx)]
                    returned[idx[seed_members]] = True
                    n_new += 1
                    if len(store.cells) >= cell_budget:
                        budget_hit = True
                        break
        else:
            candidates.append(0)
        per_level.append(n_new)
        if budget_hit:
            if strict_budget:
                raise BudgetExceeded(f"cell budget {cell_budget} reached at return time {k}", largest_feasible=k - 1)
            break
    cells = sorted(store.cells, key=lambda c: (c.return_time, c.itinerary))
    for i, cell in enumerate(cells):
        cell.id = i
    if not cells:
        raise NoCellsFound("no certified return to the base; delta or r is probably miscalibrated")
    report = {
        "max_R": max_R,
        "n_seeds": int(len(seeds)),
        "exhaustive_levels": exhaustive,
        "cells_per_level": [int(np.sum(np.array([c.return_time for c in cells]) == k)) for k in range(1, len(per_level) + 1)],
        "claimed_per_scan": per_level,
        "candidates_per_level": candidates,
        "rejected": rejected,
        "budget_hit": budget_hit,
        "lebesgue_covered_fraction": float(sum(c.volume for c in cells) / base.volume),
        "nested_ball_approximation": True,
    }
    return InducedMarkovMap(f, base, alpha, cells, max_R, report)


def _claim(f, base, alpha, key, chain, store, prefix_status, rejected, result=None):
    """Certify a candidate and commit it unless an earlier claim covers part of it."""
    ell = base.ell
    k = len(key) // ell
    fields, reason = result if result is not None else _certify_cell(f, base, alpha, chain)
    if fields is None:
        rejected[reason] += 1
        prefix_status[key] = None
        return None
    center = chain[0]
    interval = None
    if base.dim == 1:
        off = wrap(fields["boundary"][:, 0] - center[0])
        interval = (float(off.min()), float(off.max()))
    # shorter prefixes of the same branch whose image meets the base
    for j in range(1, k):
        pkey = key[: ell * j]
        if pkey not in prefix_status:
            x = chain[ell * j]
            if torus_distance(x, base.center.array()) < base.r + 2 * base.r:
                sub = _pull_points(f, chain[None, : ell * j + 1], base.center.array()[None])[0]
                known = store.find(sub[0])
                prefix_status[pkey] = known if known is not None else _claim(f, base, alpha, pkey, sub, store, prefix_status, rejected)
            else:
                prefix_status[pkey] = None
        q = prefix_status[pkey]
        if q is not None and _overlaps(center, fields["radius"], interval, [q]):
            rejected["overlap"] += 1
            prefix_status[key] = None
            return None
    if _overlaps(center, fields["radius"], interval, store.near(center, fields["radius"])):
        rejected["overlap"] += 1
        prefix_status[key] = None
        return None
    cell = Cell(len(store.cells), k, tuple(int(v) for v in key), np.asarray(chain), **fields)
    store.add(cell)
    prefix_status[key] = cell
    return cell


def _region_test(cell, pts, tol):
    """Whether displacement ``pts - centre`` lies in the cell's stored geometry.

    Returns ``(inside, degenerate)``.  A cell thinner than float resolution
    in some direction has a self-intersecting boundary polygon; it is then
    replaced by its convex hull (``degenerate`` is set).
    """
    d = wrap(pts - cell.center)
    bd = wrap(cell.boundary - cell.center)
    if d.shape[1] == 1:
        return (d[:, 0] >= bd[:, 0].min() - tol) & (d[:, 0] <= bd[:, 0].max() + tol), False
    if d.shape[1] == 2:
        import shapely

        poly = shapely.Polygon(bd)
        degenerate = not poly.is_valid
        if degenerate:
            poly = shapely.MultiPoint(bd).convex_hull
        return shapely.contains_xy(poly.buffer(tol), d[:, 0], d[:, 1]), degenerate
    from scipy.spatial import Delaunay

    return Delaunay(bd * (1 + tol / max(cell.radius, 1e-300))).find_simplex(d) >= 0, False


RESOLVABLE = 1e-12  # spacing below which float coordinates on [0, 1) cannot separate points


def certify_markov(F: InducedMarkovMap, samples_per_cell: int = 64) -> dict:
    """Check ``F(P) = Delta`` cell by cell on a base-covering sample grid.

    For every cell the grid is pulled back along the cell's branch.  The
    pulled-back points must lie in the base (``P`` inside ``Delta``), lie in
    the stored cell geometry (surjectivity onto the grid) and re-iterate one
    step at a time to within 1e-9 of their targets.  Injectivity comes from
    the branch criterion applied at every step (pulled-back set within half
    the sheet separation); in addition the pulled-back grid must stay
    pairwise distinct at every step where its spacing is above float
    resolution.  Raises :class:`MarkovViolation` on the first failure.
    """
    if not F.cells:
        return {"n_cells": 0, "passed": True, "warning": "empty partition: vacuous pass"}
    from scipy.spatial import cKDTree

    base = F.base
    c = base.center.array()
    nb = 2 if base.dim == 1 else max(8, samples_per_cell // 2)
    grid = ball_samples(c, base.r, nb, max(1, samples_per_cell - 1 - nb))
    worst_res, worst_inside, min_db = 0.0, np.inf, np.inf
    resolved = np.inf
    degenerate = 0
    by_R = {}
    for cell in F.cells:
        by_R.setdefault(len(cell.chain), []).append(cell)
    for _, group in sorted(by_R.items()):
        for s0 in range(0, len(group), 256):
            cells = group[s0 : s0 + 256]
            chains = np.array([q.chain for q in cells])
            _, sep = _chain_structure(F.f, chains)
            Z, ok, res = _pull_batch(F.f, chains, grid, sep)
            for q, cell in enumerate(cells):
                if not ok[q]:
                    raise MarkovViolation(f"cell {cell.id}: branch not injective on the pulled-back base", cell_id=cell.id, witness={})
                Z0 = Z[0, q]
                dist = torus_distance(Z0, c)
                if np.max(dist) >= base.r:
                    i = int(np.argmax(dist))
                    raise MarkovViolation(f"cell {cell.id} leaves the base", cell_id=cell.id, witness={"point": Z0[i].tolist()})
                if res[q] > RESIDUAL_TOL:
                    raise MarkovViolation(f"cell {cell.id}: step residual {res[q]:.3e}", cell_id=cell.id, witness={"residual": float(res[q])})
                depth = 0
                for j in range(len(Z) - 1, -1, -1):
                    dd, _ = cKDTree(Z[j, q], boxsize=1.0).query(Z[j, q], k=2)
                    nn = float(np.min(dd[:, 1]))
                    if nn < RESOLVABLE:
                        if nn == 0 and j == len(Z) - 1:
                            raise MarkovViolation(f"cell {cell.id}: duplicate grid points", cell_id=cell.id, witness={})
                        break
                    depth += 1
                resolved = min(resolved, depth)
                # relative slack plus a few ulps of a coordinate in [0, 1)
                tol = 1e-9 * cell.radius + 8 * np.spacing(1.0)
                inside, degen = _region_test(cell, Z0, tol)
                degenerate += degen
                if not np.all(inside):
                    i = int(np.argmin(inside))
                    raise MarkovViolation(
                        f"cell {cell.id}: image misses part of the base", cell_id=cell.id, witness={"base_point": grid[i].tolist()}
                    )
                worst_res = max(worst_res, float(res[q]))
                worst_inside = min(worst_inside, float((base.r - np.max(dist)) / base.r))
                min_db = min(min_db, cell.derivative_bound)
    return {
        "n_cells": len(F.cells),
        "samples_per_cell": len(grid),
        "passed": True,
        "max_step_residual": worst_res,
        "min_inside_margin": worst_inside,
        "min_derivative_bound": min_db,
        "expansion_margin": min_db - 8.0,
        "min_resolved_distinct_steps": int(resolved),
        "degenerate_cells": degenerate,
        "warning": None if not degenerate else f"{degenerate} cell(s) thinner than float resolution; region test used the convex hull",
    }


def return_time_tail(F: InducedMarkovMap, n: int, weights=None) -> float:
    """``nu(R >= n)`` under ``weights``, or under cell volume (Lebesgue proxy)."""
    R = F.return_times
    if weights is not None:
        a = np.asarray(weights.a)
    else:
        a = np.array([c.volume for c in F.cells])
        a = a / a.sum()
    return float(np.sum(a[R >= n]))
