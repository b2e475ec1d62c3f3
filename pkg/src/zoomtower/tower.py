"""Bernoulli weights on the induced partition, cylinder measures and the
projected invariant measure ``mu_a`` obtained by spreading ``nu_a`` along the
return blocks and averaging over the ``ell`` sub-steps.
"""
from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .branches import pull_back_ragged
from .errors import BadParam, EmptyPartition, UnknownCell
from .induced import InducedMarkovMap

FAMILIES = ("geometric", "uniform")


@dataclass
class BernoulliWeights:
    a: np.ndarray  # a[cell id]
    family: str
    param: float | None
    descriptor: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.a)

    def to_dict(self):
        return {"family": self.family, "param": self.param, "a": self.a.tolist(), **self.descriptor}


def make_weights(induced: InducedMarkovMap, family: str = "geometric", param: float | None = 0.5) -> BernoulliWeights:
    """Weights ``a_P`` on the found cells, renormalised to sum to one.

    ``geometric``: ``a_P`` proportional to ``theta^R(P) / #{Q : R(Q) = R(P)}``,
    so each return time ``k`` carries mass proportional to ``theta^k``.  The
    untruncated family puts ``(1 - theta) theta^(k-1)`` on ``{R = k}``; the
    part of that mass sitting on return times that were found is reported
    as ``covered_mass`` and the rest as ``discarded_mass``.

    ``uniform``: ``a_P = 1 / #cells``.
    """
    if not induced.cells:
        raise EmptyPartition("induced map has no cells")
    R = induced.return_times
    if family == "geometric":
        if param is None or not 0 < param < 1:
            raise BadParam(f"geometric weights need 0 < theta < 1, got {param}")
        theta = float(param)
        levels, counts = np.unique(R, return_counts=True)
        per = dict(zip(levels.tolist(), counts.tolist()))
        raw = np.array([theta ** int(k) / per[int(k)] for k in R])
        covered = math.fsum((1 - theta) * theta ** (int(k) - 1) for k in levels)
        desc = {
            "summability": "sum over cells with R = k of a_P = C theta^k",
            "theta": theta,
            "covered_mass": covered,
            "discarded_mass": 1.0 - covered,
        }
    elif family == "uniform":
        raw = np.ones(len(R))
        param = None
        desc = {"summability": "finite partition", "covered_mass": None, "discarded_mass": None}
    else:
        raise BadParam(f"unknown weight family {family!r}; expected one of {FAMILIES}")
    a = raw / math.fsum(raw)
    desc["mean_return"] = math.fsum(a * R)
    return BernoulliWeights(a, family, param, desc)


def cylinder_measure(weights: BernoulliWeights, itinerary) -> float:
    """``nu_a`` of the cylinder with the given cell itinerary (product of weights)."""
    out = 1.0
    for cid in itinerary:
        if not (isinstance(cid, (int, np.integer)) and 0 <= cid < len(weights.a)):
            raise UnknownCell(f"no cell with id {cid!r}")
        out *= float(weights.a[cid])
    return out


@dataclass
class TowerMeasure:
    weights: BernoulliWeights
    induced: InducedMarkovMap
    cascade_depth: int = 3

    def __post_init__(self):
        cells = self.induced.cells
        if not cells:
            raise EmptyPartition("induced map has no cells")
        self.lengths = np.array([len(c.chain) - 1 for c in cells])
        n = self.induced.base.dim
        self.chains = np.zeros((len(cells), self.lengths.max() + 1, n))
        for i, c in enumerate(cells):
            self.chains[i, : len(c.chain)] = c.chain
        R = self.induced.return_times
        self.kac = self.weights.a * R / math.fsum(self.weights.a * R)

    @property
    def ell(self) -> int:
        return self.induced.ell

    @property
    def mean_return(self) -> float:
        return math.fsum(self.weights.a * self.induced.return_times)

    def to_dict(self):
        return {
            "weights": {k: v for k, v in self.weights.to_dict().items() if k != "a"},
            "ell": self.ell,
            "mean_return": self.mean_return,
            "cascade_depth": self.cascade_depth,
            "n_cells": len(self.induced.cells),
        }


def _uniform_in_ball(rng, center, r, m):
    n = len(center)
    out = np.empty((0, n))
    while len(out) < m:
        v = rng.uniform(-1, 1, size=(2 * (m - len(out)) + 8, n))
        out = np.vstack([out, v[np.linalg.norm(v, axis=1) < 1]])
    return center + r * out[:m]


def _sample_chunk(measure: TowerMeasure, m: int, child, c):
    F = measure.induced
    rng = np.random.default_rng(child)
    top = rng.choice(len(measure.kac), size=m, p=measure.kac)
    deeper = rng.choice(len(measure.weights.a), size=(measure.cascade_depth, m), p=measure.weights.a)
    t = np.floor(rng.random(m) * measure.lengths[top]).astype(int)
    z = _uniform_in_ball(rng, c, F.base.r, m)
    for level in range(measure.cascade_depth - 1, -1, -1):
        z = pull_back_ragged(F.f, measure.chains, measure.lengths, deeper[level], z)
    _, rec = pull_back_ragged(F.f, measure.chains, measure.lengths, top, z, record_at=t)
    return rec, top, t


def sample_mu_a(measure: TowerMeasure, n_samples: int, seed: int, return_info: bool = False, chunk: int = 200_000, threads: int = 1):
    """Draw points from ``mu_a``.

    A cell ``P`` is drawn with probability ``a_P R(P) / sum a_Q R(Q)``; a
    point of ``P`` is drawn from the ``nu_a``-conditional, realised as the
    pull-back of a uniform point of the base through ``cascade_depth``
    further cells drawn from ``a`` and then through ``P``; finally a step
    ``t`` uniform in ``{0, ..., ell R(P) - 1}`` selects ``f^t`` of that point,
    read off the pulled-back chain rather than by forward iteration.

    Chunks draw from child seeds of ``seed``, so the output does not depend
    on ``threads``.
    """
    c = measure.induced.base.center.array()
    n_chunks = max(1, -(-n_samples // chunk))
    children = np.random.SeedSequence(seed).spawn(n_chunks)
    sizes = [min(chunk, n_samples - i * chunk) for i in range(n_chunks)]
    jobs = list(zip(sizes, children))
    if threads > 1 and n_chunks > 1:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(lambda job: _sample_chunk(measure, job[0], job[1], c), jobs))
    else:
        parts = [_sample_chunk(measure, m, child, c) for m, child in jobs]
    out = np.vstack([p[0] for p in parts])
    if return_info:
        return out, {"cells": np.concatenate([p[1] for p in parts]), "offsets": np.concatenate([p[2] for p in parts])}
    return out


def bootstrap_mean(vals, seed: int, n_boot: int = 100):
    """Sample mean and its bootstrap standard error (0 for constant data)."""
    vals = np.asarray(vals, float).reshape(-1)
    est = float(np.mean(vals))
    if np.all(vals == vals[0]):
        return est, 0.0
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    boots = np.array([vals[rng.integers(0, len(vals), len(vals))].mean() for _ in range(n_boot)])
    return est, float(np.std(boots, ddof=1))


def integrate(measure: TowerMeasure, observable, n_samples: int, seed: int, n_boot: int = 100):
    """Monte Carlo estimate of ``int observable d mu_a`` with a bootstrap standard error."""
    x = sample_mu_a(measure, n_samples, seed)
    return bootstrap_mean(np.asarray(observable(x), float).reshape(len(x)), seed, n_boot)


def _cylinders(n_cells: int, depth: int, limit: int, rng):
    total = n_cells**depth
    if total <= limit:
        return [list(c) for c in itertools.product(range(n_cells), repeat=depth)]
    return [rng.integers(0, n_cells, depth).tolist() for _ in range(limit)]


def cylinder_consistency(weights: BernoulliWeights, max_depth: int = 3, n_cylinders: int = 200, seed: int = 0) -> dict:
    """Additivity and shift invariance of ``nu_a`` on cylinders up to ``max_depth``.

    Additivity: ``nu[C] = sum_P nu[C P]``.  Invariance under the induced map
    (the left shift): ``nu(F^{-1}[C]) = sum_P nu[P C] = nu[C]``.  Sums are
    exact-rounded (``math.fsum``); the reported residuals are the largest
    absolute differences.  Cylinders are enumerated when there are at most
    ``n_cylinders`` of a given depth, otherwise drawn at random.
    """
    rng = np.random.default_rng(seed)
    a = weights.a
    add_res, inv_res, checked = 0.0, 0.0, 0
    for depth in range(1, max_depth + 1):
        for cyl in _cylinders(len(a), depth, n_cylinders, rng):
            base = cylinder_measure(weights, cyl)
            refined = math.fsum(base * float(x) for x in a)
            shifted = math.fsum(float(x) * base for x in a)
            add_res = max(add_res, abs(refined - base))
            inv_res = max(inv_res, abs(shifted - base))
            checked += 1
    return {
        "max_depth": max_depth,
        "cylinders_checked": checked,
        "additivity_residual": add_res,
        "invariance_residual": inv_res,
        "total_mass_residual": abs(math.fsum(a.tolist()) - 1.0),
    }


def kac_chi_square(measure: TowerMeasure, cells) -> dict:
    """Chi-square test of sampled cells (from ``sample_mu_a(..., return_info=True)``)
    against the marginal ``a_P R(P) / mean``.

    Draws are pooled by return time, so every bin has a sizeable expected count.
    """
    top = np.asarray(cells)
    n_samples = len(top)
    R = measure.induced.return_times
    levels = np.unique(R)
    observed = np.array([np.sum(R[top] == k) for k in levels])
    expected = np.array([math.fsum(measure.kac[R == k].tolist()) for k in levels]) * n_samples
    expected *= n_samples / expected.sum()
    chi2, p = stats.chisquare(observed, expected)
    return {
        "n_samples": n_samples,
        "levels": levels.tolist(),
        "observed": observed.tolist(),
        "expected": expected.tolist(),
        "chi2": float(chi2),
        "dof": len(levels) - 1,
        "p_value": float(p),
    }
