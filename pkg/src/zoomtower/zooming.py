"""Zooming contractions, zooming-time certificates and the zooming data of a
periodic source (the block length ``ell`` and radius ``delta`` that make its
pre-orbit a zooming set for ``f^ell``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .branches import ball_samples, pull_back, sheet_separation
from .errors import AxiomViolation, BranchUndefined, ContractionFailed, DeltaNotFound, NotASource
from .maps import derivative_cocycle, is_linear, orbit
from .orbits import PeriodicOrbit, classify
from .torus import TorusPoint, torus_distance

SAMPLE_TOL = 1e-9
LAMBDA0 = math.log(16.0)  # per-block contraction exponent of the ell-step branch
LAMBDA1 = math.log(8.0)  # rate of the zooming contraction used downstream
SOURCE_THRESHOLD = 32.0
DELTA_FLOOR = 1e-6


@dataclass(frozen=True)
class ZoomingContraction:
    """Exponential zooming contraction ``alpha_n(r) = rate^n * r``."""

    rate: float

    def __call__(self, n, r):
        return self.rate ** np.asarray(n) * np.asarray(r)

    @property
    def exact_rate(self) -> Fraction:
        return Fraction(self.rate)

    def series_sum(self, r) -> Fraction:
        """``sum_{n>=1} alpha_n(r)`` in exact arithmetic (``r * rate / (1 - rate)``)."""
        lam = self.exact_rate
        if lam >= 1:
            return Fraction(10**18)  # stands in for a divergent series
        return Fraction(r) * lam / (1 - lam)

    def to_dict(self):
        return {"form": "exponential", "rate": self.rate}


def default_axiom_grid():
    rs = [Fraction(k, 10) for k in range(1, 11)]
    ns = list(range(1, 11))
    return rs, ns, list(range(1, 11))


def check_zooming_axioms(alpha: ZoomingContraction, samples=None) -> dict:
    """Check the four zooming-contraction axioms on a deterministic grid.

    ``samples`` is ``(rs, ns, ms)``; the default is 10 x 10 x 10 = 1000
    triples.  The arithmetic is exact (the rate is converted to a Fraction),
    so equality cases such as submultiplicativity of the exponential family
    are decided without rounding.  Raises :class:`AxiomViolation` naming the
    first failing axiom and a witness; otherwise returns the margins.
    """
    rs, ns, ms = samples if samples is not None else default_axiom_grid()
    rs = sorted(Fraction(r) for r in rs)
    lam = alpha.exact_rate
    if lam <= 0:
        raise AxiomViolation("positivity", {"rate": alpha.rate})

    def a(n, r):
        return lam**n * r

    m_strict = None
    for r in rs:
        for n in ns:
            if r > 0 and not a(n, r) < r:
                raise AxiomViolation("alpha_n(r) < r", {"r": float(r), "n": n})
            if r > 0:
                slack = (r - a(n, r)) / r
                m_strict = slack if m_strict is None else min(m_strict, slack)
    m_mono = None
    for n in ns:
        for r1, r2 in zip(rs[:-1], rs[1:]):
            if a(n, r1) > a(n, r2):
                raise AxiomViolation("monotone", {"r": float(r1), "r'": float(r2), "n": n})
            gap = a(n, r2) - a(n, r1)
            m_mono = gap if m_mono is None else min(m_mono, gap)
    m_sub = None
    count = 0
    for r in rs:
        for n in ns:
            for m in ms:
                count += 1
                lhs, rhs = a(n, a(m, r)), a(n + m, r)
                if lhs > rhs:
                    raise AxiomViolation("submultiplicative", {"r": float(r), "n": n, "m": m})
                m_sub = rhs - lhs if m_sub is None else min(m_sub, rhs - lhs)
    if lam >= 1:
        raise AxiomViolation("summable", {"rate": alpha.rate})
    sup_sum = alpha.series_sum(1)
    return {
        "rate": alpha.rate,
        "triples_checked": count,
        "strict_margin": float(m_strict),
        "monotone_margin": float(m_mono),
        "submultiplicative_margin": float(m_sub),
        "sup_series_sum": float(sup_sum),
        "series_sum_over_r": str(lam / (1 - lam)),
        "passed": True,
    }


@dataclass
class SourceZoomingData:
    source: PeriodicOrbit
    orbit_points: np.ndarray
    gamma: int
    n0: int
    ell: int
    delta: float
    contraction: float  # largest sampled Lipschitz ratio of the ell-step branch
    derivative_contraction: float  # largest ||(Df^ell)^{-1}|| over the pulled-back samples
    min_log_expansion: float  # smallest log co-norm of Df^{n0 gamma} over the orbit
    exact_contraction: Fraction | None = None  # linear maps with scalar linear part only
    lambda0: float = LAMBDA0
    lambda1: float = LAMBDA1

    def to_dict(self):
        return {
            "source": self.source.to_dict(),
            "gamma": self.gamma,
            "n0": self.n0,
            "ell": self.ell,
            "delta": self.delta,
            "contraction": self.contraction,
            "derivative_contraction": self.derivative_contraction,
            "contraction_margin": math.exp(-self.lambda0) - self.contraction,
            "min_log_expansion": self.min_log_expansion,
            "log32": math.log(SOURCE_THRESHOLD),
            "exact_contraction": None if self.exact_contraction is None else str(self.exact_contraction),
            "lambda0": self.lambda0,
            "lambda1": self.lambda1,
        }


def _log_conorm(f, x, k):
    M, s = derivative_cocycle(f, x, k, log_scale=True)
    sv = np.linalg.svd(M, compute_uv=False)
    return np.log(sv[..., -1]) + s


def _branch_contraction(f, q, chain, sep, delta):
    samples = ball_samples(q, delta, 64 * f.dim, 32)
    pb = pull_back(f, chain, samples, separation=sep)
    i, j = np.triu_indices(len(samples), 1)
    d_out = torus_distance(samples[i], samples[j])
    keep = d_out > 0
    i, j, d_out = i[keep], j[keep], d_out[keep]
    d_in = torus_distance(pb.points[0][i], pb.points[0][j])
    ratio = float(np.max(d_in / d_out))
    M = derivative_cocycle(f, pb.points[0], len(chain) - 1)
    inv_norm = float(np.max(np.linalg.norm(np.linalg.inv(M), ord=2, axis=(1, 2))))
    return ratio, inv_norm


def compute_source_zooming_data(f, source: PeriodicOrbit, delta_search: float = 0.125, horizon: int = 20) -> SourceZoomingData:
    """Block length and zooming radius for a periodic source.

    ``n0`` is the smallest ``n`` such that the co-norm of ``Df^{n gamma}``
    exceeds 32 at every orbit point for all ``n0 <= n <= n0 + horizon``;
    ``ell = n0 * gamma``.  ``delta`` is the largest radius ``<= delta_search``
    (found by bisection, floor 1e-6) on which the ``ell``-step inverse branch
    fixing each orbit point is well defined and a 1/16-contraction on
    boundary and interior samples.
    """
    if classify(source.multiplier_matrix) != "source":
        raise NotASource(f"periodic point {source.point.coords} is {source.classification}")
    gamma = source.period
    pts = orbit(f, source.point.array(), gamma - 1)
    log32 = math.log(SOURCE_THRESHOLD)
    n0, best = None, None
    n = 1
    while n0 is None:
        ok = True
        for m in range(n, n + horizon + 1):
            lc = _log_conorm(f, pts, m * gamma)
            if np.any(lc <= log32):
                ok = False
                break
        if ok:
            n0 = n
            best = float(np.min(_log_conorm(f, pts, n * gamma)))
        n += 1
        if n > 10_000:
            raise NotASource("no block length reaches the expansion threshold")
    ell = n0 * gamma
    chains = [orbit(f, q, ell) for q in pts]
    seps = [sheet_separation(f, c) for c in chains]
    target = math.exp(-LAMBDA0)

    def test(delta):
        worst, worst_inv = 0.0, 0.0
        try:
            for q, c, s in zip(pts, chains, seps):
                r, inv = _branch_contraction(f, q, c, s, delta)
                worst, worst_inv = max(worst, r), max(worst_inv, inv)
        except BranchUndefined:
            return None
        if worst <= target and worst_inv <= target:
            return worst, worst_inv
        return None

    res = test(delta_search)
    delta = delta_search
    if res is None:
        lo, hi = DELTA_FLOOR, delta_search
        res_lo = test(lo)
        if res_lo is None:
            raise DeltaNotFound("bisection reached the 1e-6 floor without a contracting branch")
        for _ in range(40):
            mid = 0.5 * (lo + hi)
            r = test(mid)
            if r is None:
                hi = mid
            else:
                lo, res_lo = mid, r
        delta, res = lo, res_lo
    exact = None
    if is_linear(f):
        L = np.asarray(f.linear_part)
        c = int(round(L[0, 0]))
        if np.array_equal(L, c * np.eye(f.dim)):
            # the ell-step branch is affine with linear part c^{-ell} Id
            exact = Fraction(1, abs(c) ** ell)
    return SourceZoomingData(source, pts, gamma, n0, ell, delta, res[0], res[1], best, exact)


@dataclass
class ZoomingCertificate:
    point: TorusPoint
    time: int
    delta: float
    contraction_margin: float
    preball_diameter: float
    n_pairs: int
    chain: np.ndarray = field(repr=False, default=None)

    def to_dict(self):
        return {
            "point": list(self.point.coords),
            "n": self.time,
            "delta": self.delta,
            "contraction_margin": self.contraction_margin,
            "preball_diameter": self.preball_diameter,
            "n_pairs": self.n_pairs,
        }


def _pair_schedule(m, count):
    """First ``count`` index pairs of ``range(m)``, ordered by stride then start."""
    i, j = np.triu_indices(m, 1)
    order = np.lexsort((i, j - i))
    return i[order][:count], j[order][:count]


def is_zooming_time(f, x, n: int, alpha: ZoomingContraction, delta: float, sample_tol: float = SAMPLE_TOL) -> ZoomingCertificate:
    """Certify that ``n`` is an ``(alpha, delta)``-zooming time for ``x``.

    The inverse branch of ``f^n`` along the orbit of ``x`` is built on
    ``B_delta(f^n x)`` by composing one-step branches; the zooming
    inequality ``d(f^j u, f^j v) <= alpha_{n-j}(d(f^n u, f^n v))`` is then
    checked for ``32 n`` sample pairs at every intermediate step.

    Raises :class:`BranchUndefined` when some one-step branch is not
    injective on the needed set and :class:`ContractionFailed` with a
    witness pair when the inequality fails.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    chain = orbit(f, np.asarray(x, float), n)
    return zooming_along_chain(f, chain, 1, alpha, delta, sample_tol)


def zooming_along_chain(f, chain, block: int, alpha, delta: float, sample_tol: float = SAMPLE_TOL, separation=None) -> ZoomingCertificate:
    """Zooming certificate for ``f^block`` along a given ``f``-orbit segment.

    ``chain`` holds ``x, f(x), ..., f^{block n}(x)``; branches are composed
    one ``f``-step at a time (cheaper than enumerating branches of the
    power) and the inequality is checked at block boundaries.
    """
    chain = np.asarray(chain, float)
    L = len(chain) - 1
    if L < 1 or L % block:
        raise ValueError("chain length must be a positive multiple of the block length")
    n = L // block
    n_pairs = 32 * n
    m = max(8, int(math.ceil(math.sqrt(2 * n_pairs))) + 3)
    nb = 2 if f.dim == 1 else max(8, m // 2)
    samples = ball_samples(chain[L], delta, nb, m - 1 - nb)
    pb = pull_back(f, chain, samples, separation=separation)
    Z = pb.points[::block]
    i, j = _pair_schedule(len(samples), n_pairs)
    d = torus_distance(Z[:, i, :], Z[:, j, :])  # (n + 1, P)
    steps = n - np.arange(n)
    bound = alpha.rate ** steps[:, None] * d[n][None, :]
    slack = bound - d[:n]
    k = np.unravel_index(np.argmin(slack), slack.shape)
    if slack[k] < -sample_tol:
        raise ContractionFailed(
            f"zooming inequality fails at step {k[0]} (excess {-slack[k]:.3e})",
            witness={"step": int(k[0]), "u": Z[n, i[k[1]]].tolist(), "v": Z[n, j[k[1]]].tolist()},
        )
    rel = slack / np.where(bound > 0, bound, 1.0)
    bd = Z[0, 1 : 1 + nb]
    ii, jj = np.triu_indices(len(bd), 1)
    diam = float(np.max(torus_distance(bd[ii], bd[jj]))) if len(ii) else 0.0
    return ZoomingCertificate(TorusPoint(chain[0]), n, delta, float(np.min(rel)), diam, len(i), chain)


@dataclass
class ZoomingFrequency:
    frequency: float
    running: list
    zooming_times: list

    def __float__(self):
        return self.frequency

    def to_dict(self):
        return {"frequency": self.frequency, "running": self.running, "zooming_times": self.zooming_times}


def zooming_frequency(f, x, alpha: ZoomingContraction, delta: float, n_max: int) -> ZoomingFrequency:
    """Fraction of times ``1 <= j <= n_max`` certified as zooming times.

    ``running[k]`` is the fraction among ``1..k+1``; its tail is what a
    limsup estimate should look at.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    hits, running, times = 0, [], []
    for j in range(1, n_max + 1):
        try:
            is_zooming_time(f, x, j, alpha, delta)
            hits += 1
            times.append(j)
        except (BranchUndefined, ContractionFailed):
            pass
        running.append(hits / j)
    return ZoomingFrequency(hits / n_max, running, times)
