"""Lyapunov exponents, empirical correlation decay and return-time tail fits."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import SignalBelowNoise
from .induced import InducedMarkovMap, return_time_tail


# observable library: name -> (function of an (m, n) array, Lipschitz constant on the lift)
def _first(x):
    return np.asarray(x, float).reshape(len(x), -1)[:, 0]


OBSERVABLES = {
    "cos2pi": (lambda x: np.cos(2 * np.pi * _first(x)), 2 * math.pi),
    "sin2pi": (lambda x: np.sin(2 * np.pi * _first(x)), 2 * math.pi),
    "centered": (lambda x: _first(x) - 0.5, 1.0),  # x - 1/2 on [0, 1); jumps at 0 on the circle
    "tent": (lambda x: np.minimum(_first(x), 1 - _first(x)), 1.0),
}


def observable(name):
    try:
        return OBSERVABLES[name][0]
    except KeyError:
        raise ValueError(f"unknown observable {name!r}; known: {sorted(OBSERVABLES)}") from None


def lebesgue_sampler(dim: int):
    def sample(n, seed):
        return np.random.default_rng(seed).random((n, dim))

    return sample


def tower_sampler(measure):
    from .tower import sample_mu_a

    def sample(n, seed):
        return sample_mu_a(measure, n, seed)

    return sample


@dataclass
class LyapunovEstimate:
    exponents: list
    std_error: list
    n_iterates: int
    n_samples: int
    log_det_average: float  # Birkhoff average of log |det Df| over the same orbits
    log_det_std_error: float

    def to_dict(self):
        return {
            "exponents": self.exponents,
            "std_error": self.std_error,
            "n_iterates": self.n_iterates,
            "n_samples": self.n_samples,
            "exponent_sum": math.fsum(self.exponents),
            "log_det_average": self.log_det_average,
            "log_det_std_error": self.log_det_std_error,
        }


def lyapunov_exponents(f, sampler, n_iterates: int, n_samples: int, seed: int) -> LyapunovEstimate:
    """All Lyapunov exponents (nats per iterate of ``f``) by QR re-orthogonalisation.

    Each sampled point carries an orthonormal frame that is pushed by ``Df``
    and re-orthogonalised every step; the logs of the diagonal of ``R`` are
    accumulated.  Exponents are averaged over samples, with standard errors
    from the spread across samples.
    """
    if n_iterates < 100:
        raise ValueError("n_iterates must be >= 100")
    x = np.asarray(sampler(n_samples, seed), float).reshape(n_samples, -1)
    n = x.shape[1]
    acc = np.zeros((n_samples, n))
    logdet = np.zeros(n_samples)
    Q = np.broadcast_to(np.eye(n), (n_samples, n, n)).copy()
    for _ in range(n_iterates):
        D = f.derivative(x)
        if n == 1:
            g = np.log(np.abs(D[:, 0, 0]))
            acc[:, 0] += g
            logdet += g
        else:
            Q, Rm = np.linalg.qr(D @ Q)
            acc += np.log(np.abs(np.diagonal(Rm, axis1=1, axis2=2)))
            logdet += np.log(np.abs(np.linalg.det(D)))
        x = f.evaluate(x)
    per = acc / n_iterates
    per = -np.sort(-per, axis=1)
    mean = per.mean(axis=0)
    se = per.std(axis=0, ddof=1) / math.sqrt(n_samples) if n_samples > 1 else np.zeros(n)
    ld = logdet / n_iterates
    ld_se = float(ld.std(ddof=1) / math.sqrt(n_samples)) if n_samples > 1 else 0.0
    return LyapunovEstimate(mean.tolist(), se.tolist(), n_iterates, n_samples, float(ld.mean()), ld_se)


@dataclass
class CorrelationCurve:
    observables: dict
    lags: list
    correlations: list
    errors: list
    fit: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "observables": self.observables,
            "lags": self.lags,
            "correlations": self.correlations,
            "errors": self.errors,
            "fit": self.fit,
        }

    def to_rows(self):
        return [{"lag": k, "correlation": c, "error": e} for k, c, e in zip(self.lags, self.correlations, self.errors)]


def _loglinear(x, y):
    x, y = np.asarray(x, float), np.asarray(y, float)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss = np.sum((y - y.mean()) ** 2)
    r2 = float(1 - np.sum(resid**2) / ss) if ss > 0 else float("nan")
    return float(slope), float(intercept), r2


def correlation_decay(f, sampler, psi, phi, max_lag: int, n_samples: int, seed: int, psi_name: str = "psi", phi_name: str = "phi") -> CorrelationCurve:
    """Empirical ``C(k) = E[psi . phi o f^k] - E[psi] E[phi]`` for ``0 <= k <= max_lag``.

    All lags share the same sampled orbits.  The error of ``C(k)`` is the
    standard error of the centred product.  The log-linear fit uses the
    leading run of lags ``k >= 1`` with ``|C(k)|`` above the floor
    ``max(3 * error, plateau)``, where ``plateau`` is the largest ``|C|`` over
    the last third of the lags: it absorbs any part of the curve that does
    not decay (a measure that is ergodic but not mixing leaves a periodic
    plateau).  Fewer than four such lags raises :class:`SignalBelowNoise`
    carrying the curve.
    """
    if max_lag < 8:
        raise ValueError("max_lag must be >= 8")
    x = np.asarray(sampler(n_samples, seed), float).reshape(n_samples, -1)
    p0 = np.asarray(psi(x), float)
    pc = p0 - p0.mean()
    cors, errs = [], []
    for k in range(max_lag + 1):
        q = np.asarray(phi(x), float)
        prod = pc * (q - q.mean())
        cors.append(float(prod.mean()))
        errs.append(float(prod.std(ddof=1) / math.sqrt(n_samples)))
        x = f.evaluate(x)
    curve = CorrelationCurve({"psi": psi_name, "phi": phi_name}, list(range(max_lag + 1)), cors, errs)
    tail_start = math.ceil(2 * max_lag / 3)
    plateau = max(abs(c) for c in cors[tail_start:])
    usable = []
    for k in range(1, max_lag + 1):
        if abs(cors[k]) > max(3 * errs[k], plateau):
            usable.append(k)
        else:
            break
    curve.fit = {"usable_lags": usable, "plateau": plateau, "plateau_lags": [tail_start, max_lag]}
    if len(usable) < 4:
        raise SignalBelowNoise(f"only {len(usable)} lags above the noise floor", curve=curve)
    slope, intercept, r2 = _loglinear(usable, np.log(np.abs([cors[k] for k in usable])))
    curve.fit.update({"slope": slope, "intercept": intercept, "r2": r2})
    return curve


def substep_classes(f, psi, points, offsets, ell: int, max_lag: int) -> dict:
    """Non-decaying part of the correlations of ``psi`` under a tower measure.

    Samples are grouped by their tower offset modulo ``ell``; if the groups
    carry different means ``m_j`` the correlation curve keeps the periodic
    component ``P(k) = sum_j w_j (m_j - m)(m_{j+k} - m)``, which no
    exponential fit can follow.
    """
    vals = np.asarray(psi(points), float)
    cls = np.asarray(offsets) % ell
    m = float(vals.mean())
    w = np.array([np.mean(cls == j) for j in range(ell)])
    mj = np.array([vals[cls == j].mean() if np.any(cls == j) else m for j in range(ell)])
    P = [float(np.sum(w * (mj - m) * (np.roll(mj, -(k % ell)) - m))) for k in range(max_lag + 1)]
    return {"ell": ell, "class_weights": w.tolist(), "class_means": mj.tolist(), "periodic_component": P, "amplitude": max(abs(v) for v in P)}


@dataclass
class TailFit:
    slope: float
    intercept: float
    r2: float
    ns: list
    tails: list
    degenerate: bool = False

    def __iter__(self):
        return iter((self.slope, self.r2))

    def to_dict(self):
        return {"slope": self.slope, "intercept": self.intercept, "r2": self.r2, "ns": self.ns, "tails": self.tails, "r2_undefined": self.degenerate}


def tail_decay_fit(induced: InducedMarkovMap, weights, n_max: int | None = None) -> TailFit:
    """Least-squares slope of ``log nu(R >= n)`` against ``n`` for ``1 <= n <= n_max``.

    The default ``n_max`` stops one short of the largest return time found,
    where truncation bends the tail.  Fewer than three positive tail values
    make the fit degenerate (``r2`` is NaN and ``degenerate`` is set).
    """
    Rmax = int(induced.return_times.max())
    if n_max is None:
        n_max = max(1, Rmax - 1)
    ns = list(range(1, n_max + 1))
    tails = [return_time_tail(induced, n, weights) for n in ns]
    pos = [(n, t) for n, t in zip(ns, tails) if t > 0]
    if len(pos) < 3:
        return TailFit(float("nan"), float("nan"), float("nan"), ns, tails, True)
    slope, intercept, r2 = _loglinear([p[0] for p in pos], np.log([p[1] for p in pos]))
    return TailFit(slope, intercept, r2, ns, tails, False)
