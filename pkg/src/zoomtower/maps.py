"""Local diffeomorphisms of T^n and the concrete families used by the pipeline.

Every map here is a lift ``F(x) = L x + h(x)`` with ``L`` an integer matrix
and ``h`` a Z^n-periodic perturbation, so the degree is ``|det L|`` and the
inverse branches can be seeded from the exact pre-images of the linear part.
"""
from __future__ import annotations

import itertools
import math
import numpy as np

from .errors import BranchCollision, ConstraintViolation, NewtonDivergence
from .torus import Ball, TorusPoint, reduce, torus_distance, wrap

BRANCH_TOL = 1e-10
NEWTON_TOL = 1e-12
MAX_NEWTON_ITERS = 50

__all__ = [
    "DynamicalMap",
    "TorusEndomorphism",
    "LinearTorusMap",
    "LinearExpandingMap",
    "DoublingFamilyMap",
    "PerturbedExampleMap",
    "PowerMap",
    "build_perturbed_example",
    "evaluate",
    "derivative_cocycle",
    "inverse_branch_points",
    "orbit",
    "exact_orbit",
    "is_linear",
    "map_from_dict",
    "bump",
    "bump_derivative",
]


def _as2d(x):
    a = np.asarray(x, dtype=float)
    if a.ndim == 1:
        return a[None, :], True
    return a, False


def _solve(A, b):
    return np.linalg.solve(A, b[..., None])[..., 0]


def bump(s):
    """C^2 cutoff ``(1 - s^2)^3`` on ``[0, 1]`` and zero beyond."""
    s = np.asarray(s, dtype=float)
    return np.where(s < 1.0, np.clip(1.0 - s * s, 0.0, None) ** 3, 0.0)


def bump_derivative(s):
    s = np.asarray(s, dtype=float)
    return np.where(s < 1.0, -6.0 * s * np.clip(1.0 - s * s, 0.0, None) ** 2, 0.0)


class DynamicalMap:
    """Interface shared by all maps.

    Subclasses provide ``lift``, ``derivative``, ``inverse_branches`` and
    ``local_inverse``; the remaining helpers are derived from those.
    """

    dim: int
    degree: int

    def lift(self, x):
        raise NotImplementedError

    def evaluate(self, x):
        return reduce(self.lift(x))

    __call__ = evaluate

    def derivative(self, x):
        raise NotImplementedError

    def inverse_branches(self, y):
        raise NotImplementedError

    def local_inverse(self, z, anchor):
        raise NotImplementedError

    def iterate(self, x, k: int):
        for _ in range(k):
            x = self.evaluate(x)
        return x

    def to_dict(self) -> dict:
        raise NotImplementedError


class TorusEndomorphism(DynamicalMap):
    """Lift ``L x + h(x)``; subclasses override the perturbation hooks."""

    name = "endomorphism"

    def __init__(self, linear_part):
        L = np.atleast_2d(np.asarray(linear_part))
        if L.shape[0] != L.shape[1]:
            raise ValueError("linear part must be square")
        if not np.all(L == np.round(L)):
            raise ValueError("linear part must be an integer matrix")
        self.linear_part = L.astype(float)
        self.dim = L.shape[0]
        det = round(abs(np.linalg.det(self.linear_part)))
        if det < 1:
            raise ValueError("linear part must be non-singular")
        self.degree = int(det)
        self._Linv = np.linalg.inv(self.linear_part)
        self._cosets = self._coset_representatives()

    # perturbation hooks -------------------------------------------------
    def perturbation(self, x):
        return np.zeros_like(x)

    def perturbation_derivative(self, x):
        return np.zeros(x.shape + (self.dim,))

    # core ---------------------------------------------------------------
    def lift(self, x):
        X, single = _as2d(x)
        out = X @ self.linear_part.T + self.perturbation(X)
        return out[0] if single else out

    def derivative(self, x):
        X, single = _as2d(x)
        D = self.linear_part[None, :, :] + self.perturbation_derivative(X)
        return D[0] if single else D

    def _coset_representatives(self):
        """Integer vectors k with ``L^{-1} k`` running over ``L^{-1} Z^n / Z^n``."""
        n = self.dim
        corners = np.array(list(itertools.product([0.0, 1.0], repeat=n)))
        image = corners @ self.linear_part.T
        lo = np.floor(image.min(axis=0)).astype(int)
        hi = np.ceil(image.max(axis=0)).astype(int)
        reps, seen = [], set()
        for k in itertools.product(*[range(a, b + 1) for a, b in zip(lo, hi)]):
            frac = reduce(self._Linv @ np.array(k, dtype=float))
            key = tuple(np.round(frac * 1e9).astype(np.int64) % 1_000_000_000)
            if key not in seen:
                seen.add(key)
                reps.append(k)
            if len(reps) == self.degree:
                break
        if len(reps) != self.degree:
            raise ValueError("could not enumerate coset representatives")
        return np.array(reps, dtype=float)

    def _newton(self, w, target, tau=1.0, iters=MAX_NEWTON_ITERS):
        """Solve ``L w + tau h(w) = target`` on R^n (no wrapping)."""
        for _ in range(iters):
            r = w @ self.linear_part.T + tau * self.perturbation(w) - target
            if np.all(np.abs(r) < NEWTON_TOL):
                return w, True
            J = self.linear_part[None] + tau * self.perturbation_derivative(w)
            w = w - _solve(J, r)
        r = w @ self.linear_part.T + tau * self.perturbation(w) - target
        return w, bool(np.all(np.abs(r) < NEWTON_TOL))

    def inverse_branches(self, y):
        """All ``degree`` pre-images of each point, shape ``(N, n)`` or ``(m, N, n)``.

        Newton is seeded from the pre-images of the linear part.  If a seed
        fails (large perturbations) the solve is repeated by continuation in
        the perturbation amplitude, which stays a diffeomorphism of R^n as
        long as the determinant keeps its sign.
        """
        Y, single = _as2d(y)
        Y = reduce(Y)
        m, n, N = Y.shape[0], self.dim, self.degree
        target = (Y[:, None, :] + self._cosets[None, :, :]).reshape(-1, n)
        seeds = target @ self._Linv.T
        w, ok = self._newton(seeds.copy(), target)
        if not ok or self._collides(reduce(w).reshape(m, N, n)):
            w = seeds.copy()
            for tau in np.linspace(0.0, 1.0, 17)[1:]:
                w, ok = self._newton(w, target, tau=tau)
            if not ok:
                raise NewtonDivergence("inverse branch Newton did not converge")
        W = reduce(w).reshape(m, N, n)
        if self._collides(W):
            raise BranchCollision("two inverse branches coincide")
        resid = torus_distance(self.evaluate(W.reshape(-1, n)), np.repeat(Y, N, axis=0))
        if np.max(resid) >= BRANCH_TOL:
            raise NewtonDivergence(f"branch residual {np.max(resid):.3e} above tolerance")
        return W[0] if single else W

    @staticmethod
    def _collides(W):
        if W.shape[1] < 2:
            return False
        i, j = np.triu_indices(W.shape[1], 1)
        d = torus_distance(W[:, i, :], W[:, j, :])
        return bool(np.min(d) < 10 * BRANCH_TOL)

    def local_inverse(self, z, anchor, iters=MAX_NEWTON_ITERS):
        """Pre-image of ``z`` on the branch through ``anchor``.

        Returns ``(w, converged)``.  ``w`` is unreduced and stays close to
        ``anchor``; callers reduce as needed.
        """
        Z, single = _as2d(z)
        A, _ = _as2d(anchor)
        A = np.broadcast_to(A, Z.shape)
        w = A + _solve(self.derivative(A), wrap(Z - self.lift(A)))
        for _ in range(iters):
            r = wrap(self.lift(w) - Z)
            done = np.all(np.abs(r) < NEWTON_TOL, axis=-1)
            if np.all(done):
                break
            w = w - _solve(self.derivative(w), r)
        r = wrap(self.lift(w) - Z)
        conv = np.all(np.abs(r) < NEWTON_TOL, axis=-1)
        return (w[0], bool(conv[0])) if single else (w, conv)


class LinearTorusMap(TorusEndomorphism):
    """Action of an integer matrix on T^n (no expansion requirement)."""

    name = "linear"

    def to_dict(self):
        return {"family": "linear", "matrix": self.linear_part.astype(int).tolist()}


class LinearExpandingMap(LinearTorusMap):
    def __init__(self, matrix):
        super().__init__(matrix)
        if np.min(np.abs(np.linalg.eigvals(self.linear_part))) <= 1.0:
            raise ValueError("all eigenvalues of an expanding map must have modulus > 1")
        if self.degree < 2:
            raise ValueError("expanding endomorphisms have degree >= 2")

    @property
    def matrix(self):
        return self.linear_part


class DoublingFamilyMap(TorusEndomorphism):
    """``x -> m x + strength * radius * u (1 - u^2)^3`` with ``u = (x - site)/radius``.

    With ``strength = 0`` this is the plain multiplication map.  The
    perturbation has slope ``strength`` at ``site`` and vanishes outside the
    ``radius``-neighbourhood, so the degree stays ``m``.  The derivative is
    ``m + strength * (1 - u^2)^2 (1 - 7 u^2)``; parameters that make it
    vanish anywhere are rejected.
    """

    name = "doubling"

    def __init__(self, multiplier: int = 2, site: float = 0.0, radius: float = 0.1, strength: float = 0.0):
        if int(multiplier) != multiplier or multiplier < 2:
            raise ValueError("multiplier must be an integer >= 2")
        super().__init__([[int(multiplier)]])
        if not 0 < radius < 0.5:
            raise ValueError("radius must lie in (0, 1/2)")
        self.multiplier = int(multiplier)
        self.site = float(site) % 1.0
        self.radius = float(radius)
        self.strength = float(strength)
        u = np.linspace(-1, 1, 20001)
        dphi = (1 - u**2) ** 2 * (1 - 7 * u**2)
        lo = self.multiplier + self.strength * (dphi.max() if strength < 0 else dphi.min())
        if lo <= 0:
            raise ConstraintViolation("perturbation creates a critical point")

    def _u(self, X):
        return wrap(X - self.site) / self.radius

    def perturbation(self, X):
        if self.strength == 0.0:
            return np.zeros_like(X)
        u = self._u(X)
        return self.strength * self.radius * u * bump(np.abs(u))

    def perturbation_derivative(self, X):
        if self.strength == 0.0:
            return np.zeros(X.shape + (1,))
        u = self._u(X)
        one = np.clip(1 - u * u, 0.0, None)
        d = np.where(np.abs(u) < 1, one**2 * (1 - 7 * u * u), 0.0)
        return (self.strength * d)[..., None]

    def to_dict(self):
        return {
            "family": "doubling",
            "multiplier": self.multiplier,
            "site": self.site,
            "radius": self.radius,
            "strength": self.strength,
        }


def _plane_rotation(n, i, angles):
    """Batch of rotations by ``angles`` in the coordinate plane ``(i, i+1)``."""
    R = np.broadcast_to(np.eye(n), angles.shape + (n, n)).copy()
    c, s = np.cos(angles), np.sin(angles)
    R[..., i, i], R[..., i, i + 1] = c, -s
    R[..., i + 1, i], R[..., i + 1, i + 1] = s, c
    return R


def _plane_rotation_dot(n, i, angles):
    """Derivative of :func:`_plane_rotation` with respect to the angle."""
    R = np.zeros(angles.shape + (n, n))
    c, s = np.cos(angles), np.sin(angles)
    R[..., i, i], R[..., i, i + 1] = -s, -c
    R[..., i + 1, i], R[..., i + 1, i + 1] = c, -s
    return R


class PerturbedExampleMap(TorusEndomorphism):
    """Linear expanding map deformed near a saddle site and near twist sites.

    Near ``p`` (inside ``U0``) the coordinate ``t`` along the eigen-axis is
    sent to ``lam t + bump * (-pitchfork_strength * t + cubic * t^3)``; this
    turns the expanding fixed point ``p`` into a saddle flanked by two
    repellers.  Near each ``q_i`` the map is ``q + E T_i(v)`` where ``T_i``
    twists the plane ``(i, i+1)`` by ``rotation_angles[i] * bump``, giving a
    complex pair ``lam e^{+-i angle}`` at ``q_i``.
    """

    name = "perturbed_example"

    def __init__(
        self,
        matrix,
        p,
        q_list,
        U0: Ball,
        bump_radius: float,
        pitchfork_strength: float,
        rotation_angles,
        pitchfork_radius: float | None = None,
        cubic: float = 0.0,
        axis: int = 0,
    ):
        super().__init__(matrix)
        self.base = LinearExpandingMap(matrix)
        self.p = TorusPoint(p)
        self.q_list = [TorusPoint(q) for q in q_list]
        self.U0 = U0 if isinstance(U0, Ball) else Ball(U0["center"], U0["radius"])
        self.bump_radius = float(bump_radius)
        self.pitchfork_strength = float(pitchfork_strength)
        self.rotation_angles = [float(a) for a in rotation_angles]
        if len(self.rotation_angles) != len(self.q_list):
            raise ValueError("one rotation angle per q site is required")
        self.pitchfork_radius = float(pitchfork_radius) if pitchfork_radius is not None else 0.9 * self.U0.radius
        self.cubic = float(cubic)
        self.axis = int(axis)
        e = np.zeros(self.dim)
        e[self.axis] = 1.0
        self._e = e
        Ee = self.linear_part @ e
        lam = float(Ee @ e)
        if not np.allclose(Ee, lam * e):
            raise ValueError("pitchfork axis must be an eigenvector of the linear part")
        self.axis_eigenvalue = lam

    @property
    def weak_eigenvalue(self) -> float:
        return self.axis_eigenvalue - self.pitchfork_strength

    def _pitchfork(self, X):
        v = wrap(X - self.p.array())
        s2 = np.sum(v * v, axis=-1) / self.pitchfork_radius**2
        t = v @ self._e
        return v, s2, t

    def perturbation(self, X):
        h = np.zeros_like(X)
        if self.pitchfork_strength or self.cubic:
            v, s2, t = self._pitchfork(X)
            rho = np.where(s2 < 1, np.clip(1 - s2, 0, None) ** 3, 0.0)
            h += (rho * (-self.pitchfork_strength * t + self.cubic * t**3))[:, None] * self._e
        for i, (q, ang) in enumerate(zip(self.q_list, self.rotation_angles)):
            if ang == 0.0:
                continue
            v = wrap(X - q.array())
            s2 = np.sum(v * v, axis=-1) / self.bump_radius**2
            phi = ang * np.where(s2 < 1, np.clip(1 - s2, 0, None) ** 3, 0.0)
            R = _plane_rotation(self.dim, i, phi)
            Tv = np.einsum("mij,mj->mi", R, v)
            h += (Tv - v) @ self.linear_part.T
        return h

    def perturbation_derivative(self, X):
        n = self.dim
        D = np.zeros(X.shape + (n,))
        if self.pitchfork_strength or self.cubic:
            v, s2, t = self._pitchfork(X)
            inside = s2 < 1
            one = np.clip(1 - s2, 0, None)
            rho = np.where(inside, one**3, 0.0)
            # gradient of rho(|v|/R): -6 (1 - s^2)^2 v / R^2
            grad_rho = np.where(inside, -6 * one**2, 0.0)[:, None] * v / self.pitchfork_radius**2
            core = -self.pitchfork_strength * t + self.cubic * t**3
            dcore = -self.pitchfork_strength + 3 * self.cubic * t**2
            grad = grad_rho * core[:, None] + (rho * dcore)[:, None] * self._e
            D += self._e[None, :, None] * grad[:, None, :]
        for i, (q, ang) in enumerate(zip(self.q_list, self.rotation_angles)):
            if ang == 0.0:
                continue
            v = wrap(X - q.array())
            s2 = np.sum(v * v, axis=-1) / self.bump_radius**2
            inside = s2 < 1
            one = np.clip(1 - s2, 0, None)
            phi = ang * np.where(inside, one**3, 0.0)
            grad_phi = ang * np.where(inside, -6 * one**2, 0.0)[:, None] * v / self.bump_radius**2
            R = _plane_rotation(n, i, phi)
            Rd = _plane_rotation_dot(n, i, phi)
            DT = R + np.einsum("mij,mj,mk->mik", Rd, v, grad_phi)
            D += np.einsum("ij,mjk->mik", self.linear_part, DT - np.eye(n))
        return D

    def supports(self):
        """Balls outside of which the map coincides with its linear part."""
        out = [Ball(self.p, self.pitchfork_radius)]
        out += [Ball(q, self.bump_radius) for q in self.q_list]
        return out

    def pitchfork_repellers(self):
        """The two fixed points born at ``p``, found by bracketing along the axis."""
        from scipy.optimize import brentq

        lam, beta, c, R = self.axis_eigenvalue, self.pitchfork_strength, self.cubic, self.pitchfork_radius

        def g(t):
            rho = (1 - (t / R) ** 2) ** 3
            return (lam - 1) * t + rho * (-beta * t + c * t**3)

        ts = np.linspace(R * 1e-3, R * (1 - 1e-9), 4001)
        vals = np.array([g(t) for t in ts])
        k = np.nonzero(np.sign(vals[:-1]) != np.sign(vals[1:]))[0]
        if len(k) == 0:
            return []
        t_r = brentq(g, ts[k[0]], ts[k[0] + 1], xtol=1e-15)
        pa = self.p.array()
        return [TorusPoint(pa + t_r * self._e), TorusPoint(pa - t_r * self._e)]

    def to_dict(self):
        return {
            "family": "perturbed_example",
            "matrix": self.linear_part.astype(int).tolist(),
            "p": list(self.p.coords),
            "q_list": [list(q.coords) for q in self.q_list],
            "U0": self.U0.to_dict(),
            "bump_radius": self.bump_radius,
            "pitchfork_strength": self.pitchfork_strength,
            "pitchfork_radius": self.pitchfork_radius,
            "cubic": self.cubic,
            "rotation_angles": self.rotation_angles,
            "axis": self.axis,
        }


REFERENCE_EXAMPLE = {
    "matrix": [[4, 0], [0, 4]],
    "p": [1 / 3, 1 / 3],
    "q_list": [[2 / 3, 2 / 3]],
    "U0": {"center": [1 / 3, 1 / 3], "radius": 0.2},
    "bump_radius": 0.1,
    "pitchfork_strength": 3.5,
    "pitchfork_radius": 0.18,
    "cubic": 10.0,
    "rotation_angles": [math.pi / 7],
    "axis": 0,
}


def volume_expansion(f: DynamicalMap, resolution: int = 512) -> float:
    """Minimum of ``|det Df|`` over a uniform grid (cell centres)."""
    grid = (np.arange(resolution) + 0.5) / resolution
    pts = np.stack(np.meshgrid(*([grid] * f.dim), indexing="ij"), -1).reshape(-1, f.dim)
    best = np.inf
    for chunk in np.array_split(pts, max(1, len(pts) // 65536)):
        best = min(best, float(np.min(np.abs(np.linalg.det(f.derivative(chunk))))))
    return best


def build_perturbed_example(params: dict | None = None, check: bool = True, grid_resolution: int = 512):
    """Build a :class:`PerturbedExampleMap` and validate its constraints.

    Raises :class:`ConstraintViolation` when sites are not fixed by the
    linear part, supports overlap, the pitchfork support leaves ``U0`` or
    ``|det Df|`` drops to 1 or below on the verification grid.  The grid
    minimum is stored as ``sigma`` on the returned map.
    """
    kw = dict(REFERENCE_EXAMPLE)
    kw.update(params or {})
    f = PerturbedExampleMap(**kw)
    if check:
        E = f.linear_part
        for name, site in [("p", f.p)] + [(f"q_{i + 1}", q) for i, q in enumerate(f.q_list)]:
            x = site.array()
            if torus_distance(reduce(E @ x), x) > 1e-9:
                raise ConstraintViolation(f"{name} is not a fixed point of the linear part")
        u0c = f.U0.center.array()
        if torus_distance(f.p.array(), u0c) + f.pitchfork_radius > f.U0.radius + 1e-12:
            raise ConstraintViolation("pitchfork support is not contained in U0")
        for i, q in enumerate(f.q_list):
            if torus_distance(q.array(), u0c) < f.bump_radius + f.U0.radius:
                raise ConstraintViolation(f"twist ball around q_{i + 1} meets U0")
            for j in range(i):
                if torus_distance(q.array(), f.q_list[j].array()) < 2 * f.bump_radius:
                    raise ConstraintViolation(f"twist balls q_{j + 1}, q_{i + 1} overlap")
        sigma = volume_expansion(f, grid_resolution if f.dim == 2 else 64)
        if not sigma > 1.0:
            raise ConstraintViolation(f"not volume expanding: min |det Df| = {sigma:.4f}")
        f.sigma = sigma
    return f


class PowerMap(DynamicalMap):
    """The iterate ``f^k`` as a map in its own right."""

    def __init__(self, base: DynamicalMap, k: int):
        if k < 1:
            raise ValueError("power must be >= 1")
        self.base = base
        self.k = int(k)
        self.dim = base.dim
        self.degree = base.degree**self.k

    def lift(self, x):
        for _ in range(self.k):
            x = self.base.lift(x)
        return x

    def derivative(self, x):
        return derivative_cocycle(self.base, x, self.k)

    def inverse_branches(self, y):
        Y, single = _as2d(y)
        pts = Y[:, None, :]
        for _ in range(self.k):
            m, c, n = pts.shape
            pts = self.base.inverse_branches(pts.reshape(-1, n)).reshape(m, -1, n)
        return pts[0] if single else pts

    def local_inverse(self, z, anchor):
        Z, single = _as2d(z)
        A, _ = _as2d(anchor)
        A = np.broadcast_to(A, Z.shape)
        chain = [A]
        for _ in range(self.k - 1):
            chain.append(self.base.evaluate(chain[-1]))
        conv = np.ones(len(Z), bool)
        w = Z
        for a in reversed(chain):
            w, c = self.base.local_inverse(reduce(w), a)
            conv &= c
        return (w[0], bool(conv[0])) if single else (w, conv)

    def to_dict(self):
        return {"family": "power", "k": self.k, "base": self.base.to_dict()}


# module-level operations ----------------------------------------------------


def is_linear(f: DynamicalMap) -> bool:
    """True when ``f`` is the plain action of its integer linear part."""
    if isinstance(f, LinearTorusMap):
        return True
    if isinstance(f, DoublingFamilyMap):
        return f.strength == 0.0
    if isinstance(f, PerturbedExampleMap):
        return f.pitchfork_strength == 0.0 and f.cubic == 0.0 and not any(f.rotation_angles)
    return False


def _to_fraction(v):
    from fractions import Fraction

    if isinstance(v, Fraction):
        return v
    if hasattr(v, "man") and hasattr(v, "exp"):  # mpmath.mpf
        man, exp = int(v.man), int(v.exp)
        return Fraction(man * 2**exp) if exp >= 0 else Fraction(man, 2**-exp)
    return Fraction(float(v))


def exact_orbit(f: DynamicalMap, x, k: int) -> np.ndarray:
    """Orbit of a linear map computed in exact rational arithmetic.

    ``x`` may hold ``Fraction`` or high-precision ``mpmath.mpf`` coordinates;
    iterates are exact for that input, so precision is not lost the way it
    is when e.g. the doubling map is iterated in floating point.
    """
    if not is_linear(f):
        raise ValueError("exact orbits need a map without perturbation")
    fr = [_to_fraction(v) % 1 for v in x]
    den = 1
    for q in fr:
        den = den * q.denominator // math.gcd(den, q.denominator)
    v = [int(q * den) for q in fr]
    L = [[int(a) for a in row] for row in f.linear_part]
    out = np.empty((k + 1, len(v)))
    for j in range(k + 1):
        out[j] = [a / den for a in v]
        v = [sum(L[i][c] * v[c] for c in range(len(v))) % den for i in range(len(v))]
    return reduce(out)


def evaluate(f: DynamicalMap, x):
    return f.evaluate(x)


def orbit(f: DynamicalMap, x, k: int):
    """Array of ``x, f(x), ..., f^k(x)`` (leading axis of length ``k + 1``)."""
    out = [reduce(np.asarray(x, float))]
    for _ in range(k):
        out.append(f.evaluate(out[-1]))
    return np.stack(out)


_RESCALE_AT = 1e150


def derivative_cocycle(f: DynamicalMap, x, k: int, log_scale: bool = False):
    """``Df^k(x) = Df(f^{k-1} x) ... Df(x)``.

    Products are renormalised whenever entries exceed ``1e150``.  With
    ``log_scale=True`` the pair ``(M, s)`` with ``Df^k = e^s M`` is returned,
    which never overflows; otherwise ``e^s M`` is returned.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    X, single = _as2d(x)
    X = reduce(X)
    M = np.broadcast_to(np.eye(f.dim), (len(X), f.dim, f.dim)).copy()
    s = np.zeros(len(X))
    for _ in range(k):
        M = f.derivative(X) @ M
        big = np.max(np.abs(M), axis=(1, 2))
        hit = big > _RESCALE_AT
        if np.any(hit):
            M[hit] /= big[hit, None, None]
            s[hit] += np.log(big[hit])
        X = f.evaluate(X)
    if log_scale:
        return (M[0], float(s[0])) if single else (M, s)
    out = M * np.exp(s)[:, None, None]
    return out[0] if single else out


def inverse_branch_points(f: DynamicalMap, y):
    return f.inverse_branches(y)


def map_from_dict(doc: dict, check: bool = True) -> DynamicalMap:
    """Construct a map from its JSON parameter document."""
    doc = dict(doc)
    family = doc.pop("family", None)
    if family == "doubling":
        return DoublingFamilyMap(**doc)
    if family == "linear":
        M = np.asarray(doc["matrix"])
        try:
            return LinearExpandingMap(M)
        except ValueError:
            return LinearTorusMap(M)
    if family == "perturbed_example":
        return build_perturbed_example(doc, check=check)
    if family == "power":
        return PowerMap(map_from_dict(doc["base"], check=check), doc["k"])
    raise ValueError(f"unknown map family {family!r}")
