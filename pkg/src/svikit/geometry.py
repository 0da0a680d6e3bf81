"""Feasible sets, Euclidean projection and Bregman prox steps.

Three set types are supported: a box, a box intersected with finitely many
halfspaces ``Ax <= v``, and the nonnegative orthant.  Projection onto the
first and last is a clamp; the polyhedral case uses Dykstra's alternating
projections.

Three distance-generating functions are provided, all separable:

* :class:`Euclidean`, ``s(x) = 0.5 ||x||^2`` so that ``V(x, z) = 0.5 ||x - z||^2``
  and the prox step coincides with the projected step;
* :class:`ShiftedEntropy`, ``s(x) = sum (x_i + delta) log(x_i + delta)``;
* :class:`PowerSum`, ``s(x) = log(n) sum x_i^(1 + 1/log n)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.optimize import brentq, linprog

from .core import ConvergenceError, DomainError, InvalidDimensionError, InvalidRangeError, ParameterError

__all__ = [
    "TOL_PROJ",
    "MAX_PROJ_ITERS",
    "TOL_PROX",
    "Box",
    "BoxPolyhedron",
    "NonnegativeOrthant",
    "project",
    "Euclidean",
    "ShiftedEntropy",
    "PowerSum",
    "bregman",
    "prox_step",
    "generator_constants",
]

TOL_PROJ = 1e-8
MAX_PROJ_ITERS = 100_000
TOL_PROX = 1e-8
MAX_DUAL_SWEEPS = 10_000


def _vector(x, name="x") -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise InvalidDimensionError(f"{name} must be a nonempty 1-D array, got shape {x.shape}")
    return x


# --------------------------------------------------------------------------- sets


@dataclass(frozen=True, eq=False)
class Box:
    """``{x : lo <= x <= hi}``."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = _vector(self.lo, "lo")
        hi = _vector(self.hi, "hi")
        if lo.shape != hi.shape:
            raise InvalidDimensionError(f"bound shapes differ: {lo.shape} vs {hi.shape}")
        if np.any(lo > hi):
            raise InvalidRangeError("box bounds must satisfy lo <= hi")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def uniform(cls, n, lo, hi):
        return cls(np.full(n, float(lo)), np.full(n, float(hi)))

    @property
    def dim(self) -> int:
        return self.lo.size

    def bounds(self):
        return self.lo, self.hi

    def violation(self, x) -> float:
        return float(max(np.max(self.lo - x), np.max(x - self.hi), 0.0))

    def contains(self, x, tol=TOL_PROJ) -> bool:
        return self.violation(np.asarray(x, dtype=float)) <= tol

    def project(self, x) -> np.ndarray:
        return np.clip(x, self.lo, self.hi)


@dataclass(frozen=True, eq=False)
class NonnegativeOrthant:
    n: int

    def __post_init__(self):
        if self.n <= 0:
            raise InvalidDimensionError(f"dimension must be positive, got {self.n}")

    @property
    def dim(self) -> int:
        return self.n

    def bounds(self):
        return np.zeros(self.n), np.full(self.n, np.inf)

    def violation(self, x) -> float:
        return float(max(-np.min(x), 0.0))

    def contains(self, x, tol=TOL_PROJ) -> bool:
        return self.violation(np.asarray(x, dtype=float)) <= tol

    def project(self, x) -> np.ndarray:
        return np.maximum(x, 0.0)


@dataclass(frozen=True, eq=False)
class BoxPolyhedron:
    """``{x : A x <= v, lo <= x <= hi}``.

    Nonemptiness is certified at construction with a feasibility LP.
    """

    A: np.ndarray
    v: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    tol: float = TOL_PROJ
    max_iter: int = MAX_PROJ_ITERS

    def __post_init__(self):
        box = Box(self.lo, self.hi)
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        v = _vector(self.v, "v")
        if A.shape != (v.size, box.dim):
            raise InvalidDimensionError(f"A has shape {A.shape}, expected ({v.size}, {box.dim})")
        norms = np.linalg.norm(A, axis=1)
        if np.any(norms == 0.0):
            raise ParameterError("constraint rows must be nonzero")
        for arr in (A, v):
            arr.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "lo", box.lo)
        object.__setattr__(self, "hi", box.hi)
        object.__setattr__(self, "_box", box)
        object.__setattr__(self, "_row_sq", norms**2)
        lp = linprog(
            np.zeros(box.dim), A_ub=A, b_ub=v,
            bounds=list(zip(box.lo, box.hi)), method="highs",
        )
        if lp.status != 0:
            raise InvalidRangeError(f"polyhedron is empty ({lp.message})")
        object.__setattr__(self, "feasible_point", lp.x)

    @property
    def dim(self) -> int:
        return self.lo.size

    @property
    def box(self) -> Box:
        return self._box

    def bounds(self):
        return self.lo, self.hi

    def violation(self, x) -> float:
        return max(self._box.violation(x), float(max(np.max(self.A @ x - self.v), 0.0)))

    def contains(self, x, tol=TOL_PROJ) -> bool:
        return self.violation(np.asarray(x, dtype=float)) <= tol

    def project(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        z = np.clip(x, self.lo, self.hi)
        # points within tol of every halfspace are treated as feasible, which
        # makes the projection idempotent on its own output
        if np.max((self.A @ z - self.v) / np.sqrt(self._row_sq)) <= self.tol:
            return z
        return self._dykstra(x)

    def _dykstra(self, x):
        z, cycles, change = _dykstra_kernel(
            x, self.A, self.v, self.lo, self.hi, self._row_sq, self.tol, self.max_iter
        )
        if cycles < 0:
            raise ConvergenceError(
                f"Dykstra projection did not reach tol={self.tol} in {self.max_iter} cycles",
                residual=change,
            )
        return z


def _dykstra_cycles(x, A, v, lo, hi, row_sq, tol, max_iter):
    # Cyclic Dykstra over the halfspaces and the box.  Returns the point, the
    # number of cycles used (-1 on failure) and the last cycle's change.
    m, n = A.shape
    row_norm = np.sqrt(row_sq)
    z = x.copy()
    p_half = np.zeros((m, n))
    p_box = np.zeros(n)
    change = np.inf
    for cycle in range(max_iter):
        z_old = z.copy()
        for j in range(m):
            y = z + p_half[j]
            excess = A[j] @ y - v[j]
            if excess > 0.0:
                z = y - (excess / row_sq[j]) * A[j]
            else:
                z = y
            p_half[j] = y - z
        y = z + p_box
        z = np.minimum(np.maximum(y, lo), hi)
        p_box = y - z
        change = np.linalg.norm(z - z_old)
        if change <= 0.1 * tol and np.max((A @ z - v) / row_norm) <= tol:
            return z, cycle + 1, change
    return z, -1, change


try:
    import numba

    _dykstra_kernel = numba.njit(cache=True)(_dykstra_cycles)
except ImportError:  # pragma: no cover
    _dykstra_kernel = _dykstra_cycles


def project(feasible_set, x) -> np.ndarray:
    """Euclidean projection of ``x`` onto ``feasible_set``."""
    x = _vector(x)
    if not np.all(np.isfinite(x)):
        raise DomainError("cannot project a non-finite point", quantity=x)
    if x.size != feasible_set.dim:
        raise InvalidDimensionError(f"point has dimension {x.size}, set has {feasible_set.dim}")
    return feasible_set.project(x)


# ------------------------------------------------------------ distance generators


@dataclass(frozen=True)
class Euclidean:
    """``s(x) = 0.5 ||x||^2``."""

    name = "euclidean"

    def check_domain(self, x):
        pass

    def value(self, x):
        return 0.5 * float(x @ x)

    def grad(self, x):
        return np.asarray(x, dtype=float)

    def grad_inverse(self, y):
        return np.asarray(y, dtype=float)

    def second_derivative(self, t):
        return np.ones_like(np.asarray(t, dtype=float))

    def divergence(self, x, z):
        d = z - x
        return 0.5 * float(d @ d)


@dataclass(frozen=True)
class ShiftedEntropy:
    """``s(x) = sum (x_i + delta) log(x_i + delta)``, domain ``x > -delta``."""

    delta: float = 1e-8
    name = "entropy"

    def __post_init__(self):
        if not self.delta > 0:
            raise ParameterError(f"delta must be positive, got {self.delta}")

    def check_domain(self, x):
        if np.any(np.asarray(x) + self.delta <= 0.0):
            raise DomainError("shifted entropy needs x > -delta", quantity=np.min(x))

    def value(self, x):
        self.check_domain(x)
        u = x + self.delta
        return float(np.sum(u * np.log(u)))

    def grad(self, x):
        self.check_domain(x)
        return np.log(x + self.delta) + 1.0

    def grad_inverse(self, y):
        return np.exp(y - 1.0) - self.delta

    def second_derivative(self, t):
        return 1.0 / (np.asarray(t, dtype=float) + self.delta)

    def divergence(self, x, z):
        self.check_domain(x)
        self.check_domain(z)
        u, w = x + self.delta, z + self.delta
        return float(np.sum(w * (np.log(w) - np.log(u)) - (w - u)))


@dataclass(frozen=True)
class PowerSum:
    """``s(x) = log(n) sum x_i^p`` with ``p = 1 + 1/log(n)``, domain ``x >= 0``."""

    n: int
    name = "powersum"

    def __post_init__(self):
        if self.n < 2:
            raise ParameterError(f"PowerSum needs n >= 2, got {self.n}")

    @property
    def scale(self):
        return math.log(self.n)

    @property
    def p(self):
        return 1.0 + 1.0 / math.log(self.n)

    def check_domain(self, x):
        if np.any(np.asarray(x) < 0.0):
            raise DomainError("power-sum generator needs x >= 0", quantity=np.min(x))

    def value(self, x):
        self.check_domain(x)
        return self.scale * float(np.sum(x**self.p))

    def grad(self, x):
        self.check_domain(x)
        return self.scale * self.p * x ** (self.p - 1.0)

    def grad_inverse(self, y):
        # s' maps [0, inf) onto [0, inf); values below s'(0) = 0 are clamped there.
        y = np.maximum(np.asarray(y, dtype=float), 0.0)
        return (y / (self.scale * self.p)) ** (1.0 / (self.p - 1.0))

    def second_derivative(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore"):
            return self.scale * self.p * (self.p - 1.0) * t ** (self.p - 2.0)

    def divergence(self, x, z):
        self.check_domain(x)
        self.check_domain(z)
        return self.value(z) - self.value(x) - float(self.grad(x) @ (z - x))


def bregman(gen, x, z) -> float:
    """``V(x, z) = s(z) - s(x) - grad s(x)^T (z - x)``."""
    x, z = _vector(x), _vector(z, "z")
    return max(gen.divergence(x, z), 0.0)


def generator_constants(gen, feasible_set) -> Tuple[float, float]:
    """Return ``(theta, L_V)`` with ``theta/2 ||x-z||^2 <= V(x,z) <= L_V^2 ||x-z||^2``.

    For separable generators ``theta`` is the smallest and ``2 L_V^2`` the
    largest value of ``s''`` over the set's bounding box.  ``L_V`` may be
    infinite when ``s''`` blows up at a box face (the power-sum generator at 0).
    """
    if isinstance(gen, Euclidean):
        return 1.0, math.sqrt(0.5)
    lo, hi = feasible_set.bounds()
    if not np.all(np.isfinite(hi)):
        raise ParameterError(f"the {gen.name} generator needs a bounded set")
    gen.check_domain(lo)
    ends = np.concatenate([gen.second_derivative(lo), gen.second_derivative(hi)])
    theta = float(np.min(ends))
    lv_sq = 0.5 * float(np.max(ends))
    return theta, math.sqrt(lv_sq)


# ----------------------------------------------------------------------- prox step


def prox_step(gen, feasible_set, x, r, tol=TOL_PROX) -> np.ndarray:
    """Solve ``argmin_{z in set} r^T z + V(x, z)``.

    The Euclidean case is exactly ``project(set, x - r)``.  For the other
    generators the stationarity condition ``grad s(z) = grad s(x) - r`` is
    inverted coordinatewise and clamped to the box; linear inequalities are
    handled by cyclic exact maximization of the dual over their multipliers.
    """
    x, r = _vector(x), _vector(r, "r")
    if isinstance(gen, Euclidean):
        return project(feasible_set, x - r)
    target = gen.grad(x) - r
    lo, hi = feasible_set.bounds()
    if isinstance(feasible_set, BoxPolyhedron):
        return _dual_prox(gen, feasible_set, target, tol)
    return np.clip(gen.grad_inverse(target), lo, hi)


def _dual_prox(gen, feasible_set, target, tol):
    A, v, lo, hi = feasible_set.A, feasible_set.v, feasible_set.lo, feasible_set.hi
    m = v.size

    def primal(mu):
        return np.clip(gen.grad_inverse(target - A.T @ mu), lo, hi)

    mu = np.zeros(m)
    z = primal(mu)
    for _ in range(MAX_DUAL_SWEEPS):
        for j in range(m):
            def slack(t, j=j):
                trial = mu.copy()
                trial[j] = t
                return float(A[j] @ primal(trial) - v[j])

            if slack(0.0) <= 0.0:
                mu[j] = 0.0
                continue
            upper = 1.0
            while slack(upper) > 0.0:
                upper *= 2.0
                if upper > 1e300:
                    raise ConvergenceError("dual multiplier bracket diverged")
            mu[j] = brentq(slack, 0.0, upper, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
        z = primal(mu)
        gap = A @ z - v
        active = mu > 0.0
        if np.all(gap <= tol) and np.all(np.abs(gap[active]) <= tol):
            return z
    raise ConvergenceError("dual prox did not converge", residual=float(np.max(np.abs(gap))))
