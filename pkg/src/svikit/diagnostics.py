"""Solution-quality metrics, sampled map-property tests and numeric lemma checks.

The property samplers can only refute a property: a report with no
violations says nothing stronger than "no violation found among the sampled
pairs at this tolerance".
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import SAMPLER, ConfigError, Draw, ParameterError, SVIError, VIProblem
from .geometry import project

__all__ = [
    "PROPERTIES",
    "EstimateUnavailableError",
    "PreconditionError",
    "PropertyReport",
    "natural_residual",
    "mean_map_of",
    "sample_feasible",
    "pseudomonotonicity_sampler",
    "strong_modulus_estimate",
    "weak_sharp_estimate",
    "recursion_trace",
    "recursion_bound_check",
    "product_min_check",
    "grid_product_argmin",
    "mse_against",
]

PROPERTIES = ("monotone", "pseudomonotone", "strictly-pseudo", "strongly-pseudo", "weak-sharp")


class EstimateUnavailableError(SVIError, ValueError):
    pass


class PreconditionError(SVIError, ValueError):
    pass


def _default_draw():
    return Draw(0, purpose=SAMPLER)


def mean_map_of(problem: VIProblem, n_mean_samples=0, draw: Optional[Draw] = None):
    """Exact mean map if known, else an ``n_mean_samples``-draw average."""
    if problem.mean_map is not None:
        return problem.mean_map
    if n_mean_samples < 1:
        raise ConfigError(f"{problem.family}: no exact mean map and n_mean_samples < 1")
    base = draw or _default_draw()

    def averaged(x):
        total = np.zeros(problem.dim)
        for j in range(n_mean_samples):
            total += problem.sample_map(x, base.child(path=j))
        return total / n_mean_samples

    return averaged


def natural_residual(problem: VIProblem, x, n_mean_samples=0, draw: Optional[Draw] = None) -> float:
    """``||x - P(x - F(x))||`` with the exact or averaged mean map."""
    x = np.asarray(x, dtype=float)
    F = mean_map_of(problem, n_mean_samples, draw)
    return float(np.linalg.norm(x - project(problem.set, x - F(x))))


def sample_feasible(feasible_set, count, rng, sample_box=None):
    """Uniform points of the bounding box, projected onto the set.

    Unbounded coordinates need ``sample_box=(lo, hi)``; for the orthant the
    default box is ``[0, 1]^n``.
    """
    lo, hi = feasible_set.bounds() if sample_box is None else sample_box
    lo = np.broadcast_to(np.asarray(lo, dtype=float), (feasible_set.dim,))
    hi = np.broadcast_to(np.asarray(hi, dtype=float), (feasible_set.dim,))
    if not np.all(np.isfinite(hi)):
        hi = np.where(np.isfinite(hi), hi, lo + 1.0)
    pts = rng.uniform(lo, hi, size=(count, feasible_set.dim))
    return np.array([project(feasible_set, p) for p in pts])


@dataclass
class PropertyReport:
    """Outcome of a sampled property test.

    ``violations`` holds ``(x, y, premise, conclusion)`` tuples.
    """

    property: str
    pairs_tested: int
    violations: list = field(default_factory=list)
    estimate: Optional[float] = None
    tol: object = None

    @property
    def status(self):
        return "no violation found" if not self.violations else f"{len(self.violations)} violations"


def _default_tol(Fy, d):
    return 1e-8 * (1 + np.linalg.norm(Fy) * np.linalg.norm(d))


def pseudomonotonicity_sampler(fmap, feasible_set, n_pairs=1000, tol=None, draw=None,
                               property="pseudomonotone", sigma=0.0, sample_box=None):
    """Search sampled feasible pairs for violations of a monotonicity-type property.

    ``fmap`` must be deterministic (an exact or averaged mean map).  With
    ``p = (x-y)^T F(y)`` and ``q = (x-y)^T F(x)`` a pair is a violation of

    * ``monotone`` when ``q - p < -tol``;
    * ``pseudomonotone`` when ``p >= -tol`` and ``q < -tol``;
    * ``strictly-pseudo`` when ``p >= 0`` and ``q <= 0``;
    * ``strongly-pseudo`` when ``p >= -tol`` and ``q < sigma ||x-y||^2 - tol``.

    ``tol`` defaults to ``1e-8 (1 + ||F(y)|| ||x-y||)`` per pair.
    """
    if property not in PROPERTIES[:4]:
        raise ParameterError(f"unsupported property {property!r}")
    if n_pairs < 1:
        raise ParameterError("n_pairs must be at least 1")
    rng = (draw or _default_draw()).rng()
    xs = sample_feasible(feasible_set, n_pairs, rng, sample_box)
    ys = sample_feasible(feasible_set, n_pairs, rng, sample_box)
    report = PropertyReport(property, 0, tol=tol if tol is not None else "relative 1e-8")
    for x, y in zip(xs, ys):
        d = x - y
        if not np.any(d):
            continue
        Fx, Fy = fmap(x), fmap(y)
        p, q = float(d @ Fy), float(d @ Fx)
        t = _default_tol(Fy, d) if tol is None else tol
        report.pairs_tested += 1
        if property == "monotone":
            bad = q - p < -t
        elif property == "pseudomonotone":
            bad = p >= -t and q < -t
        elif property == "strictly-pseudo":
            bad = p >= 0 and q <= 0
        else:
            bad = p >= -t and q < sigma * float(d @ d) - t
        if bad:
            report.violations.append((x, y, p, q))
    return report


def strong_modulus_estimate(fmap, feasible_set, n_pairs=1000, draw=None, sample_box=None):
    """Smallest ``(x-y)^T F(x) / ||x-y||^2`` over sampled pairs with ``(x-y)^T F(y) >= 0``.

    Both orderings of each pair are tried.  The result over-estimates the
    true modulus.
    """
    rng = (draw or _default_draw()).rng()
    xs = sample_feasible(feasible_set, n_pairs, rng, sample_box)
    ys = sample_feasible(feasible_set, n_pairs, rng, sample_box)
    best = math.inf
    for x, y in zip(xs, ys):
        d = x - y
        dd = float(d @ d)
        if dd == 0.0:
            continue
        Fx, Fy = fmap(x), fmap(y)
        if d @ Fy >= 0:
            best = min(best, float(d @ Fx) / dd)
        if -d @ Fx >= 0:
            best = min(best, float(-d @ Fy) / dd)
    if best == math.inf:
        raise EstimateUnavailableError("no sampled pair satisfied the premise")
    return best


def weak_sharp_estimate(fmap, feasible_set, x_star, n_points=1000, draw=None,
                        residual_tol=1e-6, sample_box=None):
    """Smallest ``(x - x*)^T F(x*) / ||x - x*||`` over sampled feasible ``x != x*``."""
    x_star = np.asarray(x_star, dtype=float)
    F_star = fmap(x_star)
    res = float(np.linalg.norm(x_star - project(feasible_set, x_star - F_star)))
    if res > residual_tol:
        raise PreconditionError(f"x_star has natural residual {res:.3g} > {residual_tol}")
    rng = (draw or _default_draw()).rng()
    best = math.inf
    for x in sample_feasible(feasible_set, n_points, rng, sample_box):
        d = x - x_star
        nd = float(np.linalg.norm(d))
        if nd == 0.0:
            continue
        best = min(best, float(d @ F_star) / nd)
    if best == math.inf:
        raise EstimateUnavailableError("every sampled point coincided with x_star")
    return best


# ----------------------------------------------------------------- lemma checks


def recursion_trace(theta, M, c, a1, K):
    """``a_1..a_K`` of ``a_{k+1} = max(0, 1 - 2 c theta / k) a_k + theta^2 M^2 / (2 k^2)``."""
    a = np.empty(K)
    a[0] = a1
    rate = 2 * c * theta
    drive = theta**2 * M**2 / 2
    for k in range(1, K):
        a[k] = max(0.0, 1 - rate / k) * a[k - 1] + drive / k**2
    return a


def recursion_bound_check(theta, M, c, a1, K, start=1):
    """Check ``2 a_k <= max(theta^2 M^2 / (2 c theta - 1), 2 a_1) / k`` for ``k = start..K``.

    ``start`` defaults to 1, i.e. every iterate is checked.
    """
    if not 2 * c * theta > 1:
        raise ParameterError(f"recursion hypothesis needs 2*c*theta > 1, got {2 * c * theta}")
    if a1 < 0:
        raise ParameterError("a1 must be nonnegative")
    a = recursion_trace(theta, M, c, a1, K)
    u = max(theta**2 * M**2 / (2 * c * theta - 1), 2 * a1)
    k = np.arange(1, K + 1)
    ok = 2 * a <= u / k * (1 + 1e-12) + 1e-300
    return bool(np.all(ok[start - 1:]))


def grid_product_argmin(h, g, gamma_grid, z_grid):
    """Brute-force minimizer of ``h(gamma) g(z)`` over the full product grid."""
    best, arg = math.inf, None
    gz = [g(z) for z in z_grid]
    for gamma in gamma_grid:
        hv = h(gamma)
        for z, gv in zip(z_grid, gz):
            if hv * gv < best:
                best, arg = hv * gv, (gamma, z)
    return arg, best


def product_min_check(h, g, gamma_grid, z_grid, rtol=1e-12):
    """Whether the product-grid minimum equals ``h`` and ``g`` minimized separately."""
    hv = np.array([h(gamma) for gamma in gamma_grid], dtype=float)
    gv = np.array([g(z) for z in z_grid], dtype=float)
    if np.any(hv <= 0) or np.any(gv <= 0):
        raise ParameterError("h and g must be positive on the grids")
    _, joint = grid_product_argmin(h, g, gamma_grid, z_grid)
    separate = hv.min() * gv.min()
    return bool(abs(joint - separate) <= rtol * abs(separate))


def mse_against(reference, trajectories, k):
    """Mean of ``||x_k - reference||^2`` over trajectories."""
    reference = np.asarray(reference, dtype=float)
    if not trajectories:
        raise ParameterError("no trajectories given")
    return float(np.mean([np.sum((t.at(k) - reference) ** 2) for t in trajectories]))
