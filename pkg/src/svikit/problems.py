"""Randomized test problems.

Each generator returns a :class:`VIProblem` whose parameters are drawn once
from the ``INSTANCE`` stream of ``instance_seed``; the per-iteration
randomness comes from the :class:`Draw` passed to the sampled map.  The map
objects are plain frozen dataclasses so that problems pickle across
processes.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from importlib import resources

import numpy as np
from scipy.optimize import linprog

from .core import INSTANCE, DataError, InvalidRangeError, DomainError, Draw, GenerationError, MapConstants, ParameterError, VIProblem
from .geometry import Box, BoxPolyhedron, NonnegativeOrthant

__all__ = [
    "FAMILIES",
    "THETA_F",
    "EPS",
    "gen_frac_quad",
    "gen_frac_nonlin",
    "gen_cournot",
    "gen_watson",
    "gen_rate_cournot",
    "load_watson_matrix",
    "generate",
]

FAMILIES = ("frac-quad", "frac-nonlin", "cournot", "watson", "rate-cournot")
THETA_F = 0.025
EPS = 0.025
MAX_RESAMPLES = 100
MAX_COURNOT_RESAMPLES = 1000
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(32)


def _instance_rng(seed, attempt):
    return Draw(seed, path=attempt, purpose=INSTANCE).rng()


def _check_n(n, lo=2):
    if int(n) != n or n < lo:
        raise ParameterError(f"n must be an integer >= {lo}, got {n}")
    return int(n)


def _frac_constraints(rng, n):
    m = math.ceil(n / 10)
    A = rng.standard_normal((m, n))
    v = rng.uniform(0.0, 1.0, m)
    return A, v


# ------------------------------------------------------------------ fractional


@dataclass(frozen=True, eq=False)
class FracMap:
    """Gradient of ``f(x; w) / g(x)`` for the fractional families.

    ``f(x; w) = 0.5 x^T (theta U U^T + lam V) x + 0.5 ((c + cbar)^T x + 4n)^2``
    with ``V`` standard normal, ``cbar ~ U(0,1)^n`` and
    ``lam = eps ||theta U U^T||_F / ||V||_F`` per draw.  The denominator is
    ``r^T x + t + 4n`` (``kind="quad"``) or ``1e4 (lam_g - exp((r^T x + t + 4n)/2000))``.
    """

    P: np.ndarray  # theta U U^T
    c: np.ndarray
    r: np.ndarray
    t: float
    kind: str
    eps: float = EPS

    @property
    def n(self):
        return self.c.size

    @property
    def lam_g(self):
        return math.exp((8 * self.n + 2) / 2000)

    def _noise(self, draw):
        rng = draw.rng()
        V = rng.standard_normal((self.n, self.n))
        cbar = rng.uniform(0.0, 1.0, self.n)
        lam = self.eps * np.linalg.norm(self.P) / np.linalg.norm(V)
        return self.P + lam * V, cbar

    def denominator(self, x):
        s = self.r @ x + self.t + 4 * self.n
        if self.kind == "quad":
            g, dg = s, self.r
        else:
            ex = math.exp(s / 2000)
            g, dg = 1e4 * (self.lam_g - ex), -5.0 * ex * self.r
        if not g > 0:
            raise DomainError(f"fractional denominator is nonpositive ({g:.6g})", quantity=g)
        return g, dg

    def numerator(self, x, draw):
        Q, cbar = self._noise(draw)
        h = (self.c + cbar) @ x + 4 * self.n
        f = 0.5 * x @ Q @ x + 0.5 * h * h
        df = 0.5 * (Q + Q.T) @ x + h * (self.c + cbar)
        return f, df

    def objective(self, x, draw):
        return self.numerator(x, draw)[0] / self.denominator(x)[0]

    def __call__(self, x, draw):
        f, df = self.numerator(x, draw)
        g, dg = self.denominator(x)
        return df / g - f * dg / g**2

    def mean(self, x):
        # E[lam V] = 0 by symmetry of V; E[cbar] = e/2 with variance 1/12.
        w = self.c + 0.5
        h = w @ x + 4 * self.n
        f = 0.5 * x @ self.P @ x + 0.5 * (h * h + x @ x / 12)
        df = self.P @ x + h * w + x / 12
        g, dg = self.denominator(x)
        return df / g - f * dg / g**2


def _gen_frac(n, instance_seed, kind):
    n = _check_n(n)
    for attempt in range(MAX_RESAMPLES):
        rng = _instance_rng(instance_seed, attempt)
        U = rng.standard_normal((n, n))
        c = rng.standard_normal(n)
        r = rng.uniform(0.0, 1.0, n)
        t = float(rng.uniform(0.0, 1.0))
        A, v = _frac_constraints(rng, n)
        try:
            feasible = BoxPolyhedron(A, v, np.zeros(n), np.full(n, 4.0))
        except InvalidRangeError:
            continue
        fmap = FracMap(THETA_F * U @ U.T, c, r, t, kind)
        # g is monotone in r^T x, so its extremes over the box sit at 0 and 4e
        try:
            fmap.denominator(np.zeros(n))
            fmap.denominator(np.full(n, 4.0))
        except DomainError:
            continue
        family = "frac-quad" if kind == "quad" else "frac-nonlin"
        return VIProblem(
            set=feasible,
            sample_map=fmap,
            mean_map=fmap.mean,
            family=family,
            params={"n": n, "instance_seed": instance_seed, "attempt": attempt,
                    "U": U, "c": c, "r": r, "t": t, "A": A, "v": v},
        )
    raise GenerationError(f"no valid fractional instance for n={n} after {MAX_RESAMPLES} attempts")


def gen_frac_quad(n, instance_seed=0):
    """Fractional problem with an affine denominator over ``{Ax <= v, 0 <= x <= 4}``."""
    return _gen_frac(n, instance_seed, "quad")


def gen_frac_nonlin(n, instance_seed=0):
    """Fractional problem with the exponential denominator."""
    return _gen_frac(n, instance_seed, "nonlin")


# --------------------------------------------------------------------- Cournot


@dataclass(frozen=True, eq=False)
class CournotMap:
    """Negated payoff gradients for price ``(a - b xbar)^kappa``.

    ``b`` is uniform with mean 1 and standard deviation ``eps``.
    """

    a: float
    kappa: float
    eps: float = EPS

    @property
    def half_width(self):
        return self.eps * math.sqrt(3.0)

    def slope(self, draw):
        return float(draw.rng().uniform(1 - self.half_width, 1 + self.half_width))

    def _at(self, x, b):
        base = self.a - b * np.sum(x)
        if not base > 0:
            raise DomainError(f"Cournot price base a - b*xbar = {base:.6g} is nonpositive", quantity=base)
        return -(base**self.kappa - self.kappa * b * x * base ** (self.kappa - 1))

    def payoffs(self, x, draw):
        base = self.a - self.slope(draw) * np.sum(x)
        if not base > 0:
            raise DomainError(f"Cournot price base a - b*xbar = {base:.6g} is nonpositive", quantity=base)
        return base**self.kappa * x

    def __call__(self, x, draw):
        return self._at(x, self.slope(draw))

    def mean(self, x):
        # Gauss-Legendre over the support of b
        bs = 1 + self.half_width * _GL_NODES
        return sum(w * self._at(x, b) for w, b in zip(_GL_WEIGHTS, bs)) / 2


def gen_cournot(n, kappa=0.5, instance_seed=0, eps=EPS):
    """Shared-constraint Cournot game with ``n`` players and boxes ``[0, 3n]``.

    The constraints are resampled until the largest feasible aggregate output
    keeps the price base positive for every ``b`` up to six standard deviations
    above its mean.
    """
    n = _check_n(n)
    if not 0 < kappa < 1:
        raise ParameterError(f"kappa must lie in (0, 1), got {kappa}")
    a = 100.0 * math.ceil(n / 3)
    b_max = 1 + 6 * eps
    for attempt in range(MAX_COURNOT_RESAMPLES):
        rng = _instance_rng(instance_seed, attempt)
        A, v = _frac_constraints(rng, n)
        lp = linprog(-np.ones(n), A_ub=A, b_ub=v, bounds=[(0, 3 * n)] * n, method="highs")
        if lp.status != 0:
            continue
        xbar_max = -lp.fun
        if a - b_max * xbar_max <= 0:
            continue
        fmap = CournotMap(a, kappa, eps)
        return VIProblem(
            set=BoxPolyhedron(A, v, np.zeros(n), np.full(n, 3.0 * n)),
            sample_map=fmap,
            mean_map=fmap.mean,
            family="cournot",
            params={"n": n, "kappa": kappa, "instance_seed": instance_seed, "attempt": attempt,
                    "a": a, "A": A, "v": v, "xbar_max": xbar_max},
        )
    raise GenerationError(f"no Cournot instance with a positive price base for n={n}")


# ---------------------------------------------------------------------- Watson


def load_watson_matrix():
    """Read the bundled 10x10 matrix and verify its manifest checksum."""
    data = resources.files("svikit") / "data"
    try:
        raw = (data / "watson_M.txt").read_bytes()
        manifest = json.loads((data / "MANIFEST.json").read_text())
    except FileNotFoundError as exc:
        raise DataError(f"Watson matrix data missing: {exc}") from exc
    expected = manifest["watson_M.txt"]["blake2b-64"]
    actual = hashlib.blake2b(raw, digest_size=8).hexdigest()
    if actual != expected:
        raise DataError(f"Watson matrix checksum mismatch: expected {expected}, got {actual}")
    M = np.loadtxt(raw.decode().splitlines())
    if M.shape != (10, 10):
        raise DataError(f"Watson matrix has shape {M.shape}, expected (10, 10)")
    return M


@dataclass(frozen=True, eq=False)
class LinearMap:
    """``(M + eps M^w) x + q + eps q^w`` with standard normal ``M^w, q^w``."""

    M: np.ndarray
    q: np.ndarray
    eps: float = EPS

    def __call__(self, x, draw):
        rng = draw.rng()
        n = self.q.size
        Mw = rng.standard_normal((n, n))
        qw = rng.standard_normal(n)
        return (self.M + self.eps * Mw) @ x + self.q + self.eps * qw

    def mean(self, x):
        return self.M @ x + self.q


def gen_watson(q_index, instance_seed=0):
    """Stochastic 10-variable LCP with ``q = e_{q_index}`` (1-based).

    The instance has no random parameters, so ``instance_seed`` is accepted
    only for a uniform generator signature.
    """
    if int(q_index) != q_index or not 1 <= q_index <= 10:
        raise ParameterError(f"q_index must be in 1..10, got {q_index}")
    M = load_watson_matrix()
    q = np.zeros(10)
    q[int(q_index) - 1] = 1.0
    lmap = LinearMap(M, q)
    return VIProblem(
        set=NonnegativeOrthant(10),
        sample_map=lmap,
        mean_map=lmap.mean,
        family="watson",
        solution=np.zeros(10),
        params={"q_index": int(q_index), "M": M, "q": q},
    )


# ---------------------------------------------------------------- rate Cournot


@dataclass(frozen=True, eq=False)
class AffineCournotMap:
    """``F(x; w) = b^w (I + e e^T) x - a e`` with ``b^w ~ N(b, eps^2)``."""

    a: float
    b: float
    eps: float

    def slope(self, draw):
        return self.b + self.eps * float(draw.rng().standard_normal())

    def __call__(self, x, draw):
        return self.slope(draw) * (x + np.sum(x)) - self.a

    def mean(self, x):
        return self.b * (x + np.sum(x)) - self.a


def gen_rate_cournot(n, instance_seed=0):
    """Affine-price Cournot instance on ``[0, 1]^n`` with known constants.

    The instance is deterministic; ``instance_seed`` is accepted for a uniform
    generator signature.
    """
    n = _check_n(n)
    a = 0.1 * math.ceil(n / 10)
    b = a / n
    eps = 0.025 * b
    fmap = AffineCournotMap(a, b, eps)
    constants = MapConstants(L=b * (n + 1), B=2 * a * math.sqrt(n), C=a * math.sqrt(n), sigma=b)
    return VIProblem(
        set=Box.uniform(n, 0.0, 1.0),
        sample_map=fmap,
        mean_map=fmap.mean,
        noise_bound=n * (n + 1) ** 2 * eps**2,
        constants=constants,
        solution=np.full(n, n / (n + 1)),
        family="rate-cournot",
        params={"n": n, "a": a, "b": b, "eps": eps},
    )


def generate(family, n=None, instance_seed=0, kappa=0.5, q_index=None):
    """Dispatch by family name; Watson uses ``q_index`` (falling back to ``n``)."""
    if family == "frac-quad":
        return gen_frac_quad(n, instance_seed)
    if family == "frac-nonlin":
        return gen_frac_nonlin(n, instance_seed)
    if family == "cournot":
        return gen_cournot(n, kappa, instance_seed)
    if family == "watson":
        return gen_watson(q_index if q_index is not None else n, instance_seed)
    if family == "rate-cournot":
        return gen_rate_cournot(n, instance_seed)
    raise ParameterError(f"unknown family {family!r}; expected one of {FAMILIES}")
