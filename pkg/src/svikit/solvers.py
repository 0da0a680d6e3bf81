"""Stochastic approximation schemes, steplengths and rate-bound constants.

Three update rules are provided:

* ``SA``   ``x_{k+1} = P(x_k - g_k F(x_k; w_k))``
* ``ESA``  extragradient: a half step ``x_{k+1/2} = P(x_k - g_k F(x_k; w_k))``
  followed by ``x_{k+1} = P(x_k - g_k F(x_{k+1/2}; w_{k+1/2}))``
* ``MPSA`` the same two steps with the projection replaced by a Bregman prox step.

The steplength is always ``g_k = gamma0 / k`` for ``k = 1..K``.  The noise of
iteration ``k`` is keyed ``(path, k, 0)`` and that of the half step
``(path, k, 1)``, so SA, ESA and MPSA driven by the same seed see the same
realizations.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .core import ConfigError, Draw, ParameterError, SVIError, SolverError, VIProblem, evaluate_map
from .geometry import Euclidean, generator_constants, project, prox_step

__all__ = [
    "SCHEMES",
    "DEFAULT_CHECKPOINTS",
    "SolverConfig",
    "Trajectory",
    "steplength",
    "sa_step",
    "esa_step",
    "mpsa_step",
    "run",
    "safety_bound_gamma0",
    "optimal_gamma0_strong",
    "optimal_gamma0_mpsa",
    "optimal_gamma0_weaksharp",
    "rate_bound_constants",
    "strong_rate_constant",
    "mpsa_rate_constant",
    "weaksharp_h",
    "weaksharp_g",
]

SCHEMES = ("SA", "ESA", "MPSA")
DEFAULT_CHECKPOINTS = (1, 100, 1000, 10000, 15000)
_CONSTRAINT_TOL = 1e-12


def steplength(k, gamma0):
    """``gamma0 / k``; ``k`` counts from 1."""
    if k < 1:
        raise IndexError(f"steplength index starts at 1, got k={k}")
    if not gamma0 > 0:
        raise ParameterError(f"gamma0 must be positive, got {gamma0}")
    return gamma0 / k


def sa_step(problem: VIProblem, x, gamma, draw: Draw):
    return project(problem.set, x - gamma * evaluate_map(problem, x, draw))


def esa_step(problem: VIProblem, x, gamma, draw_k: Draw, draw_half: Draw):
    x_half = project(problem.set, x - gamma * evaluate_map(problem, x, draw_k))
    x_next = project(problem.set, x - gamma * evaluate_map(problem, x_half, draw_half))
    return x_half, x_next


def mpsa_step(problem: VIProblem, gen, x, gamma, draw_k: Draw, draw_half: Draw):
    x_half = prox_step(gen, problem.set, x, gamma * evaluate_map(problem, x, draw_k))
    x_next = prox_step(gen, problem.set, x, gamma * evaluate_map(problem, x_half, draw_half))
    return x_half, x_next


@dataclass(frozen=True)
class SolverConfig:
    """Settings of one solver run.

    ``beta`` and ``c`` default to 1 for SA/ESA.  For MPSA they default to
    ``4/theta - 1`` (the smallest equal pair meeting the prox constraint for
    the generator's ``theta``), which is 1 when ``theta = 2``.
    ``checkpoints`` defaults to ``DEFAULT_CHECKPOINTS`` restricted to ``[1, K]``;
    iteration 0 and ``K`` are always recorded.
    """

    scheme: str = "ESA"
    gamma0: float = 1.0
    iterations: int = 1000
    beta: Optional[float] = None
    c: Optional[float] = None
    c_bar: float = math.sqrt(0.5)
    master_seed: int = 0
    path: int = 0
    checkpoints: Optional[Sequence[int]] = None
    x0: Optional[np.ndarray] = None
    generator: object = None
    enforce_safety: bool = False

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if not (isinstance(self.gamma0, (int, float)) and self.gamma0 > 0 and math.isfinite(self.gamma0)):
            raise ConfigError(f"gamma0 must be a positive finite number, got {self.gamma0}")
        if int(self.iterations) != self.iterations or self.iterations < 0:
            raise ConfigError(f"iterations must be a nonnegative integer, got {self.iterations}")
        if not 0 < self.c_bar <= math.sqrt(0.5) + 1e-15:
            raise ConfigError(f"c_bar must lie in (0, 1/sqrt(2)], got {self.c_bar}")
        if self.scheme == "MPSA" and self.generator is None:
            object.__setattr__(self, "generator", Euclidean())
        for name in ("beta", "c"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise ConfigError(f"{name} must be positive, got {value}")
        if self.checkpoints is not None:
            ks = sorted(set(int(k) for k in self.checkpoints))
            if ks and (ks[0] < 1 or ks[-1] > self.iterations):
                raise ConfigError(f"checkpoints must lie in [1, {self.iterations}], got {ks}")
            object.__setattr__(self, "checkpoints", tuple(ks))

    def resolved_constants(self, theta=None):
        """``(beta, c)`` after defaults, checked against the scheme's constraint."""
        if self.scheme == "MPSA":
            if theta is None:
                raise ConfigError("MPSA constants need the generator's theta")
            default = max(4.0 / theta - 1.0, 1e-12)
            beta = default if self.beta is None else self.beta
            c = default if self.c is None else self.c
            slack = theta / 2 - 1 / (1 + beta) - 1 / (1 + c)
        else:
            beta = 1.0 if self.beta is None else self.beta
            c = 1.0 if self.c is None else self.c
            slack = 1 - 1 / (1 + beta) - 1 / (1 + c)
        if slack < -_CONSTRAINT_TOL:
            raise ConfigError(f"constants beta={beta}, c={c} violate the {self.scheme} constraint (slack {slack:.3g})")
        return beta, c

    def checkpoint_list(self):
        if self.checkpoints is None:
            ks = [k for k in DEFAULT_CHECKPOINTS if k <= self.iterations]
        else:
            ks = list(self.checkpoints)
        if self.iterations > 0 and self.iterations not in ks:
            ks.append(self.iterations)
        return sorted(ks)


@dataclass
class Trajectory:
    """Recorded iterates of one run.

    ``checkpoints`` holds ``(k, x_k)`` pairs including ``k = 0``.
    ``residuals`` is aligned with ``checkpoints`` when a residual function was
    supplied to :func:`run`.
    """

    checkpoints: list
    final: np.ndarray
    residuals: Optional[list] = None
    seconds: float = 0.0
    checkpoint_seconds: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    scheme: str = "ESA"
    path: int = 0

    @property
    def iterations(self):
        return [k for k, _ in self.checkpoints]

    def at(self, k):
        for j, x in self.checkpoints:
            if j == k:
                return x
        raise IndexError(f"iteration {k} was not recorded")

    def residual_at(self, k):
        if self.residuals is None:
            raise IndexError("no residuals were recorded")
        return self.residuals[self.iterations.index(k)]


def _mpsa_theta(problem, config):
    gen = config.generator
    if isinstance(gen, Euclidean):
        return 1.0
    return generator_constants(gen, problem.set)[0]


def _safety_warnings(problem, config, beta, theta):
    constants = problem.constants
    if constants is None or constants.L is None:
        return ["map constants unknown: steplength safety bound not checked"]
    bound = safety_bound_gamma0(config.scheme, constants.L, beta, theta)
    if config.gamma0 <= bound:
        return []
    message = f"gamma0={config.gamma0:.6g} exceeds the {config.scheme} safety bound {bound:.6g}"
    if config.enforce_safety:
        raise ConfigError(message)
    return [message]


def run(problem: VIProblem, config: SolverConfig, residual: Optional[Callable] = None) -> Trajectory:
    """Apply ``config.iterations`` steps of the configured scheme.

    ``x0`` defaults to the projection of the origin; an infeasible ``x0`` is
    projected first.  ``residual(x)``, if given, is evaluated at every
    checkpoint.  Any library error raised by a step is re-raised as
    :class:`SolverError` carrying the iteration index.
    """
    theta = _mpsa_theta(problem, config) if config.scheme == "MPSA" else 1.0
    beta, _ = config.resolved_constants(theta)
    warnings = _safety_warnings(problem, config, beta, theta if config.scheme == "MPSA" else None)

    x0 = np.zeros(problem.dim) if config.x0 is None else np.asarray(config.x0, dtype=float)
    if x0.shape != (problem.dim,):
        raise ConfigError(f"x0 has shape {x0.shape}, expected ({problem.dim},)")
    x = project(problem.set, x0)
    if config.scheme == "MPSA":
        config.generator.check_domain(x)

    marks = set(config.checkpoint_list())
    seconds = []
    start = time.perf_counter()
    recorded = [(0, x.copy())]
    seconds.append(0.0)
    seed, path = config.master_seed, config.path
    for k in range(1, config.iterations + 1):
        gamma = config.gamma0 / k
        draw = Draw(seed, path=path, iteration=k, half_step=0)
        try:
            if config.scheme == "SA":
                x = sa_step(problem, x, gamma, draw)
            elif config.scheme == "ESA":
                _, x = esa_step(problem, x, gamma, draw, draw.child(half_step=1))
            else:
                _, x = mpsa_step(problem, config.generator, x, gamma, draw, draw.child(half_step=1))
        except SVIError as exc:
            raise SolverError(f"{type(exc).__name__}: {exc}", k) from exc
        if k in marks:
            recorded.append((k, x.copy()))
            seconds.append(time.perf_counter() - start)
    elapsed = time.perf_counter() - start
    residuals = [float(residual(xk)) for _, xk in recorded] if residual is not None else None
    return Trajectory(
        checkpoints=recorded,
        final=x,
        residuals=residuals,
        seconds=elapsed,
        checkpoint_seconds=seconds,
        warnings=warnings,
        scheme=config.scheme,
        path=path,
    )


# ------------------------------------------------------------------ steplength rules


def safety_bound_gamma0(scheme, L, beta=1.0, theta=None):
    """Largest admissible ``gamma0``; ``inf`` when ``L = 0``."""
    if L < 0 or beta <= 0:
        raise ParameterError("L must be nonnegative and beta positive")
    if L == 0:
        return math.inf
    if scheme == "MPSA":
        if theta is None or theta <= 0:
            raise ParameterError("MPSA safety bound needs theta > 0")
        return math.sqrt(theta) / (2 * L * math.sqrt(1 + beta))
    return math.sqrt(1 / (2 * (1 + beta))) / L


def optimal_gamma0_strong(sigma):
    if not sigma > 0:
        raise ParameterError(f"sigma must be positive, got {sigma}")
    return (1 + math.sqrt(33)) / (4 * sigma)


def optimal_gamma0_mpsa(L_V, sigma, theta):
    if not (L_V > 0 and sigma > 0 and theta > 0):
        raise ParameterError("L_V, sigma and theta must be positive")
    lv2 = L_V**2
    root = math.sqrt(5 * theta**2 * lv2 / 16 + 9 * lv2**2 / 16 + theta**4 / 64)
    return (6 * lv2 - theta**2) / (8 * sigma) + root / sigma


def optimal_gamma0_weaksharp(U, alpha, nu, L):
    """Return ``(gamma0, beta, c, c_bar)`` minimizing the weak-sharp rate constant."""
    if not (U > 0 and alpha > 0):
        raise ParameterError("U and alpha must be positive")
    if not (nu > 0 and L > 0):
        raise ParameterError("nu and L must be positive; the minimization degenerates otherwise")
    beta = nu / (math.sqrt(2) * L * U)
    return 2 * U / alpha, beta, 1 / beta, math.sqrt(0.5)


# ------------------------------------------------------------------- rate constants


def rate_bound_constants(sigma, gamma0, a, n, nu2, beta=1.0, c=1.0):
    """``(M_B, M_nu, M)`` of the mean-squared-error bound ``M / K``.

    Here ``B^2 = 4 a^2 n``, which is the affine-price Cournot instance's bound.
    """
    s = sigma * gamma0
    if s <= 1:
        raise ParameterError(f"bound undefined: sigma*gamma0 = {s:.6g} <= 1")
    m_b = 4 * a**2 * n * (2 * s + (1 + beta))
    m_nu = 2 * ((1 + c) + s) * nu2
    return m_b, m_nu, gamma0**2 * (m_nu + m_b) / (s - 1)


def strong_rate_constant(sigma, gamma0, B, nu2):
    """Rate constant ``gamma0^2 t0 / (sigma gamma0 - 1)`` with ``beta = c = 1``.

    ``t0 = 4B^2 + 4nu^2 + 2 sigma gamma0 (B^2 + nu^2)``; its minimizer in gamma0 is
    ``(1 + sqrt 33) / (4 sigma)`` for every ``B, nu``.
    """
    s = sigma * gamma0
    if s <= 1:
        return math.inf
    t0 = 4 * B**2 + 4 * nu2 + 2 * s * (B**2 + nu2)
    return gamma0**2 * t0 / (s - 1)


def mpsa_rate_constant(sigma, gamma0, theta, L_V, B, nu2, beta_bar=0.5):
    """MPSA rate constant as a function of ``gamma0`` and the split ``beta_bar``.

    Infinite where ``sigma gamma0 <= L_V^2``.  Minimizing jointly over
    ``(gamma0, beta_bar)`` gives ``beta_bar = 1/2`` and ``optimal_gamma0_mpsa``.
    """
    lv2 = L_V**2
    if sigma * gamma0 <= lv2 or not 0 < beta_bar < 1:
        return math.inf
    q = B**2 + nu2
    t0 = 4 * q + 2 * sigma * gamma0 * q / (beta_bar * (1 - beta_bar) * theta**2)
    return (2 / theta) * gamma0**2 * lv2 * t0 / (sigma * gamma0 - lv2)


def weaksharp_h(gamma0, U, alpha):
    """``gamma0^2 U / (alpha gamma0 - U)``; infinite where ``alpha gamma0 <= U``."""
    d = alpha * gamma0 - U
    return gamma0**2 * U / d if d > 0 else math.inf


def weaksharp_g(c, beta, c_bar, nu, L, U, C):
    """Separable factor of the weak-sharp constant over ``(c, beta, c_bar)``."""
    return 2 * (1 + c) * nu**2 + (C**2 + 16 * L**2 * U**2) / (4 * c_bar**2) + 4 * (1 + beta) * L**2 * U**2
