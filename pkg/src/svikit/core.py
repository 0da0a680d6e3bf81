"""Problem abstraction, error types and counter-based random streams.

Every random quantity in the library is produced by a :class:`Draw`, a
frozen key ``(master_seed, purpose, path, iteration, half_step)`` that is
mapped onto a Philox counter-based generator.  Two draws with equal keys
produce identical output no matter when, where or in which order they are
evaluated, which is what makes sample paths reproducible and safe to run
concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

__all__ = [
    "SVIError",
    "InvalidDimensionError",
    "InvalidRangeError",
    "DomainError",
    "ConvergenceError",
    "ParameterError",
    "ConfigError",
    "DataError",
    "GenerationError",
    "SolverError",
    "NOISE",
    "INSTANCE",
    "SAMPLER",
    "Draw",
    "gaussian_vector",
    "uniform_vector",
    "MapConstants",
    "VIProblem",
    "evaluate_map",
]

_UINT64 = (1 << 64) - 1


class SVIError(Exception):
    """Base class for all library errors."""


class InvalidDimensionError(SVIError, ValueError):
    pass


class InvalidRangeError(SVIError, ValueError):
    pass


class DomainError(SVIError, ValueError):
    """A map or distance generator was evaluated outside its domain.

    ``quantity`` carries the offending value (e.g. a nonpositive price base).
    """

    def __init__(self, message, quantity=None):
        super().__init__(message)
        self.quantity = quantity


class ConvergenceError(SVIError, RuntimeError):
    """An inner iterative routine ran out of iterations."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ParameterError(SVIError, ValueError):
    pass


class ConfigError(SVIError, ValueError):
    pass


class DataError(SVIError, RuntimeError):
    pass


class GenerationError(SVIError, RuntimeError):
    pass


class SolverError(SVIError, RuntimeError):
    """A solver step failed; ``iteration`` is the 1-based step index."""

    def __init__(self, message, iteration):
        super().__init__(f"iteration {iteration}: {message}")
        self.iteration = iteration


# Key tags separating the independent stream families.
NOISE = 0
INSTANCE = 1
SAMPLER = 2


@dataclass(frozen=True)
class Draw:
    """Key of one realization of the randomness.

    ``master_seed`` is a 64-bit unsigned integer.  ``path``, ``iteration`` and
    ``half_step`` identify the sample path, the solver iteration and the
    half-step (0 for ``x_k``, 1 for ``x_{k+1/2}``).  ``purpose`` separates
    per-iteration noise from instance generation and diagnostic sampling.
    """

    master_seed: int
    path: int = 0
    iteration: int = 0
    half_step: int = 0
    purpose: int = NOISE

    def __post_init__(self):
        for name in ("master_seed", "path", "iteration", "half_step", "purpose"):
            value = getattr(self, name)
            if not 0 <= int(value) <= _UINT64:
                raise InvalidRangeError(f"{name}={value} is not a 64-bit unsigned integer")

    @property
    def stream_id(self):
        return (self.path, self.iteration, self.half_step)

    def rng(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this draw's stream."""
        # counter[0] is the low word Philox increments; the key fields sit in
        # the upper words so streams never overlap.
        bitgen = np.random.Philox(
            key=np.array([self.master_seed, self.purpose], dtype=np.uint64),
            counter=np.array([0, self.half_step, self.iteration, self.path], dtype=np.uint64),
        )
        return np.random.Generator(bitgen)

    def child(self, **changes) -> "Draw":
        return replace(self, **changes)


def gaussian_vector(draw: Draw, n: int) -> np.ndarray:
    """``n`` i.i.d. standard normals, deterministic in ``(draw, n)``."""
    if n <= 0:
        raise InvalidDimensionError(f"dimension must be positive, got {n}")
    return draw.rng().standard_normal(n)


def uniform_vector(draw: Draw, n: int, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
    """``n`` i.i.d. Uniform(lo, hi) values, deterministic in the inputs."""
    if n <= 0:
        raise InvalidDimensionError(f"dimension must be positive, got {n}")
    if not lo < hi:
        raise InvalidRangeError(f"empty interval [{lo}, {hi})")
    return draw.rng().uniform(lo, hi, n)


@dataclass(frozen=True)
class MapConstants:
    """Known constants of the mean map; any of them may be missing.

    ``L`` and ``B`` are the constants of ``||F(x)-F(y)|| <= L||x-y|| + B``,
    ``C`` bounds ``||F||`` on the set and ``sigma`` is the strong
    pseudomonotonicity modulus.
    """

    L: Optional[float] = None
    B: Optional[float] = None
    C: Optional[float] = None
    sigma: Optional[float] = None


@dataclass(frozen=True)
class VIProblem:
    """A stochastic variational inequality over a feasible set.

    ``sample_map(x, draw)`` returns ``F(x; omega)`` for the realization keyed
    by ``draw``; ``mean_map(x)`` returns ``E[F(x; omega)]`` when it is known.
    ``noise_bound`` is the second-moment bound nu^2 when it is known.
    """

    set: object
    sample_map: Callable[[np.ndarray, Draw], np.ndarray]
    mean_map: Optional[Callable[[np.ndarray], np.ndarray]] = None
    noise_bound: Optional[float] = None
    constants: Optional[MapConstants] = None
    solution: Optional[np.ndarray] = None
    family: str = "custom"
    params: dict = field(default_factory=dict, compare=False)

    @property
    def dim(self) -> int:
        return self.set.dim

    def without_noise(self) -> "VIProblem":
        """Copy whose sampled map ignores the draw and returns the mean map."""
        if self.mean_map is None:
            raise ConfigError(f"{self.family}: noise cannot be switched off without a mean map")
        return replace(self, sample_map=_Noiseless(self.mean_map), noise_bound=0.0)


@dataclass(frozen=True)
class _Noiseless:
    mean_map: Callable

    def __call__(self, x, draw):
        return self.mean_map(x)


def evaluate_map(problem: VIProblem, x: np.ndarray, draw: Draw) -> np.ndarray:
    """Evaluate ``F(x; omega)`` and check the output shape and finiteness.

    ``x`` need not be feasible.  Family-specific domain violations surface as
    :class:`DomainError` from the sampled map itself.
    """
    x = np.asarray(x, dtype=float)
    value = np.asarray(problem.sample_map(x, draw), dtype=float)
    if value.shape != (problem.dim,):
        raise InvalidDimensionError(
            f"{problem.family}: map returned shape {value.shape}, expected ({problem.dim},)"
        )
    if not np.all(np.isfinite(value)):
        raise DomainError(f"{problem.family}: map value is not finite", quantity=value)
    return value
