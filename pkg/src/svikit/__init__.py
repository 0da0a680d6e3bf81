"""Stochastic approximation solvers for stochastic variational inequalities."""

from .core import Draw, MapConstants, SVIError, VIProblem, evaluate_map, gaussian_vector, uniform_vector
from .geometry import (
    Box,
    BoxPolyhedron,
    Euclidean,
    NonnegativeOrthant,
    PowerSum,
    ShiftedEntropy,
    bregman,
    generator_constants,
    project,
    prox_step,
)
from .problems import gen_cournot, gen_frac_nonlin, gen_frac_quad, gen_rate_cournot, gen_watson
from .solvers import SolverConfig, Trajectory, run

__version__ = "0.1.0"
