"""Experiment runners and report serialization.

Five experiment kinds are supported: ``asymptotics`` (residual decay per
instance), ``compare`` (projection vs prox schemes), ``rate`` (empirical
mean-squared error against the theoretical bound), ``sweep`` (initial
steplength multipliers) and ``diagnose`` (sampled map properties).
Every runner returns a :class:`Report`; :func:`emit_report` writes it as CSV,
JSON or two-column plot data.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .core import SAMPLER, ConfigError, Draw, SVIError
from .diagnostics import mse_against, natural_residual, pseudomonotonicity_sampler, strong_modulus_estimate
from .diagnostics import EstimateUnavailableError
from .geometry import Euclidean, PowerSum, ShiftedEntropy, generator_constants
from .problems import FAMILIES, generate
from .solvers import (
    SolverConfig,
    optimal_gamma0_mpsa,
    optimal_gamma0_strong,
    optimal_gamma0_weaksharp,
    rate_bound_constants,
    run,
)

__all__ = [
    "CSV_HEADER",
    "COLUMNS",
    "FAMILY_DEFAULTS",
    "GAMMA0_RULES",
    "SCHEME_NAMES",
    "ReportError",
    "Report",
    "ProblemSelector",
    "ExperimentSpec",
    "parse_scheme",
    "resolve_gamma0",
    "run_paths",
    "run_asymptotics",
    "run_scheme_comparison",
    "run_rate_vs_bound",
    "run_gamma_sweep",
    "run_diagnose",
    "emit_report",
    "loglog_slope",
]

CSV_HEADER = "# svi-kit report v1"

COLUMNS = {
    "asymptotics": ["family", "n", "scheme", "K", "residual", "seconds", "status"],
    "compare": ["family", "n", "scheme", "K", "residual", "seconds", "status"],
    "rate": ["n", "K", "psi_e", "psi_b", "a", "b", "sigma", "B", "nu2", "M_B", "M_nu", "M", "slope"],
    "sweep": ["n", "multiplier", "gamma0", "K", "psi_e", "best"],
    "diagnose": ["family", "n", "property", "pairs_tested", "violations", "estimate", "status"],
}

# x0 fill value and hand-set gamma0 per family
FAMILY_DEFAULTS = {
    "frac-quad": (2.0, 1.0),
    "frac-nonlin": (2.0, 2.5),
    "cournot": (0.0, 2.5),
    "watson": (0.0, 0.6),
    "rate-cournot": (0.0, None),
}

GAMMA0_RULES = ("default", "explicit", "optimal-strong", "optimal-mpsa", "optimal-weaksharp")
SCHEME_NAMES = ("SA", "ESA", "MPSA-euclid", "MPSA-entropy", "MPSA-powersum")
DEFAULT_NS = {"rate-cournot": tuple(range(5, 11)), "watson": tuple(range(1, 11))}


class ReportError(SVIError, ValueError):
    pass


@dataclass
class Report:
    kind: str
    columns: list
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def errors(self):
        if "status" not in self.columns:
            return 0
        i = self.columns.index("status")
        return sum(1 for row in self.rows if str(row[i]).startswith("error"))

    def column(self, name):
        i = self.columns.index(name)
        return [row[i] for row in self.rows]

    def to_json(self):
        return json.dumps({"version": 1, "kind": self.kind, "columns": self.columns,
                           "rows": self.rows, "meta": self.meta}, indent=1, allow_nan=False)

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        return cls(data["kind"], data["columns"], data["rows"], data["meta"])


@dataclass(frozen=True)
class ProblemSelector:
    """Family plus the dimensions (or Watson ``q`` indices) to generate."""

    family: str = "rate-cournot"
    ns: Optional[Sequence[int]] = None
    kappa: float = 0.5
    instance_seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown family {self.family!r}; expected one of {FAMILIES}")

    def sizes(self):
        if self.ns is not None:
            return [int(n) for n in self.ns]
        return list(DEFAULT_NS.get(self.family, range(10, 20)))

    def build(self, n):
        return generate(self.family, n, self.instance_seed, kappa=self.kappa)


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str = "asymptotics"
    selector: ProblemSelector = ProblemSelector()
    schemes: Sequence[str] = ("ESA",)
    gamma0: Optional[float] = None
    gamma0_rule: str = "default"
    iterations: int = 15000
    paths: Optional[int] = None
    checkpoints: Optional[Sequence[int]] = None
    master_seed: int = 0
    multipliers: Sequence[float] = (0.001, 0.01, 0.1, 1, 10, 100)
    x0: Optional[float] = None
    noise: bool = True
    pairs: int = 1000
    weaksharp: Optional[tuple] = None  # (U, alpha, C)
    workers: int = 1

    def __post_init__(self):
        if self.kind not in COLUMNS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}")
        if self.gamma0_rule not in GAMMA0_RULES:
            raise ConfigError(f"unknown gamma0 rule {self.gamma0_rule!r}; expected one of {GAMMA0_RULES}")
        if self.gamma0_rule == "explicit" and self.gamma0 is None:
            raise ConfigError("gamma0 rule 'explicit' needs a gamma0 value")
        for s in self.schemes:
            parse_scheme(s)
        if self.paths is not None and self.paths < 1:
            raise ConfigError("paths must be at least 1")
        if self.iterations < 0:
            raise ConfigError("iterations must be nonnegative")
        if self.checkpoints is not None:
            if any(k < 1 or k > self.iterations for k in self.checkpoints):
                raise ConfigError(f"checkpoints must lie in [1, {self.iterations}]")

    @property
    def n_paths(self):
        if self.paths is not None:
            return self.paths
        return 15 if self.kind in ("rate", "sweep") else 1


def parse_scheme(name, n=None):
    """Map a scheme label to ``(scheme, generator)``."""
    if name in ("SA", "ESA"):
        return name, None
    if name == "MPSA-euclid":
        return "MPSA", Euclidean()
    if name == "MPSA-entropy":
        return "MPSA", ShiftedEntropy()
    if name == "MPSA-powersum":
        return "MPSA", PowerSum(max(n or 2, 2))
    raise ConfigError(f"unknown scheme {name!r}; expected one of {SCHEME_NAMES}")


def resolve_gamma0(spec: ExperimentSpec, problem, scheme_name="ESA"):
    """Initial steplength for ``problem`` under ``spec.gamma0_rule``."""
    rule = spec.gamma0_rule
    family = problem.family
    if rule == "explicit" or (rule == "default" and spec.gamma0 is not None):
        return float(spec.gamma0)
    sigma = problem.constants.sigma if problem.constants is not None else None
    if rule == "default":
        hand = FAMILY_DEFAULTS[family][1]
        if hand is not None:
            return hand
        rule = "optimal-strong"
    if sigma is None:
        raise ConfigError(f"{family}: rule {rule} needs a known strong pseudomonotonicity modulus")
    if rule == "optimal-strong":
        return optimal_gamma0_strong(sigma)
    if rule == "optimal-mpsa":
        _, gen = parse_scheme(scheme_name, problem.dim)
        theta, L_V = generator_constants(gen or Euclidean(), problem.set)
        return optimal_gamma0_mpsa(L_V, sigma, theta)
    if spec.weaksharp is None:
        raise ConfigError("rule optimal-weaksharp needs weaksharp=(U, alpha, C)")
    U, alpha = spec.weaksharp[:2]
    L = problem.constants.L
    nu = math.sqrt(problem.noise_bound or 0.0)
    return optimal_gamma0_weaksharp(U, alpha, nu, L)[0]


def _x0(spec, problem):
    fill = spec.x0 if spec.x0 is not None else FAMILY_DEFAULTS[problem.family][0]
    return np.full(problem.dim, float(fill))


def _job(problem, config, with_residual):
    residual = (lambda x: natural_residual(problem, x)) if with_residual else None
    try:
        return run(problem, config, residual=residual), None
    except SVIError as exc:
        return None, f"error: {exc}"


def run_paths(problem, configs, with_residual=False, workers=1):
    """Run each config; returns ``(trajectory or None, error or None)`` pairs in order."""
    if workers <= 1 or len(configs) <= 1:
        return [_job(problem, c, with_residual) for c in configs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_job, problem, c, with_residual) for c in configs]
        return [f.result() for f in futures]


def _config(spec, problem, scheme_name, gamma0, path=0, checkpoints=None):
    scheme, gen = parse_scheme(scheme_name, problem.dim)
    return SolverConfig(
        scheme=scheme,
        gamma0=gamma0,
        iterations=spec.iterations,
        master_seed=spec.master_seed,
        path=path,
        checkpoints=checkpoints if checkpoints is not None else spec.checkpoints,
        x0=_x0(spec, problem),
        generator=gen,
    )


def _build(spec, n):
    problem = spec.selector.build(n)
    return problem if spec.noise else problem.without_noise()


def _residual_rows(spec, kind):
    report = Report(kind, list(COLUMNS[kind]), meta={"master_seed": spec.master_seed,
                                                      "iterations": spec.iterations,
                                                      "family": spec.selector.family})
    for n in spec.selector.sizes():
        family = spec.selector.family
        try:
            problem = _build(spec, n)
        except SVIError as exc:
            for scheme in spec.schemes:
                report.rows.append([family, n, scheme, None, None, None, f"error: {exc}"])
            continue
        jobs = []
        for scheme in spec.schemes:
            try:
                jobs.append((scheme, _config(spec, problem, scheme, resolve_gamma0(spec, problem, scheme)), None))
            except SVIError as exc:
                jobs.append((scheme, None, f"error: {exc}"))
        results = run_paths(problem, [c for _, c, _ in jobs if c is not None], True, spec.workers)
        results = iter(results)
        for scheme, config, err in jobs:
            traj = None
            if config is not None:
                traj, err = next(results)
            if err is not None:
                report.rows.append([family, n, scheme, None, None, None, err])
                continue
            for (k, _), res, sec in zip(traj.checkpoints, traj.residuals, traj.checkpoint_seconds):
                if k == 0:
                    continue
                report.rows.append([family, n, scheme, k, res, round(sec, 3), "ok"])
    return report


def run_asymptotics(spec: ExperimentSpec) -> Report:
    """Natural residual at each checkpoint, one run per instance and scheme."""
    return _residual_rows(spec, "asymptotics")


def run_scheme_comparison(spec: ExperimentSpec) -> Report:
    """Residual and wall-clock per instance, scheme and checkpoint."""
    return _residual_rows(spec, "compare")


def loglog_slope(ks, values, lo=100, hi=10_000):
    """Least-squares slope of ``log value`` against ``log K`` for ``lo <= K <= hi``."""
    pts = [(math.log(k), math.log(v)) for k, v in zip(ks, values) if lo <= k <= hi and v > 0]
    if len(pts) < 2:
        return None
    x, y = np.array(pts).T
    return float(np.polyfit(x, y, 1)[0])


def _rate_problem(spec, n):
    if spec.selector.family != "rate-cournot":
        raise ConfigError("rate experiments need the rate-cournot family")
    return _build(spec, n)


def _path_configs(spec, problem, gamma0, checkpoints):
    return [_config(spec, problem, spec.schemes[0], gamma0, path=j, checkpoints=checkpoints)
            for j in range(spec.n_paths)]


def run_rate_vs_bound(spec: ExperimentSpec) -> Report:
    """Mean-squared error over ``N`` paths against ``M / K`` for each dimension."""
    checkpoints = spec.checkpoints or [k for k in (1, 100, 1000, 10000) if k <= spec.iterations]
    report = Report("rate", list(COLUMNS["rate"]), meta={"master_seed": spec.master_seed,
                                                         "paths": spec.n_paths,
                                                         "scheme": spec.schemes[0]})
    for n in spec.selector.sizes():
        problem = _rate_problem(spec, n)
        cons = problem.constants
        gamma0 = resolve_gamma0(spec, problem, spec.schemes[0])
        a, b = problem.params["a"], problem.params["b"]
        nu2 = problem.noise_bound
        try:
            m_b, m_nu, M = rate_bound_constants(cons.sigma, gamma0, a, n, nu2, 1.0, 1.0)
        except SVIError as exc:
            raise ConfigError(str(exc)) from exc
        results = run_paths(problem, _path_configs(spec, problem, gamma0, checkpoints), False, spec.workers)
        errors = [e for _, e in results if e is not None]
        if errors:
            raise SVIError(f"rate-cournot n={n}: {errors[0]}")
        trajs = [t for t, _ in results]
        psi = [mse_against(problem.solution, trajs, k) for k in checkpoints]
        slope = loglog_slope(checkpoints, psi)
        for k, pe in zip(checkpoints, psi):
            report.rows.append([n, k, pe, M / k, a, b, cons.sigma, cons.B, nu2, m_b, m_nu, M, slope])
    return report


def run_gamma_sweep(spec: ExperimentSpec) -> Report:
    """Mean-squared error for ``gamma0 = multiplier * gamma0*`` at each checkpoint."""
    checkpoints = spec.checkpoints or [k for k in (1, 100, 1000, 10000, 15000) if k <= spec.iterations]
    report = Report("sweep", list(COLUMNS["sweep"]), meta={"master_seed": spec.master_seed,
                                                           "paths": spec.n_paths})
    for n in spec.selector.sizes():
        problem = _rate_problem(spec, n)
        base = optimal_gamma0_strong(problem.constants.sigma)
        table = {}
        for mult in spec.multipliers:
            results = run_paths(problem, _path_configs(spec, problem, mult * base, checkpoints), False, spec.workers)
            errors = [e for _, e in results if e is not None]
            if errors:
                raise SVIError(f"rate-cournot n={n}, multiplier {mult}: {errors[0]}")
            trajs = [t for t, _ in results]
            table[mult] = [mse_against(problem.solution, trajs, k) for k in checkpoints]
        for j, k in enumerate(checkpoints):
            best = min(spec.multipliers, key=lambda m: table[m][j])
            for mult in spec.multipliers:
                report.rows.append([n, float(mult), mult * base, k, table[mult][j], mult == best])
    return report


def run_diagnose(spec: ExperimentSpec) -> Report:
    """Sampled pseudomonotonicity and strong-modulus estimate of each instance's mean map."""
    report = Report("diagnose", list(COLUMNS["diagnose"]), meta={"master_seed": spec.master_seed,
                                                                 "pairs": spec.pairs})
    family = spec.selector.family
    for n in spec.selector.sizes():
        try:
            problem = spec.selector.build(n)
            draw = Draw(spec.master_seed, path=n, purpose=SAMPLER)
            rep = pseudomonotonicity_sampler(problem.mean_map, problem.set, spec.pairs, draw=draw)
            report.rows.append([family, n, "pseudomonotone", rep.pairs_tested, len(rep.violations), None, rep.status])
            try:
                est = strong_modulus_estimate(problem.mean_map, problem.set, spec.pairs, draw=draw.child(iteration=1))
                report.rows.append([family, n, "strongly-pseudo", spec.pairs, 0, est, "ok"])
            except EstimateUnavailableError as exc:
                report.rows.append([family, n, "strongly-pseudo", spec.pairs, 0, None, f"unavailable: {exc}"])
        except SVIError as exc:
            report.rows.append([family, n, "pseudomonotone", 0, 0, None, f"error: {exc}"])
    return report


RUNNERS = {
    "asymptotics": run_asymptotics,
    "compare": run_scheme_comparison,
    "rate": run_rate_vs_bound,
    "sweep": run_gamma_sweep,
    "diagnose": run_diagnose,
}


# ---------------------------------------------------------------- serialization


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "{:.5e}".format(float(value))
    return str(value)


def _csv_text(report):
    buf = io.StringIO()
    buf.write(CSV_HEADER + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(report.columns)
    for row in report.rows:
        writer.writerow([_cell(v) for v in row])
    return buf.getvalue()


_SERIES_KEYS = {
    "asymptotics": (["family", "n", "scheme"], "residual"),
    "compare": (["family", "n", "scheme"], "residual"),
    "rate": (["n"], "psi_e"),
    "sweep": (["n", "multiplier"], "psi_e"),
}


def _plot_text(report):
    if report.kind not in _SERIES_KEYS:
        raise ReportError(f"plot-data is not defined for {report.kind} reports")
    keys, value = _SERIES_KEYS[report.kind]
    idx = [report.columns.index(k) for k in keys]
    ik, iv = report.columns.index("K"), report.columns.index(value)
    series = {}
    for row in report.rows:
        if row[ik] is None or row[iv] is None:
            continue
        series.setdefault(tuple(row[i] for i in idx), []).append((row[ik], row[iv]))
    out = [CSV_HEADER]
    for key, pts in series.items():
        label = " ".join(f"{k}={v}" for k, v in zip(keys, key))
        out.append(f"# series {label} value={value}")
        out.extend(f"{k} {_cell(float(v))}" for k, v in pts)
        out.append("")
    return "\n".join(out) + "\n"


def _jsonable(report):
    clean = []
    for row in report.rows:
        out = []
        for v in row:
            if isinstance(v, (np.floating,)):
                v = float(v)
            elif isinstance(v, np.integer):
                v = int(v)
            elif isinstance(v, np.bool_):
                v = bool(v)
            if isinstance(v, float) and not math.isfinite(v):
                v = None
            out.append(v)
        clean.append(out)
    return replace(report, rows=clean)


def emit_report(report: Report, fmt="csv", path=None):
    """Serialize ``report``; writes to ``path`` when given and returns the text."""
    if not report.rows:
        raise ReportError("refusing to emit an empty report")
    if fmt == "csv":
        text = _csv_text(report)
    elif fmt == "json":
        text = _jsonable(report).to_json() + "\n"
    elif fmt == "plot-data":
        text = _plot_text(report)
    else:
        raise ReportError(f"unknown format {fmt!r}")
    if path is not None:
        directory = os.path.dirname(os.path.abspath(path))
        if not os.path.isdir(directory):
            raise OSError(f"cannot write report: directory {directory} does not exist")
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text
