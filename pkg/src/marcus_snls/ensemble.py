"""Monte Carlo ensembles of independent jump paths.

Path i always uses stream i of the master seed, so the summary does not
depend on how paths are scheduled across workers.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .grid import ComplexField, boundary_mass_fraction, l2_norm, lr_norm, mixed_norm, y_norm
from .noise import sample_path
from .solver import BlowUpError, SolverConfig, evolve, max_relative_mass_drift


@dataclass
class ExperimentSpec:
    solver: SolverConfig
    u0: ComplexField
    paths: int
    seed: int
    observables: tuple = ("mass", "lr_norm", "y_norm", "mixed_norm")
    config_hash: str = ""

    def __post_init__(self):
        if self.paths < 1:
            raise ValueError("ensemble size M must be >= 1")
        bad = set(self.observables) - {"mass", "lr_norm", "y_norm", "mixed_norm"}
        if bad:
            raise ValueError(f"unknown observables {sorted(bad)}")


@dataclass
class PathResult:
    index: int
    events: int
    ok: bool
    terminal: dict = field(default_factory=dict)
    mass_drift: float = float("nan")
    boundary_fraction: float = float("nan")
    error: str = ""


@dataclass
class EnsembleSummary:
    paths: int
    failures: int
    statistics: dict
    per_path: list
    max_relative_mass_drift: float
    max_boundary_mass_fraction: float
    metadata: dict

    def to_json(self) -> dict:
        return {
            "paths": self.paths,
            "failures": self.failures,
            "statistics": self.statistics,
            "max_relative_mass_drift": self.max_relative_mass_drift,
            "max_boundary_mass_fraction": self.max_boundary_mass_fraction,
            "metadata": self.metadata,
        }


def run_path(spec: ExperimentSpec, i: int) -> PathResult:
    cfg = spec.solver
    path = sample_path(cfg.spec, cfg.T, spec.seed, stream=i)
    try:
        res = evolve(spec.u0, cfg, path)
    except BlowUpError as exc:
        return PathResult(i, len(path), False, error=str(exc))
    traj = res.trajectory
    last = traj.fields[-1]
    values = {
        "mass": l2_norm(last),
        "lr_norm": lr_norm(last, cfg.pair.r),
        "y_norm": y_norm(traj, cfg.pair),
        "mixed_norm": mixed_norm(traj, cfg.pair),
    }
    terminal = {k: values[k] for k in spec.observables}
    edge = max(boundary_mass_fraction(f) for f in traj.fields)
    return PathResult(i, len(path), True, terminal, max_relative_mass_drift(res.reports), edge)


def _stats(x: np.ndarray) -> dict:
    return {
        "mean": float(np.mean(x)),
        "variance": float(np.var(x)),
        "min": float(np.min(x)),
        "max": float(np.max(x)),
    }


def run_ensemble(spec: ExperimentSpec, threads: int = 1) -> EnsembleSummary:
    """Evolve M sampled paths; failures are recorded per path and flagged.

    Variance is the population variance over the successful paths, so M=1
    reproduces that path's values with zero variance.
    """
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda i: run_path(spec, i), range(spec.paths)))
    else:
        results = [run_path(spec, i) for i in range(spec.paths)]
    ok = [r for r in results if r.ok]
    stats = {}
    for name in spec.observables:
        if ok:
            stats[name] = _stats(np.array([r.terminal[name] for r in ok]))
    drift = max((r.mass_drift for r in ok), default=math.nan)
    edge = max((r.boundary_fraction for r in ok), default=math.nan)
    meta = {"config_hash": spec.config_hash, "seed": spec.seed, "code_version": __version__}
    return EnsembleSummary(spec.paths, len(results) - len(ok), stats, results, drift, edge, meta)


PER_PATH_COLUMNS = ("path", "events", "status", "mass_drift")


def per_path_rows(summary: EnsembleSummary, observables) -> list:
    rows = []
    for r in summary.per_path:
        row = [r.index, r.events, "ok" if r.ok else "failed", repr(r.mass_drift)]
        row += [repr(r.terminal.get(k, float("nan"))) for k in observables]
        rows.append(row)
    return rows
