"""Command-line entry point ``marcus-snls``.

Exit codes: 0 success, 1 lemma or property violation, 2 malformed config or
output hash mismatch, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    ConfigError,
    ExperimentConfig,
    build_initial,
    build_solver_config,
    default_config,
    is_zero_noise,
    load,
    plane_wave_wavenumber,
)
from .ensemble import PER_PATH_COLUMNS, ExperimentSpec, per_path_rows, run_ensemble
from .grid import ComplexField, Trajectory, boundary_mass_fraction, l2_norm, make_admissible_pair
from .marcus import verify_jump_bounds, verify_marcus_flow
from .mild import PicardDivergence, PicardStep, contraction_factor, picard
from .noise import SamplePath, sample_path, verify_lipschitz, verify_noise_model
from .propagator import strichartz_homogeneous_probe, uniform_times
from .solver import BlowUpError, StepReport, evolve, verify_theta
from .strichartz import XiProfile, det_inhomogeneous_probe, stochastic_strichartz_probe

log = logging.getLogger("marcus_snls")

EXIT_OK, EXIT_VIOLATION, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
MANIFEST = "manifest.json"
# mass share allowed near the torus edge before the periodic box is suspect
BOUNDARY_MASS_LIMIT = 1e-4


class OutputConflict(RuntimeError):
    pass


class OutputDir:
    """Output directory guarded by a manifest holding the config hash."""

    def __init__(self, path, config_hash: str, force: bool = False):
        self.path = Path(path)
        self.hash = config_hash
        self.path.mkdir(parents=True, exist_ok=True)
        man = self.path / MANIFEST
        if man.exists() and not force:
            try:
                old = json.loads(man.read_text()).get("config_hash")
            except (OSError, ValueError):
                old = None
            if old != config_hash:
                raise OutputConflict(
                    f"{self.path} holds outputs of config {old}, not {config_hash}; use --force to overwrite"
                )
        man.write_text(json.dumps({"config_hash": config_hash, "code_version": __version__},
                                  indent=2, sort_keys=True) + "\n")

    def write_csv(self, name: str, header, rows):
        with open(self.path / name, "w", newline="", encoding="utf-8") as fh:
            fh.write(f"# config_hash={self.hash}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)

    def write_json(self, name: str, obj: dict):
        obj = dict(obj, config_hash=self.hash)
        with open(self.path / name, "w", encoding="utf-8") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
            fh.write("\n")


def _trajectory_rows(traj: Trajectory):
    for t, f in zip(traj.times, traj.fields):
        flat = f.values.reshape(-1)
        for i, v in enumerate(flat):
            yield [repr(float(t)), i, repr(float(v.real)), repr(float(v.imag))]


def _warn_boundary(fraction: float):
    if fraction > BOUNDARY_MASS_LIMIT:
        log.warning("%.2e of the mass sits near the torus edge; enlarge grid.half_length", fraction)


def _path_for(cfg: ExperimentConfig, solver_cfg):
    if is_zero_noise(cfg):
        return SamplePath.empty(solver_cfg.T, solver_cfg.coeffs.count)
    return sample_path(solver_cfg.spec, solver_cfg.T, int(cfg.get("run.seed")))


def cmd_simulate(cfg: ExperimentConfig, out: OutputDir, args) -> int:
    scfg = build_solver_config(cfg)
    u0 = build_initial(cfg, scfg.grid)
    path = _path_for(cfg, scfg)
    res = evolve(u0, scfg, path)
    out.write_csv("trajectory.csv", ("time", "index", "real", "imag"), _trajectory_rows(res.trajectory))
    out.write_csv("reports.csv", StepReport.CSV_COLUMNS, (r.csv_row() for r in res.reports))
    if cfg.get("initial.kind") == "plane_wave" and is_zero_noise(cfg) and scfg.grid.dimension == 1:
        A = float(cfg.get("initial").get("amplitude", 1.0))
        k = plane_wave_wavenumber(cfg, scfg.grid)
        omega = k * k + scfg.lam * A ** (2 * scfg.sigma)
        x = scfg.grid.axis()
        rows = []
        norm0 = l2_norm(u0)
        for t, f in zip(res.trajectory.times, res.trajectory.fields):
            exact = ComplexField(scfg.grid, A * np.exp(1j * (k * x - omega * t)))
            err = l2_norm(f - exact)
            rows.append([repr(float(t)), repr(err), repr(err / norm0), repr(scfg.dt**2)])
        out.write_csv("exact_error.csv", ("time", "l2_error", "relative_error", "dt2_bound"), rows)
    _warn_boundary(max(boundary_mass_fraction(f) for f in res.trajectory.fields))
    log.info("simulate: %d events, %d snapshots", len(path), len(res.trajectory))
    return EXIT_OK


def cmd_ensemble(cfg: ExperimentConfig, out: OutputDir, args) -> int:
    scfg = build_solver_config(cfg)
    spec = ExperimentSpec(
        scfg,
        build_initial(cfg, scfg.grid),
        int(cfg.get("ensemble.paths")),
        int(cfg.get("run.seed")),
        tuple(cfg.get("ensemble.observables")),
        out.hash,
    )
    summary = run_ensemble(spec, threads=args.threads)
    _warn_boundary(summary.max_boundary_mass_fraction)
    out.write_json("summary.json", summary.to_json())
    out.write_csv("paths.csv", PER_PATH_COLUMNS + spec.observables, per_path_rows(summary, spec.observables))
    log.info("ensemble: %d paths, %d failures, max mass drift %.3e",
             summary.paths, summary.failures, summary.max_relative_mass_drift)
    return EXIT_NUMERIC if summary.failures else EXIT_OK


def cmd_probe(cfg: ExperimentConfig, out: OutputDir, args) -> int:
    scfg = build_solver_config(cfg)
    grid, pair = scfg.grid, scfg.pair
    u0 = build_initial(cfg, grid)
    T, dt = float(cfg.get("probe.T")), float(cfg.get("probe.dt"))
    energy = make_admissible_pair(grid.dimension, 2.0)
    homogeneous = {
        "pair": [pair.p, pair.r],
        "ratio": strichartz_homogeneous_probe(u0, pair, T, dt),
        "ratio_inf_2": strichartz_homogeneous_probe(u0, energy, T, dt),
    }
    # single Fourier mode forcing, constant in time
    mode = int(cfg.get("probe.forcing_mode"))
    k = mode * math.pi / grid.half_length
    x0 = grid.coordinates()[0]
    phi = np.exp(1j * k * x0) * np.ones(grid.shape)
    times = uniform_times(T, dt)
    forcing = Trajectory(grid)
    for t in times:
        forcing.append(t, ComplexField(grid, phi))
    det = det_inhomogeneous_probe(forcing, pair, pair)
    xi = XiProfile(u0, cfg.get("probe.modulation"), int(cfg.get("probe.component")), float(cfg.get("probe.scale")))
    sto = stochastic_strichartz_probe(scfg.spec, xi, pair, float(cfg.get("probe.q")),
                                      int(cfg.get("probe.trials")), int(cfg.get("run.seed")), T, dt)
    report = {
        "homogeneous": {k: (v if not (isinstance(v, float) and math.isinf(v)) else "inf")
                        for k, v in homogeneous.items()},
        "inhomogeneous": {"forcing_mode": mode, "ratio_linf_l2": det.ratio_linf_l2,
                          "ratio_lp_lr": det.ratio_lp_lr, "forcing_dual_norm": det.forcing_dual_norm},
        "stochastic": sto.to_json(),
    }
    report["homogeneous"]["pair"] = [v if not math.isinf(v) else "inf" for v in homogeneous["pair"]]
    out.write_json("probe.json", report)
    finite = all(math.isfinite(v) for v in (homogeneous["ratio"], det.ratio_linf_l2, det.ratio_lp_lr, sto.ratio))
    return EXIT_OK if finite else EXIT_NUMERIC


def cmd_picard(cfg: ExperimentConfig, out: OutputDir, args) -> int:
    T0 = float(cfg.get("picard.T0"))
    scfg = build_solver_config(cfg, T=T0)
    u0 = build_initial(cfg, scfg.grid)
    base = build_solver_config(cfg)
    if is_zero_noise(cfg):
        path = SamplePath.empty(T0, scfg.coeffs.count)
    else:
        path = sample_path(base.spec, base.T, int(cfg.get("run.seed"))).until(T0)
    R = cfg.get("picard.R")
    steps = picard(u0, path, scfg, R=R, iters=int(cfg.get("picard.iters")))
    out.write_csv("picard.csv", PicardStep.CSV_COLUMNS,
                  ([s.iteration, repr(s.y_distance), repr(s.ratio)] for s in steps))
    log.info("picard: contraction factor %.3g", contraction_factor(steps))
    return EXIT_OK


def cmd_verify(cfg: ExperimentConfig, out: OutputDir, args) -> int:
    scfg = build_solver_config(cfg)
    seed = int(cfg.get("run.seed"))
    radius = float(cfg.get("verify.radius"))
    flow = verify_marcus_flow(int(cfg.get("verify.marcus_trials")), scfg.coeffs, radius, seed=seed)
    lemma = verify_jump_bounds(scfg.coeffs, int(cfg.get("verify.lemma_trials")), radius, seed=seed)
    lip = verify_lipschitz(scfg.coeffs, int(cfg.get("verify.lipschitz_pairs")), seed=seed)
    theta = verify_theta(int(cfg.get("verify.theta_pairs")), seed=seed)
    noise = verify_noise_model(scfg.spec, int(cfg.get("verify.moment_samples")), seed=seed)
    report = {
        "marcus_flow": {"trials": flow.trials, "max_abs_error": flow.max_abs_error,
                        "max_modulus_drift": flow.max_modulus_drift, "violations": flow.violations},
        "jump_bounds": {"trials": lemma.trials, "constants": vars(lemma.constants),
                      "max_ratio": lemma.max_ratio, "violations": lemma.violations},
        "lipschitz": {"pairs": lip.pairs, "L1": lip.L1, "L2": lip.L2, "max_ratio_L1": lip.max_ratio_L1,
                      "max_ratio_L2": lip.max_ratio_L2, "violations": lip.violations},
        "theta": {"pairs": theta.pairs, "max_ratio": theta.max_ratio, "violations": theta.violations},
        "noise_model": dict(vars(noise), violations=noise.violations),
    }
    total = flow.violations + lemma.total_violations + lip.violations + theta.violations + noise.violations
    report["total_violations"] = total
    out.write_json("verify.json", report)
    print(f"verify-lemmas: {total} violations")
    return EXIT_VIOLATION if total else EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "ensemble": cmd_ensemble,
    "probe-strichartz": cmd_probe,
    "picard": cmd_picard,
    "verify-lemmas": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="marcus-snls", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("config_path", nargs="?", help="YAML config (defaults apply for missing keys)")
        p.add_argument("--config", dest="config_flag", help="same as the positional argument")
        p.add_argument("--seed", type=int, help="override run.seed")
        p.add_argument("--out-dir", default="out", help="output directory (default: ./out)")
        p.add_argument("--threads", type=int, default=1, help="worker threads for ensembles")
        p.add_argument("--force", action="store_true", help="overwrite outputs of a different config")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    cfg_path = args.config_flag or args.config_path
    try:
        cfg = load(cfg_path) if cfg_path else default_config()
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        if args.threads < 1:
            raise ConfigError("must be >= 1", "--threads")
        out = OutputDir(args.out_dir, cfg.hash, args.force)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OutputConflict as exc:
        print(f"output error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](cfg, out, args)
    except (BlowUpError, PicardDivergence, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
