"""Experiment configuration: YAML loading, validation, hashing and builders.

Keys are dotted paths such as ``grid.points`` or ``run.dt``. Validation errors
carry the offending field and, where the YAML parser knows it, the line.
"""
from __future__ import annotations

import copy
import hashlib
import json
import math
import re
from dataclasses import dataclass
from typing import Any, Optional

import numpy as np
import yaml

from .grid import ComplexField, Grid
from .noise import Constant, FiniteAtoms, NoiseCoefficients, Rational, Saturating, TruncatedRadial
from .solver import SolverConfig


class ConfigError(ValueError):
    def __init__(self, message: str, field: str = "", line: Optional[int] = None):
        self.field = field
        self.line = line
        where = f"line {line}: " if line is not None else ""
        what = f"{field}: " if field else ""
        super().__init__(f"{where}{what}{message}")


DEFAULTS: dict = {
    "grid": {"n": 1, "points": 512, "half_length": "8pi"},
    "dynamics": {"lambda": -1.0, "sigma": 1.0},
    "noise": {
        "coeffs": [{"family": "rational", "a": 1.0, "b": 1.0}],
        "measure": {"kind": "atoms", "marks": [[0.5], [-0.5]], "rates": [2.5, 2.5]},
    },
    "run": {"T": 1.0, "dt": 1.0e-3, "seed": 0, "save_every": 100, "truncation_R": None},
    "initial": {"kind": "gaussian", "amplitude": 1.0, "width": 1.0, "center": 0.0, "wavenumber": 0.0},
    "ensemble": {"paths": 64, "observables": ["mass", "lr_norm", "y_norm", "mixed_norm"]},
    "picard": {"T0": 0.05, "R": 10.0, "iters": 8},
    "probe": {
        "q": 4.0,
        "trials": 100,
        "T": 1.0,
        "dt": 1.0e-2,
        "modulation": "linear",
        "component": 0,
        "scale": 1.0,
        "forcing_mode": 1,
    },
    "verify": {
        "lemma_trials": 100_000,
        "marcus_trials": 10_000,
        "lipschitz_pairs": 1_000_000,
        "theta_pairs": 100_000,
        "moment_samples": 200_000,
        "radius": 10.0,
    },
}

OBSERVABLES = ("mass", "lr_norm", "y_norm", "mixed_norm")
# sections replaced wholesale rather than merged; their own builders check the keys
_REPLACED = ("measure", "initial")
_PI_RE = re.compile(r"^\s*([-+0-9.eE]*)\s*\*?\s*pi\s*$")


def _node_lines(node, prefix="", out=None) -> dict:
    """Map dotted key paths to 1-based line numbers from a composed YAML tree."""
    if out is None:
        out = {}
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            key = f"{prefix}.{k.value}" if prefix else str(k.value)
            out[key] = k.start_mark.line + 1
            _node_lines(v, key, out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            key = f"{prefix}[{i}]"
            out[key] = v.start_mark.line + 1
            _node_lines(v, key, out)
    return out


@dataclass
class ExperimentConfig:
    data: dict
    lines: dict

    def line(self, key: str) -> Optional[int]:
        while key:
            if key in self.lines:
                return self.lines[key]
            key = key.rsplit(".", 1)[0] if "." in key else ""
        return None

    def error(self, key: str, message: str) -> ConfigError:
        return ConfigError(message, key, self.line(key))

    def get(self, key: str):
        node: Any = self.data
        for part in key.split("."):
            node = node[part]
        return node

    @property
    def hash(self) -> str:
        return config_hash(self.data)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        data = copy.deepcopy(self.data)
        data["run"]["seed"] = int(seed)
        return ExperimentConfig(data, self.lines)


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k not in _REPLACED:
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _check_keys(over: dict, base: dict, prefix: str, lines: dict):
    for k, v in over.items():
        key = f"{prefix}.{k}" if prefix else str(k)
        if k not in base:
            raise ConfigError("unknown key", key, lines.get(key))
        if isinstance(base[k], dict) and k not in _REPLACED:
            if not isinstance(v, dict):
                raise ConfigError("expected a mapping", key, lines.get(key))
            _check_keys(v, base[k], key, lines)


def loads(text: str) -> ExperimentConfig:
    try:
        tree = yaml.compose(text)
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"malformed YAML ({getattr(exc, 'problem', exc)})", "",
                          mark.line + 1 if mark else None) from None
    lines = _node_lines(tree) if tree is not None else {}
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("top level must be a mapping", "", 1)
    _check_keys(raw, DEFAULTS, "", lines)
    cfg = ExperimentConfig(_merge(DEFAULTS, raw), lines)
    validate(cfg)
    return cfg


def load(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())


def default_config() -> ExperimentConfig:
    return loads("")


def config_hash(data: dict) -> str:
    canon = json.dumps(data, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canon.encode()).hexdigest()


def parse_length(value, key: str, cfg: ExperimentConfig) -> float:
    """Numbers pass through; strings like ``8pi`` or ``2*pi`` are multiples of pi."""
    if isinstance(value, bool):
        raise cfg.error(key, "expected a number")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        m = _PI_RE.match(value)
        if m:
            coef = m.group(1)
            return (float(coef) if coef not in ("", "+", "-") else float(coef + "1")) * math.pi
    raise cfg.error(key, f"expected a number or a multiple of pi, got {value!r}")


def _number(cfg, key, *, positive=False, integer=False, allow_none=False):
    v = cfg.get(key)
    if v is None and allow_none:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise cfg.error(key, f"expected a number, got {v!r}")
    if integer and (not isinstance(v, int)):
        raise cfg.error(key, f"expected an integer, got {v!r}")
    if not math.isfinite(v):
        raise cfg.error(key, "must be finite")
    if positive and v <= 0:
        raise cfg.error(key, "must be positive")
    return v


def validate(cfg: ExperimentConfig):
    """Type and range checks; object construction errors are re-raised with the field."""
    _number(cfg, "grid.n", integer=True)
    _number(cfg, "grid.points", integer=True)
    parse_length(cfg.get("grid.half_length"), "grid.half_length", cfg)
    _number(cfg, "dynamics.lambda")
    _number(cfg, "dynamics.sigma", positive=True)
    _number(cfg, "run.T", positive=True)
    _number(cfg, "run.dt", positive=True)
    _number(cfg, "run.seed", integer=True)
    _number(cfg, "run.save_every", integer=True, positive=True)
    _number(cfg, "run.truncation_R", positive=True, allow_none=True)
    _number(cfg, "ensemble.paths", integer=True, positive=True)
    obs = cfg.get("ensemble.observables")
    if not isinstance(obs, list) or not obs or any(o not in OBSERVABLES for o in obs):
        raise cfg.error("ensemble.observables", f"must be a non-empty subset of {list(OBSERVABLES)}")
    _number(cfg, "picard.T0", positive=True)
    _number(cfg, "picard.R", positive=True, allow_none=True)
    _number(cfg, "picard.iters", integer=True, positive=True)
    for k in ("q", "T", "dt", "scale"):
        _number(cfg, f"probe.{k}", positive=True)
    for k in ("trials", "forcing_mode"):
        _number(cfg, f"probe.{k}", integer=True)
    _number(cfg, "probe.component", integer=True)
    for k in ("lemma_trials", "marcus_trials", "lipschitz_pairs", "theta_pairs", "moment_samples"):
        _number(cfg, f"verify.{k}", integer=True, positive=True)
    _number(cfg, "verify.radius", positive=True)
    if cfg.get("probe.modulation") not in ("linear", "quadratic"):
        raise cfg.error("probe.modulation", "must be 'linear' or 'quadratic'")
    # build everything once so range errors surface at load time
    build_solver_config(cfg)
    build_initial(cfg, build_grid(cfg))


def build_grid(cfg: ExperimentConfig) -> Grid:
    try:
        return Grid(cfg.get("grid.n"), cfg.get("grid.points"),
                    parse_length(cfg.get("grid.half_length"), "grid.half_length", cfg))
    except (ValueError, TypeError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise cfg.error("grid", str(exc)) from None


_FAMILIES = {
    "constant": (Constant, ("c",)),
    "rational": (Rational, ("a", "b")),
    "saturating": (Saturating, ("a",)),
}


def build_coefficients(cfg: ExperimentConfig) -> NoiseCoefficients:
    items = cfg.get("noise.coeffs")
    if not isinstance(items, list) or not items:
        raise cfg.error("noise.coeffs", "must be a non-empty list")
    fams = []
    for i, item in enumerate(items):
        key = f"noise.coeffs[{i}]"
        if not isinstance(item, dict) or item.get("family") not in _FAMILIES:
            raise cfg.error(key, f"family must be one of {sorted(_FAMILIES)}")
        cls, params = _FAMILIES[item["family"]]
        extra = set(item) - set(params) - {"family"}
        if extra:
            raise cfg.error(key, f"unknown parameters {sorted(extra)}")
        try:
            args = [float(item[p]) for p in params]
            fams.append(cls(*args))
        except KeyError as exc:
            raise cfg.error(key, f"missing parameter {exc.args[0]!r}") from None
        except (TypeError, ValueError) as exc:
            raise cfg.error(key, str(exc)) from None
    return NoiseCoefficients(fams)


def build_measure(cfg: ExperimentConfig):
    m = cfg.get("noise.measure")
    key = "noise.measure"
    if not isinstance(m, dict):
        raise cfg.error(key, "expected a mapping")
    kind = m.get("kind")
    try:
        if kind == "atoms":
            if set(m) - {"kind", "marks", "rates"}:
                raise ValueError(f"unknown parameters {sorted(set(m) - {'kind', 'marks', 'rates'})}")
            return FiniteAtoms(np.array(m["marks"], dtype=float), np.array(m["rates"], dtype=float))
        if kind == "radial":
            allowed = {"kind", "alpha", "epsilon", "scale", "dimension"}
            if set(m) - allowed:
                raise ValueError(f"unknown parameters {sorted(set(m) - allowed)}")
            return TruncatedRadial(float(m["alpha"]), float(m["epsilon"]), float(m.get("scale", 1.0)),
                                   int(m.get("dimension", 1)))
    except KeyError as exc:
        raise cfg.error(key, f"missing parameter {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise cfg.error(key, str(exc)) from None
    raise cfg.error(f"{key}.kind", "must be 'atoms' or 'radial'")


def build_solver_config(cfg: ExperimentConfig, **overrides) -> SolverConfig:
    grid = build_grid(cfg)
    coeffs = build_coefficients(cfg)
    spec = build_measure(cfg)
    kw = dict(
        grid=grid,
        T=float(cfg.get("run.T")),
        dt=float(cfg.get("run.dt")),
        lam=float(cfg.get("dynamics.lambda")),
        sigma=float(cfg.get("dynamics.sigma")),
        coeffs=coeffs,
        spec=spec,
        save_every=int(cfg.get("run.save_every")),
        truncation_R=cfg.get("run.truncation_R"),
    )
    kw.update(overrides)
    try:
        return SolverConfig(**kw)
    except ValueError as exc:
        msg = str(exc)
        key = "dynamics.sigma" if "sigma" in msg else "noise" if "coefficient" in msg else "run"
        raise cfg.error(key, msg) from None


def build_initial(cfg: ExperimentConfig, grid: Grid) -> ComplexField:
    ini = cfg.get("initial")
    kind = ini.get("kind") if isinstance(ini, dict) else None
    coords = grid.coordinates()
    if kind == "gaussian":
        allowed = {"kind", "amplitude", "width", "center", "wavenumber"}
        if set(ini) - allowed:
            raise cfg.error("initial", f"unknown parameters {sorted(set(ini) - allowed)}")
        A = float(ini.get("amplitude", 1.0))
        w = float(ini.get("width", 1.0))
        if not w > 0:
            raise cfg.error("initial.width", "must be positive")
        c = float(ini.get("center", 0.0))
        k = float(ini.get("wavenumber", 0.0))
        r2 = sum((x - c) ** 2 for x in coords)
        phase = sum(k * x for x in coords)
        return ComplexField(grid, A * np.exp(-r2 / w**2 + 1j * phase))
    if kind == "plane_wave":
        allowed = {"kind", "amplitude", "mode"}
        if set(ini) - allowed:
            raise cfg.error("initial", f"unknown parameters {sorted(set(ini) - allowed)}")
        A = float(ini.get("amplitude", 1.0))
        k = plane_wave_wavenumber(cfg, grid)
        return ComplexField(grid, A * np.exp(1j * k * coords[0]))
    raise cfg.error("initial.kind", "must be 'gaussian' or 'plane_wave'")


def plane_wave_wavenumber(cfg: ExperimentConfig, grid: Grid) -> float:
    """Grid wavenumber ``mode * pi / L`` along the first axis."""
    mode = cfg.get("initial").get("mode", 1)
    if isinstance(mode, bool) or not isinstance(mode, int) or not -grid.points_per_axis // 2 <= mode < grid.points_per_axis // 2:
        raise cfg.error("initial.mode", "must be an integer in [-N/2, N/2)")
    return mode * math.pi / grid.half_length


def is_zero_noise(cfg: ExperimentConfig) -> bool:
    """All coefficients are ``Constant(0)``, so jumps and drift act trivially."""
    coeffs = build_coefficients(cfg)
    return all(isinstance(f, Constant) and f.c == 0 for f in coeffs.families)
