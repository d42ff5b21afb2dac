"""Mild-form fixed-point map and Picard iteration, evaluated pathwise.

For a finite-activity path the compensated jump integral is a finite sum of
``S_{t-s_i} G(z_i, u(s_i-))`` minus the absolutely convergent compensator
``int_0^t S_{t-s} int G(z, u(s)) nu(dz) ds``. All time integrals use the
left-endpoint rule on the solver's node times, which include every event.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import ComplexField, Trajectory, running_y_norms, trajectory_difference, y_norm
from .marcus import G
from .noise import SamplePath
from .propagator import duhamel, duhamel_values, propagator_for
from .solver import SolverConfig, cutoff_theta, solver_time_grid


class PicardDivergence(RuntimeError):
    pass


def _thetas(u: Trajectory, cfg: SolverConfig, R) -> np.ndarray:
    if R is None:
        return np.ones(len(u))
    return np.array([cutoff_theta(y, R) for y in running_y_norms(u, cfg.pair)])


def _nonlinear_forcing(u: Trajectory, cfg: SolverConfig, R) -> list:
    """``-i theta_R(||u||_{Y_s}) lam |u|^(2 sigma) u`` at every node."""
    out = []
    for th, f in zip(_thetas(u, cfg, R), u.fields):
        v = f.values
        abs2 = v.real**2 + v.imag**2
        out.append(-1j * th * cfg.lam * abs2**cfg.sigma * v)
    return out


def _nu_average(v: np.ndarray, cfg: SolverConfig) -> np.ndarray:
    """``int (exp(-i z.gtilde) - 1) nu(dz)`` pointwise."""
    abs2 = v.real**2 + v.imag**2
    return cfg.spec.phase_average(cfg.coeffs.values(abs2))


def _compensator_forcing(u: Trajectory, cfg: SolverConfig) -> list:
    # int G(z, u) nu(dz)
    return [f.values * _nu_average(f.values, cfg) for f in u.fields]


def _h_forcing(u: Trajectory, cfg: SolverConfig) -> list:
    # int H(z, u) nu(dz) = int G nu + i sum_j mu_j g_j(u)
    mu = cfg.mu
    out = []
    for f in u.fields:
        v = f.values
        abs2 = v.real**2 + v.imag**2
        drift = cfg.coeffs.values(abs2) @ mu
        out.append(v * (_nu_average(v, cfg) + 1j * drift))
    return out


def _as_traj(u: Trajectory, values: list) -> Trajectory:
    out = Trajectory(u.grid)
    for t, v in zip(u.times, values):
        out.append(t, ComplexField(u.grid, v))
    return out


def _check_events_on_grid(u: Trajectory, path: SamplePath) -> list:
    idx = []
    for s in path.times:
        if s > u.times[-1]:
            break
        idx.append(u.index_of(float(s)))
    return idx


def psi1(u: Trajectory, cfg: SolverConfig, R, t: float) -> ComplexField:
    """Truncated nonlinear Duhamel term at node time t (``R=None``: no truncation)."""
    u.index_of(t)
    forcing = _as_traj(u, _nonlinear_forcing(u, cfg, R))
    return duhamel(forcing, t)


def psi2(u: Trajectory, path: SamplePath, cfg: SolverConfig, t: float) -> ComplexField:
    """Compensated jump convolution at node t, summed event by event."""
    u.index_of(t)
    prop = propagator_for(u.grid)
    acc = np.zeros(u.grid.shape, dtype=np.complex128)
    for i, s, z in zip(_check_events_on_grid(u, path), path.times, path.marks):
        if s > t:
            break
        jump = G(z, u.left_limit(i).values, cfg.coeffs)
        acc = acc + prop.apply(jump, t - s)
    comp = duhamel(_as_traj(u, _compensator_forcing(u, cfg)), t)
    return ComplexField(u.grid, acc - comp.values)


def psi3(u: Trajectory, cfg: SolverConfig, t: float) -> ComplexField:
    u.index_of(t)
    return duhamel(_as_traj(u, _h_forcing(u, cfg)), t)


@dataclass
class GammaParts:
    free: list
    psi1: list
    psi2: list
    psi3: list
    jumps: dict


def gamma_parts(u: Trajectory, u0: ComplexField, path: SamplePath, cfg: SolverConfig, R) -> GammaParts:
    """All four terms of the mild map at every node, by time-ordered recursion."""
    grid = u.grid
    prop = propagator_for(grid)
    times = np.asarray(u.times)
    u0_hat = np.fft.fftn(u0.values)
    free = [np.fft.ifftn(prop.apply_hat(u0_hat, t - times[0])) for t in times]
    p1 = duhamel_values(grid, times, _nonlinear_forcing(u, cfg, R))
    comp = duhamel_values(grid, times, _compensator_forcing(u, cfg))
    p3 = duhamel_values(grid, times, _h_forcing(u, cfg))

    jumps = {}
    for i, z in zip(_check_events_on_grid(u, path), path.marks):
        jumps[i] = G(z, u.left_limit(i).values, cfg.coeffs)
    p2 = []
    j_hat = np.zeros(grid.shape, dtype=np.complex128)
    for k, t in enumerate(times):
        if k > 0:
            j_hat = prop.apply_hat(j_hat, t - times[k - 1])
        if k in jumps:
            j_hat = j_hat + np.fft.fftn(jumps[k])
        p2.append(np.fft.ifftn(j_hat) - comp[k])
    return GammaParts(free, p1, p2, p3, jumps)


def gamma_R(u: Trajectory, u0: ComplexField, path: SamplePath, cfg: SolverConfig, R=None) -> Trajectory:
    """``S_t u0 + Psi1 + Psi2 + Psi3`` on the node times of u, with left limits at jumps."""
    parts = gamma_parts(u, u0, path, cfg, R)
    out = Trajectory(u.grid, pair=cfg.pair)
    for k, t in enumerate(u.times):
        v = parts.free[k] + parts.psi1[k] + parts.psi2[k] + parts.psi3[k]
        left = None
        if k in parts.jumps:
            left = ComplexField(u.grid, v - parts.jumps[k])
        out.append(t, ComplexField(u.grid, v), left)
    return out


def free_evolution(u0: ComplexField, times) -> Trajectory:
    prop = propagator_for(u0.grid)
    u0_hat = np.fft.fftn(u0.values)
    out = Trajectory(u0.grid)
    for t in times:
        out.append(t, ComplexField(u0.grid, np.fft.ifftn(prop.apply_hat(u0_hat, t - times[0]))))
    return out


@dataclass
class PicardStep:
    iteration: int
    trajectory: Trajectory
    y_distance: float
    ratio: float

    CSV_COLUMNS = ("iteration", "y_distance", "ratio")


def picard(
    u0: ComplexField,
    path: SamplePath,
    cfg: SolverConfig,
    R=None,
    iters: int = 8,
    floor: float = 1e-12,
) -> list[PicardStep]:
    """Iterate ``u <- gamma_R(u)`` from ``S_t u0`` on the solver node grid.

    Ratios are successive Y-distance quotients. Distances below
    ``floor * ||u||_Y`` are at rounding level and do not count towards the
    divergence test (ratio > 1 three times in a row).
    """
    if iters < 2:
        raise ValueError("need at least 2 iterations")
    times = solver_time_grid(cfg, path)
    u = free_evolution(u0, times)
    u.pair = cfg.pair
    steps = []
    prev = None
    above_one = 0
    for it in range(1, iters + 1):
        try:
            nxt = gamma_R(u, u0, path, cfg, R)
            d = y_norm(trajectory_difference(nxt, u), cfg.pair)
            scale = y_norm(nxt, cfg.pair)
        except (OverflowError, FloatingPointError) as exc:
            raise PicardDivergence("not contracting - shrink T0 (iterates overflowed)") from exc
        except ValueError as exc:
            if "corrupt field" not in str(exc):
                raise
            raise PicardDivergence("not contracting - shrink T0 (iterates overflowed)") from exc
        if not (math.isfinite(d) and math.isfinite(scale)):
            raise PicardDivergence("not contracting - shrink T0 (iterates overflowed)")
        ratio = d / prev if prev else float("nan")
        steps.append(PicardStep(it, nxt, d, ratio))
        if prev is not None and prev > floor * scale:
            above_one = above_one + 1 if ratio > 1 else 0
            if above_one >= 3:
                raise PicardDivergence("not contracting - shrink T0")
        prev = d
        u = nxt
    return steps


def contraction_factor(steps: list[PicardStep], floor: float = 1e-10) -> float:
    """Largest successive ratio among distances still above the rounding floor."""
    scale = y_norm(steps[-1].trajectory, steps[-1].trajectory.pair)
    ratios = [s.ratio for prev, s in zip(steps, steps[1:]) if prev.y_distance > floor * scale]
    return max(ratios) if ratios else 0.0
