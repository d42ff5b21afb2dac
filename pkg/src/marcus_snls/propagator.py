"""Free Schrodinger group ``S_t = exp(i t Laplacian)`` and Duhamel integrals.

A Fourier mode ``exp(i k.x)`` evolves as ``exp(i (k.x - |k|^2 t))``, so the
group is a diagonal multiplier in Fourier space and is exact on the grid.
"""
from __future__ import annotations

import math
from collections import OrderedDict
from functools import lru_cache

import numpy as np

from .grid import AdmissiblePair, ComplexField, Grid, Trajectory, l2_norm, mixed_norm


class FreePropagator:
    """Caches ``|k|^2`` and the most recent phase multipliers for one grid.

    Not meant to be shared between threads that step different trajectories;
    create one per worker (``propagator_for`` memoizes per process).
    """

    def __init__(self, grid: Grid, cache_size: int = 8):
        self.grid = grid
        self.k2 = grid.wavenumber_squared()
        self._cache: OrderedDict = OrderedDict()
        self._cache_size = cache_size

    def multiplier(self, t: float) -> np.ndarray:
        m = self._cache.get(t)
        if m is None:
            m = np.exp(-1j * self.k2 * t)
            self._cache[t] = m
            if len(self._cache) > self._cache_size:
                self._cache.popitem(last=False)
        else:
            self._cache.move_to_end(t)
        return m

    def apply(self, values: np.ndarray, t: float) -> np.ndarray:
        if t == 0:
            return values.copy()
        return np.fft.ifftn(np.fft.fftn(values) * self.multiplier(t))

    def apply_hat(self, values_hat: np.ndarray, t: float) -> np.ndarray:
        return values_hat * self.multiplier(t)


@lru_cache(maxsize=16)
def propagator_for(grid: Grid) -> FreePropagator:
    return FreePropagator(grid)


def free_step(f: ComplexField, t: float) -> ComplexField:
    """Apply ``S_t`` exactly (any real t; the group runs backwards too)."""
    return ComplexField(f.grid, propagator_for(f.grid).apply(f.values, float(t)))


def _weights(times: np.ndarray, t: float, rule: str) -> np.ndarray:
    w = np.zeros(times.size)
    if rule == "left":
        upper = np.minimum(times[1:], t)
        w[:-1] = np.clip(upper - times[:-1], 0.0, None)
    elif rule == "trapezoid":
        k = int(np.searchsorted(times, t))
        if k >= times.size or times[k] != t:
            raise ValueError("trapezoid rule needs t on the forcing grid")
        d = np.diff(times[: k + 1])
        w[:k] += d / 2
        w[1 : k + 1] += d / 2
    else:
        raise ValueError(f"unknown quadrature rule {rule!r}")
    return w


def duhamel(forcing: Trajectory, t: float, rule: str = "left") -> ComplexField:
    """``int_0^t S_{t-s} f(s) ds`` from samples of f.

    ``rule="left"`` (first order, right choice for cadlag forcing) or
    ``"trapezoid"`` (second order for smooth forcing, t must be a sample time).
    """
    if len(forcing) == 0:
        raise ValueError("empty forcing")
    times = np.asarray(forcing.times)
    if t < times[0] or t > times[-1]:
        raise ValueError(f"t={t} outside the sampled range [{times[0]}, {times[-1]}]")
    prop = propagator_for(forcing.grid)
    w = _weights(times, t, rule)
    acc = np.zeros(forcing.grid.shape, dtype=np.complex128)
    for s, wk, f in zip(times, w, forcing.fields):
        if wk != 0:
            acc += wk * prop.apply_hat(np.fft.fftn(f.values), t - s)
    return ComplexField(forcing.grid, np.fft.ifftn(acc))


def duhamel_values(grid: Grid, times, forcing_values, rule: str = "left") -> list[np.ndarray]:
    """Duhamel integral at every sample time by the one-step recursion.

    Left rule: ``D_{k+1} = S_h (D_k + h f_k)``. Trapezoid:
    ``D_{k+1} = S_h D_k + h/2 (S_h f_k + f_{k+1})``.
    """
    prop = propagator_for(grid)
    times = np.asarray(times, dtype=float)
    d_hat = np.zeros(grid.shape, dtype=np.complex128)
    out = [np.zeros(grid.shape, dtype=np.complex128)]
    f_hat_prev = np.fft.fftn(forcing_values[0])
    for k in range(times.size - 1):
        h = times[k + 1] - times[k]
        if rule == "left":
            d_hat = prop.apply_hat(d_hat + h * f_hat_prev, h)
            if k + 1 < times.size - 1:
                f_hat_prev = np.fft.fftn(forcing_values[k + 1])
        elif rule == "trapezoid":
            f_hat_next = np.fft.fftn(forcing_values[k + 1])
            d_hat = prop.apply_hat(d_hat + 0.5 * h * f_hat_prev, h) + 0.5 * h * f_hat_next
            f_hat_prev = f_hat_next
        else:
            raise ValueError(f"unknown quadrature rule {rule!r}")
        out.append(np.fft.ifftn(d_hat))
    return out


def duhamel_trajectory(forcing: Trajectory, rule: str = "left") -> Trajectory:
    values = duhamel_values(forcing.grid, forcing.times, [f.values for f in forcing.fields], rule)
    out = Trajectory(forcing.grid, pair=forcing.pair)
    for t, v in zip(forcing.times, values):
        out.append(t, ComplexField(forcing.grid, v))
    return out


def free_trajectory(phi: ComplexField, times) -> Trajectory:
    """``S_t phi`` at the given times, each computed directly from phi."""
    prop = propagator_for(phi.grid)
    phi_hat = np.fft.fftn(phi.values)
    traj = Trajectory(phi.grid)
    for t in times:
        traj.append(t, ComplexField(phi.grid, np.fft.ifftn(prop.apply_hat(phi_hat, t))))
    return traj


def uniform_times(T: float, dt: float) -> np.ndarray:
    n = max(1, math.ceil(T / dt - 1e-9))
    times = np.arange(n + 1) * dt
    times[-1] = T
    return times


def strichartz_homogeneous_probe(phi: ComplexField, pair: AdmissiblePair, T: float, dt: float) -> float:
    """``||S_. phi||_{L^p(0,T; L^r)} / ||phi||_2`` on a uniform time grid."""
    norm = l2_norm(phi)
    if norm == 0:
        raise ValueError("degenerate probe: zero initial field")
    traj = free_trajectory(phi, uniform_times(T, dt))
    return mixed_norm(traj, pair) / norm
