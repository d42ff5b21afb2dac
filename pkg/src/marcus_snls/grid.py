"""Periodic grids, complex fields, trajectories and the norms used on them.

The whole space is replaced by the torus ``[-L, L)^n``. Every integral in
space is the plain Riemann sum ``h^n * sum(...)``, which is spectrally accurate
for smooth periodic integrands.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

MAX_POINTS = 2**24


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on ``[-half_length, half_length)^dimension``."""

    dimension: int
    points_per_axis: int
    half_length: float

    def __post_init__(self):
        n, N = self.dimension, self.points_per_axis
        if n not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {n}")
        if N < 8 or N & (N - 1):
            raise ValueError(f"points_per_axis must be a power of two >= 8, got {N}")
        if not self.half_length > 0:
            raise ValueError("half_length must be positive")
        if N**n > MAX_POINTS:
            raise ValueError(f"grid of {N}^{n} points exceeds the {MAX_POINTS} point budget")

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_length / self.points_per_axis

    @property
    def shape(self) -> tuple:
        return (self.points_per_axis,) * self.dimension

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dimension

    def axis(self) -> np.ndarray:
        return -self.half_length + self.spacing * np.arange(self.points_per_axis)

    def coordinates(self) -> list[np.ndarray]:
        """Broadcastable coordinate arrays, one per axis (``ij`` indexing)."""
        return np.meshgrid(*([self.axis()] * self.dimension), indexing="ij", sparse=True)

    def wavenumber_axis(self) -> np.ndarray:
        # {0, ..., N/2-1, -N/2, ..., -1} * pi/L in FFT order
        return 2.0 * np.pi * np.fft.fftfreq(self.points_per_axis, d=self.spacing)

    def wavenumber_squared(self) -> np.ndarray:
        ks = np.meshgrid(*([self.wavenumber_axis()] * self.dimension), indexing="ij", sparse=True)
        return sum(k**2 for k in ks)


@dataclass
class ComplexField:
    """Complex amplitudes sampled on a grid."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.complex128)
        if values.shape != self.grid.shape:
            try:
                values = values.reshape(self.grid.shape)
            except ValueError:
                raise ValueError(
                    f"field has {values.size} values, grid needs {math.prod(self.grid.shape)}"
                ) from None
        if not np.all(np.isfinite(values)):
            raise ValueError("corrupt field: non-finite entries")
        self.values = values

    @classmethod
    def zeros(cls, grid: Grid) -> "ComplexField":
        return cls(grid, np.zeros(grid.shape, dtype=np.complex128))

    def copy(self) -> "ComplexField":
        return ComplexField(self.grid, self.values.copy())

    def _check_grid(self, other: "ComplexField"):
        if other.grid != self.grid:
            raise ValueError("fields live on different grids")

    def __add__(self, other):
        if isinstance(other, ComplexField):
            self._check_grid(other)
            return ComplexField(self.grid, self.values + other.values)
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, ComplexField):
            self._check_grid(other)
            return ComplexField(self.grid, self.values - other.values)
        return NotImplemented

    def __mul__(self, scalar):
        if isinstance(scalar, (int, float, complex, np.number)):
            return ComplexField(self.grid, self.values * scalar)
        return NotImplemented

    __rmul__ = __mul__

    def __neg__(self):
        return ComplexField(self.grid, -self.values)


def _check_finite(values: np.ndarray):
    if not np.all(np.isfinite(values)):
        raise ValueError("corrupt field: non-finite entries")


def l2_norm(f: ComplexField) -> float:
    _check_finite(f.values)
    v = f.values
    return math.sqrt(f.grid.cell_volume * float(np.sum(v.real**2 + v.imag**2)))


def lr_norm(f: ComplexField, r: float) -> float:
    """Discrete ``L^r`` norm; ``r = inf`` gives the largest modulus."""
    if not r >= 1:
        raise ValueError(f"invalid exponent r={r}")
    _check_finite(f.values)
    return _lr_values(f.values, r, f.grid.cell_volume)


def _lr_values(values: np.ndarray, r: float, cell: float) -> float:
    mod = np.abs(values)
    if math.isinf(r):
        return float(mod.max())
    if r == 2:
        return math.sqrt(cell * float(np.sum(values.real**2 + values.imag**2)))
    return (cell * float(np.sum(mod**r))) ** (1.0 / r)


def boundary_mass_fraction(f: ComplexField, margin: float = 0.1) -> float:
    """Share of the squared L2 norm sitting within ``margin * L`` of the torus edge.

    Experiments on the torus are meaningful as long as this stays below 1e-4.
    """
    total = l2_norm(f) ** 2
    if total == 0:
        return 0.0
    g = f.grid
    inner = np.ones(g.shape, dtype=bool)
    for x in g.coordinates():
        inner &= np.abs(x) < (1.0 - margin) * g.half_length
    edge = g.cell_volume * float(np.sum(np.abs(f.values[~inner]) ** 2))
    return edge / total


def conjugate_exponent(p: float) -> float:
    if p == 1:
        return math.inf
    if math.isinf(p):
        return 1.0
    return p / (p - 1.0)


@dataclass(frozen=True)
class AdmissiblePair:
    """Strichartz exponents with ``2/p = n (1/2 - 1/r)``."""

    p: float
    r: float
    dimension: int

    def __post_init__(self):
        n, p, r = self.dimension, self.p, self.r
        if n < 1:
            raise ValueError("dimension must be >= 1")
        _check_r_range(n, r)
        if math.isinf(p) != (r == 2):
            raise ValueError("not admissible: p = inf exactly when r = 2")
        if not math.isinf(p):
            if p < 2:
                raise ValueError("not admissible: p < 2")
            if abs(2.0 / p - n * (0.5 - 1.0 / r)) > 1e-12:
                raise ValueError(f"not admissible: 2/p != n(1/2 - 1/r) for p={p}, r={r}")

    @property
    def dual(self) -> tuple[float, float]:
        return conjugate_exponent(self.p), conjugate_exponent(self.r)


def _check_r_range(n: int, r: float):
    if n == 1:
        ok = r >= 2
    elif n == 2:
        ok = 2 <= r < math.inf
    else:
        ok = 2 <= r <= 2.0 * n / (n - 2)
    if not ok:
        raise ValueError(f"not admissible: r={r} out of range for n={n}")


def make_admissible_pair(n: int, r: float) -> AdmissiblePair:
    _check_r_range(n, r)
    if r == 2:
        return AdmissiblePair(math.inf, 2.0, n)
    gap = n * (0.5 - 1.0 / r)
    return AdmissiblePair(2.0 / gap, float(r), n)


@dataclass
class Trajectory:
    """Snapshots of a field at strictly increasing times.

    ``left_limits`` maps a snapshot index to the value just before a jump at
    that time; the stored snapshot itself is the right-continuous value.
    The running accumulators hold ``sup ||u||_2`` and ``int ||u||_r^p ds`` when
    ``pair`` is set; solvers that step more finely than they store overwrite
    them with their own per-step values.
    """

    grid: Grid
    times: list = field(default_factory=list)
    fields: list = field(default_factory=list)
    left_limits: dict = field(default_factory=dict)
    pair: Optional[AdmissiblePair] = None
    running_sup_l2: float = 0.0
    running_lp_lr_integral: float = 0.0

    def __len__(self):
        return len(self.times)

    def append(self, t: float, f: ComplexField, left_limit: Optional[ComplexField] = None):
        if f.grid != self.grid:
            raise ValueError("snapshot grid does not match trajectory grid")
        if self.times and not t > self.times[-1]:
            raise ValueError(f"times must increase strictly: {t} after {self.times[-1]}")
        if self.times and self.pair is not None and not math.isinf(self.pair.p):
            dt = t - self.times[-1]
            self.running_lp_lr_integral += lr_norm(self.fields[-1], self.pair.r) ** self.pair.p * dt
        self.running_sup_l2 = max(self.running_sup_l2, l2_norm(f))
        if left_limit is not None:
            self.left_limits[len(self.times)] = left_limit
        self.times.append(float(t))
        self.fields.append(f)

    def index_of(self, t: float) -> int:
        i = int(np.searchsorted(self.times, t))
        if i < len(self.times) and self.times[i] == t:
            return i
        raise ValueError(f"time {t} is not on the trajectory grid")

    def left_limit(self, i: int) -> ComplexField:
        return self.left_limits.get(i, self.fields[i])

    def restricted(self, t_end: float) -> "Trajectory":
        """Snapshots with time <= t_end (accumulators recomputed)."""
        out = Trajectory(self.grid, pair=self.pair)
        for i, (t, f) in enumerate(zip(self.times, self.fields)):
            if t > t_end:
                break
            out.append(t, f, self.left_limits.get(i))
        return out

    def stacked(self) -> np.ndarray:
        return np.stack([f.values for f in self.fields])


def trajectory_from_values(grid: Grid, times, values, pair=None) -> Trajectory:
    traj = Trajectory(grid, pair=pair)
    for t, v in zip(times, values):
        traj.append(t, ComplexField(grid, v))
    return traj


def trajectory_difference(a: Trajectory, b: Trajectory) -> Trajectory:
    if len(a) != len(b) or not np.array_equal(a.times, b.times):
        raise ValueError("trajectories are sampled at different times")
    out = Trajectory(a.grid, pair=a.pair)
    for t, fa, fb in zip(a.times, a.fields, b.fields):
        out.append(t, fa - fb)
    return out


def space_time_norm(traj: Trajectory, p: float, r: float) -> float:
    """``L^p_t L^r_x`` norm with left-endpoint quadrature in time."""
    if len(traj) == 0:
        raise ValueError("empty trajectory")
    norms = [lr_norm(f, r) for f in traj.fields]
    if math.isinf(p):
        return max(norms)
    dts = np.diff(traj.times)
    if dts.size == 0:
        return 0.0
    return float(np.sum(np.asarray(norms[:-1]) ** p * dts)) ** (1.0 / p)


def mixed_norm(traj: Trajectory, pair: AdmissiblePair) -> float:
    return space_time_norm(traj, pair.p, pair.r)


def y_norm(traj: Trajectory, pair: AdmissiblePair) -> float:
    """``sup_t ||u||_2 + ||u||_{L^p L^r}`` over the stored snapshots."""
    if len(traj) == 0:
        raise ValueError("empty trajectory")
    return max(l2_norm(f) for f in traj.fields) + mixed_norm(traj, pair)


def running_y_norms(traj: Trajectory, pair: AdmissiblePair) -> np.ndarray:
    """Y-norm over ``[t_0, t_k]`` for every snapshot index k."""
    if len(traj) == 0:
        raise ValueError("empty trajectory")
    l2 = np.array([l2_norm(f) for f in traj.fields])
    sup = np.maximum.accumulate(l2)
    if math.isinf(pair.p):
        return sup + sup
    lr = np.array([lr_norm(f, pair.r) for f in traj.fields])
    incr = lr[:-1] ** pair.p * np.diff(traj.times)
    integral = np.concatenate([[0.0], np.cumsum(incr)])
    return sup + integral ** (1.0 / pair.p)
