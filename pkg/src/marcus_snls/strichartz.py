"""Empirical Strichartz ratios, deterministic and stochastic.

The constants in these inequalities are not known explicitly, so the probes
only report ratios; their finiteness and stability under refinement are what
gets checked.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .grid import AdmissiblePair, ComplexField, Grid, Trajectory, l2_norm, mixed_norm, space_time_norm
from .noise import LevyMeasureSpec, SamplePath, sample_path
from .propagator import duhamel_trajectory, propagator_for, uniform_times


@dataclass
class DetProbeResult:
    ratio_linf_l2: float
    ratio_lp_lr: float
    forcing_dual_norm: float


def det_inhomogeneous_probe(
    f: Trajectory, pair: AdmissiblePair, dual_pair: AdmissiblePair, rule: str = "left"
) -> DetProbeResult:
    """Norms of ``Phi_f = int_0^t S_{t-s} f(s) ds`` over ``||f||_{L^gamma' L^rho'}``.

    The horizon is the last sample time of f.
    """
    gp, rp = dual_pair.dual
    fn = space_time_norm(f, gp, rp)
    if fn == 0:
        raise ValueError("degenerate probe: zero forcing")
    phi = duhamel_trajectory(f, rule)
    sup_l2 = max(l2_norm(g) for g in phi.fields)
    return DetProbeResult(sup_l2 / fn, mixed_norm(phi, pair) / fn, fn)


@dataclass
class XiProfile:
    """Predictable integrand ``xi(s, z) = scale * m(z) * profile``.

    ``modulation`` is ``"linear"`` (``m(z) = z_component``) or
    ``"quadratic"`` (``m(z) = |z|^2``).
    """

    profile: ComplexField
    modulation: str = "linear"
    component: int = 0
    scale: complex = 1.0

    def __post_init__(self):
        if self.modulation not in ("linear", "quadratic"):
            raise ValueError(f"unknown modulation {self.modulation!r}")

    def weights(self, marks: np.ndarray) -> np.ndarray:
        marks = np.asarray(marks, dtype=float).reshape(len(marks), -1)
        if self.modulation == "linear":
            return marks[:, self.component]
        return np.sum(marks**2, axis=1)

    def nu_mean(self, spec: LevyMeasureSpec) -> float:
        """``int m(z) nu(dz)``."""
        if self.modulation == "linear":
            return float(spec.first_moment()[self.component])
        return spec.second_moment()

    def nu_norm_moment(self, spec: LevyMeasureSpec, q: float) -> float:
        """``int ||xi(z)||_2^q nu(dz)``."""
        base = (abs(self.scale) * l2_norm(self.profile)) ** q
        if self.modulation == "linear":
            return base * spec.component_abs_moment(self.component, q)
        return base * spec.abs_moment(2.0 * q)

    def scaled(self, c: complex) -> "XiProfile":
        return XiProfile(self.profile, self.modulation, self.component, self.scale * c)


def stochastic_convolution(
    path: SamplePath, xi: XiProfile, spec: LevyMeasureSpec, T: float, dt: float
) -> Trajectory:
    """``int_0^t S_{t-s} xi(s, z) (N - nu ds)(ds, dz)`` on a uniform grid.

    Jumps enter exactly in Fourier space; the compensator uses left-endpoint
    quadrature like the rest of the code.
    """
    grid = xi.profile.grid
    prop = propagator_for(grid)
    times = uniform_times(T, dt)
    phi_hat = xi.scale * np.fft.fftn(xi.profile.values)
    weights = xi.weights(path.marks) if len(path) else np.zeros(0)
    comp_rate = xi.nu_mean(spec)
    jump_hat = np.zeros(grid.shape, dtype=np.complex128)
    comp_hat = np.zeros(grid.shape, dtype=np.complex128)
    out = Trajectory(grid)
    out.append(times[0], ComplexField(grid, np.zeros(grid.shape, dtype=np.complex128)))
    e = 0
    for k in range(times.size - 1):
        t0, t1 = times[k], times[k + 1]
        h = t1 - t0
        jump_hat = prop.apply_hat(jump_hat, h)
        while e < len(path) and path.times[e] <= t1:
            s = path.times[e]
            if s > t0 or (k == 0 and s >= t0):
                jump_hat = jump_hat + weights[e] * prop.apply_hat(phi_hat, t1 - s)
            e += 1
        comp_hat = prop.apply_hat(comp_hat + h * comp_rate * phi_hat, h)
        out.append(t1, ComplexField(grid, np.fft.ifftn(jump_hat - comp_hat)))
    return out


@dataclass
class StochasticProbeReport:
    pair: tuple
    q: float
    trials: int
    lhs: float
    lhs_stderr: float
    rhs_quadratic: float
    rhs_qth: float
    ratio: float
    dt: float
    grid: dict
    terminal_l2_second_moment: float
    isometry_prediction: float
    isometry_stderr: float

    def to_json(self) -> dict:
        d = asdict(self)
        d["pair"] = [_json_float(x) for x in self.pair]
        return {k: (_json_float(v) if isinstance(v, float) else v) for k, v in d.items()}


def _json_float(x):
    if isinstance(x, float) and math.isinf(x):
        return "inf"
    return x


def stochastic_strichartz_probe(
    spec: LevyMeasureSpec,
    xi: XiProfile,
    pair: AdmissiblePair,
    q: float,
    trials: int,
    seed: int,
    T: float = 1.0,
    dt: float = 1e-2,
) -> StochasticProbeReport:
    """Monte Carlo estimate of both sides of the stochastic Strichartz inequality.

    ``lhs = E ||X||^q_{L^p L^r}``; since xi is deterministic in time,
    ``rhs_quadratic = (T int ||xi||^2 nu)^(q/2)`` and
    ``rhs_qth = T int ||xi||^q nu`` are exact. Trial i uses stream i of seed.
    """
    if q < 2:
        raise ValueError("q must be >= 2")
    if trials < 10:
        raise ValueError("need at least 10 trials")
    samples = np.empty(trials)
    terminal = np.empty(trials)
    for i in range(trials):
        path = sample_path(spec, T, seed, stream=i)
        X = stochastic_convolution(path, xi, spec, T, dt)
        samples[i] = mixed_norm(X, pair) ** q
        terminal[i] = l2_norm(X.fields[-1]) ** 2
    lhs = float(samples.mean())
    rhs_quad = (T * xi.nu_norm_moment(spec, 2.0)) ** (q / 2.0)
    rhs_qth = T * xi.nu_norm_moment(spec, q)
    denom = rhs_quad + rhs_qth
    ratio = lhs / denom if denom > 0 else 0.0
    g: Grid = xi.profile.grid
    return StochasticProbeReport(
        pair=(pair.p, pair.r),
        q=float(q),
        trials=trials,
        lhs=lhs,
        lhs_stderr=float(samples.std(ddof=1) / math.sqrt(trials)),
        rhs_quadratic=float(rhs_quad),
        rhs_qth=float(rhs_qth),
        ratio=float(ratio),
        dt=float(dt),
        grid={"n": g.dimension, "points": g.points_per_axis, "half_length": g.half_length},
        terminal_l2_second_moment=float(terminal.mean()),
        isometry_prediction=float(T * xi.nu_norm_moment(spec, 2.0)),
        isometry_stderr=float(terminal.std(ddof=1) / math.sqrt(trials)),
    )
