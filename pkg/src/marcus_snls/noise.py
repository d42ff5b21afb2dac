"""Finite-activity Levy measures on the unit ball, jump paths, noise coefficients."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy import special


def sphere_area(m: int) -> float:
    """Surface measure of the unit sphere in R^m (2 points when m = 1)."""
    return 2.0 * math.pi ** (m / 2) / math.gamma(m / 2)


def _sphere_component_moment(m: int, q: float) -> float:
    # int_{S^{m-1}} |omega_1|^q d omega
    return 2.0 * math.pi ** ((m - 1) / 2) * math.gamma((q + 1) / 2) / math.gamma((m + q) / 2)


def rng_for(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator for path ``stream`` of master ``seed``.

    Streams are independent of the order in which they are drawn.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream),))
    return np.random.Generator(np.random.Philox(ss))


@dataclass
class FiniteAtoms:
    """``nu = sum_k rate_k * delta_{mark_k}``."""

    marks: np.ndarray
    rates: np.ndarray

    def __post_init__(self):
        marks = np.atleast_2d(np.asarray(self.marks, dtype=float))
        rates = np.atleast_1d(np.asarray(self.rates, dtype=float))
        if marks.shape[0] != rates.shape[0] or marks.shape[0] == 0:
            raise ValueError("need one positive rate per atom and at least one atom")
        if np.any(rates <= 0) or not np.all(np.isfinite(rates)):
            raise ValueError("atom rates must be positive and finite")
        radii = np.linalg.norm(marks, axis=1)
        if np.any(radii <= 0) or np.any(radii > 1):
            raise ValueError("atom marks must satisfy 0 < |z| <= 1")
        self.marks, self.rates = marks, rates

    @property
    def mark_dimension(self) -> int:
        return self.marks.shape[1]

    def total_rate(self) -> float:
        return float(self.rates.sum())

    def first_moment(self) -> np.ndarray:
        return self.rates @ self.marks

    def abs_moment(self, power: float) -> float:
        return float(self.rates @ np.linalg.norm(self.marks, axis=1) ** power)

    def second_moment(self) -> float:
        return float(self.rates @ np.sum(self.marks**2, axis=1))

    def component_abs_moment(self, j: int, power: float) -> float:
        return float(self.rates @ np.abs(self.marks[:, j]) ** power)

    def sample_marks(self, rng: np.random.Generator, size: int) -> np.ndarray:
        idx = rng.choice(self.rates.size, size=size, p=self.rates / self.rates.sum())
        return self.marks[idx]

    def phase_average(self, v: np.ndarray) -> np.ndarray:
        """``int (exp(-i z.v) - 1) nu(dz)`` for real vectors ``v`` of shape (..., m)."""
        v = np.asarray(v, dtype=float)
        acc = np.zeros(v.shape[:-1], dtype=np.complex128)
        for z, rate in zip(self.marks, self.rates):
            alpha = v @ z
            acc += rate * (-2.0 * np.sin(0.5 * alpha) ** 2 - 1j * np.sin(alpha))
        return acc

    def to_dict(self) -> dict:
        return {"kind": "atoms", "marks": self.marks.tolist(), "rates": self.rates.tolist()}


@dataclass
class TruncatedRadial:
    """Isotropic ``scale * |z|^(-m-alpha) dz`` restricted to ``epsilon <= |z| <= 1``."""

    alpha: float
    epsilon: float
    scale: float = 1.0
    dimension: int = 1
    quadrature_nodes: int = 48
    _nodes: np.ndarray = field(init=False, repr=False)
    _weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not 0 < self.alpha < 2:
            raise ValueError("stability index alpha must lie in (0, 2)")
        if not 0 < self.epsilon < 1:
            raise ValueError("inner cutoff epsilon must lie in (0, 1)")
        if not self.scale > 0:
            raise ValueError("intensity scale must be positive")
        if self.dimension < 1:
            raise ValueError("mark dimension must be >= 1")
        # Gauss-Legendre in log r on [log eps, 0]
        x, w = np.polynomial.legendre.leggauss(self.quadrature_nodes)
        lo = math.log(self.epsilon)
        self._nodes = np.exp(0.5 * lo * (1 - x))
        self._weights = -0.5 * lo * w

    @property
    def mark_dimension(self) -> int:
        return self.dimension

    def _radial_integral(self, q: float) -> float:
        # int_eps^1 r^(q - 1 - alpha) dr
        e = q - self.alpha
        if e == 0:
            return -math.log(self.epsilon)
        return (1.0 - self.epsilon**e) / e

    def total_rate(self) -> float:
        return self.scale * sphere_area(self.dimension) * self._radial_integral(0.0)

    def first_moment(self) -> np.ndarray:
        return np.zeros(self.dimension)

    def abs_moment(self, power: float) -> float:
        return self.scale * sphere_area(self.dimension) * self._radial_integral(power)

    def second_moment(self) -> float:
        return self.abs_moment(2.0)

    def component_abs_moment(self, j: int, power: float) -> float:
        if not 0 <= j < self.dimension:
            raise IndexError(j)
        return self.scale * _sphere_component_moment(self.dimension, power) * self._radial_integral(power)

    def sample_radii(self, rng: np.random.Generator, size: int) -> np.ndarray:
        # density proportional to r^(-1-alpha) on [eps, 1], inverse transform
        a = self.alpha
        top = self.epsilon ** (-a)
        u = rng.random(size)
        return (top - u * (top - 1.0)) ** (-1.0 / a)

    def sample_marks(self, rng: np.random.Generator, size: int) -> np.ndarray:
        r = self.sample_radii(rng, size)
        if self.dimension == 1:
            direction = np.where(rng.random(size) < 0.5, -1.0, 1.0)[:, None]
        else:
            g = rng.standard_normal((size, self.dimension))
            direction = g / np.linalg.norm(g, axis=1, keepdims=True)
        return r[:, None] * direction

    def _sphere_transform(self, k: np.ndarray) -> np.ndarray:
        # int_{S^{m-1}} exp(-i k omega_1) d omega, real by symmetry
        m = self.dimension
        if m == 1:
            return 2.0 * np.cos(k)
        if m == 3:
            return 4.0 * np.pi * np.sinc(k / np.pi)
        safe = np.where(k == 0, 1.0, k)
        val = (2 * np.pi) ** (m / 2) * safe ** (1 - m / 2) * special.jv(m / 2 - 1, safe)
        return np.where(k == 0, sphere_area(m), val)

    def phase_average(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        kappa = np.linalg.norm(v, axis=-1)
        r = self._nodes
        integrand = self._sphere_transform(kappa[..., None] * r) - sphere_area(self.dimension)
        # dr = r d(log r), density r^(-1-alpha)
        vals = integrand @ (self._weights * r ** (-self.alpha))
        return (self.scale * vals).astype(np.complex128)

    def to_dict(self) -> dict:
        return {
            "kind": "radial",
            "alpha": self.alpha,
            "epsilon": self.epsilon,
            "scale": self.scale,
            "dimension": self.dimension,
        }


LevyMeasureSpec = Union[FiniteAtoms, TruncatedRadial]


def total_rate(spec: LevyMeasureSpec) -> float:
    return spec.total_rate()


def first_moment(spec: LevyMeasureSpec) -> np.ndarray:
    return spec.first_moment()


def second_moment(spec: LevyMeasureSpec) -> float:
    return spec.second_moment()


@dataclass(frozen=True)
class JumpEvent:
    time: float
    mark: tuple


@dataclass
class SamplePath:
    """Jump times in ``(start, horizon]`` with their marks.

    ``start`` is 0 for a fresh path; ``after(T0)`` keeps the absolute clock so a
    restarted solver sees bit-identical event times.
    """

    horizon: float
    times: np.ndarray
    marks: np.ndarray
    seed: int = 0
    stream: int = 0
    start: float = 0.0

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float).reshape(-1)
        marks = np.asarray(self.marks, dtype=float)
        if self.times.size == 0:
            self.marks = marks.reshape(0, marks.shape[-1] if marks.ndim == 2 else 1)
        else:
            self.marks = marks.reshape(self.times.size, -1)
        if self.times.size:
            if np.any(np.diff(self.times) <= 0):
                raise ValueError("event times must increase strictly")
            if self.times[0] <= self.start or self.times[-1] > self.horizon:
                raise ValueError("event times must lie in (start, horizon]")
            radii = np.linalg.norm(self.marks, axis=1)
            if np.any(radii <= 0) or np.any(radii > 1):
                raise ValueError("marks must satisfy 0 < |z| <= 1")

    @classmethod
    def empty(cls, horizon: float, mark_dimension: int = 1, start: float = 0.0) -> "SamplePath":
        return cls(horizon, np.zeros(0), np.zeros((0, mark_dimension)), start=start)

    @property
    def events(self) -> list[JumpEvent]:
        return [JumpEvent(float(t), tuple(z)) for t, z in zip(self.times, self.marks)]

    def __len__(self):
        return self.times.size

    def until(self, t_end: float) -> "SamplePath":
        keep = self.times <= t_end
        return SamplePath(t_end, self.times[keep], self.marks[keep], self.seed, self.stream, self.start)

    def after(self, t0: float) -> "SamplePath":
        keep = self.times > t0
        return SamplePath(self.horizon, self.times[keep], self.marks[keep], self.seed, self.stream, t0)

    def shifted(self, t0: float) -> "SamplePath":
        """The remainder ``N(t + t0) - N(t0)`` on ``(0, horizon - t0]``."""
        keep = self.times > t0
        return SamplePath(self.horizon - t0, self.times[keep] - t0, self.marks[keep], self.seed, self.stream)

    def mark_sum(self, t: float) -> np.ndarray:
        """Sum of marks of the events up to and including time t."""
        return self.marks[self.times <= t].sum(axis=0)


def sample_path(spec: LevyMeasureSpec, T: float, seed: int, stream: int = 0) -> SamplePath:
    """Compound Poisson path: Poisson(Lambda T) events, uniform times, iid marks."""
    if not T > 0:
        raise ValueError("horizon T must be positive")
    rng = rng_for(seed, stream)
    count = int(rng.poisson(spec.total_rate() * T))
    # 1 - U lies in (0, 1], so times land in (0, T]
    times = np.sort(T * (1.0 - rng.random(count)))
    marks = spec.sample_marks(rng, count).reshape(count, spec.mark_dimension)
    return SamplePath(T, times, marks, seed=seed, stream=stream)


# ---------------------------------------------------------------------------
# coefficient families g~_j; g_j(y) = g~_j(|y|^2) y


@dataclass(frozen=True)
class Constant:
    c: float

    def value(self, theta):
        return np.full_like(np.asarray(theta, dtype=float), self.c)

    def derivative(self, theta):
        return np.zeros_like(np.asarray(theta, dtype=float))

    def sup_abs(self) -> float:
        return abs(self.c)

    def sup_weighted_derivative(self) -> float:
        return 0.0

    def lipschitz(self) -> float:
        return abs(self.c)

    def to_dict(self) -> dict:
        return {"family": "constant", "c": self.c}


@dataclass(frozen=True)
class Rational:
    """``g~(theta) = a / (1 + b theta)`` with ``b >= 0``."""

    a: float
    b: float

    def __post_init__(self):
        if self.b < 0:
            raise ValueError("Rational coefficient needs b >= 0 (bounded on [0, inf))")

    def value(self, theta):
        return self.a / (1.0 + self.b * np.asarray(theta, dtype=float))

    def derivative(self, theta):
        return -self.a * self.b / (1.0 + self.b * np.asarray(theta, dtype=float)) ** 2

    def sup_abs(self) -> float:
        return abs(self.a)

    def sup_weighted_derivative(self) -> float:
        # sup 2 theta |a| b / (1 + b theta)^2, attained at b theta = 1
        return 0.5 * abs(self.a) if self.b > 0 else 0.0

    def lipschitz(self) -> float:
        # sup |a| (1 + 3x) / (1 + x)^2 over x = b theta >= 0, attained at x = 1/3
        return 9.0 / 8.0 * abs(self.a) if self.b > 0 else abs(self.a)

    def to_dict(self) -> dict:
        return {"family": "rational", "a": self.a, "b": self.b}


@dataclass(frozen=True)
class Saturating:
    """``g~(theta) = a theta / (1 + theta)``."""

    a: float

    def value(self, theta):
        theta = np.asarray(theta, dtype=float)
        return self.a * theta / (1.0 + theta)

    def derivative(self, theta):
        return self.a / (1.0 + np.asarray(theta, dtype=float)) ** 2

    def sup_abs(self) -> float:
        return abs(self.a)

    def sup_weighted_derivative(self) -> float:
        return 0.5 * abs(self.a)

    def lipschitz(self) -> float:
        # sup |a| (theta^2 + 3 theta) / (1 + theta)^2, attained at theta = 3
        return 9.0 / 8.0 * abs(self.a)

    def to_dict(self) -> dict:
        return {"family": "saturating", "a": self.a}


CoefficientFamily = Union[Constant, Rational, Saturating]


@dataclass(frozen=True)
class NoiseCoefficients:
    """The m functions g~_j; Lipschitz bounds come from the closed-form sups.

    With ``M_j = sup |g~_j|`` and ``D_j = sup 2 theta |g~_j'|``:
    ``L1 = max_j sup (|g~_j| + 2 theta |g~_j'|)`` and
    ``L2 = max_{j,k} (M_j M_k + D_j M_k + M_j D_k)``.
    """

    families: tuple

    def __post_init__(self):
        if len(self.families) == 0:
            raise ValueError("need at least one coefficient function")
        object.__setattr__(self, "families", tuple(self.families))

    @property
    def count(self) -> int:
        return len(self.families)

    def values(self, abs2) -> np.ndarray:
        """``g~_j(|y|^2)`` stacked on a trailing axis of length m."""
        abs2 = np.asarray(abs2, dtype=float)
        return np.stack([fam.value(abs2) for fam in self.families], axis=-1)

    def derivatives(self, abs2) -> np.ndarray:
        abs2 = np.asarray(abs2, dtype=float)
        return np.stack([fam.derivative(abs2) for fam in self.families], axis=-1)

    def g(self, j: int, y):
        y = np.asarray(y)
        return self.families[j].value(np.abs(y) ** 2) * y

    @property
    def sup_abs(self) -> float:
        return max(f.sup_abs() for f in self.families)

    @property
    def sup_weighted_derivative(self) -> float:
        return max(f.sup_weighted_derivative() for f in self.families)

    @property
    def L1(self) -> float:
        return max(f.lipschitz() for f in self.families)

    @property
    def L2(self) -> float:
        best = 0.0
        for fj in self.families:
            for fk in self.families:
                Mj, Mk = fj.sup_abs(), fk.sup_abs()
                Dj, Dk = fj.sup_weighted_derivative(), fk.sup_weighted_derivative()
                best = max(best, Mj * Mk + Dj * Mk + Mj * Dk)
        return best

    def to_list(self) -> list:
        return [f.to_dict() for f in self.families]


def lipschitz_constants(coeffs: NoiseCoefficients) -> tuple[float, float]:
    return coeffs.L1, coeffs.L2


@dataclass
class LipschitzReport:
    pairs: int
    L1: float
    L2: float
    max_ratio_L1: float
    max_ratio_L2: float
    violations_L1: int
    violations_L2: int

    @property
    def violations(self) -> int:
        return self.violations_L1 + self.violations_L2


def _ratio(observed, bound):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(bound > 0, observed / np.where(bound > 0, bound, 1.0),
                        np.where(observed > 0, np.inf, 0.0))


def _rounded_diff(a, b):
    # |a - b| less the cancellation error of differencing two computed values
    slack = 16 * np.finfo(float).eps * (np.abs(a) + np.abs(b))
    return np.maximum(np.abs(a - b) - slack, 0.0)


def _random_complex(rng, size, radius):
    # log-uniform moduli cover both tiny and large amplitudes
    mod = radius * np.exp(rng.uniform(np.log(1e-6), 0.0, size))
    return mod * np.exp(2j * np.pi * rng.random(size))


def verify_lipschitz(
    coeffs: NoiseCoefficients,
    pairs: int = 10**6,
    radius: float = 1e3,
    seed: int = 0,
    chunk: int = 200_000,
    rtol: float = 1e-10,
) -> LipschitzReport:
    """Randomized check of the two Lipschitz conditions on the g_j and g~_j g~_k y."""
    rng = rng_for(seed, 7)
    L1, L2 = coeffs.L1, coeffs.L2
    worst1 = worst2 = 0.0
    bad1 = bad2 = 0
    done = 0
    while done < pairs:
        n = min(chunk, pairs - done)
        x = _random_complex(rng, n, radius)
        # half of the pairs are close neighbours to probe the derivative
        near = rng.random(n) < 0.5
        y = np.where(near, x * (1 + 1e-3 * (rng.random(n) - 0.5)) + 1e-3 * _random_complex(rng, n, 1.0),
                     _random_complex(rng, n, radius))
        dist = np.abs(x - y)
        ok = dist > 0
        x, y, dist = x[ok], y[ok], dist[ok]
        gx, gy = coeffs.values(np.abs(x) ** 2), coeffs.values(np.abs(y) ** 2)
        d1 = _rounded_diff(gx * x[:, None], gy * y[:, None]).max(axis=1)
        pair_x = gx[:, :, None] * gx[:, None, :]
        pair_y = gy[:, :, None] * gy[:, None, :]
        d2 = _rounded_diff(pair_x * x[:, None, None], pair_y * y[:, None, None]).reshape(x.size, -1).max(axis=1)
        r1, r2 = _ratio(d1, L1 * dist), _ratio(d2, L2 * dist)
        worst1, worst2 = max(worst1, float(r1.max())), max(worst2, float(r2.max()))
        bad1 += int(np.sum(r1 > 1 + rtol))
        bad2 += int(np.sum(r2 > 1 + rtol))
        done += n
    return LipschitzReport(pairs, L1, L2, worst1, worst2, bad1, bad2)


@dataclass
class NoiseModelReport:
    samples: int
    marks_outside_ball: int
    second_moment: float
    second_moment_estimate: float
    second_moment_stderr: float
    first_moment: list
    first_moment_estimate: list
    first_moment_stderr: list

    @property
    def violations(self) -> int:
        bad = self.marks_outside_ball
        if abs(self.second_moment_estimate - self.second_moment) > 3 * self.second_moment_stderr:
            bad += 1
        for mu, est, se in zip(self.first_moment, self.first_moment_estimate, self.first_moment_stderr):
            if abs(est - mu) > 3 * se + 1e-12 * max(1.0, abs(mu)):
                bad += 1
        return bad


def verify_noise_model(spec: LevyMeasureSpec, samples: int = 200_000, seed: int = 0) -> NoiseModelReport:
    """Marks stay in the punctured unit ball; Lambda times the empirical
    moments of sampled marks match the exact moments within 3 standard errors."""
    rng = rng_for(seed, 11)
    lam = spec.total_rate()
    z = spec.sample_marks(rng, samples).reshape(samples, spec.mark_dimension)
    radii = np.linalg.norm(z, axis=1)
    outside = int(np.sum((radii <= 0) | (radii > 1)))
    sq = lam * radii**2
    lin = lam * z
    sqrt_n = math.sqrt(samples)
    return NoiseModelReport(
        samples,
        outside,
        spec.second_moment(),
        float(sq.mean()),
        float(sq.std(ddof=1) / sqrt_n),
        [float(v) for v in spec.first_moment()],
        [float(v) for v in lin.mean(axis=0)],
        [float(v) for v in lin.std(axis=0, ddof=1) / sqrt_n],
    )
