"""Marcus jump map and the increments G, H it induces.

For ``g_j(y) = g~_j(|y|^2) y`` the flow ``dPhi/ds = -i sum_j z_j g_j(Phi)`` keeps
``|Phi|`` fixed, so the right-hand side is a constant rotation rate and the
time-one map is ``y * exp(-i alpha)`` with ``alpha = sum_j z_j g~_j(|y|^2)``.
``marcus_jump_ode`` integrates the flow directly and serves as the oracle.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .noise import NoiseCoefficients, rng_for


@dataclass
class FlowResult:
    value: np.ndarray
    phase: np.ndarray


def jump_phase(y, z, coeffs: NoiseCoefficients) -> np.ndarray:
    """``alpha = sum_j z_j g~_j(|y|^2)``; ``z`` broadcasts on a trailing axis of length m."""
    y = np.asarray(y)
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != coeffs.count:
        raise ValueError(f"mark has dimension {z.shape[-1]}, coefficients expect {coeffs.count}")
    abs2 = y.real**2 + y.imag**2
    return np.sum(coeffs.values(abs2) * z, axis=-1)


def marcus_jump(y, z, coeffs: NoiseCoefficients) -> FlowResult:
    alpha = jump_phase(y, z, coeffs)
    return FlowResult(np.asarray(y) * np.exp(-1j * alpha), alpha)


def marcus_jump_ode(y, z, coeffs: NoiseCoefficients, steps: int = 256) -> np.ndarray:
    """Classical RK4 on ``s in [0, 1]`` for the Marcus flow."""
    if steps < 16:
        raise ValueError("steps must be >= 16")
    z = np.asarray(z, dtype=float)
    phi = np.asarray(y, dtype=np.complex128).copy()
    if not np.any(z):
        return phi
    h = 1.0 / steps

    def rhs(u):
        return -1j * jump_phase(u, z, coeffs) * u

    for _ in range(steps):
        k1 = rhs(phi)
        k2 = rhs(phi + 0.5 * h * k1)
        k3 = rhs(phi + 0.5 * h * k2)
        k4 = rhs(phi + h * k3)
        phi = phi + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return phi


def _expm1_i(alpha):
    # exp(-i alpha) - 1 without cancellation
    return -2.0 * np.sin(0.5 * alpha) ** 2 - 1j * np.sin(alpha)


def _alpha_minus_sin(alpha):
    alpha = np.asarray(alpha, dtype=float)
    small = np.abs(alpha) < 0.1
    a2 = alpha * alpha
    series = alpha * a2 / 6.0 * (1 - a2 / 20.0 * (1 - a2 / 42.0 * (1 - a2 / 72.0)))
    return np.where(small, series, alpha - np.sin(alpha))


def _second_order_rest(alpha):
    # exp(-i alpha) - 1 + i alpha
    return -2.0 * np.sin(0.5 * alpha) ** 2 + 1j * _alpha_minus_sin(alpha)


def G(z, y, coeffs: NoiseCoefficients):
    """``Phi(1, z, y) - y``."""
    return np.asarray(y) * _expm1_i(jump_phase(y, z, coeffs))


def H(z, y, coeffs: NoiseCoefficients):
    """``Phi(1, z, y) - y + i sum_j z_j g_j(y)``."""
    return np.asarray(y) * _second_order_rest(jump_phase(y, z, coeffs))


@dataclass(frozen=True)
class JumpBoundConstants:
    """Constants for the growth and Lipschitz bounds on G and H (|z| <= 1).

    ``C1 = C2 = sqrt(m) L1 exp(sqrt(m) L1)`` from the Gronwall estimate.
    ``C3 = m M^2 / 2`` and ``C4 = m (M^2 / 2 + M D)`` follow from
    ``|exp(-i a) - 1 + i a| <= a^2 / 2`` and ``|a| <= sqrt(m) M |z|``, where
    ``M = max sup |g~_j|`` and ``D = max sup 2 theta |g~_j'|``.
    """

    C1: float
    C2: float
    C3: float
    C4: float

    @classmethod
    def for_coefficients(cls, coeffs: NoiseCoefficients) -> "JumpBoundConstants":
        m = coeffs.count
        gron = math.sqrt(m) * coeffs.L1 * math.exp(math.sqrt(m) * coeffs.L1)
        M, D = coeffs.sup_abs, coeffs.sup_weighted_derivative
        return cls(gron, gron, 0.5 * m * M**2, m * (0.5 * M**2 + M * D))


@dataclass
class JumpBoundReport:
    trials: int
    constants: JumpBoundConstants
    max_ratio: dict = field(default_factory=dict)
    violations: dict = field(default_factory=dict)

    @property
    def total_violations(self) -> int:
        return sum(self.violations.values())


BOUNDS = ("G_growth", "G_lipschitz", "H_growth", "H_lipschitz")


def _random_marks(rng, size, m):
    g = rng.standard_normal((size, m))
    direction = g / np.linalg.norm(g, axis=1, keepdims=True)
    radius = rng.random(size) ** (1.0 / m)
    # a slice of tiny marks exercises the small-|z| regime of the quadratic bounds
    radius[: size // 10] *= 1e-4
    return radius[:, None] * direction


def _random_points(rng, size, radius):
    mod = radius * np.sqrt(rng.random(size))
    return mod * np.exp(2j * np.pi * rng.random(size))


def _rounded_diff(a, b):
    # |a - b| less the cancellation error of differencing two computed values
    slack = 16 * np.finfo(float).eps * (np.abs(a) + np.abs(b))
    return np.maximum(np.abs(a - b) - slack, 0.0)


def verify_jump_bounds(
    coeffs: NoiseCoefficients,
    trials: int,
    radius: float = 10.0,
    seed: int = 0,
    rtol: float = 1e-10,
) -> JumpBoundReport:
    """Randomized check of all four G/H bounds; the ratio is observed / bound."""
    consts = JumpBoundConstants.for_coefficients(coeffs)
    report = JumpBoundReport(trials, consts)
    if trials <= 0:
        return report
    rng = rng_for(seed, 32)
    m = coeffs.count
    z = _random_marks(rng, trials, m)
    y1 = _random_points(rng, trials, radius)
    y2 = _random_points(rng, trials, radius)
    # every fourth pair sits close together
    y2[::4] = y1[::4] + 1e-6 * radius * _random_points(rng, y2[::4].size, 1.0)
    zn = np.linalg.norm(z, axis=1)
    dy = np.abs(y1 - y2)
    g1, g2 = G(z, y1, coeffs), G(z, y2, coeffs)
    h1, h2 = H(z, y1, coeffs), H(z, y2, coeffs)
    checks = {
        "G_growth": (np.abs(g1), consts.C1 * zn * np.abs(y1)),
        "G_lipschitz": (_rounded_diff(g1, g2), consts.C2 * zn * dy),
        "H_growth": (np.abs(h1), consts.C3 * zn**2 * np.abs(y1)),
        "H_lipschitz": (_rounded_diff(h1, h2), consts.C4 * zn**2 * dy),
    }
    for name, (observed, bound) in checks.items():
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(bound > 0, observed / np.where(bound > 0, bound, 1.0),
                             np.where(observed > 0, np.inf, 0.0))
        report.max_ratio[name] = float(ratio.max())
        report.violations[name] = int(np.sum(ratio > 1 + rtol))
    return report


@dataclass
class FlowCheckReport:
    trials: int
    max_abs_error: float
    max_modulus_drift: float
    tolerance: float

    @property
    def violations(self) -> int:
        return int(self.max_abs_error > self.tolerance) + int(self.max_modulus_drift > self.tolerance)


def random_coefficients(rng, m: int, amplitude: float = 1.0) -> NoiseCoefficients:
    """m families drawn from the catalog with ``|a|, |c| <= amplitude`` and ``b in [0, 5]``."""
    from .noise import Constant, Rational, Saturating

    fams = []
    for kind in rng.integers(0, 3, m):
        a = amplitude * rng.uniform(-1.0, 1.0)
        if kind == 0:
            fams.append(Constant(a))
        elif kind == 1:
            fams.append(Rational(a, rng.uniform(0.0, 5.0)))
        else:
            fams.append(Saturating(a))
    return NoiseCoefficients(fams)


def verify_marcus_flow(
    trials: int,
    coeffs: NoiseCoefficients = None,
    radius: float = 10.0,
    steps: int = 256,
    seed: int = 0,
    tolerance: float = 1e-10,
    batch: int = 100,
) -> FlowCheckReport:
    """Closed-form jump map against the RK4 oracle on random ``(y, z, coeffs)``.

    With ``coeffs=None`` every batch of ``batch`` points draws fresh
    coefficients (m in {1, 2}); the oracle runs vectorized over a batch.
    """
    rng = rng_for(seed, 31)
    worst = drift = 0.0
    done = 0
    while done < trials:
        n = min(batch, trials - done)
        c = coeffs if coeffs is not None else random_coefficients(rng, int(rng.integers(1, 3)))
        z = _random_marks(rng, n, c.count)
        y = _random_points(rng, n, radius)
        exact = marcus_jump(y, z, c).value
        ode = marcus_jump_ode(y, z, c, steps)
        worst = max(worst, float(np.max(np.abs(exact - ode))))
        drift = max(drift, float(np.max(np.abs(np.abs(ode) - np.abs(y)))))
        done += n
    return FlowCheckReport(trials, worst, drift, tolerance)


# alias kept for callers that use the original operation name
verify_lemma32 = verify_jump_bounds
