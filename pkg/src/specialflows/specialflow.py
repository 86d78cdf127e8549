"""The special flow under a ceiling f over the rotation by alpha.

A phase point is ``(x, s)`` with ``0 <= s < f(x)``; flowing for time t moves
vertically and wraps through the identification ``(x, f(x)) ~ (x + alpha, 0)``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .arithmetic import CirclePoint, ContinuedFraction, circle_dist
from .birkhoff import _check_budget, _orbit_sides
from .ceiling import SIGMA_MIN, CeilingSpec, integral_f
from .errors import ConfigInvalid

T_MAX = 1.0e9


@dataclass(frozen=True)
class PhasePoint:
    x: CirclePoint
    s: float

    def __post_init__(self):
        if not isinstance(self.x, CirclePoint):
            object.__setattr__(self, "x", CirclePoint.from_value(self.x))
        if self.s < 0:
            raise ConfigInvalid("height s must be nonnegative")

    def as_tuple(self) -> tuple[float, float]:
        return float(self.x), float(self.s)


def _orbit_values(spec, cf, x, start, count) -> np.ndarray:
    u, v = _orbit_sides(spec, cf, x, start, count, SIGMA_MIN)
    return np.asarray(spec.f_sides(u, v), dtype=float)


def flow_step(spec: CeilingSpec, cf: ContinuedFraction, p: PhasePoint, t: float) -> PhasePoint:
    """T_t(x, s) = (x + n alpha, t + s - f^(n)(x)) with f^(n)(x) <= t + s < f^(n+1)(x)."""
    if abs(t) > T_MAX:
        raise ConfigInvalid(f"|t| exceeds T_max = {T_MAX:g}")
    if t == 0:
        return p
    spec.require_bounded_below()
    x = p.x
    tau = t + p.s
    mean = integral_f(spec)
    guess = max(int(abs(tau) / mean), 1)
    if tau >= 0:
        count = guess + 16
        while True:
            _check_budget(cf, x, 0, count + 1)
            vals = _orbit_values(spec, cf, x, 0, count)
            csum = np.concatenate(([0.0], np.cumsum(vals)))
            if csum[-1] > tau:
                break
            count *= 2
        n = int(np.searchsorted(csum, tau, side="right")) - 1
        s_new = tau - csum[n]
        height = vals[n]
    else:
        count = guess + 16
        while True:
            _check_budget(cf, x, -count - 1, 0)
            vals = _orbit_values(spec, cf, x, -count, count)[::-1]  # f(x - alpha), f(x - 2 alpha), ...
            neg = -np.concatenate(([0.0], np.cumsum(vals)))  # f^(-m)(x), m = 0..count
            if neg[-1] <= tau:
                break
            count *= 2
        # largest m with f^(-m) <= tau is the first m where the sum drops below tau
        m = int(np.argmax(neg <= tau))
        n = -m
        s_new = tau - neg[m]
        height = vals[m - 1]
    if s_new >= height:  # rounding at the roof: move to the next fibre
        n += 1
        s_new = max(s_new - height, 0.0)
    return PhasePoint(x.rotate(cf, n), float(max(s_new, 0.0)))


def phase_distance(p: PhasePoint, q: PhasePoint) -> float:
    """d^f((x,s),(x',s')) = ||x - x'|| + |s - s'|."""
    return circle_dist(p.x, q.x) + abs(p.s - q.s)


def flow_group_check(spec: CeilingSpec, cf: ContinuedFraction, p: PhasePoint, t1: float, t2: float) -> float:
    """Deviation between T_{t1+t2} p and T_{t2} T_{t1} p."""
    direct = flow_step(spec, cf, p, t1 + t2)
    composed = flow_step(spec, cf, flow_step(spec, cf, p, t1), t2)
    return phase_distance(direct, composed)


def trajectory(spec: CeilingSpec, cf: ContinuedFraction, p: PhasePoint, times: Sequence[float]) -> list[tuple[float, float, float]]:
    rows = []
    for t in times:
        q = flow_step(spec, cf, p, t)
        rows.append((float(t), float(q.x), q.s))
    return rows


def trajectory_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "x", "s"])
    for t, x, s in rows:
        w.writerow([repr(t), repr(x), repr(s)])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# invariant measure
# ---------------------------------------------------------------------------


def _antiderivative(u, gamma: float):
    """int_0^u phi(t) dt for the one-sided profile phi."""
    u = np.asarray(u, dtype=float)
    if gamma == 0.0:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(u > 0, u - u * np.log(np.where(u > 0, u, 1.0)), 0.0)
    return np.power(u, 1.0 + gamma) / (1.0 + gamma)


def base_cdf(spec: CeilingSpec, x) -> np.ndarray:
    """Cumulative of the x-marginal f(x)/int f on [0, 1]."""
    x = np.asarray(x, dtype=float)
    total = spec.offset * x
    for a, A, gr, B, gl in spec.terms():
        if A:
            G = lambda u, g=gr: _antiderivative(u, g)
            right = np.where(x <= a, G(x - a + 1.0) - G(1.0 - a), G(1.0) - G(1.0 - a) + G(np.maximum(x - a, 0.0)))
            total = total + A * right
        if B:
            G = lambda u, g=gl: _antiderivative(u, g)
            left = np.where(x <= a, G(a) - G(np.maximum(a - x, 0.0)), G(a) + G(1.0) - G(1.0 - np.maximum(x - a, 0.0)))
            total = total + B * left
    return total / integral_f(spec)


def _invert_cdf(spec: CeilingSpec, targets: np.ndarray, iterations: int = 64) -> np.ndarray:
    lo = np.zeros_like(targets)
    hi = np.ones_like(targets)
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        below = base_cdf(spec, mid) < targets
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


def sample_base(spec: CeilingSpec, rng: np.random.Generator, count: int) -> np.ndarray:
    return _invert_cdf(spec, rng.random(count))


def sample_invariant(spec: CeilingSpec, rng_seed: int, count: int, as_points: bool = True):
    """i.i.d. draws from the normalised flow-invariant measure.

    Seeds feed ``numpy.random.default_rng``; independent streams for parallel
    use come from ``numpy.random.SeedSequence(seed).spawn``.
    """
    if count < 1:
        raise ConfigInvalid("count must be at least 1")
    rng = np.random.default_rng(rng_seed)
    xs = sample_base(spec, rng, count)
    heights = rng.random(count) * spec.f_float(xs)
    if not as_points:
        return xs, heights
    return [PhasePoint(CirclePoint.from_value(float(x)), float(h)) for x, h in zip(xs, heights)]
