"""Monte Carlo correlations of the special flow on rectangles under the graph."""

from __future__ import annotations

import csv
import io
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import _dd
from .arithmetic import ContinuedFraction
from .ceiling import SIGMA_MIN, CeilingSpec, integral_f
from .errors import ConfigInvalid, PrecisionExhausted
from .specialflow import T_MAX

CHUNK = 1 << 16
ABORT_LIMIT = 1e-3


@dataclass(frozen=True)
class RectSet:
    """``[lo, lo + length) x [0, height)`` on the circle times the fibre."""

    lo: float
    length: float
    height: float

    def __post_init__(self):
        if not (0 < self.length <= 1):
            raise ConfigInvalid("base interval length must lie in (0, 1]")
        if self.height < 0:
            raise ConfigInvalid("height must be nonnegative")
        object.__setattr__(self, "lo", self.lo % 1.0)

    @classmethod
    def under_graph(cls, spec: CeilingSpec, lo: float, length: float, height: float | None = None, grid: int = 4001) -> "RectSet":
        """Rectangle whose height does not exceed inf f over the base interval."""
        floor = min_on_interval(spec, lo, length, grid)
        if height is None:
            height = floor
        if height > floor:
            raise ConfigInvalid(f"height {height} exceeds inf f = {floor} on the base interval")
        return cls(lo, length, height)

    def measure(self, spec: CeilingSpec) -> float:
        return self.length * self.height / integral_f(spec)

    def rotated(self, theta: float) -> "RectSet":
        return RectSet(self.lo + theta, self.length, self.height)

    def contains(self, x: np.ndarray, s: np.ndarray) -> np.ndarray:
        off = np.mod(x - self.lo, 1.0)
        return (off < self.length) & (s < self.height)

    def to_dict(self) -> dict:
        return {"lo": self.lo, "length": self.length, "height": self.height}

    @classmethod
    def from_dict(cls, d) -> "RectSet":
        try:
            return cls(float(d["lo"]), float(d["length"]), float(d["height"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigInvalid(f"bad rectangle: {exc}") from exc


def min_on_interval(spec: CeilingSpec, lo: float, length: float, grid: int = 4001) -> float:
    """inf f over the closed base interval; singular points inside give the profile infimum."""
    xs = lo + length * np.linspace(0.0, 1.0, grid)
    vals = spec.f_float(np.mod(xs, 1.0))
    return float(np.min(vals[np.isfinite(vals)]))


def overlap_measure(spec: CeilingSpec, sets: Sequence[RectSet]) -> float:
    """Analytic mu^f of the intersection of rectangles (all heights start at 0)."""
    height = min(r.height for r in sets)
    # intersect circle arcs on a fine partition of their endpoints
    cuts = sorted({0.0, 1.0} | {r.lo for r in sets} | {(r.lo + r.length) % 1.0 for r in sets})
    total = 0.0
    for a, b in zip(cuts, cuts[1:]):
        if b <= a:
            continue
        mid = 0.5 * (a + b)
        if all(np.mod(mid - r.lo, 1.0) < r.length for r in sets):
            total += b - a
    if any(r.length >= 1.0 for r in sets) and all(r.length >= 1.0 for r in sets):
        total = 1.0
    return total * height / integral_f(spec)


@dataclass
class CorrelationRow:
    t: float
    order: int
    estimate: float
    stderr: float
    samples: int
    seed: int
    aborts: int = 0
    t2: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class CorrelationSeries:
    rows: list[CorrelationRow] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"rows": [r.to_dict() for r in self.rows]}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "t2", "order", "estimate", "stderr", "samples", "seed", "aborts"])
        for r in self.rows:
            w.writerow([repr(r.t), "" if r.t2 is None else repr(r.t2), r.order, repr(r.estimate), repr(r.stderr), r.samples, r.seed, r.aborts])
        return buf.getvalue()


# ---------------------------------------------------------------------------
# batched flow
# ---------------------------------------------------------------------------


class _Flow:
    """Vectorised forward flow on float arrays with double-double base points."""

    def __init__(self, spec: CeilingSpec, cf: ContinuedFraction):
        spec.require_bounded_below()
        self.spec = spec
        self.alpha = _dd.from_fixed(*_alpha_bits(cf))
        self.points = [p.dd() for p in spec.singular_points()]

    def heights(self, hi, lo):
        k = len(self.points)
        u = np.empty((k, hi.size))
        v = np.empty((k, hi.size))
        for i, (ahi, alo) in enumerate(self.points):
            dh, dl = _dd.sub_mod1(hi, lo, ahi, alo)
            u[i] = dh + dl
            v[i] = (1.0 - dh) - dl
        near = np.min(np.minimum(u, v), axis=0) < SIGMA_MIN
        u = np.maximum(u, SIGMA_MIN)
        v = np.maximum(v, SIGMA_MIN)
        return self.spec.f_sides(u, v), near

    def run(self, hi, lo, s, t: float):
        """Flow (x, s) for time t >= 0; returns new (hi, lo, s) and an abort mask."""
        hi = hi.copy()
        lo = lo.copy()
        tau = s + t
        aborted = np.zeros(hi.size, dtype=bool)
        active = np.arange(hi.size)
        ahi, alo = self.alpha
        while active.size:
            f, near = self.heights(hi[active], lo[active])
            aborted[active[near]] = True
            move = (tau[active] >= f) & ~near
            idx = active[move]
            tau[idx] -= f[move]
            nh, nl = _dd.add_mod1(hi[idx], lo[idx], ahi, alo)
            hi[idx] = nh
            lo[idx] = nl
            active = idx
        return hi, lo, tau, aborted


def _alpha_bits(cf: ContinuedFraction, bits: int = 128):
    A, _ = cf.alpha_fixed(bits)
    return A, bits


def _t_key(*ts: float) -> list[int]:
    out = []
    for t in ts:
        out.extend(struct.unpack("<2I", struct.pack("<d", float(t))))
    return out


def _chunk_values(flow: _Flow, spec, sets: Sequence[RectSet], times: Sequence[float], n: int, rng: np.random.Generator):
    """Per-sample indicator products for ``n`` points drawn uniformly from sets[0]."""
    A0 = sets[0]
    vals = np.empty(0)
    aborts = 0
    need = n
    while need > 0:
        x = np.mod(A0.lo + A0.length * rng.random(need), 1.0)
        s = A0.height * rng.random(need)
        hi, lo = _dd.reduce_mod1(x, np.zeros_like(x))
        ind = np.ones(need, dtype=bool)
        bad = np.zeros(need, dtype=bool)
        done = 0.0
        for target, ti in zip(sets[1:], times):
            hi, lo, s, ab = flow.run(hi, lo, s, ti - done)
            done = ti
            bad |= ab
            ind &= target.contains(hi + lo, s)
        aborts += int(bad.sum())
        vals = np.concatenate((vals, ind[~bad].astype(float)))
        need = n - vals.size
        if aborts > max(ABORT_LIMIT * n, 10):
            break
    return vals, aborts


def _estimate(spec, cf, sets, times, samples, seed, threads):
    if samples < 2:
        raise ConfigInvalid("need at least 2 samples for a standard error")
    if any(t < 0 or t > T_MAX for t in times):
        raise ConfigInvalid("times must lie in [0, T_max]")
    if list(times) != sorted(times):
        raise ConfigInvalid("times must be nondecreasing")
    flow = _Flow(spec, cf)
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF] + [len(sets)] + _t_key(*times))
    sizes = [CHUNK] * (samples // CHUNK) + ([samples % CHUNK] if samples % CHUNK else [])
    children = ss.spawn(len(sizes))

    def job(i):
        return _chunk_values(flow, spec, sets, times, sizes[i], np.random.default_rng(children[i]))

    if threads > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(job, range(len(sizes))))
    else:
        parts = [job(i) for i in range(len(sizes))]
    ind = np.concatenate([p[0] for p in parts])
    aborts = sum(p[1] for p in parts)
    if aborts > ABORT_LIMIT * samples:
        raise PrecisionExhausted(f"{aborts} flow aborts exceed {ABORT_LIMIT:.1%} of {samples} samples")
    mus = [r.measure(spec) for r in sets]
    prod = math.prod(mus)
    per_sample = mus[0] * ind - prod
    est = float(np.mean(per_sample))
    err = float(np.std(per_sample, ddof=1) / math.sqrt(per_sample.size))
    return est, err, aborts


def correlation2(spec: CeilingSpec, cf: ContinuedFraction, A: RectSet, B: RectSet, t: float, samples: int, seed: int, threads: int = 1) -> CorrelationRow:
    """Estimate mu(A ∩ T_{-t} B) - mu(A) mu(B) from uniform points of A flowed for time t."""
    est, err, aborts = _estimate(spec, cf, [A, B], [t], samples, seed, threads)
    return CorrelationRow(float(t), 2, est, err, samples, int(seed), aborts)


def correlation3(
    spec: CeilingSpec,
    cf: ContinuedFraction,
    A0: RectSet,
    A1: RectSet,
    A2: RectSet,
    t1: float,
    t2: float,
    samples: int,
    seed: int,
    threads: int = 1,
) -> CorrelationRow:
    """Estimate mu(A0 ∩ T_{-t1} A1 ∩ T_{-t2} A2) - mu(A0) mu(A1) mu(A2)."""
    if not (0 <= t1 <= t2):
        raise ConfigInvalid("need 0 <= t1 <= t2")
    est, err, aborts = _estimate(spec, cf, [A0, A1, A2], [t1, t2], samples, seed, threads)
    return CorrelationRow(float(t1), 3, est, err, samples, int(seed), aborts, float(t2))


def analytic_correlation(spec: CeilingSpec, sets: Sequence[RectSet]) -> float:
    """Value of the correlation at time zero: mu(∩ sets) - prod mu(set)."""
    return overlap_measure(spec, sets) - math.prod(r.measure(spec) for r in sets)


def decay_scan(
    spec: CeilingSpec,
    cf: ContinuedFraction,
    sets: Sequence[RectSet],
    t_grid: Sequence[float],
    order: int,
    samples: int,
    seed: int,
    threads: int = 1,
) -> CorrelationSeries:
    """One row per t; order 3 probes the pair of times (t, 2t).

    Each row is seeded from (seed, t), so the rows do not depend on the grid order.
    """
    if order not in (2, 3):
        raise ConfigInvalid("order must be 2 or 3")
    if len(sets) < order:
        raise ConfigInvalid(f"order {order} needs {order} sets")
    rows = []
    for t in t_grid:
        if order == 2:
            rows.append(correlation2(spec, cf, sets[0], sets[1], t, samples, seed, threads))
        else:
            rows.append(correlation3(spec, cf, sets[0], sets[1], sets[2], t, 2 * t, samples, seed, threads))
    return CorrelationSeries(rows)


def kochergin_setup(gamma: float = -0.5, lo: float = 0.2, length: float = 0.2) -> tuple[CeilingSpec, RectSet]:
    """f(x) = x^gamma + 1 and the rectangle [lo, lo+length] x [0, inf f on it]."""
    spec = CeilingSpec.power(gamma, 0.0, 1.0, 0.0, 1.0)
    return spec, RectSet.under_graph(spec, lo, length)
