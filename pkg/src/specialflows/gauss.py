"""Gauss map statistics: invariant sampling, quasi-independence and large-quotient blocks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from decimal import Decimal, localcontext
from fractions import Fraction

import numpy as np
from scipy import stats

from .arithmetic import ContinuedFraction, e_partial_sums
from .errors import ConfigInvalid, PrecisionExhausted

LN2 = math.log(2.0)
DEFAULT_BITS = 512


def gauss_cdf(x):
    """mu([0, x]) = log2(1 + x) for the invariant density 1/((1+x) log 2)."""
    return np.log1p(np.asarray(x, dtype=float)) / LN2


def gauss_map(x):
    """{1/x} on floats (0 is sent to 0)."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        inv = np.where(x > 0, 1.0 / np.where(x > 0, x, 1.0), 0.0)
    return inv - np.floor(inv)


def gauss_invariant_sample(count: int, seed: int) -> np.ndarray:
    """i.i.d. draws x = 2^u - 1 with u uniform on [0, 1)."""
    if count < 1:
        raise ConfigInvalid("count must be at least 1")
    u = np.random.default_rng(seed).random(count)
    return np.expm1(u * LN2)


def ks_test(samples) -> tuple[float, float]:
    """Kolmogorov-Smirnov statistic and p-value against the Gauss measure."""
    res = stats.kstest(np.asarray(samples, dtype=float), gauss_cdf)
    return float(res.statistic), float(res.pvalue)


# ---------------------------------------------------------------------------
# exact iteration
# ---------------------------------------------------------------------------


@dataclass
class GaussSample:
    """A point known to lie in [lo, hi] and its certified Gauss orbit."""

    lo: Fraction
    hi: Fraction
    quotients: list[int] = field(default_factory=list)
    orbit: list[Fraction] = field(default_factory=list)
    bits_used: list[float] = field(default_factory=list)

    @property
    def x(self) -> Fraction:
        return self.orbit[0] if self.orbit else (self.lo + self.hi) / 2

    @property
    def depth(self) -> int:
        return len(self.quotients)


def _rational_quotients(x: Fraction, limit: int) -> list[int]:
    out = []
    num, den = x.numerator, x.denominator
    while num and len(out) < limit:
        a, rem = divmod(den, num)
        out.append(a)
        num, den = rem, num
    return out


def gauss_orbit(lo: Fraction, hi: Fraction, depth: int) -> GaussSample:
    """Iterate T x = {1/x} exactly on an enclosing interval [lo, hi] in (0, 1).

    A quotient is certified when both endpoints share it; the orbit is
    reported at the interval midpoint.  Raises PrecisionExhausted when the
    interval is too wide for ``depth`` steps.
    """
    if not (0 < lo <= hi < 1):
        raise ConfigInvalid("enclosure must lie in (0, 1)")
    a_lo = _rational_quotients(lo, depth + 1)
    a_hi = _rational_quotients(hi, depth + 1)
    common = 0
    for p, q in zip(a_lo, a_hi):
        if p != q:
            break
        common += 1
    # one extra shared quotient guards against a terminating endpoint expansion
    certified = min(common - 1, depth)
    if lo == hi:
        certified = min(len(a_lo), depth)
    if certified < depth:
        raise PrecisionExhausted(f"enclosure certifies {max(certified, 0)} of {depth} Gauss steps")
    quots = a_lo[:depth]
    x = (lo + hi) / 2
    orbit = [x]
    width = hi - lo
    used = []
    for a in quots:
        x = 1 / x - a
        orbit.append(x)
        used.append(-math.log2(float(width)) if width else math.inf)
    return GaussSample(lo, hi, quots, orbit, used)


def high_precision_sample(rng: np.random.Generator, bits: int = DEFAULT_BITS) -> tuple[Fraction, Fraction]:
    """Enclosure of 2^u - 1 for a ``bits``-bit uniform u, via stdlib decimals."""
    n = int.from_bytes(rng.bytes((bits + 7) // 8), "little") >> (8 * ((bits + 7) // 8) - bits)
    digits = int(bits * 0.30103) + 20
    with localcontext() as ctx:
        ctx.prec = digits
        u = Decimal(n) / Decimal(2) ** bits
        x = (u * Decimal(2).ln()).exp() - 1
    tol = Fraction(1, 10 ** (digits - 5)) + Fraction(1, 2**bits)
    fx = Fraction(x)
    lo, hi = max(fx - tol, Fraction(1, 2**bits)), min(fx + tol, 1 - Fraction(1, 2**bits))
    return lo, hi


def exact_quotients(count: int, depth: int, seed: int, bits: int = DEFAULT_BITS) -> np.ndarray:
    """Certified quotient rows (count x depth) from high-precision invariant draws."""
    rng = np.random.default_rng(seed)
    out = np.empty((count, depth), dtype=np.int64)
    for i in range(count):
        lo, hi = high_precision_sample(rng, bits)
        g = gauss_orbit(lo, hi, depth)
        out[i] = np.minimum(g.quotients, np.iinfo(np.int64).max)
    return out


# ---------------------------------------------------------------------------
# cylinder sampler
# ---------------------------------------------------------------------------


def cylinder_sample(count: int, depth: int, rng: np.random.Generator, with_orbit: bool = False):
    """Quotients a_1..a_depth of Gauss-distributed x, drawn cylinder by cylinder.

    Given a_1..a_k, y = T^k x has density proportional to
    1/((1 + r y)(1 + rho y)) with r = q_{k-1}/q_k and rho = s_{k-1}/s_k,
    s_k = p_k + q_k.  Its CDF inverts in closed form, so each step costs one
    uniform.  With ``with_orbit`` the orbit T^k x, k < depth, is rebuilt
    backwards from the last draw, which keeps the joint law exact.
    """
    r = np.zeros(count)
    rho = np.ones(count)
    delta = np.ones(count)
    quots = np.empty((count, depth), dtype=np.int64)
    y = np.empty(count)
    for k in range(depth):
        u = rng.random(count)
        ratio = delta / (1.0 + r)
        small = np.abs(ratio) < 1e-12
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(small, u / (1.0 + r), np.expm1(u * np.log1p(ratio)) / np.where(small, 1.0, delta))
        y = t / (1.0 - r * t)
        y = np.clip(y, np.finfo(float).tiny, 1.0 - np.finfo(float).eps)
        a = np.floor(1.0 / y)
        a = np.minimum(a, 2.0**62)
        quots[:, k] = a.astype(np.int64)
        new_r = 1.0 / (a + r)
        new_rho = 1.0 / (a + rho)
        delta = -delta / ((a + rho) * (a + r))
        r, rho = new_r, new_rho
    if not with_orbit:
        return quots
    orbit = np.empty((count, depth + 1))
    # T^depth x is drawn fresh from its conditional law given all quotients
    u = rng.random(count)
    ratio = delta / (1.0 + r)
    small = np.abs(ratio) < 1e-12
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(small, u / (1.0 + r), np.expm1(u * np.log1p(ratio)) / np.where(small, 1.0, delta))
    orbit[:, depth] = t / (1.0 - r * t)
    for k in range(depth - 1, -1, -1):
        orbit[:, k] = 1.0 / (quots[:, k] + orbit[:, k + 1])
    return quots, orbit


# ---------------------------------------------------------------------------
# statistics
# ---------------------------------------------------------------------------


@dataclass
class RatioEstimate:
    a: float
    k: int
    l: int
    ratio: float
    stderr: float
    samples: int
    measure: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def interval_measure(a: float) -> float:
    return math.log1p(a) / LN2


def correlation_ratio(a: float, k: int, l: int, samples: int, seed: int) -> RatioEstimate:
    """mu(T^-k(0,a) ∩ T^-l(0,a)) / mu((0,a))^2 by Monte Carlo."""
    if not (0 < a <= 1):
        raise ConfigInvalid("a must lie in (0, 1]")
    if k < 0 or l < 0:
        raise ConfigInvalid("k and l must be nonnegative")
    m = interval_measure(a)
    if a >= 1:
        return RatioEstimate(a, k, l, 1.0, 0.0, samples, 1.0)
    rng = np.random.default_rng(np.random.SeedSequence([seed, k, l]))
    _, orbit = cylinder_sample(samples, max(k, l), rng, with_orbit=True)
    hit = (orbit[:, k] < a) & (orbit[:, l] < a)
    p = float(np.mean(hit))
    se = float(np.std(hit, ddof=1) / math.sqrt(samples)) if samples > 1 else math.inf
    return RatioEstimate(a, k, l, p / (m * m), se / (m * m), samples, m)


def correlation_grid(a: float, ks, ls, samples: int, seed: int) -> list[RatioEstimate]:
    """Ratios for every k != l, all read off one shared batch of orbits."""
    ks, ls = list(ks), list(ls)
    m = interval_measure(a)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x6A55]))
    _, orbit = cylinder_sample(samples, max(ks + ls), rng, with_orbit=True)
    small = orbit < a
    out = []
    for k in ks:
        for l in ls:
            if k == l:
                continue
            hit = small[:, k] & small[:, l]
            p = float(np.mean(hit))
            se = float(np.std(hit, ddof=1) / math.sqrt(samples))
            out.append(RatioEstimate(a, k, l, p / (m * m), se / (m * m), samples, m))
    return out


@dataclass
class BlockStat:
    n: list[int]
    fraction: list[float]
    stderr: list[float]
    slope: float | None
    samples: int
    d: float
    method: str

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def loglog_slope(ns, values) -> float | None:
    pts = [(math.log(n), math.log(v)) for n, v in zip(ns, values) if v > 0]
    if len(pts) < 2:
        return None
    xs, ys = zip(*pts)
    return float(np.polyfit(xs, ys, 1)[0])


def block_quotient_stat(
    n_min: int,
    n_max: int,
    d: float = 4.0,
    samples: int = 100_000,
    seed: int = 0,
    method: str = "cylinder",
    bits: int = DEFAULT_BITS,
    chunk: int = 1 << 17,
) -> BlockStat:
    """Fraction of x with at least two k in [n^2, (n+1)^2] having a_k >= d k^(7/8)."""
    if n_min < 1 or n_max < n_min:
        raise ConfigInvalid("need 1 <= n_min <= n_max")
    depth = (n_max + 1) ** 2
    ks = np.arange(1, depth + 1, dtype=float)
    thresh = d * ks**0.875
    counts = np.zeros(n_max - n_min + 1)
    if method == "exact":
        quots = exact_quotients(samples, depth, seed, bits)
        counts += _block_counts(quots, thresh, n_min, n_max)
    elif method == "cylinder":
        ss = np.random.SeedSequence([seed, 0xB10C])
        sizes = [chunk] * (samples // chunk) + ([samples % chunk] if samples % chunk else [])
        for size, child in zip(sizes, ss.spawn(len(sizes))):
            quots = cylinder_sample(size, depth, np.random.default_rng(child))
            counts += _block_counts(quots, thresh, n_min, n_max)
    else:
        raise ConfigInvalid(f"unknown method {method!r}")
    frac = counts / samples
    se = np.sqrt(frac * (1 - frac) / max(samples - 1, 1))
    ns = list(range(n_min, n_max + 1))
    return BlockStat(ns, frac.tolist(), se.tolist(), loglog_slope(ns, frac), samples, d, method)


def _block_counts(quots: np.ndarray, thresh: np.ndarray, n_min: int, n_max: int) -> np.ndarray:
    big = quots >= thresh[None, : quots.shape[1]]
    out = []
    for n in range(n_min, n_max + 1):
        lo, hi = n * n, (n + 1) ** 2  # k in [lo, hi], column k-1
        out.append(float(np.count_nonzero(big[:, lo - 1 : hi].sum(axis=1) >= 2)))
    return np.array(out)


def e_membership_evidence(cf: ContinuedFraction, depth: int) -> list[float]:
    """Running sums of 1/log^(7/8) q_i over i <= depth outside K_alpha."""
    if depth > cf.depth:
        raise ConfigInvalid("depth exceeds the expansion")
    return e_partial_sums(cf, depth)
