"""Birkhoff sums of singular ceilings along rotation orbits.

Two evaluation paths exist.  ``method="naive"`` walks the orbit one point at
a time in exact fixed point and is used as the reference.  The default path
splits the orbit by the Ostrowski digits of n into blocks of length q_s,
evaluates each block on a cached double-double table of ``{j*alpha}`` and
adds block totals with ``math.fsum``.  Points whose side distance falls
below 2**-40 are re-evaluated exactly.

Differences ``f^(n)(x) - f^(n)(y)`` for nearby x, y are formed term by term
with ``log1p``/``expm1`` so that the O(1) drift signal is not swamped by the
O(n log n) size of the individual sums.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from . import _dd
from .arithmetic import ORBIT_TOLERANCE, CirclePoint, ContinuedFraction, get_rule
from .ceiling import SIGMA_MIN, CeilingSpec, SingularModel, profile, profile_prime
from .errors import ConfigInvalid, NonResonanceViolated, PrecisionExhausted, SingularityProximity

EXACT_BELOW = 2.0**-40
MAX_CHUNK = 1 << 16


@dataclass(frozen=True)
class BirkhoffRequest:
    spec: CeilingSpec
    cf: ContinuedFraction
    x: CirclePoint
    n: int

    def __post_init__(self):
        if not isinstance(self.x, CirclePoint):
            object.__setattr__(self, "x", CirclePoint.from_value(self.x))


def as_point(x, bits: int | None = None) -> CirclePoint:
    if isinstance(x, CirclePoint):
        return x if bits is None else x.with_bits(bits)
    return CirclePoint.from_value(x, bits or 256)


def _check_budget(cf: ContinuedFraction, x: CirclePoint, lo: int, hi: int) -> None:
    _, aerr = cf.alpha_fixed(x.bits)
    span = max(abs(lo), abs(hi))
    if Fraction(x.err + span * (aerr + 1), 1 << x.bits) > ORBIT_TOLERANCE:
        raise PrecisionExhausted(f"orbit index {span} exceeds the precision budget at {x.bits} bits")


# ---------------------------------------------------------------------------
# Ostrowski decomposition
# ---------------------------------------------------------------------------


def ostrowski_digits(n: int, denominators: Sequence[int]) -> list[tuple[int, int]]:
    """Greedy digits (s, b_s) with n = sum b_s q_s, largest scale first."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    out = []
    rest = n
    for s in range(len(denominators) - 1, -1, -1):
        q = denominators[s]
        if q <= rest:
            b, rest = divmod(rest, q)
            out.append((s, b))
    return out


def _blocks(n: int, cf: ContinuedFraction, cap: int = MAX_CHUNK) -> list[tuple[int, int]]:
    """(offset, length) blocks following the Ostrowski digits of n."""
    qs = [q for q in cf.denominators if q <= cap] or [1]
    out = []
    pos = 0
    for s, b in ostrowski_digits(n, qs):
        for _ in range(b):
            out.append((pos, qs[s]))
            pos += qs[s]
    return out


# ---------------------------------------------------------------------------
# orbit side distances
# ---------------------------------------------------------------------------


def _orbit_sides(spec: CeilingSpec, cf: ContinuedFraction, x: CirclePoint, start: int, count: int, sigma_min: float):
    """Side distances (u, v), shape (k, count), of x + j alpha for j in [start, start+count)."""
    hi, lo = _orbit_block(cf, x, start, count)
    k = len(spec.points)
    u = np.empty((k, count))
    v = np.empty((k, count))
    for i, a in enumerate(spec.singular_points()):
        ahi, alo = a.dd()
        dh, dl = _dd.sub_mod1(hi, lo, ahi, alo)
        u[i] = dh + dl
        v[i] = (1.0 - dh) - dl
    near = np.minimum(u, v)
    bad = near < EXACT_BELOW
    if bad.any():
        A, _ = cf.alpha_fixed(x.bits)
        full = 1 << x.bits
        pts = spec.singular_points()
        for i, col in zip(*np.nonzero(bad)):
            j = start + int(col)
            diff = (x.frac + j * A - pts[i].with_bits(x.bits).frac) % full
            uu = diff / full
            vv = (full - diff) / full if diff else 0.0
            if diff == 0 or min(uu, vv) < sigma_min:
                raise SingularityProximity(
                    f"orbit point j={j} within {sigma_min:.3g} of singularity {i}",
                    j=j,
                    singularity=int(i),
                    distance=float(min(uu, vv)) if diff else 0.0,
                )
            u[i, col] = uu
            v[i, col] = vv
    return u, v


def _orbit_block(cf: ContinuedFraction, x: CirclePoint, start: int, count: int):
    from .arithmetic import orbit_dd

    return orbit_dd(cf, x, start, count)


def _segment(n: int) -> tuple[int, int, float]:
    """(start, count, sign) of the orbit indices making up f^(n)."""
    if n >= 0:
        return 0, n, 1.0
    return n, -n, -1.0


def _sum_values(spec, cf, x, start, count, sigma_min, fn) -> float:
    if count == 0:
        return 0.0
    parts = []
    for off, length in _blocks(count, cf):
        u, v = _orbit_sides(spec, cf, x, start + off, length, sigma_min)
        parts.append(math.fsum(fn(u, v)))
    return math.fsum(parts)


# ---------------------------------------------------------------------------
# public sums
# ---------------------------------------------------------------------------


def birkhoff_sum(req: BirkhoffRequest, method: str = "fast", sigma_min: float = SIGMA_MIN) -> float:
    """f^(n)(x), with f^(-n)(x) = -(f(T^{-n}x) + ... + f(T^{-1}x))."""
    start, count, sign = _segment(req.n)
    _check_budget(req.cf, req.x, start, start + count)
    if method == "naive":
        return sign * _naive(req, sigma_min, derivative=False)
    return sign * _sum_values(req.spec, req.cf, req.x, start, count, sigma_min, req.spec.f_sides)


def birkhoff_sum_prime(req: BirkhoffRequest, method: str = "fast", sigma_min: float = SIGMA_MIN) -> float:
    start, count, sign = _segment(req.n)
    _check_budget(req.cf, req.x, start, start + count)
    if method == "naive":
        return sign * _naive(req, sigma_min, derivative=True)
    return sign * _sum_values(req.spec, req.cf, req.x, start, count, sigma_min, req.spec.fprime_sides)


def _naive(req: BirkhoffRequest, sigma_min: float, derivative: bool) -> float:
    """Point-by-point reference sum in exact fixed point."""
    start, count, _ = _segment(req.n)
    x, cf, spec = req.x, req.cf, req.spec
    A, _ = cf.alpha_fixed(x.bits)
    full = 1 << x.bits
    terms = spec.terms()
    pts = [p.with_bits(x.bits).frac for p in spec.singular_points()]
    vals = []
    for j in range(start, start + count):
        pos = x.frac + j * A
        total = 0.0 if derivative else spec.offset
        for i, (_, Ai, gr, Bi, gl) in enumerate(terms):
            diff = (pos - pts[i]) % full
            if diff == 0:
                raise SingularityProximity(f"orbit point j={j} hits singularity {i}", j=j, singularity=i, distance=0.0)
            u = diff / full
            v = (full - diff) / full
            if min(u, v) < sigma_min:
                raise SingularityProximity(
                    f"orbit point j={j} within {sigma_min:.3g} of singularity {i}", j=j, singularity=i, distance=min(u, v)
                )
            if derivative:
                total += Ai * _scalar_prime(u, gr) - Bi * _scalar_prime(v, gl)
            else:
                total += Ai * _scalar(u, gr) + Bi * _scalar(v, gl)
        vals.append(total)
    return math.fsum(vals)


def _scalar(u: float, gamma: float) -> float:
    return -math.log(u) if gamma == 0.0 else u**gamma


def _scalar_prime(u: float, gamma: float) -> float:
    return -1.0 / u if gamma == 0.0 else gamma * u ** (gamma - 1.0)


def birkhoff_batch(requests: Iterable[BirkhoffRequest], threads: int = 1, method: str = "fast") -> list[float]:
    """Evaluate independent requests; output order follows input order."""
    reqs = list(requests)
    if threads <= 1 or len(reqs) < 2:
        return [birkhoff_sum(r, method) for r in reqs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda r: birkhoff_sum(r, method), reqs))


# ---------------------------------------------------------------------------
# differences for nearby points
# ---------------------------------------------------------------------------


def _side_drop(w: np.ndarray, delta: float, gamma: float, sign: float) -> np.ndarray:
    """phi(w) - phi(w + sign*delta) without cancellation (w + sign*delta > 0)."""
    r = np.log1p(sign * delta / w)
    if gamma == 0.0:
        return r
    return -np.power(w, gamma) * np.expm1(gamma * r)


def _diff_values(spec: CeilingSpec, u: np.ndarray, v: np.ndarray, delta: float, sigma_min: float, start: int) -> np.ndarray:
    """Termwise f(x_j) - f(y_j) with y_j = x_j + delta (delta < 1/2)."""
    total = np.zeros(u.shape[1])
    for i, (_, A, gr, B, gl) in enumerate(spec.terms()):
        ui, vi = u[i], v[i]
        cross = vi <= delta  # the singularity lies in [x_j, y_j]
        uy = np.where(cross, delta - vi, ui + delta)
        vy = np.where(cross, 1.0 - uy, vi - delta)
        close = np.minimum(uy, vy) < sigma_min
        if close.any():
            col = int(np.nonzero(close)[0][0])
            raise SingularityProximity(
                f"orbit point j={start + col} of y within {sigma_min:.3g} of singularity {i}",
                j=start + col,
                singularity=i,
                distance=float(min(uy[col], vy[col])),
            )
        safe_u = np.where(cross, 0.5, ui)
        safe_v = np.where(cross, 0.75, vi)
        if A:
            smooth = _side_drop(safe_u, delta, gr, 1.0)
            total = total + A * np.where(cross, profile(ui, gr) - profile(np.where(cross, uy, 0.5), gr), smooth)
        if B:
            smooth = _side_drop(safe_v, delta, gl, -1.0)
            total = total + B * np.where(cross, profile(vi, gl) - profile(np.where(cross, vy, 0.5), gl), smooth)
    return total


def pair_offset(x: CirclePoint, y: CirclePoint) -> tuple[float, bool]:
    """Arc length from the left point to the right one, and whether y lies to the right of x."""
    d = y.minus(x)
    full = 1 << d.bits
    if d.frac == 0:
        raise ConfigInvalid("x and y coincide")
    if d.frac <= full // 2:
        return d.frac / full, True
    return (full - d.frac) / full, False


def birkhoff_diff(spec: CeilingSpec, cf: ContinuedFraction, x, y, n: int, sigma_min: float = SIGMA_MIN) -> float:
    """f^(n)(x) - f^(n)(y) evaluated term by term."""
    return float(diff_series(spec, cf, x, y, [n], sigma_min)[0])


def diff_series(
    spec: CeilingSpec,
    cf: ContinuedFraction,
    x,
    y,
    ns: Sequence[int],
    sigma_min: float = SIGMA_MIN,
) -> np.ndarray:
    """f^(n)(x) - f^(n)(y) for every n in ``ns`` (all of one sign or zero).

    One pass over the orbit segment reaching max |n|; running totals are kept
    with a compensated cumulative sum so every requested n is exact to a few
    ulps of the largest partial sum.
    """
    x = as_point(x)
    y = as_point(y, x.bits)
    ns = [int(n) for n in ns]
    if not ns:
        return np.zeros(0)
    if min(ns) < 0 < max(ns):
        raise ValueError("diff_series needs n values of one sign")
    left, y_right = pair_offset(x, y)
    base, other, flip = (x, y, 1.0) if y_right else (y, x, -1.0)
    negative = min(ns) < 0
    top = max(abs(n) for n in ns)
    start = -top if negative else 0
    _check_budget(cf, base, start, start + top)
    if top == 0:
        return np.zeros(len(ns))
    terms = np.empty(top)
    for off, length in _blocks(top, cf):
        u, v = _orbit_sides(spec, cf, base, start + off, length, sigma_min)
        terms[off : off + length] = _diff_values(spec, u, v, left, sigma_min, start + off)
    out = np.empty(len(ns))
    if negative:
        # f^(-m) = -(sum of the m terms just before index 0)
        for idx, n in enumerate(ns):
            m = -n
            out[idx] = -math.fsum(terms[top - m :]) if m else 0.0
    else:
        csum = _compensated_cumsum(terms)
        for idx, n in enumerate(ns):
            out[idx] = csum[n - 1] if n else 0.0
    return flip * out


def _compensated_cumsum(a: np.ndarray) -> np.ndarray:
    """Kahan-style running sums (exact enough for the O(1) drift signal)."""
    out = np.empty_like(a)
    s = 0.0
    c = 0.0
    for i, t in enumerate(a.tolist()):
        yv = t - c
        tt = s + yv
        c = (tt - s) - yv
        s = tt
        out[i] = s
    return out


def diff_prefix(spec, cf, x, y, n: int, sigma_min: float = SIGMA_MIN) -> np.ndarray:
    """[D(1), ..., D(|n|)] with D(m) = f^(±m)(x) - f^(±m)(y), sign following n."""
    if n == 0:
        return np.zeros(0)
    top = abs(n)
    if n > 0:
        return diff_series(spec, cf, x, y, list(range(1, top + 1)), sigma_min)
    x = as_point(x)
    y = as_point(y, x.bits)
    left, y_right = pair_offset(x, y)
    base = x if y_right else y
    flip = 1.0 if y_right else -1.0
    _check_budget(cf, base, -top, 0)
    terms = np.empty(top)
    for off, length in _blocks(top, cf):
        u, v = _orbit_sides(spec, cf, base, -top + off, length, sigma_min)
        terms[off : off + length] = _diff_values(spec, u, v, left, sigma_min, -top + off)
    # D(-m) = -sum_{j=-m}^{-1} terms ; reverse accumulate
    rev = _compensated_cumsum(terms[::-1])
    return -flip * rev


# ---------------------------------------------------------------------------
# non-resonance scans
# ---------------------------------------------------------------------------


def interval_hits(
    spec: CeilingSpec,
    cf: ContinuedFraction,
    x,
    y,
    j_start: int,
    count: int,
    radius: float,
    points: Sequence[int] | None = None,
) -> list[tuple[int, int]]:
    """(j, i) with T^j[x, y] meeting [a_i - radius, a_i + radius], j in [j_start, j_start+count)."""
    x = as_point(x)
    y = as_point(y, x.bits)
    left, y_right = pair_offset(x, y)
    base = x if y_right else y
    if count <= 0:
        return []
    hi, lo = _orbit_block(cf, base, j_start, count)
    hits = []
    allpts = spec.singular_points()
    idx = range(len(allpts)) if points is None else points
    for i in idx:
        ahi, alo = allpts[i].dd()
        dh, dl = _dd.sub_mod1(hi, lo, ahi, alo)
        u = dh + dl
        v = (1.0 - dh) - dl
        bad = np.nonzero((u <= radius) | (v <= radius + left))[0]
        hits.extend((j_start + int(c), int(i)) for c in bad)
    hits.sort()
    return hits


# ---------------------------------------------------------------------------
# bound verifiers
# ---------------------------------------------------------------------------


@dataclass
class DKResult:
    lower: float
    value: float
    upper: float
    passed: bool
    closest_index: int
    c0: float
    s: int

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("lower", "value", "upper", "passed", "closest_index", "c0", "s")}


def dk_verify(model, cf: ContinuedFraction, x, s: int, sigma_min: float = SIGMA_MIN) -> DKResult:
    """Denjoy-Koksma bracket for h'^(q_s)(x) of a pure model h singular at 0.

    c_0 is the infimum of h over (0,1), the limit h(1^-), found numerically.
    """
    if isinstance(model, CeilingSpec):
        model = model.h_model
    if not isinstance(model, SingularModel):
        model = SingularModel(float(model))
    x = as_point(x)
    q = cf.denominators[s]
    pure = CeilingSpec.power(model.gamma, 0.0, 1.0, 0.0, 0.0) if not model.is_log else CeilingSpec.log(0.0, 1.0, 0.0, 0.0)
    _check_budget(cf, x, 0, q)
    u, _v = _orbit_sides(pure, cf, x, 0, q, sigma_min)
    vals = profile_prime(u[0], model.gamma)
    value = math.fsum(vals)
    j = int(np.argmin(u[0]))
    c0 = _model_infimum(model)
    hs = model.scale(q)
    dhs = float(model.dh(1.0 / (2.0 * q)))
    upper = -q * (hs - c0) - 2.0 * dhs
    lower = float(vals[j]) - q * (hs - c0) + 2.0 * dhs
    return DKResult(lower, value, upper, bool(upper > value >= lower), j, c0, s)


def _model_infimum(model: SingularModel) -> float:
    grid = 1.0 - np.geomspace(1e-14, 0.5, 400)
    return float(min(np.min(model.h(grid)), model.h(1.0)))


def dk_truncated_check(model: SingularModel, cf: ContinuedFraction, x, s: int) -> dict:
    """|hbar^(q_s)(x) - q_s * int hbar| <= Var hbar for the truncated derivative."""
    x = as_point(x)
    q = cf.denominators[s]
    pure = CeilingSpec.log(0.0, 1.0, 0.0, 0.0) if model.is_log else CeilingSpec.power(model.gamma, 0.0, 1.0, 0.0, 0.0)
    u, _ = _orbit_sides(pure, cf, x, 0, q, SIGMA_MIN)
    cut = 1.0 / (2.0 * q)
    hbar = np.where(u[0] < cut, 0.0, profile_prime(u[0], model.gamma))
    total = math.fsum(hbar)
    integral = float(model.h(1.0)) - model.scale(q)
    var = abs(float(model.dh(cut))) + (float(model.dh(1.0)) - float(model.dh(cut))) + abs(float(model.dh(1.0)))
    dev = abs(total - q * integral)
    return {"deviation": dev, "variation": var, "passed": dev <= var * (1 + 1e-12)}


def default_d(spec: CeilingSpec) -> float:
    tot = spec.asymmetry()
    return tot - min(0.1, tot / 2.0)


def scale_vs(cf: ContinuedFraction, s: int, C: float, x_rule=None) -> float:
    """v_s = x_s / (4C)."""
    rule = get_rule(x_rule)
    return rule(s, cf.denominators[s]) / (4.0 * C)


@dataclass
class BracketResult:
    lhs: float
    mid: float
    rhs: float
    passed: bool
    s: int
    d: float
    distance: float

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("lhs", "mid", "rhs", "passed", "s", "d", "distance")}


def xcv_bracket_check(
    spec: CeilingSpec,
    cf: ContinuedFraction,
    x,
    y,
    s: int,
    d: float | None = None,
    C: float = 2.0,
    x_rule=None,
    check_resonance: bool = True,
) -> BracketResult:
    """(d+1) q h ||x-y|| >= f^(q)(x) - f^(q)(y) >= d q h ||x-y||, q = q_s, x left of y."""
    if spec.asymmetry() <= 0:
        raise ConfigInvalid("bracket needs sum(A_i - B_i) > 0")
    d = default_d(spec) if d is None else float(d)
    if d <= 0:
        raise ConfigInvalid("d must be positive")
    x = as_point(x)
    y = as_point(y, x.bits)
    dist, y_right = pair_offset(x, y)
    left, right = (x, y) if y_right else (y, x)
    q = cf.denominators[s]
    if check_resonance:
        v = scale_vs(cf, s, C, x_rule)
        hits = interval_hits(spec, cf, left, right, 0, q, 2.0 * v)
        if hits:
            j, i = hits[0]
            raise NonResonanceViolated(f"T^{j}[x,y] meets the 2v_s window of singularity {i}", j=j, i=i)
    mid = birkhoff_diff(spec, cf, left, right, q)
    scale = q * spec.h_model.scale(q) * dist
    lhs, rhs = (d + 1.0) * scale, d * scale
    return BracketResult(lhs, mid, rhs, bool(lhs >= mid >= rhs), s, d, dist)


@dataclass
class DriftSequence:
    s: int
    q: int
    e: list[float]
    increments: list[float]
    lower: list[float]
    upper: list[float]
    bracket_ok: list[bool]
    increments_ok: list[bool]
    resonance_ok: list[bool]
    d: float
    distance: float

    def csv_rows(self) -> list[tuple[int, float]]:
        return list(enumerate(self.e))


def drift_sequence(
    spec: CeilingSpec,
    cf: ContinuedFraction,
    x,
    y,
    s: int,
    R_max: int,
    d: float | None = None,
    C: float = 2.0,
    x_rule=None,
    direction: int = 1,
) -> DriftSequence:
    """e_R = f^(R q_s)(x) - f^(R q_s)(y) for R = 0..R_max (``direction=-1``: negative times)."""
    d = default_d(spec) if d is None else float(d)
    x = as_point(x)
    y = as_point(y, x.bits)
    dist, y_right = pair_offset(x, y)
    left, right = (x, y) if y_right else (y, x)
    q = cf.denominators[s]
    if R_max == 0:
        return DriftSequence(s, q, [0.0], [], [0.0], [0.0], [True], [], [], d, dist)
    ns = [direction * R * q for R in range(1, R_max + 1)]
    e = [0.0] + [float(v) for v in diff_series(spec, cf, left, right, ns)]
    inc = [e[R + 1] - e[R] for R in range(R_max)]
    scale = q * spec.h_model.scale(q) * dist
    lower = [R * d * scale for R in range(R_max + 1)]
    upper = [R * (d + 1.0) * scale for R in range(R_max + 1)]
    sgn = 1.0 if direction > 0 else -1.0
    ok = [lower[R] <= sgn * e[R] <= upper[R] for R in range(R_max + 1)]
    v = scale_vs(cf, s, C, x_rule)
    res_ok = []
    for R in range(R_max):
        j0 = R * q if direction > 0 else -(R + 1) * q
        res_ok.append(not interval_hits(spec, cf, left, right, j0, q, 2.0 * v))
    inc_ok = [abs(t) < d + 1.0 for t in inc]
    return DriftSequence(s, q, e, inc, lower, upper, ok, inc_ok, res_ok, d, dist)
