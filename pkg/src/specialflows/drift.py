"""Drift of Birkhoff-sum differences into a band P and the switchable window.

For a close pair (x, y) the difference D(n) = f^(n)(x) - f^(n)(y) grows in
steps whose size is governed by visits near the singularities.  The
functions here locate the first time D enters a band P bounded away from
zero (forward or backward in time), then test that D stays within epsilon of
that value over a window of relative length kappa.  A second group of
functions builds the bounded-type power-singularity pairs for which D jumps
over P in a single step.
"""

from __future__ import annotations

import math
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
import numpy as np

from .arithmetic import CirclePoint, ContinuedFraction, get_rule, orbit_dd
from .birkhoff import (
    as_point,
    default_d,
    diff_prefix,
    diff_series,
    interval_hits,
    pair_offset,
)
from .ceiling import CeilingSpec, derivative_bound_H
from .errors import (
    ConfigInvalid,
    ConstructionFailed,
    NoDriftFound,
    NonResonanceBothSides,
    OutOfRange,
    SpecialFlowError,
)

FORWARD = "forward"
BACKWARD = "backward"


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------


@dataclass
class DriftParams:
    """User-facing knobs; every ``None`` is filled from the model formulas."""

    epsilon: float = 0.1
    N: int = 1
    C: float = 2.0
    kappa: float | None = None
    d: float | None = None
    m0: float | None = None
    D1: float | None = None
    D2: float | None = None
    H: float | None = None
    P_band: tuple[float, float] | None = None
    x_rule: str | None = None
    s0: int | None = None
    margin: float = 1e-3

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items()}


@dataclass
class Resolved:
    """Effective constants for one (spec, cf) combination."""

    model: str
    epsilon: float
    N: int
    C: float
    kappa: float
    d: float
    H: float
    k: int
    P_band: tuple[float, float]
    m0: float | None = None
    D1: float | None = None
    D2: float | None = None
    C_k: float | None = None
    c: float | None = None
    s0: int = 1
    x_rule: str = "log78"
    notes: list[str] = field(default_factory=list)

    def in_band(self, value: float) -> bool:
        lo, hi = self.P_band
        return lo <= abs(value) <= hi

    def to_dict(self) -> dict:
        out = asdict(self)
        out["P_band"] = [-self.P_band[1], -self.P_band[0], self.P_band[0], self.P_band[1]]
        return out


def ratio_bound(cf: ContinuedFraction) -> float:
    """c with q_{s+1} <= c q_s over the expanded depth."""
    qs = cf.denominators
    return max(qs[i + 1] / qs[i] for i in range(len(qs) - 1))


def estimate_m0(spec: CeilingSpec, cf: ContinuedFraction) -> float:
    h = spec.h_model
    qs = cf.denominators
    return min(h.scale(qs[i]) / h.scale(qs[i + 1]) for i in range(len(qs) - 1))


def estimate_D(spec: CeilingSpec, cf: ContinuedFraction, C: float) -> tuple[float, float]:
    """Observed min/max of the two ratio families bounding D1 < . < D2."""
    h = spec.h_model
    qs = cf.denominators
    first = []
    for q in qs:
        first.append(-float(h.dh(1.0 / (C**4 * q))) / (q * h.scale(q)))
    second = [h.scale(qs[i]) / h.scale(qs[i + 1]) for i in range(len(qs) - 1)]
    return min(min(first), min(second)), max(first)


def default_s0(cf: ContinuedFraction, epsilon: float, k: int, x_rule=None) -> int:
    """Smallest s with sum_{s' >= s, s' not in K_alpha} x_{s'} q_{s'} < epsilon/(16k)."""
    rule = get_rule(x_rule)
    qs = cf.denominators
    top = len(qs) - 2
    tail = 0.0
    s0 = top + 1
    for s in range(top, 0, -1):
        inside = qs[s + 1] < 1.0 / rule(s, qs[s])
        if not inside:
            tail += rule(s, qs[s]) * qs[s]
        if tail >= epsilon / (16.0 * k):
            break
        s0 = s
    return max(s0, 1)


def resolve(params: DriftParams, spec: CeilingSpec, cf: ContinuedFraction) -> Resolved:
    H = params.H if params.H is not None else derivative_bound_H(spec)
    k = spec.k
    C = params.C
    if C <= 1:
        raise ConfigInvalid("C must exceed 1")
    rule = get_rule(params.x_rule)
    if spec.model == "log":
        if spec.asymmetry() <= 0:
            raise ConfigInvalid("drift needs sum(A_i - B_i) > 0")
        d = params.d if params.d is not None else default_d(spec)
        m0 = params.m0 if params.m0 is not None else estimate_m0(spec, cf)
        kappa = params.kappa if params.kappa is not None else params.epsilon * m0 * d / (64.0 * (d + 1.0) * H * k)
        band = params.P_band or (d * m0 / (32.0 * C), 2.0 * (d + 1.0))
        s0 = params.s0 if params.s0 is not None else default_s0(cf, params.epsilon, k, rule)
        out = Resolved("log", params.epsilon, params.N, C, kappa, d, H, k, tuple(band), m0=m0, s0=s0, x_rule=rule.name)
    else:
        strong = spec.singularities[-1]
        C_k = max(strong.A, strong.B)
        if C_k <= 0:
            raise ConfigInvalid("the last strong singularity needs A^2 + B^2 > 0")
        lo, hi = estimate_D(spec, cf, C)
        D1 = params.D1 if params.D1 is not None else lo * (1.0 - params.margin)
        D2 = params.D2 if params.D2 is not None else hi * (1.0 + params.margin)
        c = ratio_bound(cf)
        eps_cap = C_k * D1 * D1 / (8.0 * c)
        eps = params.epsilon
        notes = []
        if eps >= eps_cap:
            eps = 0.5 * eps_cap
            notes.append(f"epsilon lowered to {eps:.6g} to satisfy epsilon < C_k D1^2/(8c) = {eps_cap:.6g}")
        kappa = params.kappa if params.kappa is not None else eps / (2.0 * (3.0 * D2 + 2.0) * k * C * H)
        band = params.P_band or (C_k * D1 * D1 / (16.0 * c), 12.0 * H * k * (D2 + 2.0))
        s0 = params.s0 if params.s0 is not None else 4
        out = Resolved(
            "power", eps, params.N, C, kappa, params.d if params.d is not None else 0.0, H, k, tuple(band),
            D1=D1, D2=D2, C_k=C_k, c=c, s0=s0, x_rule=rule.name, notes=notes,
        )
    if not (0 < out.kappa < 1):
        raise ConfigInvalid(f"kappa={out.kappa} outside (0,1)")
    if not (0 < out.P_band[0] < out.P_band[1]):
        raise ConfigInvalid("P band must be a nonempty interval away from 0")
    return out


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


@dataclass
class DriftReport:
    scale_s: int
    direction: str
    n0: int
    p: float
    window: tuple[int, int]
    window_good_fraction: float
    branch: str
    drift_time: int
    window_choice: str
    scale_used: int
    nominal: bool
    budget_ok: bool | None
    cocycle_fraction: float
    success: bool
    alternatives: dict = field(default_factory=dict)
    trace: list[float] = field(default_factory=list)
    distance: float = 0.0
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["window"] = list(self.window)
        return out


# ---------------------------------------------------------------------------
# scales
# ---------------------------------------------------------------------------


def scale_thresholds(spec: CeilingSpec, cf: ContinuedFraction) -> list[float]:
    h = spec.h_model
    return [1.0 / (q * h.scale(q)) for q in cf.denominators]


def _distance(x, y) -> float:
    x = as_point(x)
    y = as_point(y, x.bits)
    return pair_offset(x, y)[0]


def find_scale(x, y, spec: CeilingSpec, cf: ContinuedFraction, convention: str | None = None) -> int:
    """s with theta_{s+1} < ||x-y|| <= theta_s, theta_s = 1/(q_s h(1/(2 q_s))).

    ``convention="power"`` uses the half-open variant theta_{s+1} <= . < theta_s.
    """
    dist = x if isinstance(x, float) and y is None else _distance(x, y)
    th = scale_thresholds(spec, cf)
    conv = convention or spec.model
    if len(th) < 3:
        raise OutOfRange("expansion too short")
    if conv == "power":
        if not (dist < th[1]):
            raise OutOfRange(f"distance {dist:.3g} not below theta_1 = {th[1]:.3g}")
        for s in range(1, len(th) - 1):
            if th[s + 1] <= dist < th[s]:
                return s
    else:
        if not (dist <= th[1]):
            raise OutOfRange(f"distance {dist:.3g} above theta_1 = {th[1]:.3g}")
        for s in range(1, len(th) - 1):
            if th[s + 1] < dist <= th[s]:
                return s
    raise OutOfRange(f"distance {dist:.3g} below the deepest expanded scale")


def _pair(x, y):
    x = as_point(x)
    y = as_point(y, x.bits)
    dist, y_right = pair_offset(x, y)
    return (x, y, dist) if y_right else (y, x, dist)


# ---------------------------------------------------------------------------
# switchable window
# ---------------------------------------------------------------------------


def verify_switchable_window(X, Y, params, direction: str, L: int, spec: CeilingSpec = None, cf: ContinuedFraction = None) -> float:
    """Fraction of n in [1, L] with |f^(±n)(X) - f^(±n)(Y)| < epsilon.

    ``direction`` picks the sign of n: forward ("A") or backward ("B").
    """
    if L <= 0:
        return 1.0
    if spec is None or cf is None:
        raise ConfigInvalid("spec and cf are required for a nonempty window")
    eps = params.epsilon
    sign = 1 if direction in (FORWARD, "A", "forward", 1) else -1
    vals = diff_prefix(spec, cf, X, Y, sign * L)
    return float(np.mean(np.abs(vals) < eps))


def _window(spec, cf, res: Resolved, x, y, direction: str, T0: int) -> dict:
    """Part-b window after the drift time T0 (in the given time direction)."""
    if direction == FORWARD:
        X, Y = x.rotate(cf, T0), y.rotate(cf, T0)
    else:
        X, Y = x.rotate(cf, -(T0 + 1)), y.rotate(cf, -(T0 + 1))
    Lw = int(math.floor(res.kappa * T0)) + 1
    A = diff_prefix(spec, cf, X, Y, Lw)
    B = diff_prefix(spec, cf, X, Y, -Lw)
    fa = float(np.mean(np.abs(A) < res.epsilon))
    fb = float(np.mean(np.abs(B) < res.epsilon))
    if fa == 1.0 or fa >= fb:
        choice, frac, M = "A", fa, T0
    else:
        choice, frac, M = "B", fb, int(math.floor(T0 / (1.0 + res.kappa)))
    L = int(math.floor(res.kappa * M)) + 1
    return {"choice": choice, "fraction": frac, "M": M, "L": L, "fraction_A": fa, "fraction_B": fb, "check_length": Lw}


def _cocycle_fraction(spec, cf, res, x, y, direction, p, M, L) -> float:
    """Share of n in [M, M+L] with |D(±n) - p| < epsilon (the Ratner-type conclusion)."""
    sign = 1 if direction == FORWARD else -1
    ns = [sign * n for n in range(max(M, 0), M + L + 1)]
    if not ns:
        return 1.0
    vals = diff_series(spec, cf, x, y, ns)
    return float(np.mean(np.abs(vals - p) < res.epsilon))


# ---------------------------------------------------------------------------
# logarithmic case
# ---------------------------------------------------------------------------


def find_drift_log(x, y, params: DriftParams, spec: CeilingSpec, cf: ContinuedFraction, resolved: Resolved | None = None) -> DriftReport:
    """First n0 with f^(±n0 q)(x) - f^(±n0 q)(y) in P, q the working scale."""
    if spec.model != "log":
        raise ConfigInvalid("find_drift_log needs a log-model ceiling")
    res = resolved or resolve(params, spec, cf)
    x, y, dist = _pair(x, y)
    s = find_scale(x, y, spec, cf, "log")
    qs = cf.denominators
    if s + 1 >= len(qs):
        raise OutOfRange("scale beyond expansion depth")
    faithful = qs[s + 1] > 2 * qs[s]
    m = s if faithful else s - 1
    if m < 1:
        raise OutOfRange("pair too far apart for the fallback scale")
    q, qn = qs[m], qs[m + 1]
    rule = get_rule(res.x_rule)
    v = rule(m, q) / (4.0 * res.C)
    J = max(int(qn // (4 * res.C)), q)
    fwd_hits = interval_hits(spec, cf, x, y, 0, J + 1, v)
    bwd_hits = interval_hits(spec, cf, x, y, -J, J + 1, v)
    branches = {FORWARD: not fwd_hits, BACKWARD: not bwd_hits}
    if not any(branches.values()):
        raise NonResonanceBothSides(
            "neither forward nor backward orbit of [x,y] avoids the v_m windows",
            forward_hit=tuple(fwd_hits[0]),
            backward_hit=tuple(bwd_hits[0]),
        )
    nmax = max(int(qn // (8 * res.C * q)), 1)
    found = {}
    traces = {}
    for direction in (FORWARD, BACKWARD):
        if not branches[direction]:
            continue
        sign = 1 if direction == FORWARD else -1
        e = diff_series(spec, cf, x, y, [sign * R * q for R in range(1, nmax + 1)])
        traces[direction] = [0.0] + [float(t) for t in e]
        for R, val in enumerate(e, start=1):
            if res.in_band(val):
                found[direction] = (R, float(val))
                break
    if not found:
        direction = FORWARD if branches[FORWARD] else BACKWARD
        raise NoDriftFound(f"no n0 <= {nmax} with e_n0 in P", trace=traces.get(direction, []), direction=direction)
    direction = min(found, key=lambda dname: (found[dname][0], dname != FORWARD))
    n0, p = found[direction]
    T0 = n0 * q
    budget = T0 * spec.h_model.scale(q) <= 2.0 * (res.d + 1.0) / (res.d * dist)
    win = _window(spec, cf, res, x, y, direction, T0)
    M, L = win["M"], win["L"]
    coc = _cocycle_fraction(spec, cf, res, x, y, direction, p, M, L)
    ok = res.in_band(p) and L / M >= res.kappa and win["fraction"] == 1.0 and M >= res.N and L >= res.N
    branch = "forward_clear" if direction == FORWARD else "backward_clear"
    trace = traces[direction]
    return DriftReport(
        scale_s=s,
        direction=direction,
        n0=n0,
        p=p,
        window=(M, L),
        window_good_fraction=win["fraction"],
        branch=branch,
        drift_time=T0,
        window_choice=win["choice"],
        scale_used=m,
        nominal=faithful,
        budget_ok=bool(budget),
        cocycle_fraction=coc,
        success=bool(ok),
        alternatives={dname: {"n0": v[0], "p": v[1]} for dname, v in found.items()},
        trace=trace,
        distance=dist,
        params=res.to_dict(),
    )


# ---------------------------------------------------------------------------
# power case
# ---------------------------------------------------------------------------


def _power_candidates(spec, cf, res, x, y, s, direction):
    """(i0, T0, value) for the first singular visit that lands D in P."""
    qs = cf.denominators
    lo_i, hi_i = qs[s - 4], qs[s - 2] - 2
    strong = spec.singularities[-1]
    a = CirclePoint.from_value(strong.a, x.bits)
    right_side = strong.A >= strong.B
    width = 1.0 / qs[s - 4]
    sign = 1 if direction == FORWARD else -1
    D = diff_prefix(spec, cf, x, y, sign * (qs[s - 2]))  # D[n-1] = D(±n)
    D = np.concatenate(([0.0], D))
    A_, _ = cf.alpha_fixed(x.bits)
    full = 1 << x.bits
    for i0 in range(lo_i, hi_i + 1):
        j = i0 if direction == FORWARD else -(i0 + 1)
        off = ((x.frac + j * A_ - a.frac) % full) / full
        inside = off <= width if right_side else off >= 1.0 - width
        if not inside:
            continue
        for T0 in (i0 + 1, i0):
            if res.in_band(D[T0]):
                return i0, T0, float(D[T0]), D
        return i0, None, None, D
    return None, None, None, D


def find_drift_power(x, y, params: DriftParams, spec: CeilingSpec, cf: ContinuedFraction, resolved: Resolved | None = None, bound: int = 10) -> DriftReport:
    """Single-visit jump of D into P for a dominant power singularity."""
    if spec.model != "power":
        raise ConfigInvalid("find_drift_power needs a power-model ceiling")
    if not all(a <= bound for a in cf.quotients):
        raise ConfigInvalid(f"rotation number is not of bounded type (a_s <= {bound})")
    res = resolved or resolve(params, spec, cf)
    x, y, dist = _pair(x, y)
    s = find_scale(x, y, spec, cf, "power")
    qs = cf.denominators
    if s < 4 or s + 1 >= len(qs):
        raise OutOfRange("scale must satisfy 4 <= s < depth")
    radius = 1.0 / (2.0 * res.C * qs[s])
    strong_idx = list(range(len(spec.singularities)))
    pos_hits = interval_hits(spec, cf, x, y, 0, qs[s - 2], radius, strong_idx)
    neg_hits = interval_hits(spec, cf, x, y, -qs[s - 2], qs[s - 2], radius, strong_idx)
    branches = {FORWARD: not pos_hits, BACKWARD: not neg_hits}
    if not any(branches.values()):
        raise NonResonanceBothSides(
            "orbit of [x,y] meets the strong windows in both time directions",
            forward_hit=tuple(pos_hits[0]),
            backward_hit=tuple(neg_hits[0]),
        )
    found = {}
    traces = {}
    for direction in (FORWARD, BACKWARD):
        if not branches[direction]:
            continue
        i0, T0, val, D = _power_candidates(spec, cf, res, x, y, s, direction)
        traces[direction] = [float(t) for t in D]
        if T0 is not None:
            found[direction] = (i0, T0, val)
    if not found:
        direction = FORWARD if branches[FORWARD] else BACKWARD
        raise NoDriftFound("no singular visit pushed D into P", trace=traces.get(direction, []), direction=direction)
    direction = min(found, key=lambda dname: (found[dname][0], dname != FORWARD))
    i0, T0, p = found[direction]
    win = _window(spec, cf, res, x, y, direction, T0)
    M, L = win["M"], win["L"]
    coc = _cocycle_fraction(spec, cf, res, x, y, direction, p, M, L)
    ok = res.in_band(p) and M > 0 and L / M >= res.kappa and win["fraction"] == 1.0 and M >= res.N and L >= res.N
    return DriftReport(
        scale_s=s,
        direction=direction,
        n0=i0,
        p=p,
        window=(M, L),
        window_good_fraction=win["fraction"],
        branch="forward_clear" if direction == FORWARD else "backward_clear",
        drift_time=T0,
        window_choice=win["choice"],
        scale_used=s,
        nominal=True,
        budget_ok=None,
        cocycle_fraction=coc,
        success=bool(ok),
        alternatives={dname: {"i0": v[0], "time": v[1], "p": v[2]} for dname, v in found.items()},
        trace=traces[direction],
        distance=dist,
        params=res.to_dict(),
    )


def find_drift(x, y, params: DriftParams, spec: CeilingSpec, cf: ContinuedFraction, resolved: Resolved | None = None) -> DriftReport:
    if spec.model == "log":
        return find_drift_log(x, y, params, spec, cf, resolved)
    return find_drift_power(x, y, params, spec, cf, resolved)


# ---------------------------------------------------------------------------
# ensembles
# ---------------------------------------------------------------------------


def in_excluded_set(spec: CeilingSpec, cf: ContinuedFraction, x, res: Resolved, depth: int | None = None) -> bool:
    """True if x falls in some B_s exclusion (log) or weak-singularity exclusion (power) up to depth.

    Membership in the complement is therefore "not excluded up to depth".
    """
    x = as_point(x)
    qs = cf.denominators
    top = min(len(qs) - 2, depth if depth is not None else len(qs) - 2)
    rule = get_rule(res.x_rule)
    if res.model == "log":
        for s in range(max(res.s0, 1), top + 1):
            if qs[s + 1] < 1.0 / rule(s, qs[s]):
                continue  # s in K_alpha
            v = rule(s, qs[s]) / (4.0 * res.C)
            if _point_hits(spec, cf, x, -qs[s], 2 * qs[s], 4.0 * v, None):
                return True
        return False
    weak = list(range(len(spec.singularities), len(spec.points)))
    if not weak:
        return False
    pow_rule = get_rule("inv_s2")
    for s in range(max(res.s0, 1), top + 1):
        if _point_hits(spec, cf, x, -qs[s], 2 * qs[s], pow_rule(s, qs[s]), weak):
            return True
    return False


def _point_hits(spec, cf, x, start, count, radius, idx) -> bool:
    from . import _dd

    hi, lo = orbit_dd(cf, x, start, count)
    pts = spec.singular_points()
    for i in range(len(pts)) if idx is None else idx:
        ahi, alo = pts[i].dd()
        dh, dl = _dd.sub_mod1(hi, lo, ahi, alo)
        u = dh + dl
        w = (1.0 - dh) - dl
        if np.any((u < radius) | (w < radius)):
            return True
    return False


def sample_pairs(spec, cf, res: Resolved, count: int, seed: int, s_range: tuple[int, int]) -> list[tuple[CirclePoint, CirclePoint]]:
    """Pairs from the sieved set with log-uniform distances spanning scales s_range."""
    th = scale_thresholds(spec, cf)
    s_lo, s_hi = s_range
    if s_hi + 1 >= len(th):
        raise ConfigInvalid("scale range exceeds expansion depth")
    top, bottom = math.log(th[s_lo]), math.log(th[s_hi + 1])
    rng = np.random.default_rng(seed)
    out = []
    attempts = 0
    while len(out) < count:
        attempts += 1
        if attempts > 200 * max(count, 1):
            raise ConstructionFailed("sieved set too thin for pair sampling", stage="pairs", diagnostics={"attempts": attempts})
        x = CirclePoint.from_value(float(rng.random()))
        dist = math.exp(rng.uniform(bottom, top))
        if dist >= th[s_lo]:
            continue
        y = x.shift(dist)
        if in_excluded_set(spec, cf, x, res) or in_excluded_set(spec, cf, y, res):
            continue
        out.append((x, y))
    return out


def _run_pair(args):
    x, y, params, spec, cf, res = args
    try:
        rep = find_drift(x, y, params, spec, cf, res)
        return {"ok": rep.success, "report": rep, "error": None}
    except SpecialFlowError as exc:
        return {"ok": False, "report": None, "error": type(exc).__name__}


def swr_ensemble(
    params: DriftParams,
    spec: CeilingSpec,
    cf: ContinuedFraction,
    pair_count: int,
    rng_seed: int,
    s_range: tuple[int, int] | None = None,
    threads: int = 1,
) -> dict:
    """Run the drift search on sieved pairs and aggregate the outcomes."""
    res = resolve(params, spec, cf)
    if pair_count <= 0:
        return {"pairs": 0, "success_rate": None, "direction_histogram": {}, "median_n0": None, "branch_stats": {}, "errors": {}, "params": res.to_dict()}
    if s_range is None:
        s_range = (8, 14)
    pairs = sample_pairs(spec, cf, res, pair_count, rng_seed, s_range)
    jobs = [(x, y, params, spec, cf, res) for x, y in pairs]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_run_pair, jobs))
    else:
        results = [_run_pair(j) for j in jobs]
    hist: dict[str, int] = {}
    branches: dict[str, int] = {}
    errors: dict[str, int] = {}
    n0s = []
    successes = 0
    faithful = 0
    checks_ok = True
    for r in results:
        rep = r["report"]
        if rep is None:
            errors[r["error"]] = errors.get(r["error"], 0) + 1
            continue
        hist[rep.direction] = hist.get(rep.direction, 0) + 1
        branches[rep.branch] = branches.get(rep.branch, 0) + 1
        n0s.append(rep.n0)
        faithful += rep.nominal
        if rep.success:
            successes += 1
            M, L = rep.window
            checks_ok &= res.in_band(rep.p) and L / M >= res.kappa and rep.window_good_fraction == 1.0
        else:
            key = "window" if res.in_band(rep.p) else "band"
            errors[key] = errors.get(key, 0) + 1
    return {
        "pairs": pair_count,
        "success_rate": successes / pair_count,
        "direction_histogram": dict(sorted(hist.items())),
        "median_n0": statistics.median(n0s) if n0s else None,
        "branch_stats": dict(sorted(branches.items())),
        "errors": dict(sorted(errors.items())),
        "nominal_runs": faithful,
        "success_checks_ok": bool(checks_ok),
        "s_range": list(s_range),
        "params": res.to_dict(),
    }


# ---------------------------------------------------------------------------
# failure of the weak Ratner property
# ---------------------------------------------------------------------------


@dataclass
class WRConstruction:
    w: int
    gamma: float
    c: float
    d: float
    l: int
    t: int
    c1: int
    delta0: float
    delta0_range: tuple[float, float]
    delta0_in_range: bool
    stages: list[dict]
    first_stage: int
    skipped_stages: list[int]
    nominal: bool
    rotation_gaps: dict
    samples: list[dict]
    w02_measure: float
    w0_measure: float
    window: float
    max_gap: float
    delta0_point: CirclePoint = field(repr=False, default=None)

    def to_dict(self) -> dict:
        out = asdict(self)
        out.pop("delta0_point", None)
        return out


_FIX = 128


def _longest_free_subinterval(lo: int, hi: int, centers: np.ndarray, radius: int):
    """Longest closed [a, b] in [lo, hi] avoiding the open balls (c - r, c + r); integers in 2^-128 units."""
    blocks = sorted((int(cc) - radius, int(cc) + radius) for cc in centers if int(cc) + radius > lo and int(cc) - radius < hi)
    best = None
    cur = lo
    for a, b in blocks:
        if a > cur:
            seg = (cur, min(a, hi))
            if best is None or seg[1] - seg[0] > best[1] - best[0]:
                best = seg
        cur = max(cur, b)
        if cur >= hi:
            break
    if cur < hi:
        seg = (cur, hi)
        if best is None or seg[1] - seg[0] > best[1] - best[0]:
            best = seg
    if best is None or best[1] <= best[0]:
        return None
    return best


def _orbit_near(cf: ContinuedFraction, lo_idx: int, hi_idx: int, lo: int, hi: int, pad: int) -> list[int]:
    """Fixed-point {i alpha} for i in [lo_idx, hi_idx) that fall within pad of [lo, hi]."""
    A, _ = cf.alpha_fixed(_FIX)
    full = 1 << _FIX
    hi_f, lo_f = orbit_dd(cf, CirclePoint(0, _FIX), lo_idx, hi_idx - lo_idx)
    pos = hi_f + lo_f
    span_lo, span_hi = (lo - pad) / full, (hi + pad) / full
    idx = np.nonzero((pos >= span_lo - 1e-12) & (pos <= span_hi + 1e-12))[0]
    return [((lo_idx + int(i)) * A) % full for i in idx]


def construct_delta0(cf: ContinuedFraction, gamma: float, w: int, c: float, max_q: int = 1 << 21) -> dict:
    """Nested-interval construction of delta_0 over stages k = t - c1, t - c1 + 1, ..."""
    qs = cf.denominators
    target = qs[w] ** (1.0 - gamma)
    t = None
    for s in range(len(qs) - 2):
        if qs[s + 1] <= target < qs[s + 2]:
            t = s
            break
    if t is None:
        raise ConstructionFailed("expansion too short to locate t", stage="t", diagnostics={"target": target})
    full = 1 << _FIX
    c1 = int(math.ceil(4 * c))
    k0 = t - c1
    interval = (full // qs[t + 1], 2 * full // qs[t + 1])
    stages = []
    skipped = list(range(k0, max(k0, 1)))
    first = None
    k = max(k0, 1)
    while k < len(qs) and qs[k] <= max_q:
        radius = -(-full // (2 * k * k * qs[k]))
        centers = _orbit_near(cf, -qs[k], qs[k], interval[0], interval[1], radius)
        nxt = _longest_free_subinterval(interval[0], interval[1], centers, radius)
        if nxt is None:
            if first is None:
                skipped.append(k)
                stages.append({"k": k, "empty": True})
                k += 1
                continue
            raise ConstructionFailed(
                f"stage E_{k} is empty", stage=f"E_{k}",
                diagnostics={"previous": [interval[0] / full, interval[1] / full], "stages": stages},
            )
        if first is None:
            first = k
        interval = nxt
        stages.append({"k": k, "empty": False, "lo": nxt[0] / full, "hi": nxt[1] / full, "length": (nxt[1] - nxt[0]) / full, "q_k": qs[k]})
        k += 1
    if first is None:
        raise ConstructionFailed("every stage came out empty", stage="E", diagnostics={"t": t, "c1": c1, "stages": stages})
    mid = (interval[0] + interval[1]) // 2
    return {"t": t, "c1": c1, "k0": k0, "first_stage": first, "skipped": skipped, "stages": stages, "delta0": Fraction(mid, full)}


def rotation_gap_check(cf: ContinuedFraction, delta0: Fraction, zeta: float, k_max: int = 10_000, k_min: int = 1) -> dict:
    """Spot-check ||delta0 - k alpha|| >= |k|^(-1-zeta) for k_min <= |k| <= k_max."""
    A, _ = cf.alpha_fixed(_FIX)
    full = 1 << _FIX
    d0 = int(delta0 * full)
    fails = []
    worst = math.inf
    for sgn in (1, -1):
        for k in range(k_min, k_max + 1):
            diff = (d0 - sgn * k * A) % full
            dist = min(diff, full - diff) / full
            ratio = dist * k ** (1.0 + zeta)
            worst = min(worst, ratio)
            if ratio < 1.0:
                fails.append(sgn * k)
    return {"k_max": k_max, "k_min": k_min, "failures": fails[:50], "failure_count": len(fails), "min_scaled_distance": worst, "passed": not fails}


def _scale_l(qs, w: int, gamma: float, d: float) -> int | None:
    qw = qs[w]
    for cand in range(1, w + 1):
        if (qs[w - cand] / qw) ** (1.0 - gamma) <= 1.0 / d < (qs[w - cand + 1] / qw) ** (1.0 - gamma):
            return cand
    return None


def w0_segments(cf: ContinuedFraction, w: int, l: int, d: float, window: float) -> tuple[list[tuple[int, float, float]], float]:
    """Exact description of W_0 through (i0, z) with x = z - i0 alpha.

    x is in W_{0,2} with hitting index i0 iff z = x + i0 alpha lies in
    [1/(2 d q_w), 1/(d q_w)].  The orbit x + j alpha, j < w q_w, avoids
    [-window, 0) iff no m = j - i0 has {m alpha} = 1 - eta with
    z < eta <= z + window.  Returns the allowed z segments per i0 and
    their total length (= lambda(W_0), the sets T^{-i0}[...] being disjoint).
    """
    qs = cf.denominators
    qw = qs[w]
    n_orbit = w * qw
    q_wl = qs[w - l]
    lo_t, hi_t = 1.0 / (2.0 * d * qw), 1.0 / (d * qw)
    cap = hi_t + window
    m_lo = -(q_wl - 1)
    hi_f, lo_f = orbit_dd(cf, CirclePoint(0, _FIX), m_lo, n_orbit - m_lo)
    eta = (1.0 - hi_f) - lo_f
    near = np.nonzero((eta > 0) & (eta <= cap))[0]
    ms = m_lo + near
    etas = eta[near]
    segments = []
    total = 0.0
    for i0 in range(q_wl):
        keep = (ms >= -i0) & (ms < n_orbit - i0) & (ms != 0)
        bad = sorted((max(e - window, lo_t), min(e, hi_t)) for e in etas[keep] if e - window < hi_t and e > lo_t)
        cur = lo_t
        for a, b in bad:
            if a > cur:
                segments.append((i0, cur, a))
                total += a - cur
            cur = max(cur, b)
        if cur < hi_t:
            segments.append((i0, cur, hi_t))
            total += hi_t - cur
    return segments, total


def wr_failure_construct(
    cf: ContinuedFraction,
    gamma: float,
    r: float,
    w: int,
    zeta: float | None = None,
    d: float | None = None,
    samples: int = 50,
    seed: int = 0,
    bound: int = 10,
    gap_kmax: int = 10_000,
) -> WRConstruction:
    """Build delta_0 and sample x uniformly from W_0 = W_{0,1} ∩ W_{0,2}.

    W_{0,1} is taken one-sided (orbit avoiding [-2c/q_w^(1-gamma), 0)); the
    two-sided window contains the W_{0,2} target and would leave W_0 empty,
    while the one-sided one is what keeps 0 out of every T^i[x, x + delta_0].
    """
    if not (-1.0 < gamma < 0.0):
        raise ConfigInvalid("gamma must lie in (-1, 0)")
    if not all(a <= bound for a in cf.quotients):
        raise ConfigInvalid("rotation number must be of bounded type")
    if r <= 0:
        raise ConfigInvalid("offset r must be positive")
    qs = cf.denominators
    if w + 2 >= len(qs):
        raise ConfigInvalid("w exceeds the expansion depth")
    zeta = abs(gamma) / 50.0 if zeta is None else zeta
    c = ratio_bound(cf)
    d = 2.0 * math.sqrt(400.0 * c / abs(gamma)) if d is None else float(d)
    if d <= c ** (1.0 - gamma):
        raise ConfigInvalid("d must exceed c^(1-gamma)")
    qw = qs[w]
    l = _scale_l(qs, w, gamma, d)
    if l is None:
        raise ConstructionFailed("no l satisfies the scale condition", stage="l", diagnostics={"w": w, "d": d})
    built = construct_delta0(cf, gamma, w, c)
    delta0 = built["delta0"]
    rng_lo, rng_hi = 1.0 / qw ** (1.0 - gamma), 2.0 * c / qw ** (1.0 - gamma)
    d3 = rotation_gap_check(cf, delta0, zeta, gap_kmax)
    window = 2.0 * c / qw ** (1.0 - gamma)
    n_orbit = w * qw
    hi_f, lo_f = orbit_dd(cf, CirclePoint(0, _FIX), 0, n_orbit)
    pts = np.sort(hi_f + lo_f)
    max_gap = float(max(np.max(np.diff(pts)), pts[0] + 1.0 - pts[-1]))
    w02 = qs[w - l] / (2.0 * d * qw)
    base = {
        "w": w, "gamma": gamma, "c": c, "d": d, "l": l, "t": built["t"], "c1": built["c1"],
        "delta0": float(delta0), "delta0_range": (rng_lo, rng_hi), "delta0_in_range": bool(rng_lo <= delta0 <= rng_hi),
        "stages": built["stages"], "first_stage": built["first_stage"], "skipped_stages": built["skipped"],
        "nominal": not built["skipped"], "rotation_gaps": d3, "window": window, "max_gap": max_gap, "w02_measure": w02,
    }
    if max_gap <= window:
        raise ConstructionFailed(
            "W_{0,1} is empty: every orbit gap is shorter than the excluded window",
            stage="W0,1",
            diagnostics={**base, "orbit_length": n_orbit},
        )
    segments, w0 = w0_segments(cf, w, l, d, window)
    if w0 <= 0.0:
        raise ConstructionFailed(
            "W_0 is empty: every W_{0,2} hit is followed by an orbit point in the excluded window",
            stage="W0",
            diagnostics={**base, "orbit_length": n_orbit, "w0_measure": 0.0},
        )
    rng = np.random.default_rng(seed)
    lengths = np.array([b - a for _, a, b in segments])
    picks = rng.choice(len(segments), size=samples, p=lengths / lengths.sum())
    accepted = []
    for idx in picks:
        i0, a, b = segments[int(idx)]
        z = float(rng.uniform(a, b))
        x = CirclePoint.from_value(z).rotate(cf, -i0)
        accepted.append({"x": float(x), "x_frac": x.frac, "i0": int(i0), "z": z, "w01_checked": not _w01_violation(cf, x, n_orbit, window)})
    return WRConstruction(samples=accepted, w0_measure=w0, delta0_point=_fraction_point(delta0), **base)


def _fraction_point(v: Fraction, bits: int = 256) -> CirclePoint:
    return CirclePoint(int(v * (1 << bits)), bits, 1)


def _w01_violation(cf, x: CirclePoint, n: int, window: float) -> bool:
    hi, lo = orbit_dd(cf, x, 0, n)
    v = (1.0 - hi) - lo  # distance to 0 from the left
    return bool(np.any((v <= window) & (v > 0)))


def _w02_index(cf, x: CirclePoint, count: int, lo_t: float, hi_t: float):
    hi, lo = orbit_dd(cf, x, 0, count)
    u = hi + lo
    idx = np.nonzero((u >= lo_t) & (u <= hi_t))[0]
    return int(idx[0]) if idx.size else None


def wr_failure_verify(
    x,
    delta0,
    params: DriftParams | None,
    spec: CeilingSpec,
    cf: ContinuedFraction,
    w: int,
    d: float | None = None,
    c: float | None = None,
    i0: int | None = None,
    eta: float = 0.05,
) -> dict:
    """Check the band jump and monotonicity of D(n) = f^(n)(x) - f^(n)(x + delta0), n < w q_w."""
    x = as_point(x)
    d0 = delta0 if isinstance(delta0, CirclePoint) else CirclePoint.from_value(delta0)
    y = x.shift(d0)
    qs = cf.denominators
    n_top = w * qs[w]
    gamma = spec.gamma
    c = ratio_bound(cf) if c is None else c
    d = 2.0 * math.sqrt(400.0 * c / abs(gamma)) if d is None else d
    D = np.concatenate(([0.0], diff_prefix(spec, cf, x, y, n_top - 1)))  # D[n], n = 0..wq_w-1
    if i0 is None:
        qw = qs[w]
        l = _scale_l(qs, w, gamma, d)
        i0 = _w02_index(cf, x, qs[w - (l or 1)], 1.0 / (2.0 * d * qw), 1.0 / (d * qw))
        if i0 is None:
            raise ConfigInvalid("x is not in W_{0,2}")
    pre = D[1 : i0 + 1]
    post = D[i0 + 1 : n_top]
    pre_max = float(np.max(pre)) if pre.size else 0.0
    pre_min = float(np.min(pre)) if pre.size else 1.0
    post_min = float(np.min(post)) if post.size else math.inf
    lo_bound, hi_bound = 100.0 * c / d, abs(gamma) * d / 2.0
    monotone = bool(np.all(np.diff(D) > 0))
    dist = _distance(x, y)
    run = _max_run(np.abs(D) < eta)
    len_bound = 2.0 * c * eta ** (1.0 + gamma) * dist ** (-1.0 / (1.0 - gamma))
    return {
        "i0": int(i0),
        "pre_jump_max": pre_max,
        "pre_jump_min": pre_min,
        "post_jump_min": post_min,
        "pre_bound": lo_bound,
        "post_bound": hi_bound,
        "pre_ok": bool(pre_min > 0 and pre_max < lo_bound),
        "post_ok": bool(post_min > hi_bound),
        "monotone": monotone,
        "len_run": run,
        "len_bound": len_bound,
        "len_bound_ok": bool(run < len_bound),
        "jump_ratio": post_min / pre_max if pre_max > 0 else math.inf,
        "passed": bool(pre_min > 0 and pre_max < lo_bound and post_min > hi_bound and monotone),
    }


def _max_run(mask: np.ndarray) -> int:
    """Length of the longest run of True values."""
    if not mask.any():
        return 0
    edges = np.diff(np.concatenate(([0], mask.astype(np.int8), [0])))
    return int(np.max(np.nonzero(edges == -1)[0] - np.nonzero(edges == 1)[0]))


def len_bound_check(spec: CeilingSpec, cf: ContinuedFraction, x, y, eta: float, n_max: int, c: float | None = None) -> dict:
    """Longest run of n in [0, n_max) with |D(n)| < eta against 2c eta^(1+gamma) ||x-y||^(-1/(1-gamma))."""
    c = ratio_bound(cf) if c is None else c
    D = np.concatenate(([0.0], diff_prefix(spec, cf, x, y, n_max - 1)))
    run = _max_run(np.abs(D) < eta)
    dist = _distance(x, y)
    bound = 2.0 * c * eta ** (1.0 + spec.gamma) * dist ** (-1.0 / (1.0 - spec.gamma))
    return {"run": run, "bound": bound, "passed": run < bound}
