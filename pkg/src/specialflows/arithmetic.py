"""Exact continued fractions, fixed-point circle positions and Diophantine sieves.

Rotation numbers come from three descriptor kinds:

``surd:p,q,D,r``
    the quadratic irrational (p + q*sqrt(D)) / r, expanded symbolically;
``cf:a1,a2,...``
    the number [0; a1, ..., an, 1, 1, 1, ...] (a tail of ones keeps it an
    exact quadratic surd);
``dec:0.6180339887...``
    a decimal string, read as an interval of radius 10**-digits; quotients
    are only emitted while both interval ends agree.

Denominators are reported strictly increasing starting at q_0 = 1; when
a_1 = 1 the raw recursion repeats the value 1 and the first copy is dropped.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from . import _dd
from .errors import ConfigInvalid, PrecisionExhausted, RationalInput, RuleViolation

DEFAULT_BITS = 256
ORBIT_TOLERANCE = Fraction(1, 2**64)


# ---------------------------------------------------------------------------
# exact representations of alpha
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QuadraticSurd:
    """The real number (p + q*sqrt(D)) / r with D > 0 not a perfect square."""

    p: int
    q: int
    D: int
    r: int

    def __post_init__(self):
        if self.r == 0:
            raise ConfigInvalid("surd denominator r must be nonzero")
        if self.D < 0:
            raise ConfigInvalid("surd radicand D must be nonnegative")
        if self.q == 0 or math.isqrt(self.D) ** 2 == self.D:
            raise RationalInput(f"surd ({self.p}+{self.q}*sqrt({self.D}))/{self.r} is rational")

    def _normalised(self) -> tuple[int, int, int]:
        """Return (P, D', Q) with value (P + sqrt(D'))/Q and Q | D' - P^2."""
        p, q, r = self.p, self.q, self.r
        if q < 0:
            p, q, r = -p, -q, -r
        P, Dp, Q = p, q * q * self.D, r
        if (Dp - P * P) % Q:
            P, Dp, Q = P * abs(Q), Dp * Q * Q, Q * abs(Q)
        return P, Dp, Q

    def floor_scaled(self, bits: int) -> int:
        """Exact floor(value * 2**bits)."""
        p, q, r = self.p, self.q, self.r
        if r < 0:
            p, q, r = -p, -q, -r
        scale = 1 << bits
        root = math.isqrt(q * q * self.D * scale * scale)
        if q > 0:
            num_floor = p * scale + root
        else:
            num_floor = p * scale - root - 1
        return num_floor // r

    def quotients(self, count: int) -> list[int]:
        """Integer part followed by ``count`` partial quotients."""
        P, D, Q = self._normalised()
        s = math.isqrt(D)
        out = []
        for _ in range(count + 1):
            if Q > 0:
                a = (P + s) // Q
            else:
                a = -((P + s) // (-Q)) - 1
            out.append(a)
            P = a * Q - P
            Q = (D - P * P) // Q
        return out

    def __float__(self) -> float:
        return (self.p + self.q * math.sqrt(self.D)) / self.r


@dataclass(frozen=True)
class DecimalInterval:
    """A decimal string read as the closed interval [v - rad, v + rad]."""

    value: Fraction
    radius: Fraction

    @property
    def lo(self) -> Fraction:
        return self.value - self.radius

    @property
    def hi(self) -> Fraction:
        return self.value + self.radius


def _fraction_cf(x: Fraction, limit: int) -> list[int]:
    out = []
    num, den = x.numerator, x.denominator
    while den and len(out) < limit:
        a, rem = divmod(num, den)
        out.append(a)
        num, den = den, rem
    return out


def _surd_from_quotients(quots: Sequence[int]) -> QuadraticSurd:
    """[0; quots..., 1, 1, 1, ...] as an exact surd in sqrt(5)."""
    p_prev, p = 1, 0
    q_prev, q = 0, 1
    for a in quots:
        p_prev, p = p, a * p + p_prev
        q_prev, q = q, a * q + q_prev
    # tail value psi = (1 + sqrt5)/2 ; alpha = (p psi + p_prev) / (q psi + q_prev)
    a_, b_ = p + 2 * p_prev, p
    c_, e_ = q + 2 * q_prev, q
    num_rat = a_ * c_ - 5 * b_ * e_
    num_irr = b_ * c_ - a_ * e_
    den = c_ * c_ - 5 * e_ * e_
    g = math.gcd(math.gcd(num_rat, num_irr), den)
    num_rat, num_irr, den = num_rat // g, num_irr // g, den // g
    if den < 0:
        num_rat, num_irr, den = -num_rat, -num_irr, -den
    return QuadraticSurd(num_rat, num_irr, 5, den)


_MINUS = str.maketrans({"−": "-", "–": "-"})


def parse_descriptor(source) -> tuple[str, QuadraticSurd | DecimalInterval]:
    """Parse a rotation-number descriptor into a canonical string and value."""
    if isinstance(source, (QuadraticSurd, DecimalInterval)):
        return repr(source), source
    if isinstance(source, (int, Fraction)):
        raise RationalInput(f"{source} is rational")
    if isinstance(source, float):
        source = "dec:" + repr(source)
    if not isinstance(source, str):
        raise ConfigInvalid(f"unsupported rotation-number descriptor {source!r}")
    text = source.strip().translate(_MINUS)
    if re.fullmatch(r"[+-]?\d+\s*/\s*\d+", text):
        raise RationalInput(f"{text} is rational")
    kind, sep, body = text.partition(":")
    if not sep:
        raise ConfigInvalid(f"descriptor {source!r} lacks a kind prefix")
    kind = kind.strip().lower()
    body = body.strip().strip('"').strip("'")
    try:
        if kind == "surd":
            parts = [int(v) for v in body.split(",")]
            if len(parts) != 4:
                raise ConfigInvalid("surd descriptor needs p,q,D,r")
            val = QuadraticSurd(*parts)
            canon = "surd:" + ",".join(str(v) for v in parts)
        elif kind == "cf":
            quots = [int(v) for v in body.split(",") if v.strip()]
            if not quots or any(a < 1 for a in quots):
                raise ConfigInvalid("cf descriptor needs positive partial quotients")
            val = _surd_from_quotients(quots)
            canon = "cf:" + ",".join(str(a) for a in quots)
        elif kind == "dec":
            if not re.fullmatch(r"[+-]?\d*\.?\d+(e[+-]?\d+)?", body, flags=re.I):
                raise ConfigInvalid(f"malformed decimal {body!r}")
            d = Decimal(body)
            exp = d.as_tuple().exponent
            val = DecimalInterval(Fraction(d), Fraction(1, 10 ** max(-int(exp), 0)))
            canon = "dec:" + body
        else:
            raise ConfigInvalid(f"unknown descriptor kind {kind!r}")
    except (ValueError, InvalidOperation) as exc:
        if isinstance(exc, (ConfigInvalid, RationalInput)):
            raise
        raise ConfigInvalid(f"cannot parse descriptor {source!r}: {exc}") from exc
    return canon, val


# ---------------------------------------------------------------------------
# continued fractions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ContinuedFraction:
    """Partial quotients and deduplicated best-approximation denominators.

    ``denominators[s]`` is q_s in the strictly increasing convention; the raw
    recursion (with q_{-1}=0, q_0=1) is kept in ``raw_denominators``.
    """

    source: str
    quotients: tuple[int, ...]
    denominators: tuple[int, ...]
    numerators: tuple[int, ...]
    depth: int
    raw_denominators: tuple[int, ...] = field(repr=False)
    raw_numerators: tuple[int, ...] = field(repr=False)
    index_shift: int = field(repr=False, default=0)
    value: QuadraticSurd | DecimalInterval | None = field(repr=False, default=None, compare=False)

    @property
    def q(self) -> tuple[int, ...]:
        return self.denominators

    def alpha_fixed(self, bits: int = DEFAULT_BITS) -> tuple[int, int]:
        """(A, err): A/2**bits approximates alpha with |error| <= err ulps."""
        key = (self.source, bits)
        hit = _ALPHA_CACHE.get(key)
        if hit is not None:
            return hit
        v = self.value
        if isinstance(v, QuadraticSurd):
            out = (v.floor_scaled(bits), 1)
        elif isinstance(v, DecimalInterval):
            scaled = v.value * (1 << bits)
            A = round(scaled)
            err = math.ceil(v.radius * (1 << bits)) + 1
            out = (A, err)
        else:
            raise ConfigInvalid("continued fraction carries no value")
        _ALPHA_CACHE[key] = out
        return out

    def __float__(self) -> float:
        A, _ = self.alpha_fixed(128)
        return A / 2.0**128

    def as_dict(self) -> dict:
        return {
            "source": self.source,
            "depth": self.depth,
            "quotients": list(self.quotients),
            "denominators": list(self.denominators),
            "numerators": list(self.numerators),
        }


_ALPHA_CACHE: dict = {}


def _quotients_for(value, depth: int) -> list[int]:
    if isinstance(value, QuadraticSurd):
        qs = value.quotients(depth)
        if qs[0] != 0:
            raise ConfigInvalid(f"rotation number must lie in (0,1); integer part is {qs[0]}")
        return qs[1:]
    lo, hi = value.lo, value.hi
    if lo <= 0 or hi >= 1:
        raise ConfigInvalid("decimal rotation number must lie strictly inside (0,1)")
    clo = _fraction_cf(lo, depth + 2)
    chi = _fraction_cf(hi, depth + 2)
    certified = []
    # both ends share a cylinder only while neither expansion has terminated
    for k in range(1, depth + 1):
        if k >= len(clo) - 1 or k >= len(chi) - 1 or clo[k] != chi[k]:
            break
        certified.append(clo[k])
    if len(certified) < depth:
        if value.radius == 0 or (lo == hi):
            raise RationalInput("decimal expansion terminates")
        raise PrecisionExhausted(
            f"decimal input certifies only {len(certified)} partial quotients, {depth} requested"
        )
    return certified


def cf_expand(source, depth: int) -> ContinuedFraction:
    """Expand a rotation number to ``depth`` partial quotients with exact convergents."""
    if depth < 1:
        raise ConfigInvalid("depth must be at least 1")
    canon, value = parse_descriptor(source)
    quots = _quotients_for(value, depth)
    raw_q = [1]
    raw_p = [0]
    q_prev, p_prev = 0, 1
    for a in quots:
        q_prev, qn = raw_q[-1], a * raw_q[-1] + q_prev
        p_prev, pn = raw_p[-1], a * raw_p[-1] + p_prev
        raw_q.append(qn)
        raw_p.append(pn)
    shift = 1 if len(raw_q) > 1 and raw_q[1] == raw_q[0] else 0
    return ContinuedFraction(
        source=canon,
        quotients=tuple(quots),
        denominators=tuple(raw_q[shift:]),
        numerators=tuple(raw_p[shift:]),
        depth=depth,
        raw_denominators=tuple(raw_q),
        raw_numerators=tuple(raw_p),
        index_shift=shift,
        value=value,
    )


def _deeper(cf: ContinuedFraction, extra: int) -> ContinuedFraction:
    try:
        return cf_expand(cf.value if cf.value is not None else cf.source, cf.depth + extra)
    except PrecisionExhausted:
        return cf


# ---------------------------------------------------------------------------
# fixed-point circle positions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CirclePoint:
    """A point of the circle as ``frac / 2**bits`` with an error bound in ulps."""

    frac: int
    bits: int = DEFAULT_BITS
    err: int = 0

    def __post_init__(self):
        object.__setattr__(self, "frac", self.frac & ((1 << self.bits) - 1))

    @classmethod
    def from_value(cls, v, bits: int = DEFAULT_BITS) -> "CirclePoint":
        if isinstance(v, CirclePoint):
            return v.with_bits(bits)
        if isinstance(v, float):
            fr = Fraction(v)
        elif isinstance(v, str):
            fr = Fraction(Decimal(v))
        else:
            fr = Fraction(v)
        scaled = fr * (1 << bits)
        n = math.floor(scaled)
        return cls(n, bits, 0 if n == scaled else 1)

    @property
    def err_bits(self) -> int:
        return self.err.bit_length() - self.bits

    def with_bits(self, bits: int) -> "CirclePoint":
        if bits == self.bits:
            return self
        if bits > self.bits:
            return CirclePoint(self.frac << (bits - self.bits), bits, self.err << (bits - self.bits))
        sh = self.bits - bits
        return CirclePoint(self.frac >> sh, bits, (self.err >> sh) + 1)

    def rotate(self, cf: ContinuedFraction, n: int, tolerance: Fraction = ORBIT_TOLERANCE) -> "CirclePoint":
        A, aerr = cf.alpha_fixed(self.bits)
        err = self.err + abs(n) * (aerr + 1)
        if Fraction(err, 1 << self.bits) > tolerance:
            raise PrecisionExhausted(
                f"rotation by {n} steps exceeds the orbit tolerance at {self.bits} bits"
            )
        return CirclePoint(self.frac + n * A, self.bits, err)

    def shift(self, delta) -> "CirclePoint":
        other = delta if isinstance(delta, CirclePoint) else CirclePoint.from_value(delta, self.bits)
        other = other.with_bits(self.bits)
        return CirclePoint(self.frac + other.frac, self.bits, self.err + other.err)

    def minus(self, other: "CirclePoint") -> "CirclePoint":
        other = other.with_bits(self.bits)
        return CirclePoint(self.frac - other.frac, self.bits, self.err + other.err)

    def to_fraction(self) -> Fraction:
        return Fraction(self.frac, 1 << self.bits)

    def __float__(self) -> float:
        return self.frac / (1 << self.bits)

    def dd(self) -> tuple[float, float]:
        return _dd.from_fixed(self.frac, self.bits)


def norm_dist(x) -> float:
    """Distance to the nearest integer, min({x}, 1 - {x})."""
    if isinstance(x, CirclePoint):
        full = 1 << x.bits
        v = min(x.frac, full - x.frac) if x.frac else 0
        return v / full
    fr = Fraction(x) if not isinstance(x, float) else Fraction(x)
    fr -= math.floor(fr)
    return float(min(fr, 1 - fr))


def circle_dist(x: CirclePoint, y: CirclePoint) -> float:
    return norm_dist(x.minus(y))


def orbit_dd(cf: ContinuedFraction, x: CirclePoint, start: int, count: int):
    """Double-double positions of x + j*alpha for j = start, ..., start+count-1."""
    A, _ = cf.alpha_fixed(x.bits)
    base = x.frac + start * A
    hi, lo = _orbit_offsets(cf, x.bits, count)
    bhi, blo = _dd.from_fixed(base & ((1 << x.bits) - 1), x.bits)
    return _dd.add_mod1(bhi, blo, hi, lo)


_OFFSET_CACHE: dict = {}


def _orbit_offsets(cf: ContinuedFraction, bits: int, count: int):
    key = (cf.source, bits)
    hit = _OFFSET_CACHE.get(key)
    if hit is not None and hit[0].shape[0] >= count:
        return hit[0][:count], hit[1][:count]
    size = max(count, 1024)
    if hit is not None:
        size = max(size, 2 * hit[0].shape[0])
    A, _ = cf.alpha_fixed(bits)
    hi, lo = _dd.fixed_table(A, bits, size)
    _OFFSET_CACHE[key] = (hi, lo)
    return hi[:count], lo[:count]


# ---------------------------------------------------------------------------
# red0 bracket
# ---------------------------------------------------------------------------


@dataclass
class Red0Row:
    s: int
    q_s: int
    q_next: int
    lower: Fraction
    upper: Fraction
    passed: bool
    certified: bool


def verify_red0(cf: ContinuedFraction, s_max: int) -> list[Red0Row]:
    """Check 1/(q_s+q_{s+1}) <= ||q_s alpha|| <= 1/q_{s+1} exactly for s <= s_max.

    alpha lies strictly between the two deepest convergents; |q_s x - p_s| is
    linear in x there, so checking both endpoints certifies the bracket.
    """
    if s_max > cf.depth - 1:
        raise ConfigInvalid("s_max must not exceed depth - 1")
    deep = _deeper(cf, 4)
    rp, rq = deep.raw_numerators, deep.raw_denominators
    ends = (Fraction(rp[-1], rq[-1]), Fraction(rp[-2], rq[-2]))
    qs, ps = deep.denominators, deep.numerators
    rows = []
    for s in range(0, s_max + 1):
        q, p, qn = qs[s], ps[s], qs[s + 1]
        lo_b, hi_b = Fraction(1, q + qn), Fraction(1, qn)
        vals = [abs(q * e - p) for e in ends]
        ok = [lo_b <= v <= hi_b for v in vals]
        usable = s + 1 < len(qs) - 2
        rows.append(Red0Row(s, q, qn, lo_b, hi_b, all(ok), usable and ok[0] == ok[1]))
    return rows


# ---------------------------------------------------------------------------
# sieves
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class XRule:
    """A named sequence rule s, q_s -> x_s."""

    name: str
    func: Callable[[int, int], float] = field(compare=False)

    def __call__(self, s: int, q: int) -> float:
        return self.func(s, q)


def _log_rule(s: int, q: int) -> float:
    lg = math.log(q)
    return math.inf if lg <= 0 else 1.0 / (q * lg**0.875)


def _inv_s2_rule(s: int, q: int) -> float:
    return math.inf if s <= 0 else 1.0 / (s * s * q)


LOG_RULE = XRule("log78", _log_rule)
INV_S2_RULE = XRule("inv_s2", _inv_s2_rule)
X_RULES = {r.name: r for r in (LOG_RULE, INV_S2_RULE)}


def get_rule(rule) -> XRule:
    if isinstance(rule, XRule):
        return rule
    if rule is None:
        return LOG_RULE
    if isinstance(rule, str):
        try:
            return X_RULES[rule]
        except KeyError as exc:
            raise ConfigInvalid(f"unknown x_rule {rule!r}; known: {sorted(X_RULES)}") from exc
    if callable(rule):
        return XRule(getattr(rule, "__name__", "custom"), rule)
    raise ConfigInvalid(f"bad x_rule {rule!r}")


@dataclass
class SieveReport:
    k_alpha_prefix: list[bool]
    e_partial_sums: list[float]
    dc_tau_estimate: float
    bounded_type: bool
    rule: str
    x_values: list[float]
    dc_tau_raw: float
    quotient_bound: int

    def as_dict(self) -> dict:
        return {
            "rule": self.rule,
            "k_alpha_prefix": self.k_alpha_prefix,
            "e_partial_sums": self.e_partial_sums,
            "dc_tau_estimate": self.dc_tau_estimate,
            "dc_tau_raw": self.dc_tau_raw,
            "bounded_type": self.bounded_type,
            "quotient_bound": self.quotient_bound,
            "x_values": self.x_values,
        }


def sieve(cf: ContinuedFraction, x_rule=None, depth: int | None = None, bound: int = 10) -> SieveReport:
    """K_alpha membership, E partial sums and a DC(tau) estimate for s = 1..depth.

    Entry s of ``k_alpha_prefix`` refers to s = 1, 2, ...  The rule must give
    x_s < 1/q_s; index s = 1 is exempt because both shipped rules are
    pre-asymptotic there (q_1 may be 2, and 1/(s^2 q_s) equals 1/q_1).
    """
    rule = get_rule(x_rule)
    qs = cf.denominators
    top = len(qs) - 2 if depth is None else min(depth, len(qs) - 2)
    members: list[bool] = []
    sums: list[float] = []
    xs: list[float] = []
    total = 0.0
    for s in range(1, top + 1):
        q, qn = qs[s], qs[s + 1]
        x = rule(s, q)
        xs.append(x)
        if not (x > 0) or (x >= 1.0 / q and s > 1):
            raise RuleViolation(f"x_rule {rule.name} gives x_{s}={x!r} >= 1/q_{s}", s=s, x_s=x, q_s=q)
        inside = qn < 1.0 / x
        members.append(bool(inside))
        if not inside:
            total += 1.0 / math.log(q) ** 0.875
        sums.append(total)
    tau_raw, tau = _dc_tau(qs[: top + 2])
    quots = cf.quotients[: top + 1]
    return SieveReport(members, sums, tau, all(a <= bound for a in quots), rule.name, xs, tau_raw, bound)


def _dc_tau(qs: Sequence[int]) -> tuple[float, float]:
    """Raw max of log q_{s+1}/log q_s - 1 and a constant-adjusted tail estimate.

    The adjusted estimate absorbs the constant r_alpha of the DC(tau)
    definition into the largest ratio q_{s+1}/q_s seen on the first half of
    the expansion, then takes the worst excess over the second half.
    """
    idx = [s for s in range(len(qs) - 1) if qs[s] > 1]
    if not idx:
        return 0.0, 0.0
    raw = max(math.log(qs[s + 1]) / math.log(qs[s]) - 1.0 for s in idx)
    half = len(idx) // 2
    head, tail = idx[:half] or idx[:1], idx[half:]
    log_r = max(math.log(qs[s + 1] / qs[s]) for s in head)
    excess = max((math.log(qs[s + 1] / qs[s]) - log_r) / math.log(qs[s]) for s in tail)
    return raw, max(0.0, excess)


def e_partial_sums(cf: ContinuedFraction, depth: int, x_rule=None) -> list[float]:
    if depth <= 0:
        return [0.0]
    return sieve(cf, x_rule, depth).e_partial_sums


def badly_approx_check(
    cf: ContinuedFraction,
    points: Sequence[float],
    C: float,
    s_max: int,
    sample_count: int,
    seed: int = 0,
) -> dict:
    """Count, per q_s block, the orbit indices entering the 1/(2Cq_s) windows.

    Passes iff no sampled x and s <= s_max sees two or more such indices.
    """
    if not points:
        raise ConfigInvalid("need at least one singularity")
    if s_max > cf.depth:
        raise ConfigInvalid("s_max exceeds expansion depth")
    rng = np.random.default_rng(seed)
    pts = [CirclePoint.from_value(a) for a in points]
    qmax = cf.denominators[s_max]
    worst = 0
    for _ in range(sample_count):
        x = CirclePoint.from_value(float(rng.random()))
        hi, lo = orbit_dd(cf, x, 0, qmax)
        dists = []
        for a in pts:
            ahi, alo = a.dd()
            uh, ul = _dd.sub_mod1(hi, lo, ahi, alo)
            u = uh + ul
            dists.append(np.minimum(u, 1.0 - u))
        dmin = np.min(np.vstack(dists), axis=0)
        for s in range(s_max + 1):
            q = cf.denominators[s]
            hits = np.nonzero(dmin[:q] <= 1.0 / (2.0 * C * q))[0]
            worst = max(worst, len(hits))
            if len(hits) > 1:
                return {"pass": False, "witness": {"x": float(x), "s": s, "indices": hits.tolist()}, "max_count": len(hits)}
    return {"pass": True, "witness": None, "max_count": worst}


def three_gap_stats(cf: ContinuedFraction, x: CirclePoint, n: int) -> dict:
    """Distinct gap lengths (exact, in fixed point) of {x + j alpha}, j < n."""
    if n < 2:
        raise ConfigInvalid("three_gap_stats needs n >= 2")
    x = x if isinstance(x, CirclePoint) else CirclePoint.from_value(x)
    A, aerr = cf.alpha_fixed(x.bits)
    full = 1 << x.bits
    if Fraction(x.err + n * (aerr + 1), full) > ORBIT_TOLERANCE:
        raise PrecisionExhausted("orbit too long for the configured precision")
    pts = sorted((x.frac + j * A) % full for j in range(n))
    gaps = [b - a for a, b in zip(pts, pts[1:])] + [pts[0] + full - pts[-1]]
    counts: dict[int, int] = {}
    for g in gaps:
        counts[g] = counts.get(g, 0) + 1
    lengths = sorted(counts)
    return {
        "lengths": [g / full for g in lengths],
        "multiplicities": [counts[g] for g in lengths],
        "distinct": len(lengths),
    }
