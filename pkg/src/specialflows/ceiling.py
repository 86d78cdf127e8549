"""Singular ceiling functions over the circle.

A ceiling is ``r + sum_i [A_i * phi_i(u_i) + B_i * phi_i(v_i)]`` where
``u_i = {x - a_i}`` is the distance to the singularity measured from the
right, ``v_i = {a_i - x} = 1 - u_i`` the distance from the left, and ``phi``
is either ``-ln`` or ``t -> t**gamma`` with gamma in (-1, 0).  Both side
distances are formed exactly in fixed point before they are rounded to
floats, so relative accuracy survives right next to a singularity.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .arithmetic import CirclePoint
from .errors import ConfigInvalid, SingularityProximity

SIGMA_MIN = 2.0**-96
LOG = 0.0  # exponent value that selects the logarithmic profile


# ---------------------------------------------------------------------------
# one-sided profiles
# ---------------------------------------------------------------------------


def profile(u, gamma: float):
    """phi(u): -ln u when gamma == 0, else u**gamma."""
    if gamma == LOG:
        return -np.log(u)
    return np.power(u, gamma)


def profile_prime(u, gamma: float):
    if gamma == LOG:
        return -1.0 / np.asarray(u, dtype=float) if np.ndim(u) else -1.0 / u
    return gamma * np.power(u, gamma - 1.0)


def profile_second(u, gamma: float):
    if gamma == LOG:
        return 1.0 / (np.asarray(u, dtype=float) ** 2) if np.ndim(u) else 1.0 / (u * u)
    return gamma * (gamma - 1.0) * np.power(u, gamma - 2.0)


def profile_integral(gamma: float) -> float:
    """Integral of phi over (0, 1)."""
    return 1.0 if gamma == LOG else 1.0 / (1.0 + gamma)


@dataclass(frozen=True)
class SingularModel:
    """The pure model h on (0, 1) together with its derivative."""

    gamma: float = LOG

    @property
    def is_log(self) -> bool:
        return self.gamma == LOG

    def h(self, u):
        return profile(u, self.gamma)

    def dh(self, u):
        return profile_prime(u, self.gamma)

    def infimum(self) -> float:
        """inf of h over (0,1), i.e. the limit at 1 (h is decreasing)."""
        return float(self.h(1.0))

    def scale(self, q: int) -> float:
        """h(1/(2q)) evaluated without forming 1/(2q) when q is huge."""
        if self.is_log:
            return math.log(2.0 * q)
        return (2.0 * q) ** (-self.gamma)

    def name(self) -> str:
        return "log" if self.is_log else f"power({self.gamma:g})"


# ---------------------------------------------------------------------------
# specification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Singularity:
    a: float
    A: float = 1.0
    B: float = 0.0
    gamma_right: float | None = None
    gamma_left: float | None = None

    def __post_init__(self):
        if self.A < 0 or self.B < 0:
            raise ConfigInvalid("singularity strengths A, B must be nonnegative")
        for g in (self.gamma_right, self.gamma_left):
            if g is not None and not (-1.0 < g <= 0.0):
                raise ConfigInvalid(f"exponent {g} outside (-1, 0]")


@dataclass(frozen=True)
class CeilingSpec:
    """Ceiling function description.

    Parameters
    ----------
    singularities
        Strong singularities; their sides use ``gamma`` unless overridden.
    model
        ``"log"`` or ``"power"``.
    gamma
        Exponent for the power model (ignored for ``"log"``).
    offset
        Constant smooth part ``r >= 0``.
    weak_singularities
        Extra singularities with their own (weaker) exponents.
    """

    singularities: tuple[Singularity, ...]
    model: str = "log"
    gamma: float = -0.5
    offset: float = 0.0
    weak_singularities: tuple[Singularity, ...] = ()
    _cache: dict = field(default_factory=dict, repr=False, compare=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "singularities", tuple(self.singularities))
        object.__setattr__(self, "weak_singularities", tuple(self.weak_singularities))
        if self.model not in ("log", "power"):
            raise ConfigInvalid(f"unknown ceiling model {self.model!r}")
        if self.model == "power" and not (-1.0 < self.gamma < 0.0):
            raise ConfigInvalid("power model needs gamma in (-1, 0)")
        if self.offset < 0:
            raise ConfigInvalid("offset must be nonnegative")
        if not self.singularities:
            raise ConfigInvalid("at least one singularity is required")

    # -- construction helpers ------------------------------------------------

    @classmethod
    def log(cls, a: float = 0.0, A: float = 1.0, B: float = 0.0, offset: float = 1.0) -> "CeilingSpec":
        return cls((Singularity(a, A, B),), "log", 0.0, offset)

    @classmethod
    def power(cls, gamma: float = -0.5, a: float = 0.0, A: float = 1.0, B: float = 0.0, offset: float = 1.0) -> "CeilingSpec":
        return cls((Singularity(a, A, B),), "power", gamma, offset)

    @classmethod
    def from_dict(cls, data: dict) -> "CeilingSpec":
        if not isinstance(data, dict):
            raise ConfigInvalid("ceiling spec must be a JSON object")
        try:
            model = data.get("model", "log")
            sings = [_sing_from(d) for d in data["singularities"]]
            weak = [_sing_from(d) for d in data.get("weak_singularities", [])]
            gamma = float(data.get("gamma", -0.5 if model == "power" else 0.0))
            return cls(tuple(sings), model, gamma, float(data.get("offset", 0.0)), tuple(weak))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigInvalid):
                raise
            raise ConfigInvalid(f"bad ceiling spec: {exc}") from exc

    @classmethod
    def from_json(cls, text: str) -> "CeilingSpec":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigInvalid(f"malformed ceiling JSON: {exc}") from exc

    def to_dict(self) -> dict:
        out = {
            "model": self.model,
            "singularities": [_sing_to(s) for s in self.singularities],
            "offset": self.offset,
        }
        if self.model == "power":
            out["gamma"] = self.gamma
        if self.weak_singularities:
            out["weak_singularities"] = [_sing_to(s) for s in self.weak_singularities]
        return out

    # -- structure -------------------------------------------------------------

    @property
    def base_gamma(self) -> float:
        return LOG if self.model == "log" else self.gamma

    @property
    def h_model(self) -> SingularModel:
        return SingularModel(self.base_gamma)

    def terms(self) -> list[tuple[float, float, float, float, float]]:
        """(a, A, gamma_right, B, gamma_left) for every singular term."""
        g = self.base_gamma
        out = []
        for s in self.singularities:
            gr = g if s.gamma_right is None else s.gamma_right
            gl = g if s.gamma_left is None else s.gamma_left
            out.append((s.a % 1.0, s.A, gr, s.B, gl))
        for s in self.weak_singularities:
            gr = s.gamma_right if s.gamma_right is not None else LOG
            gl = s.gamma_left if s.gamma_left is not None else gr
            out.append((s.a % 1.0, s.A, gr, s.B, gl))
        return out

    @property
    def points(self) -> list[float]:
        return [t[0] for t in self.terms()]

    @property
    def strong_points(self) -> list[float]:
        return [s.a % 1.0 for s in self.singularities]

    @property
    def k(self) -> int:
        return len(self.singularities) + len(self.weak_singularities)

    def asymmetry(self) -> float:
        """Sum of A_i - B_i over the strong singularities."""
        return float(sum(s.A - s.B for s in self.singularities))

    def singular_points(self) -> list[CirclePoint]:
        key = "points"
        if key not in self._cache:
            self._cache[key] = [CirclePoint.from_value(a) for a in self.points]
        return self._cache[key]

    # -- evaluation on side distances ----------------------------------------

    def f_sides(self, u: np.ndarray, v: np.ndarray):
        """f from right/left distances, arrays shaped (k, ...)."""
        total = np.full(np.shape(u)[1:], self.offset, dtype=float)
        for i, (_, A, gr, B, gl) in enumerate(self.terms()):
            if A:
                total = total + A * profile(u[i], gr)
            if B:
                total = total + B * profile(v[i], gl)
        return total

    def fprime_sides(self, u: np.ndarray, v: np.ndarray):
        total = np.zeros(np.shape(u)[1:], dtype=float)
        for i, (_, A, gr, B, gl) in enumerate(self.terms()):
            if A:
                total = total + A * profile_prime(u[i], gr)
            if B:
                total = total - B * profile_prime(v[i], gl)
        return total

    def model_weight_sides(self, u, v):
        """sum_i -r_i'(u_i) - r_i'(v_i), the dominating weight of the H bound."""
        total = 0.0
        for i, (_, _A, gr, _B, gl) in enumerate(self.terms()):
            total = total - profile_prime(u[i], gr) - profile_prime(v[i], gl)
        return total

    # -- float helpers (tests, plotting, sampling) -------------------------------

    def sides_float(self, x):
        x = np.asarray(x, dtype=float)
        pts = np.array(self.points).reshape((-1,) + (1,) * x.ndim)
        u = np.mod(x - pts, 1.0)
        v = np.mod(pts - x, 1.0)
        return u, v

    def f_float(self, x):
        u, v = self.sides_float(x)
        return self.f_sides(u, v)

    def fprime_float(self, x):
        u, v = self.sides_float(x)
        return self.fprime_sides(u, v)

    def require_bounded_below(self) -> float:
        """Return inf f, refusing ceilings that are not bounded away from zero."""
        low = self.lower_bound()
        if not low > 1e-9:
            raise ConfigInvalid("ceiling is not bounded away from zero; add a positive offset")
        return low

    def lower_bound(self) -> float:
        """inf f: the offset plus each term's infimum (attained at u = 1 or v = 1)."""
        total = self.offset
        for _, A, gr, B, gl in self.terms():
            total += A * float(profile(1.0, gr)) + B * float(profile(1.0, gl))
        if total > 0:
            return total
        # one-sided limits at a singularity with a zero-strength side can reach 0
        edge = np.concatenate([np.mod(np.asarray(self.points) + e, 1.0) for e in (1e-12, -1e-12)]) if self.points else np.empty(0)
        xs = np.concatenate((np.linspace(0.0, 1.0, 4097)[1:-1], edge))
        u, v = self.sides_float(xs)
        ok = np.all((u > 0) & (v > 0), axis=0)
        if self.points:
            return float(np.min(self.f_sides(u[:, ok], v[:, ok])))
        return total


def _sing_from(d) -> Singularity:
    if isinstance(d, Singularity):
        return d
    if isinstance(d, (list, tuple)):
        return Singularity(*[float(v) for v in d])
    return Singularity(
        float(d["a"]),
        float(d.get("A", 0.0)),
        float(d.get("B", 0.0)),
        None if d.get("gamma_right", d.get("gamma")) is None else float(d.get("gamma_right", d.get("gamma"))),
        None if d.get("gamma_left", d.get("gamma")) is None else float(d.get("gamma_left", d.get("gamma"))),
    )


def _sing_to(s: Singularity) -> dict:
    out = {"a": s.a, "A": s.A, "B": s.B}
    if s.gamma_right is not None:
        out["gamma_right"] = s.gamma_right
    if s.gamma_left is not None:
        out["gamma_left"] = s.gamma_left
    return out


# ---------------------------------------------------------------------------
# exact pointwise evaluation
# ---------------------------------------------------------------------------


def side_distances(spec: CeilingSpec, x, sigma_min: float = SIGMA_MIN, j: int | None = None):
    """Exact fixed-point side distances of x to every singularity, as floats."""
    xp = x if isinstance(x, CirclePoint) else CirclePoint.from_value(x)
    full = 1 << xp.bits
    us, vs = [], []
    for idx, a in enumerate(spec.singular_points()):
        diff = (xp.frac - a.with_bits(xp.bits).frac) % full
        u = diff / full
        v = (full - diff) / full if diff else 1.0
        if diff == 0 or min(u, v) < sigma_min:
            raise SingularityProximity(
                f"point within {sigma_min:.3g} of singularity {idx}",
                j=j,
                singularity=idx,
                distance=float(min(u, v)) if diff else 0.0,
            )
        us.append(u)
        vs.append(v)
    return np.array(us), np.array(vs)


def eval_f(spec: CeilingSpec, x, sigma_min: float = SIGMA_MIN) -> float:
    u, v = side_distances(spec, x, sigma_min)
    return float(spec.f_sides(u, v))


def eval_f_prime(spec: CeilingSpec, x, sigma_min: float = SIGMA_MIN) -> float:
    u, v = side_distances(spec, x, sigma_min)
    return float(spec.fprime_sides(u, v))


def integral_f(spec: CeilingSpec) -> float:
    """Integral of f over the circle (closed form)."""
    total = spec.offset
    for _, A, gr, B, gl in spec.terms():
        total += A * profile_integral(gr) + B * profile_integral(gl)
    return float(total)


def derivative_bound_H(spec: CeilingSpec, grid: int = 200_001, margin: float = 1e-3) -> float:
    """A constant H with |f'| < H * sum_i(-r_i'(x - a_i) - r_i'(a_i - x)).

    The ratio is maximised on a uniform grid merged with geometric grids that
    approach each singularity from both sides down to 1e-12; near a
    singularity the ratio tends to A_i (right) or B_i (left), which are
    folded in analytically.  The result carries a small relative margin.
    When f' vanishes identically any positive H works and 1.0 is returned.
    """
    key = ("H", grid, margin)
    if key in spec._cache:
        return spec._cache[key]
    pts = np.array(spec.points)
    uniform = np.linspace(0.0, 1.0, grid)
    geo = np.geomspace(1e-12, 0.5, 2000)
    xs = np.concatenate([uniform] + [np.mod(a + geo, 1.0) for a in pts] + [np.mod(a - geo, 1.0) for a in pts])
    u, v = spec.sides_float(xs)
    ok = np.all((u > 0) & (v > 0), axis=0)
    u, v = u[:, ok], v[:, ok]
    ratio = np.abs(spec.fprime_sides(u, v)) / spec.model_weight_sides(u, v)
    best = float(np.max(ratio)) if ratio.size else 0.0
    limits = [max(A, B) for _, A, _, B, _ in spec.terms()]
    best = max([best] + limits)
    H = best * (1.0 + margin) if best > 0 else 1.0
    spec._cache[key] = H
    return H
