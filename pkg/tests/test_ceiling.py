from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import integrate

from specialflows.arithmetic import CirclePoint
from specialflows.ceiling import (
    CeilingSpec,
    Singularity,
    derivative_bound_H,
    eval_f,
    eval_f_prime,
    integral_f,
)
from specialflows.errors import ConfigInvalid, SingularityProximity


def _quad(spec: CeilingSpec) -> float:
    cuts = sorted({0.0, 1.0} | {a % 1.0 for a in spec.points})
    total = 0.0
    for a, b in zip(cuts, cuts[1:]):
        val, _ = integrate.quad(lambda t: float(spec.f_float(np.array([t]))[0]), a, b, limit=400, epsabs=1e-13, epsrel=1e-12)
        total += val
    return total


def test_log_value_at_inverse_e(log_spec):
    assert eval_f(log_spec, 1 / math.e) == pytest.approx(2.0, rel=1e-14)


def test_power_value(power_spec):
    assert eval_f(power_spec, 0.25) == 3.0


def test_proximity_guard(log_spec):
    near = CirclePoint(1 << (256 - 100), 256)
    with pytest.raises(SingularityProximity):
        eval_f(log_spec, near)
    with pytest.raises(SingularityProximity):
        eval_f_prime(log_spec, near)


def test_derivative_examples(log_spec, power_spec):
    assert eval_f_prime(log_spec, 0.5) == pytest.approx(-2.0, rel=1e-14)
    assert eval_f_prime(power_spec, 0.25) == pytest.approx(-4.0, rel=1e-14)


def test_symmetric_log_derivative_cancels():
    spec = CeilingSpec.log(0.3, 1.0, 1.0, 1.0)
    vals = [eval_f_prime(spec, 0.3 + u) + eval_f_prime(spec, 0.3 - u) for u in np.geomspace(1e-9, 1e-2, 20)]
    assert max(abs(v) for v in vals) < 10.0


@pytest.mark.parametrize(
    "spec, want",
    [
        (CeilingSpec.log(0.0, 1.0, 0.0, 0.0), 1.0),
        (CeilingSpec.power(-0.5, 0.0, 1.0, 0.0, 1.0), 3.0),
        (CeilingSpec.log(0.0, 2.0, 1.0, 0.5), 3.5),
    ],
)
def test_integral_examples(spec, want):
    assert integral_f(spec) == pytest.approx(want, rel=1e-14)
    assert _quad(spec) == pytest.approx(want, rel=1e-8)


def test_integral_matches_quadrature_multi():
    spec = CeilingSpec(
        (Singularity(0.1, 1.5, 0.5), Singularity(0.6, 0.0, 2.0)),
        model="power",
        gamma=-0.3,
        offset=0.2,
        weak_singularities=(Singularity(0.8, 0.4, 0.4, -0.1, -0.1),),
    )
    assert integral_f(spec) == pytest.approx(_quad(spec), rel=1e-8)


@pytest.mark.parametrize("spec", [CeilingSpec.log(0.2, 1.0, 0.3, 1.0), CeilingSpec.power(-0.4, 0.7, 0.5, 1.2, 0.5)])
def test_derivative_matches_finite_differences(spec):
    rng = np.random.default_rng(5)
    xs = rng.random(1000)
    u, v = spec.sides_float(xs)
    xs = xs[np.min(np.minimum(u, v), axis=0) > 1e-3]
    h = 1e-6
    fd = (spec.f_float(xs + h) - spec.f_float(xs - h)) / (2 * h)
    exact = spec.fprime_float(xs)
    assert np.max(np.abs(fd - exact) / np.abs(exact)) < 1e-6


def test_H_log_single():
    H = derivative_bound_H(CeilingSpec.log(0.0, 1.0, 0.0, 1.0))
    assert 0 < H <= 2


def test_H_power_and_inequality():
    for spec in (CeilingSpec.power(-0.5, 0.0, 1.0, 0.0, 1.0), CeilingSpec.log(0.25, 2.0, 0.5, 1.0)):
        H = derivative_bound_H(spec)
        assert math.isfinite(H)
        xs = np.random.default_rng(1).random(100_000)
        u, v = spec.sides_float(xs)
        lhs = np.abs(spec.fprime_sides(u, v))
        rhs = H * spec.model_weight_sides(u, v)
        assert np.all(lhs < rhs)


def test_H_without_singular_strength():
    spec = CeilingSpec.log(0.0, 0.0, 0.0, 1.0)
    assert derivative_bound_H(spec) == 1.0


def test_json_round_trip():
    spec = CeilingSpec.power(-0.25, 0.4, 1.0, 0.5, 2.0)
    assert CeilingSpec.from_json(__import__("json").dumps(spec.to_dict())) == spec


def test_bounded_below():
    with pytest.raises(ConfigInvalid):
        CeilingSpec.power(-0.5, 0.0, 0.0, 0.0, 0.0).require_bounded_below()
    with pytest.raises(ConfigInvalid):
        CeilingSpec.log(0.0, 1.0, 0.0, 0.0).require_bounded_below()
    # -ln u - ln(1-u) has minimum 2 ln 2 at u = 1/2
    assert CeilingSpec.log(0.0, 1.0, 1.0, 0.0).require_bounded_below() == pytest.approx(2 * math.log(2), rel=1e-6)
    assert CeilingSpec.log(0.0, 1.0, 0.0, 1.0).require_bounded_below() == 1.0


def test_bad_exponent():
    with pytest.raises(ConfigInvalid):
        CeilingSpec.power(-1.5)
