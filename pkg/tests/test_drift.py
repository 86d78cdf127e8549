from __future__ import annotations

import math

import numpy as np
import pytest

from specialflows.arithmetic import cf_expand
from specialflows.ceiling import CeilingSpec
from specialflows.drift import (
    BACKWARD,
    FORWARD,
    DriftParams,
    rotation_gap_check,
    find_drift,
    find_drift_log,
    find_drift_power,
    find_scale,
    len_bound_check,
    resolve,
    sample_pairs,
    scale_thresholds,
    swr_ensemble,
    verify_switchable_window,
    wr_failure_construct,
    wr_failure_verify,
)
from specialflows.errors import (
    ConfigInvalid,
    ConstructionFailed,
    NonResonanceBothSides,
    OutOfRange,
    SpecialFlowError,
)

from conftest import GOLDEN

MIRROR_GOLDEN = "surd:3,-1,5,2"  # 1 - golden


def test_scale_boundary(log_spec, golden):
    th = scale_thresholds(log_spec, golden)
    assert find_scale(th[5], None, log_spec, golden) == 5
    mid = 0.5 * (th[6] + th[7])
    assert find_scale(mid, None, log_spec, golden) == 6
    assert find_scale(0.2, 0.2 + mid, log_spec, golden) == 6
    with pytest.raises(OutOfRange):
        find_scale(th[1] * 1.01, None, log_spec, golden)
    with pytest.raises(OutOfRange):
        find_scale(th[-1] * 0.5, None, log_spec, golden)


def test_resolved_constants(log_spec, golden):
    res = resolve(DriftParams(), log_spec, golden)
    lo, hi = res.P_band
    assert 0 < lo < hi
    assert 0 < res.kappa < 1
    assert res.d == pytest.approx(0.9)
    assert not res.in_band(0.0) and res.in_band(-0.5 * (lo + hi))
    assert res.to_dict()["P_band"] == [-hi, -lo, lo, hi]


@pytest.fixture(scope="module")
def log_reports():
    cf = cf_expand(GOLDEN, 40)
    spec = CeilingSpec.log(0.0, 1.0, 0.0, 1.0)
    res = resolve(DriftParams(), spec, cf)
    out = []
    for x, y in sample_pairs(spec, cf, res, 25, seed=7, s_range=(8, 8)):
        try:
            out.append(find_drift_log(x, y, DriftParams(), spec, cf, res))
        except SpecialFlowError:
            out.append(None)
    return res, out


def test_log_drift_at_scale_eight(log_reports):
    res, reports = log_reports
    good = [r for r in reports if r is not None and r.success]
    assert len(good) >= 0.9 * len(reports)
    for r in good:
        assert r.scale_s == 8
        assert res.in_band(r.p)
        M, L = r.window
        assert L / M >= res.kappa and min(M, L) >= res.N
        assert r.window_good_fraction == 1.0
        assert r.budget_ok


def test_symmetric_log_refused(golden):
    spec = CeilingSpec.log(0.0, 1.0, 1.0, 1.0)
    with pytest.raises(ConfigInvalid):
        find_drift(0.3, 0.3001, DriftParams(), spec, golden)


def test_power_refuses_unbounded_quotients(power_spec):
    cf = cf_expand("cf:1,50,1,2,300,1", 20)
    with pytest.raises(ConfigInvalid):
        find_drift_power(0.3, 0.30001, DriftParams(), power_spec, cf)


def test_power_jump_on_sqrt2(power_spec, sqrt2):
    res = resolve(DriftParams(), power_spec, sqrt2)
    th = scale_thresholds(power_spec, sqrt2)
    d = math.sqrt(th[7] * th[8])
    rng = np.random.default_rng(0)
    hits = 0
    for _ in range(20):
        x = float(rng.random())
        try:
            r = find_drift_power(x, x + d, DriftParams(), power_spec, sqrt2, res)
        except SpecialFlowError:
            continue
        hits += 1
        assert res.in_band(r.p)
        assert r.branch in ("forward_clear", "backward_clear")
    assert hits >= 12


def test_power_both_sides_resonant(power_spec, golden):
    params = DriftParams(C=1.2)
    res = resolve(params, power_spec, golden)
    x, d = 0.016527635528529094, 0.0005870439655250812
    with pytest.raises(NonResonanceBothSides):
        find_drift_power(x, x + d, params, power_spec, golden, res)


def test_empty_window_is_vacuous(log_spec, golden):
    assert verify_switchable_window(0.1, 0.2, DriftParams(), FORWARD, 0) == 1.0


def test_halved_epsilon_is_reported(log_spec, golden, log_reports):
    res, reports = log_reports
    r = next(r for r in reports if r is not None and r.success)
    frac = verify_switchable_window(0.3, 0.3 + r.distance, DriftParams(epsilon=0.05), r.direction, 50, log_spec, golden)
    assert 0.0 <= frac <= 1.0


def test_empty_ensemble(log_spec, golden):
    out = swr_ensemble(DriftParams(), log_spec, golden, 0, 1)
    assert out["pairs"] == 0 and out["success_rate"] is None


def test_small_ensemble_deterministic(log_spec, golden):
    a = swr_ensemble(DriftParams(), log_spec, golden, 20, 3)
    b = swr_ensemble(DriftParams(), log_spec, golden, 20, 3)
    assert a == b
    assert a["success_rate"] >= 0.9
    assert 0 < sum(a["direction_histogram"].values()) <= a["pairs"]


def test_mirror_swaps_alternatives(log_spec):
    cf = cf_expand(GOLDEN, 40)
    mirror = cf_expand(MIRROR_GOLDEN, 40)
    res = resolve(DriftParams(), log_spec, cf)
    alpha = (math.sqrt(5) - 1) / 2
    checked = 0
    for x, y in sample_pairs(log_spec, cf, res, 16, seed=2, s_range=(8, 10)):
        try:
            r = find_drift_log(x, y, DriftParams(), log_spec, cf, res)
        except SpecialFlowError:
            continue
        # f^(n) under 1-alpha at (x-alpha) equals -f^(-n) under alpha at x
        xm, ym = x.shift(-alpha), y.shift(-alpha)
        m = find_drift_log(xm, ym, DriftParams(), log_spec, mirror, res)
        swap = {FORWARD: BACKWARD, BACKWARD: FORWARD}
        for direction, alt in r.alternatives.items():
            other = m.alternatives[swap[direction]]
            assert other["n0"] == alt["n0"]
            assert abs(other["p"]) == pytest.approx(abs(alt["p"]), rel=1e-9)
        checked += 1
    assert checked >= 10


def test_wr_construction_fails_at_w8(golden):
    with pytest.raises(ConstructionFailed) as err:
        wr_failure_construct(golden, -0.5, 1.0, 8, samples=5)
    assert err.value.stage == "W0,1"


@pytest.fixture(scope="module")
def wr21():
    cf = cf_expand(GOLDEN, 40)
    return cf, wr_failure_construct(cf, -0.5, 1.0, 21, samples=3, seed=1)


def test_wr_construction_at_w21(wr21):
    cf, con = wr21
    assert con.delta0_in_range
    lo, hi = con.delta0_range
    assert lo <= con.delta0 <= hi
    assert con.d > con.c ** 1.5
    assert len(con.samples) == 3
    assert con.w0_measure > 0


def test_wr_verify_jump_at_w21(wr21, power_spec):
    cf, con = wr21
    spec = CeilingSpec.power(-0.5, 0.0, 1.0, 0.0, 1.0)
    bound = 0.5 * con.d**2 / (200 * con.c**2)
    for smp in con.samples:
        v = wr_failure_verify(smp["x"], con.delta0, DriftParams(), spec, cf, 21, i0=smp["i0"])
        assert v["pre_ok"] and v["post_ok"] and v["monotone"]
        assert v["pre_jump_max"] < 100 * con.c / con.d
        assert v["post_jump_min"] > 0.5 * con.d / 2
        assert v["jump_ratio"] > bound
        assert v["passed"]


def test_rotation_gaps_hold_up_to_constant(wr21):
    cf, con = wr21
    rep = rotation_gap_check(cf, con.delta0, 0.1, k_max=2000)
    # the bare bound fails only at convergent denominators, by a bounded factor
    fib = set(cf.denominators)
    assert all(abs(k) in fib for k in rep["failures"])
    assert rep["min_scaled_distance"] > 0.3


def test_len_bound(golden, power_spec):
    rep = len_bound_check(power_spec, golden, 0.3, 0.3 + 1e-6, 0.05, 5000)
    assert rep["passed"]
