"""Acceptance criteria 1-9, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py`` (the lines are repeated in the
terminal summary) or directly with ``python tests/test_acceptance.py``.
Criteria that fail for documented mathematical reasons are marked xfail
(strict), so an unexpected pass is reported too.
"""

from __future__ import annotations

import io
import json
import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from conftest import GOLDEN, SQRT2, e_minus_two  # noqa: E402
from specialflows.arithmetic import CirclePoint, cf_expand, verify_red0  # noqa: E402
from specialflows.birkhoff import BirkhoffRequest, birkhoff_sum, dk_verify, xcv_bracket_check  # noqa: E402
from specialflows.ceiling import LOG, CeilingSpec, SingularModel  # noqa: E402
from specialflows.cli import run as cli_run  # noqa: E402
from specialflows.drift import BACKWARD, FORWARD, DriftParams, scale_thresholds, swr_ensemble, wr_failure_construct, wr_failure_verify  # noqa: E402
from specialflows.errors import ConstructionFailed, NonResonanceViolated, SingularityProximity  # noqa: E402
from specialflows.gauss import block_quotient_stat, correlation_grid, gauss_invariant_sample, ks_test  # noqa: E402
from specialflows.mixing import RectSet, analytic_correlation, correlation2, correlation3, kochergin_setup  # noqa: E402

RESULTS: list[str] = []


def record(n: int | str, ok: bool, summary: str, t0: float) -> bool:
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {summary} [{time.perf_counter() - t0:.1f}s]"
    print(line, flush=True)
    RESULTS.append(line)
    return ok


# ---------------------------------------------------------------------------


def test_criterion_1_red0():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    sources = [GOLDEN, SQRT2, e_minus_two()]
    sources += ["cf:" + ",".join(str(a) for a in rng.integers(1, 11, 27)) for _ in range(100)]
    bad = 0
    for src in sources:
        cf = cf_expand(src, 28)
        rows = verify_red0(cf, 25)
        bad += sum(not r.passed for r in rows)
    dt = time.perf_counter() - t0
    ok = bad == 0 and dt < 5
    record(1, ok, f"red0 bracket exact for s<=25 on {len(sources)} rotation numbers, {bad} failures", t0)
    assert ok


def test_criterion_2_cocycle():
    t0 = time.perf_counter()
    cf = cf_expand(GOLDEN, 40)
    spec = CeilingSpec.log(0.0, 1.0, 0.0, 1.0)
    rng = np.random.default_rng(2)
    worst_cocycle = worst_anti = 0.0
    skipped = 0
    for _ in range(1000):
        x = CirclePoint.from_value(float(rng.random()))
        m, n = (int(v) for v in rng.integers(-10_000, 10_001, 2))
        try:
            lhs = birkhoff_sum(BirkhoffRequest(spec, cf, x, m + n))
            a = birkhoff_sum(BirkhoffRequest(spec, cf, x, m))
            b = birkhoff_sum(BirkhoffRequest(spec, cf, x.rotate(cf, m), n))
            neg = birkhoff_sum(BirkhoffRequest(spec, cf, x, -abs(n)))
            pos = birkhoff_sum(BirkhoffRequest(spec, cf, x.rotate(cf, -abs(n)), abs(n)))
        except SingularityProximity:
            skipped += 1
            continue
        worst_cocycle = max(worst_cocycle, abs(lhs - a - b) / max(abs(m) + abs(n), 1))
        worst_anti = max(worst_anti, abs(neg + pos) / max(abs(n), 1))
    worst_rel = 0.0
    power = CeilingSpec.power(-0.5, 0.0, 1.0, 0.0, 1.0)
    for n in rng.integers(1, 100_001, 10):
        for sp in (spec, power):
            x = CirclePoint.from_value(float(rng.random()))
            fast = birkhoff_sum(BirkhoffRequest(sp, cf, x, int(n)))
            naive = birkhoff_sum(BirkhoffRequest(sp, cf, x, int(n)), method="naive")
            worst_rel = max(worst_rel, abs(fast - naive) / abs(naive))
    dt = time.perf_counter() - t0
    ok = worst_cocycle <= 1e-12 and worst_anti <= 1e-12 and worst_rel <= 1e-9 and skipped == 0 and dt < 60
    record(
        2,
        ok,
        f"cocycle {worst_cocycle:.2e}|n|, antisymmetry {worst_anti:.2e}|n| (limit 1e-12), fast vs naive rel {worst_rel:.2e} (limit 1e-9)",
        t0,
    )
    assert ok


def test_criterion_3_denjoy_koksma():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    total = bad = 0
    for src in (GOLDEN, SQRT2):
        cf = cf_expand(src, 30)
        for model in (SingularModel(LOG), SingularModel(-0.5)):
            for s in range(0, 13):
                for x in rng.random(100):
                    total += 1
                    bad += not dk_verify(model, cf, float(x), s).passed
    dt = time.perf_counter() - t0
    ok = bad == 0 and dt < 60
    record(3, ok, f"dk_verify {total - bad}/{total} pass for -ln and x^-1/2, s<=12, golden and sqrt2-1", t0)
    assert ok


def xcv_sieved_pairs(spec, cf, s, count, rng):
    """Pairs at scale s whose q_s-orbit clears the non-resonance windows."""
    th = scale_thresholds(spec, cf)
    out = []
    while len(out) < count:
        x = float(rng.random())
        dist = math.exp(rng.uniform(math.log(th[s + 1]), math.log(th[s])))
        try:
            out.append(xcv_bracket_check(spec, cf, x, x + dist, s, d=0.9))
        except NonResonanceViolated:
            continue
    return out


@pytest.mark.xfail(strict=True, reason="upper side of the bracket is exceeded at s <= 14; see decisions ledger")
def test_criterion_4_xcv_bracket():
    t0 = time.perf_counter()
    cf = cf_expand(GOLDEN, 40)
    spec = CeilingSpec.log(0.0, 1.0, 0.0, 1.0)
    rng = np.random.default_rng(4)
    per_s = {}
    above = below = 0
    for s in range(8, 15):
        res = xcv_sieved_pairs(spec, cf, s, 50, rng)
        per_s[s] = sum(r.passed for r in res)
        above += sum(r.mid > r.lhs for r in res)
        below += sum(r.mid < r.rhs for r in res)
    dt = time.perf_counter() - t0
    ok = all(v == 50 for v in per_s.values()) and dt < 120
    detail = ", ".join(f"s={s}:{v}/50" for s, v in per_s.items())
    record(4, ok, f"xcv bracket d=0.9 {detail}; above upper {above}, below lower {below}", t0)
    assert ok


def test_criterion_5_drift():
    t0 = time.perf_counter()
    golden = cf_expand(GOLDEN, 40)
    sqrt2 = cf_expand(SQRT2, 30)
    log_spec = CeilingSpec.log(0.0, 1.0, 0.0, 1.0)
    power_spec = CeilingSpec.power(-0.5, 0.0, 1.0, 0.0, 1.0)
    log_run = swr_ensemble(DriftParams(epsilon=0.1), log_spec, golden, 200, 5)
    pow_run = swr_ensemble(DriftParams(epsilon=0.1), power_spec, sqrt2, 100, 5)
    hist = pow_run["direction_histogram"]
    dt = time.perf_counter() - t0
    ok = (
        log_run["success_rate"] >= 0.9
        and log_run["success_checks_ok"]
        and hist.get(FORWARD, 0) > 0
        and hist.get(BACKWARD, 0) > 0
        and dt < 600
    )
    record(
        5,
        ok,
        f"log success_rate {log_run['success_rate']:.3f} (>=0.9), checks ok {log_run['success_checks_ok']}, "
        f"log directions {log_run['direction_histogram']}; power sqrt2-1 directions {hist}, success_rate {pow_run['success_rate']:.2f}",
        t0,
    )
    assert ok


def _wr_run(w: int, samples: int):
    cf = cf_expand(GOLDEN, 40)
    spec = CeilingSpec.power(-0.5, 0.0, 1.0, 0.0, 1.0)
    con = wr_failure_construct(cf, -0.5, 1.0, w, samples=samples, seed=6)
    passed = aborts = 0
    for smp in con.samples:
        try:
            v = wr_failure_verify(smp["x"], con.delta0, DriftParams(), spec, cf, w, i0=smp["i0"])
        except SingularityProximity:
            aborts += 1
            continue
        passed += v["passed"]
    return con, passed, aborts


@pytest.mark.xfail(strict=True, raises=AssertionError, reason="W0,1 is empty at w=8 for golden alpha; see decisions ledger")
def test_criterion_6_wr_failure():
    t0 = time.perf_counter()
    try:
        con, passed, aborts = _wr_run(8, 50)
    except ConstructionFailed as exc:
        diag = exc.diagnostics
        record(
            6,
            False,
            f"w=8: ConstructionFailed at stage {exc.stage}: longest orbit-free gap {diag.get('max_gap', float('nan')):.4f} "
            f"< required window {diag.get('window', float('nan')):.4f}",
            t0,
        )
        raise AssertionError(f"construction failed at stage {exc.stage}") from exc
    ok = passed + aborts == 50 and passed >= 0.95 * 50 and time.perf_counter() - t0 < 300
    record(6, ok, f"w=8: {passed}/50 samples pass, {aborts} precision aborts", t0)
    assert ok


def test_criterion_6_supplement_w21():
    """Same checks at the smallest w where the construction is nonempty."""
    t0 = time.perf_counter()
    con, passed, aborts = _wr_run(21, 50)
    ok = passed + aborts == 50 and passed >= 0.95 * 50
    record("6 (supplement, w=21)", ok, f"{passed}/50 samples pass the band jump and monotonicity, {aborts} precision aborts, d={con.d:.1f}", t0)
    assert ok


@pytest.mark.xfail(strict=True, reason="3-fold correlation at (500, 1000) is still ~5e-4, far above the 1e6-sample stderr; see decisions ledger")
def test_criterion_7_mixing():
    t0 = time.perf_counter()
    cf = cf_expand(GOLDEN, 40)
    spec, A = kochergin_setup()
    B = RectSet.under_graph(spec, 0.3, 0.3, 1.5)
    C = RectSet.under_graph(spec, 0.7, 0.2, 1.0)
    combos2 = [(A, A), (A, B), (A, C)]
    combos3 = [(A, A, A), (A, B, RectSet(0.25, 0.3, 0.8)), (A, B, C)]
    misses = 0
    for seed in range(30):
        for X, Y in combos2:
            row = correlation2(spec, cf, X, Y, 0.0, 4000, seed)
            misses += abs(row.estimate - analytic_correlation(spec, [X, Y])) > max(3 * row.stderr, 1e-15)
        for X, Y, Z in combos3:
            row = correlation3(spec, cf, X, Y, Z, 0.0, 0.0, 4000, seed)
            misses += abs(row.estimate - analytic_correlation(spec, [X, Y, Z])) > max(3 * row.stderr, 1e-15)
    early = correlation2(spec, cf, A, A, 5.0, 1_000_000, 7)
    late = correlation2(spec, cf, A, A, 500.0, 1_000_000, 7)
    triple = correlation3(spec, cf, A, A, A, 500.0, 1000.0, 1_000_000, 7)
    factor = abs(early.estimate) / max(abs(late.estimate), 1e-300)
    dt = time.perf_counter() - t0
    zero_ok = misses == 0
    decay_ok = factor >= 3
    triple_ok = abs(triple.estimate) <= 3 * triple.stderr
    ok = zero_ok and decay_ok and triple_ok and dt < 1200
    record(
        7,
        ok,
        f"t=0 misses {misses}/180; |c(5)|={abs(early.estimate):.2e}, |c(500)|={abs(late.estimate):.2e}+-{late.stderr:.1e}, "
        f"factor {factor:.1f} (>=3); 3-fold (500,1000) {triple.estimate:.2e}+-{triple.stderr:.1e} "
        f"({abs(triple.estimate) / triple.stderr:.1f} stderr, limit 3)",
        t0,
    )
    assert ok


def test_criterion_8_gauss():
    t0 = time.perf_counter()
    _, p = ks_test(gauss_invariant_sample(100_000, 8))
    grid = correlation_grid(0.01, range(1, 11), range(1, 11), 1_000_000, 8)
    worst = max(g.ratio for g in grid)
    blocks = block_quotient_stat(3, 12, d=4.0, samples=1_000_000, seed=8)
    dt = time.perf_counter() - t0
    ok = p > 0.01 and worst < 10 and blocks.slope is not None and blocks.slope <= -1.2 and dt < 600
    record(8, ok, f"KS p={p:.3f}; max ratio {worst:.2f} over {len(grid)} (k,l); block slope {blocks.slope:.2f} (<= -1.2)", t0)
    assert ok


DETERMINISM_CASES = [
    ["cf", "--alpha", "surd:-1,1,5,2", "--depth", "30"],
    ["sieve", "--alpha", "surd:-1,1,2,1", "--depth", "25"],
    ["birkhoff", "--alpha", "surd:-1,1,5,2", "--x", "0.1", "--y", "0.10001", "--n", "1,1000,-500"],
    ["flow", "--alpha", "surd:-1,1,5,2", "--x", "0.7", "--times", "1,37.25,-12"],
    ["drift", "--alpha", "surd:-1,1,5,2", "--pairs", "20", "--seed", "9"],
    ["drift", "--alpha", "surd:-1,1,2,1", "--pairs", "10", "--seed", "9", "--power"],
    ["wrfail", "--alpha", "surd:-1,1,5,2", "--w", "8", "--samples", "5", "--seed", "9"],
    ["mixing", "--alpha", "surd:-1,1,5,2", "--t-grid", "0,5,50", "--samples", "20000", "--seed", "9"],
    ["mixing", "--alpha", "surd:-1,1,5,2", "--order", "3", "--t-grid", "5", "--samples", "20000", "--seed", "9"],
    ["gauss", "--task", "ks", "--seed", "9"],
    ["gauss", "--task", "ratio", "--samples", "20000", "--seed", "9"],
    ["gauss", "--task", "blocks", "--samples", "20000", "--n-max", "6", "--seed", "9"],
    ["gauss", "--task", "evidence", "--alpha", "surd:-1,1,5,2", "--depth", "20"],
]

LOG_JSON = json.dumps({"model": "log", "singularities": [{"a": 0.0, "A": 1.0, "B": 0.0}], "offset": 1.0})
POW_JSON = json.dumps({"model": "power", "gamma": -0.5, "singularities": [{"a": 0.0, "A": 1.0, "B": 0.0}], "offset": 1.0})


def _argv(case):
    argv = [a for a in case if a != "--power"]
    if argv[0] in ("birkhoff", "flow", "drift"):
        argv += ["--ceiling", POW_JSON if "--power" in case else LOG_JSON]
    return argv


def test_criterion_9_determinism(tmp_path):
    t0 = time.perf_counter()
    differ = []
    for i, case in enumerate(DETERMINISM_CASES):
        outs = []
        for k in range(2):
            out_dir = tmp_path / f"c{i}_{k}"
            buf = io.StringIO()
            cli_run(_argv(case) + ["--out", str(out_dir)], buf)
            files = {p.name: p.read_bytes() for p in sorted(out_dir.iterdir())}
            outs.append((buf.getvalue(), files))
        if outs[0] != outs[1]:
            differ.append(case[0])
    ok = not differ
    record(9, ok, f"{len(DETERMINISM_CASES) - len(differ)}/{len(DETERMINISM_CASES)} CLI configs byte-identical on re-run", t0)
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
