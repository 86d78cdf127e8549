from __future__ import annotations

import math

import pytest

from specialflows.arithmetic import cf_expand
from specialflows.ceiling import CeilingSpec
from specialflows.errors import ConfigInvalid
from specialflows.mixing import (
    CorrelationSeries,
    RectSet,
    analytic_correlation,
    correlation2,
    correlation3,
    decay_scan,
    kochergin_setup,
    overlap_measure,
)

from conftest import GOLDEN


@pytest.fixture(scope="module")
def setup():
    spec, A = kochergin_setup()
    cf = cf_expand(GOLDEN, 40)
    B = RectSet.under_graph(spec, 0.3, 0.3, 1.5)
    C = RectSet.under_graph(spec, 0.7, 0.2, 1.0)
    return spec, cf, A, B, C


def test_rect_measure(setup):
    spec, _, A, _, _ = setup
    assert A.measure(spec) == pytest.approx(0.2 * A.height / 3.0)
    assert A.height == pytest.approx(1 + 0.4**-0.5, rel=1e-6)


def test_height_above_graph_refused(setup):
    spec = setup[0]
    with pytest.raises(ConfigInvalid):
        RectSet.under_graph(spec, 0.2, 0.2, 10.0)


def test_overlap_wraps_around(setup):
    spec = setup[0]
    a = RectSet(0.9, 0.2, 1.0)
    b = RectSet(0.0, 0.05, 1.0)
    assert overlap_measure(spec, [a, b]) == pytest.approx(0.05 / 3.0)


def test_same_set_at_zero(setup):
    spec, cf, A, _, _ = setup
    mu = A.measure(spec)
    row = correlation2(spec, cf, A, A, 0.0, 2000, seed=1)
    assert row.estimate == pytest.approx(mu - mu * mu, abs=max(3 * row.stderr, 1e-15))
    row3 = correlation3(spec, cf, A, A, A, 0.0, 0.0, 2000, seed=1)
    assert row3.estimate == pytest.approx(mu - mu**3, abs=max(3 * row3.stderr, 1e-15))


def test_disjoint_at_zero(setup):
    spec, cf, A, _, C = setup
    row = correlation2(spec, cf, A, C, 0.0, 2000, seed=1)
    assert row.estimate == pytest.approx(-A.measure(spec) * C.measure(spec), abs=max(3 * row.stderr, 1e-15))


def test_unbiased_over_seeds(setup):
    spec, cf, A, B, _ = setup
    want = analytic_correlation(spec, [A, B])
    for seed in range(30):
        row = correlation2(spec, cf, A, B, 0.0, 4000, seed=seed)
        assert abs(row.estimate - want) <= 3 * row.stderr


def test_triple_unbiased(setup):
    spec, cf, A, B, _ = setup
    D = RectSet(0.25, 0.3, 0.8)
    want = analytic_correlation(spec, [A, B, D])
    for seed in range(10):
        row = correlation3(spec, cf, A, B, D, 0.0, 0.0, 4000, seed=seed)
        assert abs(row.estimate - want) <= 3 * row.stderr


def test_stderr_rate(setup):
    spec, cf, A, B, _ = setup
    small = correlation2(spec, cf, A, B, 20.0, 40_000, seed=5)
    big = correlation2(spec, cf, A, B, 20.0, 80_000, seed=5)
    # doubling the sample count shrinks the error by sqrt(2)
    assert big.stderr / small.stderr == pytest.approx(1 / math.sqrt(2), rel=0.2)


def test_rotation_equivariance(setup):
    spec, cf, A, B, _ = setup
    theta = 0.25
    turned = CeilingSpec.power(-0.5, theta, 1.0, 0.0, 1.0)
    a = correlation2(spec, cf, A, B, 30.0, 20_000, seed=9)
    b = correlation2(turned, cf, A.rotated(theta), B.rotated(theta), 30.0, 20_000, seed=9)
    assert abs(a.estimate - b.estimate) <= 1e-3


def test_scan_grid_contract(setup):
    spec, cf, A, B, _ = setup
    assert decay_scan(spec, cf, [A, B], [], 2, 100, 0).rows == []
    grid = [float(t) for t in range(1, 51)]
    one = decay_scan(spec, cf, [A, B], grid, 2, 200, 4)
    two = decay_scan(spec, cf, [A, B], grid, 2, 200, 4)
    assert len(one.rows) == 50 and one.to_csv() == two.to_csv()
    rev = decay_scan(spec, cf, [A, B], grid[::-1], 2, 200, 4)
    assert rev.rows[::-1] == one.rows


def test_scan_order_three(setup):
    spec, cf, A, B, C = setup
    rows = decay_scan(spec, cf, [A, B, C], [2.0, 4.0], 3, 500, 1).rows
    assert [(r.t, r.t2, r.order) for r in rows] == [(2.0, 4.0, 3), (4.0, 8.0, 3)]


def test_csv_header(setup):
    spec, cf, A, B, _ = setup
    text = CorrelationSeries([correlation2(spec, cf, A, B, 1.0, 100, 0)]).to_csv()
    assert text.splitlines()[0] == "t,t2,order,estimate,stderr,samples,seed,aborts"


def test_bad_times(setup):
    spec, cf, A, B, C = setup
    with pytest.raises(ConfigInvalid):
        correlation3(spec, cf, A, B, C, 5.0, 2.0, 100, 0)
    with pytest.raises(ConfigInvalid):
        correlation2(spec, cf, A, B, -1.0, 100, 0)
    with pytest.raises(ConfigInvalid):
        decay_scan(spec, cf, [A, B], [1.0], 4, 100, 0)
