from __future__ import annotations

import math
from decimal import Decimal, localcontext

import pytest

from specialflows.arithmetic import cf_expand
from specialflows.ceiling import CeilingSpec

GOLDEN = "surd:-1,1,5,2"
SQRT2 = "surd:-1,1,2,1"


def e_minus_two(digits: int = 160) -> str:
    with localcontext() as ctx:
        ctx.prec = digits + 10
        e = sum(Decimal(1) / math.factorial(k) for k in range(digits))
        return "dec:" + str(+(e - 2))[: digits + 2]


@pytest.fixture(scope="session")
def golden():
    return cf_expand(GOLDEN, 40)


@pytest.fixture(scope="session")
def sqrt2():
    return cf_expand(SQRT2, 30)


@pytest.fixture(scope="session")
def e_cf():
    return cf_expand(e_minus_two(), 30)


@pytest.fixture(scope="session")
def log_spec():
    return CeilingSpec.log(0.0, 1.0, 0.0, 1.0)


@pytest.fixture(scope="session")
def power_spec():
    return CeilingSpec.power(-0.5, 0.0, 1.0, 0.0, 1.0)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
