"""Exit criteria A1-A10 at their stated sizes and tolerances.

Each criterion prints one PASS/FAIL line per verdict; the lines are also
repeated in the terminal summary (see conftest.py).
"""
from __future__ import annotations

import pytest

from hslg.acceptance import CRITERIA, FULL, Suite

from .conftest import SUITE_SEED, VERDICT_LINES

pytestmark = [pytest.mark.acceptance, pytest.mark.slow]


@pytest.fixture(scope="module")
def suite(vtable):
    return Suite(FULL, SUITE_SEED, table=vtable)


@pytest.mark.parametrize("criterion", CRITERIA)
def test_criterion(suite, criterion):
    verdicts = suite.run([criterion])
    ok = all(v.passed for v in verdicts)
    line = f"{criterion} {'PASS' if ok else 'FAIL'} ({suite.timings[criterion]:.0f}s): " + "; ".join(
        f"{v.test_id}={v.statistic:.4g} (thr {v.threshold:.4g}, {'ok' if v.passed else 'fail'})" for v in verdicts)
    VERDICT_LINES.append(line)
    print(line)
    assert ok, line
