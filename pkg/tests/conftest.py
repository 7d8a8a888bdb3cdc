from __future__ import annotations

import json

import pytest

from hslg.acceptance import FULL
from hslg.rng import RngStream
from hslg.vfunction import DEFAULT_GRID, VTable, build_v_table

SUITE_SEED = 2024


@pytest.fixture(scope="session")
def vtable(request) -> VTable:
    """The acceptance-size table (theta = alpha = 1), cached between sessions."""
    key = f"hslg/vtable-{SUITE_SEED}-{FULL.vt_reps}-{'-'.join(map(str, FULL.vt_schedule))}"
    cached = request.config.cache.get(key, None)
    if cached is not None:
        try:
            return VTable.from_dict(json.loads(cached))
        except (KeyError, ValueError):
            pass
    tab = build_v_table(DEFAULT_GRID, list(FULL.vt_schedule), FULL.vt_reps, 1.0, 1.0,
                        RngStream.for_experiment(SUITE_SEED, "vtable"), strict=False)
    request.config.cache.set(key, json.dumps(tab.to_dict()))
    return tab


VERDICT_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if VERDICT_LINES:
        terminalreporter.section("acceptance criteria")
        for line in VERDICT_LINES:
            terminalreporter.write_line(line)
