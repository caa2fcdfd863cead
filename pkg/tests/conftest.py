from __future__ import annotations

import time
from importlib import resources
from pathlib import Path

import pytest

from faultlab.hpcarrow import load_campaign, run_campaign
from faultlab.topology import build_topology

FIXTURES = Path(__file__).parent / "fixtures"
CAMPAIGN_DIR = Path(str(resources.files("faultlab") / "campaigns"))
CAMPAIGNS = sorted(p.stem for p in CAMPAIGN_DIR.glob("*.json"))

_runs: dict = {}


def campaign(name: str):
    return load_campaign(CAMPAIGN_DIR / f"{name}.json")


def shipped_run(name: str, seed: int | None = None):
    """Artifacts of a shipped campaign, cached for the whole session."""
    key = (name, seed)
    if key not in _runs:
        camp = campaign(name)
        if seed is not None:
            camp = camp.with_overrides(seed=seed)
        _runs[key] = (camp, run_campaign(camp))
    return _runs[key]


@pytest.fixture(scope="session")
def topo444():
    return build_topology((4, 4, 4))


_SESSION_START = time.perf_counter()
SUITE_BUDGET_S = 300


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    elapsed = time.perf_counter() - _SESSION_START
    ok = elapsed < SUITE_BUDGET_S
    terminalreporter.write_line(
        f"criterion 11 (runtime): {'PASS' if ok else 'FAIL'} - suite ran in {elapsed:.1f}s, budget {SUITE_BUDGET_S}s")


def pytest_sessionfinish(session, exitstatus):
    if time.perf_counter() - _SESSION_START >= SUITE_BUDGET_S and exitstatus == 0:
        session.exitstatus = 1
