from __future__ import annotations

import pytest

from faultlab.network import NetworkState
from faultlab.recovery import Outcome, RecoveryFSM, RecoveryTimings, WarmSwap
from faultlab.routing import LINK_DOWN, LINK_UP
from faultlab.simkernel import EventKind, Kernel
from faultlab.topology import Direction

LINK = "c0-0c0s0g0l00"
OTHER = "c1-0c0s0g0l00"


class Harness:
    def __init__(self, topo, timings=None):
        self.kernel = Kernel(1)
        self.net = NetworkState(topo)
        self.records = []
        self.fsm = RecoveryFSM(self.kernel, self.net, self.records.append, timings)
        self.gate = []
        orig_close, orig_open = self.net.close_gate, self.net.open_gate

        def close(t):
            if not self.net.gate_closed:
                self.gate.append(("close", t))
            orig_close(t)

        def open_(t):
            if self.net.gate_closed:
                self.gate.append(("open", t))
            orig_open(t)

        self.net.close_gate, self.net.open_gate = close, open_

    def report(self, t, cname=LINK, asics=0):
        self.kernel.schedule(t, EventKind.FAILURE_REPORT, self.fsm.on_failure_report, cname, asics)

    def run(self, t=3_600_000):
        self.kernel.run_until(t)
        return self.fsm.procedures

    def types(self):
        return [r.event_type for r in self.records]


@pytest.fixture
def h(topo444):
    return Harness(topo444)


def test_single_report_takes_50_seconds(h):
    h.report(1000)
    (p,) = h.run()
    assert p.outcome is Outcome.Success
    assert (p.opened_ms, p.end_ms) == (1000, 51_000)
    assert p.phases == {"Aggregating": 1000, "Quiesce": 11_000, "RouteCompute": 41_000,
                        "RouteInstall": 46_000, "Unquiesce": 50_000}
    # routes unchanged, so the quiesce lasts exactly its 30 seconds
    assert h.gate == [("close", 11_000), ("open", 41_000)]
    assert h.types().count("link_recovery_success") == 1


def test_reports_inside_aggregation_window_share_a_procedure(h):
    for t in (1000, 2000, 10_999):
        h.report(t, f"c{t % 4}-0c0s0g0l00")
    (p,) = h.run()
    assert len(p.triggers) == 3 and p.outcome is Outcome.Success


def test_report_after_aggregation_aborts_and_restarts(h):
    h.report(1000, LINK)
    h.report(20_000, OTHER)
    a, b = h.run()
    assert a.outcome is Outcome.Aborted and a.end_ms == 20_000
    assert set(a.triggers) < set(b.triggers)
    assert b.predecessor == a.id and b.outcome is Outcome.Success
    assert b.end_ms == 70_000
    assert h.types().count("gemini_link_recovery_failed") == 1
    # the gate closed by the first procedure stays closed through the restart
    assert h.gate == [("close", 11_000), ("open", 60_000)]


def test_failed_asics_extend_route_compute(topo444):
    h = Harness(topo444)
    h.report(0, "c0-0c0s0", asics=2)
    (p,) = h.run()
    assert p.phases["RouteInstall"] - p.phases["RouteCompute"] == 5000 + 2 * 14_000


def test_unroutable_reroute_fails(h, topo444):
    for d in Direction:
        h.net.link_states[topo444.connection_links(0, d)] = LINK_DOWN
    h.report(0)
    (p,) = h.run()
    assert p.outcome is Outcome.Failed and p.reason == "RerouteFailure"
    assert "recovery_failed" in h.types() and "reroute_failed" in h.types()
    assert not h.net.gate_closed


def test_warm_swap_takes_90_seconds(h, topo444):
    lids = topo444.connection_links(0, Direction.XP)
    h.net.link_states[lids] = LINK_DOWN
    done = []
    swap = WarmSwap("c0-0c0s0g0", lambda t: h.net.restore_links(lids, t), done=lambda ok, t: done.append((ok, t)))
    h.kernel.schedule(5000, EventKind.RESTORE, h.fsm.request_warm_swap, swap)
    (p,) = h.run()
    assert p.kind == "warm_swap" and p.outcome is Outcome.Success
    assert p.end_ms - p.opened_ms == 90_000
    assert done == [(True, 95_000)]
    assert (h.net.link_states[lids] == LINK_UP).all()


def test_failed_warm_swap(h):
    h.kernel.schedule(0, EventKind.RESTORE, h.fsm.request_warm_swap, WarmSwap("c0-0c0s0g0", lambda t: None, fail=True))
    (p,) = h.run()
    assert p.outcome is Outcome.Failed and p.end_ms == 50_000
    assert "warm_swap_failed" in h.types()


def test_reports_during_warm_swap_are_held(h):
    h.kernel.schedule(0, EventKind.RESTORE, h.fsm.request_warm_swap, WarmSwap("c0-0c0s0g0", lambda t: None))
    h.report(20_000)
    h.report(30_000, OTHER)
    swap, rec = h.run()
    assert swap.outcome is Outcome.Success
    assert rec.opened_ms == 30_000 and rec.phases["Aggregating"] == 90_000
    assert rec.triggers == [LINK, OTHER]


def test_timings_reject_unknown_keys():
    with pytest.raises(ValueError):
        RecoveryTimings.from_json({"quiesce": 3})
    assert RecoveryTimings.from_json({"quiesce_ms": 3}).quiesce_ms == 3

