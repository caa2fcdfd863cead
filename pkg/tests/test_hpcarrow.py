from __future__ import annotations

import json

import numpy as np
import pytest

from faultlab.hpcarrow import (
    AlreadyDown, CampaignInvalid, blade_report_groups, campaign_from_json, inject_connection,
    injection_schedule, pick_2cf_targets, run_campaign, run_header,
)
from faultlab.routing import LINK_DOWN, healthy_link_states
from faultlab.topology import Direction

from conftest import CAMPAIGNS, campaign, shipped_run


def _doc(**over):
    doc = {"name": "t", "dims": "4x4x4", "seed": 1, "workload": {"nano": 1, "nodes_per": {"nano": 8}},
           "duration_ms": 120_000, "injections": [{"at_ms": 10_000, "cmd": "LF", "target": "c1-1c0s1g0l03"}]}
    doc.update(over)
    return doc


@pytest.mark.parametrize("over,where", [
    ({"bogus": 1}, "campaign"),
    ({"schema": 2}, "schema"),
    ({"dims": "4x4"}, "dims"),
    ({"injections": [{"at_ms": 0, "cmd": "ZAP"}]}, "injections[0]"),
    ({"injections": [{"at_ms": 0, "cmd": "LF", "target": "c1-1c0s1g0"}]}, "injections[0]"),
    ({"injections": [{"at_ms": 0, "cmd": "SCF", "target": "c1-1c0s1g0:W+"}]}, "injections[0]"),
    ({"injections": [{"at_ms": 5, "cmd": "NF"}, {"at_ms": 4, "cmd": "NF"}]}, "injections[1]"),
    ({"injections": [{"at_ms": 0, "cmd": "2CF", "dirs": ["X+", "X-"]}]}, "injections[0]"),
    ({"restorations": [{"at_ms": 0, "cmd": "BR", "targets": "c0-0c0s0g0l00"}]}, "restorations[0]"),
    ({"workload": {"small": 1}}, "workload"),
])
def test_invalid_campaigns_name_the_entry(over, where):
    with pytest.raises(CampaignInvalid) as exc:
        campaign_from_json(_doc(**over))
    assert exc.value.where == where


def test_campaign_json_round_trip():
    camp = campaign_from_json(_doc())
    again = campaign_from_json(json.loads(json.dumps(camp.to_json())))
    assert again.digest() == camp.digest()
    assert camp.with_overrides(seed=9).digest() != camp.digest()


def test_injection_schedule_cycles_gaps():
    assert injection_schedule(4, 375, 40_000) == [40_000, 40_375, 40_750, 41_125]
    assert injection_schedule(5, [3000, 3000, 28_000], 0) == [0, 3000, 6000, 34_000, 37_000]


def test_inject_connection_skips_down_links(topo444):
    states = healthy_link_states(topo444)
    lids = topo444.connection_links(0, Direction.XP)
    states[lids[:6]] = LINK_DOWN
    assert [l for _, l in inject_connection(topo444, states, 0, Direction.XP, 375)] == [int(v) for v in lids[6:]]
    states[lids] = LINK_DOWN
    with pytest.raises(AlreadyDown):
        inject_connection(topo444, states, 0, Direction.XP, 375)


def test_2cf_targets_are_disjoint(topo444):
    for seed in range(200):
        (ra, da), (rb, db) = pick_2cf_targets(topo444, seed)
        ca, cb = topo444.coord(ra), topo444.coord(rb)
        assert ca.x != cb.x and ca.y != cb.y and ca.z // 2 != cb.z // 2
        assert da.dim != db.dim
        assert not {ra, int(topo444.nbr[ra, da])} & {rb, int(topo444.nbr[rb, db])}


def test_blade_reports_cover_the_closure(topo444):
    groups = blade_report_groups(topo444, 5)
    assert [len(g) for g in groups] == [36, 36]
    lids = [l for g in groups for l, _ in g]
    assert sorted(lids) == sorted(topo444.blade_links(5))


def test_run_header():
    camp = campaign_from_json(_doc())
    assert run_header(camp) == f"#run seed=1 dims=4x4x4 config_digest={camp.digest()}"


def test_lf_single_scenario():
    camp, art = shipped_run("lf_single")
    (p,) = art.procedures
    assert p.outcome.value == "Success" and p.duration_ms == 50_000
    types = [r.event_type for r in art.records]
    assert types.count("nw_send_packet_length_error") == 1
    assert types.count("gemini_link_failed") == 2
    assert not any(t.startswith("orb_") for t in types)
    assert types[0] == "campaign_start" and types[-1] == "campaign_end"


def test_nf_single_kills_one_job():
    _, art = shipped_run("nf_single")
    assert art.procedures == []
    types = [r.event_type for r in art.records]
    assert types.count("ec_node_failed") == 1 and types.count("app_error") == 1
    assert sum(j.status.value == "Killed" for j in art.jobs) == 1


def test_bf_single():
    _, art = shipped_run("bf_single")
    types = [r.event_type for r in art.records]
    assert types.count("failure_detected") == 72
    assert types.count("blade_failed") == 1
    assert len(art.procedures) == 1


def test_shipped_campaigns_are_valid():
    assert len(CAMPAIGNS) == 8
    for name in CAMPAIGNS:
        assert campaign(name).name == name


def test_different_seeds_differ():
    a = run_campaign(campaign("2cf_ok").with_overrides(seed=1))
    b = run_campaign(campaign("2cf_ok").with_overrides(seed=2))
    assert a.events_text() != b.events_text()


def test_records_are_time_ordered():
    for name in ("scf_slow", "2cf_ok", "bf_single"):
        _, art = shipped_run(name)
        times = [r.time_ms for r in art.records]
        assert times == sorted(times)
