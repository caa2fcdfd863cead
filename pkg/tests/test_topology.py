from __future__ import annotations

import itertools

import pytest
from hypothesis import given, settings, strategies as st

from faultlab.topology import (
    Coord, Direction, InvalidDims, MalformedCname, TorusDims, build_topology, local_index_direction,
    parse_cname, torus_distance,
)


def enumerate_counts(X, Y, Z):
    """Independent count: walk every router and every + direction link."""
    routers = list(itertools.product(range(X), range(Y), range(Z)))
    links = set()
    for x, y, z in routers:
        for dim, width in ((0, 8), (1, 4), (2, 8)):
            peer = [x, y, z]
            peer[dim] = (peer[dim] + 1) % (X, Y, Z)[dim]
            for i in range(width):
                links.add(((x, y, z), dim, i))
    blades = {(x, y, z // 2) for x, y, z in routers}
    return len(routers), len(blades), 4 * len(blades), len(links)


def test_full_scale_counts_match_enumeration():
    topo = build_topology((16, 12, 24))
    assert (topo.n_routers, topo.n_blades, topo.n_nodes, topo.n_links) == enumerate_counts(16, 12, 24)
    assert (topo.n_routers, topo.n_blades, topo.n_nodes, topo.n_links) == (4608, 2304, 9216, 92160)


def test_desk_scale_counts(topo444):
    assert (topo444.n_routers, topo444.n_blades, topo444.n_nodes, topo444.n_links) == enumerate_counts(4, 4, 4)


@pytest.mark.parametrize("text", ["4x4x3", "0x4x4", "4x4", "ax4x4"])
def test_bad_dims(text):
    with pytest.raises((InvalidDims, ValueError)):
        TorusDims.parse(text)


def test_neighbors_are_symmetric(topo444):
    for r in range(topo444.n_routers):
        for d in Direction:
            peer = int(topo444.nbr[r, d])
            assert int(topo444.nbr[peer, d.opposite]) == r


def test_link_ends_agree(topo444):
    for lid in range(topo444.n_links):
        (a, da, la), (b, db, lb) = topo444.link_endpoints(lid)
        assert topo444.link_id_local(a, la) == lid
        assert topo444.link_id_local(b, lb) == lid
        assert int(topo444.nbr[a, da]) == b and db == da.opposite


def test_connection_widths(topo444):
    for d in Direction:
        assert len(topo444.connection_links(0, d)) == (4 if d.dim == 1 else 8)


def test_local_index_layout():
    assert local_index_direction(0) == (Direction.XP, 0)
    assert local_index_direction(15) == (Direction.XM, 7)
    assert local_index_direction(16) == (Direction.YP, 0)
    assert local_index_direction(23) == (Direction.YM, 3)
    assert local_index_direction(39) == (Direction.ZM, 7)


def test_blade_closure_is_72_links(topo444):
    # 64 leave the blade and 8 join its two routers; all 72 are reported on a blade failure
    for topo in (topo444, build_topology((4, 4, 8))):
        for bid in range(topo.n_blades):
            a, b = topo.blade_routers(bid)
            links = topo.blade_links(bid)
            internal = [lid for lid in links if {e[0] for e in topo.link_endpoints(lid)} == {a, b}]
            assert (len(links) - len(internal), len(internal)) == (64, 8)


def test_dump_is_unique(topo444):
    lines = list(topo444.dump())
    assert len(lines) == topo444.n_routers + topo444.n_blades + topo444.n_nodes + topo444.n_links
    assert len({line.split(",")[1] for line in lines}) == len(lines)


def test_torus_distance():
    assert torus_distance(4, 0, 3) == 1
    assert torus_distance(4, 0, 2) == 2
    assert torus_distance(5, 4, 1) == 2


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 16 * 12 * 24 - 1), st.integers(0, 39))
def test_cname_round_trip(rid, local):
    topo = _full()
    assert topo.resolve(topo.router_cname(rid))[1] == rid
    assert topo.resolve(topo.link_cname(rid, local))[1] == topo.link_id_local(rid, local)
    bid = rid // 2
    assert topo.resolve(topo.blade_cname(bid))[1] == bid
    assert topo.resolve(topo.node_cname(2 * rid + 1))[1] == 2 * rid + 1


_cache = {}


def _full():
    if "t" not in _cache:
        _cache["t"] = build_topology((16, 12, 24))
    return _cache["t"]


@pytest.mark.parametrize("text", ["", "c1", "c1-1c0", "c1-1c0s1g2", "c1-1c0s1a0n9", "c99-1c0s0", "c1-1c0s0g0l40"])
def test_malformed_cnames(text):
    with pytest.raises(MalformedCname):
        parse_cname(text, TorusDims(16, 12, 24))


def test_coord_of_rid(topo444):
    assert topo444.rid(Coord(1, 2, 3)) == (1 * 4 + 2) * 4 + 3
    assert topo444.coord(topo444.rid(Coord(3, 0, 1))) == Coord(3, 0, 1)
