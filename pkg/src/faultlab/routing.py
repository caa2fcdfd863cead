"""Dimension-ordered routing with a breadth-first fallback around dead connections.

Routing is connection-granular: a connection is usable while at least one of
its links is Up and both routers are alive.  Masking a link never changes a
route.

For each destination the table holds one output direction per router.  A
router whose dimension-ordered path to the destination is intact uses it
(X resolved first, then Y, then Z; the shorter way round, ties toward +).
Every other router takes the first direction, in X+ X- Y+ Y- Z+ Z- order, that
lowers its breadth-first distance to the destination.  Both choices shrink the
up-graph distance by one, so every table path is a shortest path and no
destination's entries form a cycle.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .topology import DIRECTIONS, Direction, Topology

LINK_UP, LINK_MASKED, LINK_DOWN = 0, 1, 2
NO_ROUTE = -1
EAGER_LIMIT = 8 * 8 * 8


class NoRoute(LookupError):
    pass


class RoutingLoop(NoRoute):
    """A table walk revisited a router (only possible with corrupted entries)."""


@dataclass(frozen=True)
class RoutabilityReport:
    routable: bool
    unreachable_pairs: int
    witness: tuple[int, int] | None = None


class UnroutableError(RuntimeError):
    def __init__(self, report: RoutabilityReport):
        super().__init__(
            f"unroutable topology: {report.unreachable_pairs} unreachable pairs, witness {report.witness}"
        )
        self.report = report


def connection_up(topo: Topology, link_states: np.ndarray, router_down: np.ndarray | None = None) -> np.ndarray:
    """Boolean (routers, 6) matrix of usable connections."""
    up = np.empty((topo.n_routers, 6), dtype=bool)
    for d in DIRECTIONS:
        up[:, d] = (link_states[topo._conn_links[d]] == LINK_UP).any(axis=1)
    if router_down is not None and router_down.any():
        up[router_down, :] = False
        up &= ~router_down[topo.nbr]
    return up


def dor_directions(topo: Topology, dst: int) -> np.ndarray:
    """First dimension-ordered hop from every router toward ``dst`` (-1 at dst)."""
    sizes = np.array(topo.dims.as_tuple())
    delta = (topo.coords[dst][None, :] - topo.coords) % sizes[None, :]
    out = np.full(topo.n_routers, NO_ROUTE, dtype=np.int8)
    for dim in (2, 1, 0):  # later assignments win, so X is decided last
        dd = delta[:, dim]
        moving = dd != 0
        plus = dd <= sizes[dim] - dd
        out[moving & plus] = 2 * dim
        out[moving & ~plus] = 2 * dim + 1
    return out


def torus_hops(topo: Topology, dst: int) -> np.ndarray:
    sizes = np.array(topo.dims.as_tuple())
    delta = (topo.coords[dst][None, :] - topo.coords) % sizes[None, :]
    return np.minimum(delta, sizes[None, :] - delta).sum(axis=1)


def bfs_distances(topo: Topology, up: np.ndarray, start: int) -> np.ndarray:
    """Hop distance from ``start`` over usable connections (-1 if unreachable)."""
    dist = np.full(topo.n_routers, -1, dtype=np.int64)
    dist[start] = 0
    frontier = np.array([start])
    level = 0
    while frontier.size:
        level += 1
        cand = topo.nbr[frontier][up[frontier]]
        cand = np.unique(cand[dist[cand] < 0])
        dist[cand] = level
        frontier = cand
    return dist


def _components(topo: Topology, up: np.ndarray, alive: np.ndarray) -> list[np.ndarray]:
    seen = ~alive.copy()
    comps = []
    for r in range(topo.n_routers):
        if seen[r]:
            continue
        members = np.flatnonzero(bfs_distances(topo, up, r) >= 0)
        seen[members] = True
        comps.append(members)
    return comps


def check_routable(topo: Topology, up: np.ndarray, alive: np.ndarray) -> RoutabilityReport:
    comps = _components(topo, up, alive)
    if len(comps) <= 1:
        return RoutabilityReport(True, 0, None)
    n = int(alive.sum())
    pairs = n * n - sum(len(c) ** 2 for c in comps)
    smallest = min(comps, key=lambda c: (len(c), int(c[0])))
    other = next(c for c in comps if c is not smallest)
    return RoutabilityReport(False, pairs, (int(smallest[0]), int(other[0])))


class RouteTable:
    """Per-destination next-hop directions, built lazily and memoised.

    Tables for tori up to 8x8x8 are materialised eagerly.  A table may carry a
    corrupted router whose entries override the computed ones.
    """

    def __init__(self, topo: Topology, up: np.ndarray, alive: np.ndarray, generation: int = 0,
                 eager: bool | None = None):
        self.topo = topo
        self.up = up.copy()
        self.up.setflags(write=False)
        self.alive = alive.copy()
        self.alive.setflags(write=False)
        self.generation = generation
        self.corrupt_router: int | None = None
        self._corrupt_entries: np.ndarray | None = None
        self._next: dict[int, np.ndarray] = {}
        self._dist: dict[int, np.ndarray] = {}
        if eager is None:
            eager = topo.n_routers <= EAGER_LIMIT
        if eager:
            for d in np.flatnonzero(alive):
                self._build(int(d))

    def _build(self, dst: int) -> None:
        topo, up = self.topo, self.up
        dor = dor_directions(topo, dst)
        hops = torus_hops(topo, dst)
        rows = np.arange(topo.n_routers)
        # a dimension-ordered path is intact iff its first hop is usable and
        # the next router's path is intact; resolve in order of distance
        intact = np.zeros(topo.n_routers, dtype=bool)
        intact[dst] = True
        for level in range(1, int(hops.max()) + 1):
            idx = rows[hops == level]
            dirs = dor[idx]
            intact[idx] = up[idx, dirs] & intact[topo.nbr[idx, dirs]]
        intact &= self.alive
        dist = bfs_distances(topo, up, dst)
        nxt = np.full(topo.n_routers, NO_ROUTE, dtype=np.int8)
        nxt[intact] = dor[intact]
        nxt[dst] = NO_ROUTE
        fallback = np.flatnonzero(~intact & (dist > 0))
        if fallback.size:
            nd = dist[topo.nbr[fallback]]  # (n, 6)
            ok = up[fallback] & (nd == dist[fallback][:, None] - 1)
            nxt[fallback] = np.argmax(ok, axis=1)
        self._next[dst] = nxt
        self._dist[dst] = dist

    def entries(self, dst: int) -> np.ndarray:
        """Output direction per router toward ``dst`` (-1 where there is none)."""
        if dst not in self._next:
            if not self.alive[dst]:
                raise NoRoute(f"destination router {dst} is down")
            self._build(dst)
        nxt = self._next[dst]
        if self.corrupt_router is not None and dst != self.corrupt_router:
            nxt = nxt.copy()
            nxt[self.corrupt_router] = self._corrupt_entries[dst]
        return nxt

    def distances(self, dst: int) -> np.ndarray:
        self.entries(dst)
        return self._dist[dst]

    def lookup(self, router: int, dst: int) -> Direction | None:
        v = int(self.entries(dst)[router])
        return None if v == NO_ROUTE else Direction(v)

    def same_routes(self, up: np.ndarray, alive: np.ndarray) -> bool:
        return bool(np.array_equal(up, self.up) and np.array_equal(alive, self.alive))

    def corrupted(self, router: int) -> "RouteTable":
        """Copy of this table whose entries at ``router`` send traffic back into a loop.

        For each destination the router points at the first usable neighbour
        (other than the correct hop) whose own entry leads straight back to
        it; without such a neighbour it misroutes to the first other usable
        direction.
        """
        topo = self.topo
        bad = np.full(topo.n_routers, NO_ROUTE, dtype=np.int8)
        for dst in np.flatnonzero(self.alive):
            dst = int(dst)
            if dst == router:
                continue
            nxt = self.entries(dst)
            good = int(nxt[router])
            choice = NO_ROUTE
            fallback = NO_ROUTE
            for d in DIRECTIONS:
                if d == good or not self.up[router, d]:
                    continue
                n = int(topo.nbr[router, d])
                if fallback == NO_ROUTE:
                    fallback = int(d)
                if n != dst and nxt[n] != NO_ROUTE and topo.nbr[n, nxt[n]] == router:
                    choice = int(d)
                    break
            bad[dst] = choice if choice != NO_ROUTE else (fallback if fallback != NO_ROUTE else good)
        clone = RouteTable.__new__(RouteTable)
        clone.__dict__.update(self.__dict__)
        clone._next = self._next
        clone._dist = self._dist
        clone.corrupt_router = router
        clone._corrupt_entries = bad
        return clone


def compute_routes(topo: Topology, link_states: np.ndarray, router_down: np.ndarray | None = None,
                   generation: int = 0, eager: bool | None = None) -> RouteTable:
    """Route table over the live routers; raises UnroutableError if they are split."""
    if router_down is None:
        router_down = np.zeros(topo.n_routers, dtype=bool)
    up = connection_up(topo, link_states, router_down)
    alive = ~router_down
    report = check_routable(topo, up, alive)
    if not report.routable:
        raise UnroutableError(report)
    return RouteTable(topo, up, alive, generation, eager)


def path_of(table: RouteTable, src: int, dst: int) -> list[tuple[int, Direction]]:
    """Hops ``(router, output direction)`` from ``src`` to ``dst``."""
    path: list[tuple[int, Direction]] = []
    if src == dst:
        return path
    nxt = table.entries(dst)
    seen = {src}
    r = src
    while r != dst:
        v = int(nxt[r])
        if v == NO_ROUTE:
            raise NoRoute(f"no entry at router {r} for destination {dst}")
        path.append((r, Direction(v)))
        r = int(table.topo.nbr[r, v])
        if r in seen:
            raise RoutingLoop(f"routing loop at router {r} toward {dst}")
        seen.add(r)
    return path


def healthy_link_states(topo: Topology) -> np.ndarray:
    return np.zeros(topo.n_links, dtype=np.int8)


def down_connection(topo: Topology, link_states: np.ndarray, router: int, d: Direction) -> None:
    link_states[topo.connection_links(router, d)] = LINK_DOWN


def format_path(topo: Topology, path: Iterable[tuple[int, Direction]], src: int, dst: int) -> str:
    dirs = " ".join(d.label for _, d in path)
    return f"{topo.router_cname(src)} -> {topo.router_cname(dst)} : {dirs}".rstrip()
