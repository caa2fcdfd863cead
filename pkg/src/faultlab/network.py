"""Mutable fabric state during a run: link/router health, installed routes, quiesce gate, traffic."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .emitter import up_link_counts
from .routing import LINK_DOWN, LINK_MASKED, LINK_UP, RouteTable, compute_routes, connection_up
from .topology import DIRECTIONS, Direction, Topology
from .workload import AppJob, Demand, JobStatus, flow_edges, mark_hung, traffic_demand


class LastLink(RuntimeError):
    """Masking would take down the whole connection."""


@dataclass
class Deadlock:
    router: int
    onset_ms: int
    stalled: dict[int, int]
    adjacent: set[int]
    edges: set[tuple[int, int]] = field(repr=False, default_factory=set)
    spreads: int = 0

    def spread(self, t_ms: int) -> int:
        """Stall every router whose flows lead into the stalled set; returns how many joined."""
        new = {a for a, b in self.edges if b in self.stalled and a not in self.stalled}
        for r in new:
            self.stalled[r] = t_ms
        self.spreads += 1
        return len(new)


class NetworkState:
    def __init__(self, topo: Topology, jobs: list[AppJob] | None = None, flow_rate: int = 1000):
        self.topo = topo
        self.jobs = jobs if jobs is not None else []
        self.flow_rate = flow_rate
        self.link_states = np.zeros(topo.n_links, dtype=np.int8)
        self.router_down = np.zeros(topo.n_routers, dtype=bool)
        self.node_down = np.zeros(topo.n_nodes, dtype=bool)
        self.table: RouteTable = compute_routes(topo, self.link_states, self.router_down)
        self.gate_closed = False
        self.gate_closed_since: int | None = None
        self.pending_corrupt: int | None = None
        self.deadlock: Deadlock | None = None
        self._demand: Demand | None = None
        self._acc = np.zeros((topo.n_routers, 6), dtype=np.int64)  # byte-milliseconds
        self._last_ms = 0

    # -- health --------------------------------------------------------------
    @property
    def alive(self) -> np.ndarray:
        return ~self.router_down

    def up_now(self) -> np.ndarray:
        return connection_up(self.topo, self.link_states, self.router_down)

    def up_links(self) -> np.ndarray:
        return up_link_counts(self.topo, self.link_states)

    def fail_link(self, lid: int, t_ms: int) -> str:
        """Take a link out of service; returns the resulting state name.

        The link is masked while its connection keeps another Up link;
        losing the last one downs every link of the connection.
        """
        self.advance(t_ms)
        try:
            mask_link(self.topo, self.link_states, lid)
            result = "masked"
        except LastLink:
            owner, d = self.topo.link_connection(lid)
            self.link_states[self.topo.connection_links(owner, d)] = LINK_DOWN
            result = "down"
        self.invalidate()
        return result

    def restore_links(self, lids, t_ms: int) -> None:
        self.advance(t_ms)
        self.link_states[list(lids)] = LINK_UP
        self.invalidate()

    def set_routers(self, routers, down: bool, t_ms: int) -> None:
        self.advance(t_ms)
        self.router_down[list(routers)] = down
        self.invalidate()

    # -- routes and gate -----------------------------------------------------
    def install(self, table: RouteTable, t_ms: int) -> RouteTable:
        self.advance(t_ms)
        if self.pending_corrupt is not None and table.alive[self.pending_corrupt]:
            table = table.corrupted(self.pending_corrupt)
            self.pending_corrupt = None
        self.table = table
        self.invalidate()
        if not self.gate_closed:
            self._check_deadlock(t_ms)
        return table

    def close_gate(self, t_ms: int) -> None:
        if self.gate_closed:
            return
        self.advance(t_ms)
        self.gate_closed = True
        self.gate_closed_since = t_ms

    def open_gate(self, t_ms: int) -> None:
        """Resume injection; a corrupted table that loops live flows deadlocks here."""
        if not self.gate_closed:
            return
        self.advance(t_ms)
        self.gate_closed = False
        self.gate_closed_since = None
        self.invalidate()
        self._check_deadlock(t_ms)

    def _check_deadlock(self, t_ms: int) -> None:
        if self.deadlock is None and self.table.corrupt_router is not None:
            d = self.demand()
            if d.looping:
                self._enter_deadlock(t_ms, d.looping)

    def _enter_deadlock(self, t_ms: int, looping: set[int]) -> None:
        c = int(self.table.corrupt_router)
        up = self.table.up
        adjacent = {int(self.topo.nbr[c, d]) for d in DIRECTIONS if up[c, d]}
        edges = flow_edges(self.jobs, self.table, self.topo)
        self.deadlock = Deadlock(c, t_ms, {r: t_ms for r in sorted(looping)}, adjacent, edges)
        mark_hung(self.jobs)
        self.invalidate()

    # -- traffic -------------------------------------------------------------
    def invalidate(self) -> None:
        self._demand = None

    def demand(self) -> Demand:
        """Offered demand ignoring the gate (stalled flows still hold buffers while quiesced)."""
        if self._demand is None:
            if self.deadlock is not None:
                self._demand = Demand(np.zeros((self.topo.n_routers, 6), dtype=np.int64), set(), set())
            else:
                self._demand = traffic_demand(self.jobs, self.table, self.topo, up=self.up_now(),
                                              flow_rate=self.flow_rate)
        return self._demand

    def carried(self) -> np.ndarray:
        d = self.demand()
        if self.gate_closed:
            return np.zeros_like(d.load)
        return d.load

    def advance(self, t_ms: int) -> None:
        if t_ms > self._last_ms:
            if not self.gate_closed:
                self._acc += self.carried() * (t_ms - self._last_ms)
            self._last_ms = t_ms

    def take_traffic(self, t_ms: int) -> np.ndarray:
        self.advance(t_ms)
        out = self._acc // 1000
        self._acc -= out * 1000
        return out

    # -- emitter interface ---------------------------------------------------
    def blocked_routers(self) -> set[int]:
        return self.demand().blocked

    def quiesce_stalled(self, t_ms: int, timeout_ms: int) -> set[int]:
        if not self.gate_closed or self.gate_closed_since is None or t_ms - self.gate_closed_since < timeout_ms:
            return set()
        return {int(r) for r in np.flatnonzero(self.demand().load.sum(axis=1))}

    def running_jobs(self) -> list[AppJob]:
        return [j for j in self.jobs if j.status is JobStatus.Running]


def mask_link(topo: Topology, link_states: np.ndarray, lid: int) -> None:
    """Mark ``lid`` Masked; raises LastLink if no other link of its connection is Up."""
    owner, d = topo.link_connection(lid)
    members = topo.connection_links(owner, d)
    others = members[members != lid]
    if not (link_states[others] == LINK_UP).any():
        raise LastLink(f"link {lid} is the last Up link of its {Direction(d).label} connection")
    link_states[lid] = LINK_MASKED
