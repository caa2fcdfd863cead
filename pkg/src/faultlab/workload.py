"""Synthetic all-to-all application workload and its fluid traffic model."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .emitter import LogRecord
from .routing import NO_ROUTE, RouteTable
from .topology import Topology


class InsufficientNodes(ValueError):
    pass


class ScaleClass(enum.Enum):
    Nano = "nano"
    Small = "small"
    Medium = "medium"
    Large = "large"

    @classmethod
    def classify(cls, nodes: int) -> "ScaleClass":
        if nodes < 1:
            raise ValueError("a job needs at least one node")
        if nodes < 512:
            return cls.Nano
        if nodes < 1024:
            return cls.Small
        if nodes < 4096:
            return cls.Medium
        return cls.Large


class JobStatus(enum.Enum):
    Running = "Running"
    Completed = "Completed"
    Killed = "Killed"
    Hung = "Hung"


DEFAULT_NODES_PER = {"nano": 64, "small": 512, "medium": 1024, "large": 4096}
CLASS_ORDER = ("nano", "small", "medium", "large")


@dataclass
class WorkloadSpec:
    counts: dict[str, int] = field(default_factory=lambda: {"nano": 0, "small": 5, "medium": 2, "large": 1})
    nodes_per: dict[str, int] = field(default_factory=lambda: dict(DEFAULT_NODES_PER))
    placement: str = "contiguous"

    def __post_init__(self):
        self.nodes_per = {**DEFAULT_NODES_PER, **self.nodes_per}

    @classmethod
    def from_json(cls, doc: dict | None) -> "WorkloadSpec":
        doc = dict(doc or {})
        nodes_per = dict(DEFAULT_NODES_PER)
        per = doc.pop("nodes_per", None)
        if isinstance(per, int):
            nodes_per = {k: per for k in CLASS_ORDER}
        elif isinstance(per, dict):
            nodes_per.update({k: int(v) for k, v in per.items()})
        counts = {k: int(doc.pop(k, 0)) for k in CLASS_ORDER}
        placement = doc.pop("placement", "contiguous")
        if doc:
            raise ValueError(f"unknown workload fields: {sorted(doc)}")
        return cls(counts, nodes_per, placement)

    def to_json(self) -> dict:
        out: dict = {k: self.counts.get(k, 0) for k in CLASS_ORDER}
        out["nodes_per"] = {k: self.nodes_per[k] for k in CLASS_ORDER}
        out["placement"] = self.placement
        return out

    def total_nodes(self) -> int:
        return sum(self.counts.get(k, 0) * self.nodes_per[k] for k in CLASS_ORDER)


@dataclass
class AppJob:
    id: int
    nodes: tuple[int, ...]
    cls: ScaleClass
    start_ms: int
    end_ms: int | None = None
    status: JobStatus = JobStatus.Running
    reason: str = ""
    pattern: str = "all-to-all"

    def __post_init__(self):
        if ScaleClass.classify(len(self.nodes)) is not self.cls:
            raise ValueError(f"job {self.id}: {len(self.nodes)} nodes is not {self.cls.value}-scale")

    def router_weights(self, topo: Topology) -> np.ndarray:
        return np.bincount(np.asarray(self.nodes) // 2, minlength=topo.n_routers)

    def csv_row(self) -> str:
        end = "" if self.end_ms is None else str(self.end_ms // 1000)
        return f"{self.id},{self.cls.value},{len(self.nodes)},{self.status.value},{self.reason},{self.start_ms // 1000},{end}"


JOBS_HEADER = "job_id,class,nodes,status,reason,start,end"


def generate_workload(spec: WorkloadSpec, topo: Topology, seed: int = 0, start_ms: int = 0) -> list[AppJob]:
    """Place jobs on disjoint node blocks, nano first and large last.

    ``contiguous`` placement walks node ids in order (z fastest); ``random``
    draws a seeded permutation of whole routers first.
    """
    need = spec.total_nodes()
    if need > topo.n_nodes:
        raise InsufficientNodes(f"workload needs {need} nodes, torus has {topo.n_nodes}")
    if spec.placement == "contiguous":
        order = np.arange(topo.n_nodes)
    elif spec.placement == "random":
        rng = np.random.Generator(np.random.PCG64(seed))
        routers = rng.permutation(topo.n_routers)
        order = np.stack([2 * routers, 2 * routers + 1], axis=1).ravel()
    else:
        raise ValueError(f"unknown placement {spec.placement!r}")
    jobs = []
    cursor = 0
    for cls_name in CLASS_ORDER:
        for _ in range(spec.counts.get(cls_name, 0)):
            n = spec.nodes_per[cls_name]
            nodes = tuple(int(v) for v in sorted(order[cursor:cursor + n]))
            cursor += n
            jobs.append(AppJob(len(jobs) + 1, nodes, ScaleClass.classify(n), start_ms))
    return jobs


@dataclass
class Demand:
    """Byte rate per (router, direction) plus where undeliverable flows stall."""

    load: np.ndarray
    blocked: set[int]
    looping: set[int]

    @property
    def total(self) -> int:
        return int(self.load.sum())


def _resolve_depth(topo: Topology, nxt: np.ndarray, usable: np.ndarray, dst: int) -> np.ndarray:
    depth = np.full(topo.n_routers, -1, dtype=np.int64)
    depth[dst] = 0
    hop = np.where(usable, topo.nbr[np.arange(topo.n_routers), np.maximum(nxt, 0)], -1)
    while True:
        cand = (depth < 0) & usable
        cand &= depth[np.maximum(hop, 0)] >= 0
        if not cand.any():
            return depth
        depth[cand] = depth[hop[cand]] + 1


def _walk_failure(topo: Topology, nxt: np.ndarray, usable: np.ndarray, src: int) -> tuple[str, list[int]]:
    seen: dict[int, int] = {}
    path = []
    r = src
    while True:
        if not usable[r]:
            return "blocked", [r]
        if r in seen:
            return "loop", path[seen[r]:]
        seen[r] = len(path)
        path.append(r)
        r = int(topo.nbr[r, nxt[r]])


def _destination_weights(jobs: list[AppJob], topo: Topology, flow_rate: int, include_hung: bool):
    active = [j for j in jobs if j.status is JobStatus.Running or (include_hung and j.status is JobStatus.Hung)]
    weights = [j.router_weights(topo) for j in active]
    dsts = np.flatnonzero(sum(weights)) if weights else np.array([], dtype=np.int64)
    for d in dsts:
        src_w = np.zeros(topo.n_routers, dtype=np.int64)
        for w in weights:
            if w[d]:
                src_w += w * int(w[d])
        src_w[d] = 0
        if src_w.any():
            yield int(d), src_w * flow_rate


def _usable(topo: Topology, nxt: np.ndarray, up: np.ndarray | None, dst: int) -> np.ndarray:
    usable = nxt != NO_ROUTE
    if up is not None:
        usable &= up[np.arange(topo.n_routers), np.maximum(nxt, 0)]
    usable[dst] = False
    return usable


def traffic_demand(jobs: list[AppJob], table: RouteTable, topo: Topology | None = None,
                   up: np.ndarray | None = None, flow_rate: int = 1000, quiesced: bool = False,
                   include_hung: bool = False) -> Demand:
    """Offered all-to-all load along the installed routes.

    Each ordered pair of job nodes on different routers is a flow of
    ``flow_rate`` bytes/s.  ``up`` is the current connection state; a flow
    whose route reaches an unusable connection is counted as stalled at that
    router instead of being carried.  Quiesce zeroes everything.
    """
    topo = topo or table.topo
    load = np.zeros((topo.n_routers, 6), dtype=np.int64)
    blocked: set[int] = set()
    looping: set[int] = set()
    if quiesced:
        return Demand(load, blocked, looping)
    for dst, src_w in _destination_weights(jobs, topo, flow_rate, include_hung):
        nxt = table.entries(dst).astype(np.int64)
        usable = _usable(topo, nxt, up, dst)
        depth = _resolve_depth(topo, nxt, usable, dst)
        stuck = np.flatnonzero((src_w > 0) & (depth < 0))
        carry = np.where(depth >= 0, src_w, 0)
        for level in range(int(depth.max()), 0, -1):
            idx = np.flatnonzero(depth == level)
            dirs = nxt[idx]
            np.add.at(load, (idx, dirs), carry[idx])
            np.add.at(carry, topo.nbr[idx, dirs], carry[idx])
        for s in stuck.tolist():
            how, where = _walk_failure(topo, nxt, usable, s)
            (blocked if how == "blocked" else looping).update(where)
    return Demand(load, blocked, looping)


def flow_edges(jobs: list[AppJob], table: RouteTable, topo: Topology | None = None,
               include_hung: bool = True) -> set[tuple[int, int]]:
    """Router hops ``(r, next)`` used by some flow, following entries through loops."""
    topo = topo or table.topo
    edges: set[tuple[int, int]] = set()
    for dst, src_w in _destination_weights(jobs, topo, 1, include_hung):
        nxt = table.entries(dst).astype(np.int64)
        usable = nxt != NO_ROUTE
        usable[dst] = False
        hop = topo.nbr[np.arange(topo.n_routers), np.maximum(nxt, 0)]
        active = src_w > 0
        while True:
            grown = active.copy()
            grown[hop[active & usable]] = True
            if np.array_equal(grown, active):
                break
            active = grown
        for r in np.flatnonzero(active & usable).tolist():
            edges.add((r, int(hop[r])))
    return edges


def on_node_failure(job: AppJob, node_cname: str, t_ms: int) -> list[LogRecord]:
    """Kill ``job`` because one of its nodes failed; returns the ALPS records."""
    if job.status is not JobStatus.Running:
        return []
    job.status = JobStatus.Killed
    job.reason = "ec_node_failed"
    job.end_ms = t_ms
    return [
        LogRecord(t_ms, "ALPS", "error", "ec_node_failed", node_cname,
                  f"apid {job.id} killed: ec_node_failed on {node_cname}"),
        LogRecord(t_ms, "ALPS", "error", "app_error", node_cname,
                  f"apid {job.id} exited abnormally after node failure"),
    ]


def mark_hung(jobs: list[AppJob]) -> None:
    for j in jobs:
        if j.status is JobStatus.Running:
            j.status = JobStatus.Hung
            j.reason = "network_deadlock"


def complete_running(jobs: list[AppJob], t_ms: int) -> list[LogRecord]:
    out = []
    for j in jobs:
        if j.status is JobStatus.Running:
            j.status = JobStatus.Completed
            j.end_ms = t_ms
            out.append(LogRecord(t_ms, "ALPS", "info", "app_complete", "", f"apid {j.id} completed"))
    return out
