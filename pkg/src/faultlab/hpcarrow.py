"""Campaign files, fault injection and restoration, and the simulation driver."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .emitter import (
    EmitterConfig,
    HwErrorEmitter,
    HwErrorKind,
    LogRecord,
    TelemetryWriter,
    hw_record,
    sample_telemetry,
)
from .network import NetworkState
from .recovery import Procedure, RecoveryFSM, RecoveryTimings, WarmSwap
from .routing import LINK_DOWN, LINK_UP
from .simkernel import EventKind, Kernel, make_rng
from .topology import (
    DIRECTIONS,
    Direction,
    MalformedCname,
    Topology,
    TorusDims,
    build_topology,
    local_index_direction,
)
from .workload import JOBS_HEADER, AppJob, WorkloadSpec, complete_running, generate_workload, on_node_failure

SCHEMA_VERSION = 1
DEFAULT_START_EPOCH = 1473176186
INJECT_COMMANDS = ("NF", "LF", "SCF", "2CF", "BF", "RouteCorrupt")
RESTORE_COMMANDS = ("LR", "BR")
FAIL_STEPS = ("remove", "add", "boot")
SCENARIO_FLAGS = ("receiver_8b10b", "ssid_stale")
RANDOM = "Random"
INJECTED = "@injected"


class CampaignInvalid(ValueError):
    def __init__(self, where: str, why: str):
        super().__init__(f"{where}: {why}")
        self.where = where
        self.why = why


class AlreadyDown(RuntimeError):
    pass


class RestoreOnHealthy(RuntimeError):
    pass


@dataclass
class Injection:
    at_ms: int
    cmd: str
    target: Any = RANDOM
    gap_ms: int | list[int] = 0
    dirs: list[str] | None = None

    def to_json(self) -> dict:
        out = {"at_ms": self.at_ms, "cmd": self.cmd, "target": self.target, "gap_ms": self.gap_ms}
        if self.dirs is not None:
            out["dirs"] = list(self.dirs)
        return out


@dataclass
class Restoration:
    at_ms: int
    cmd: str
    targets: Any = INJECTED
    fail_step: str | None = None

    def to_json(self) -> dict:
        return {"at_ms": self.at_ms, "cmd": self.cmd, "targets": self.targets, "fail_step": self.fail_step}


@dataclass
class Campaign:
    name: str
    dims: TorusDims
    seed: int = 0
    workload: WorkloadSpec = field(default_factory=WorkloadSpec)
    injections: list[Injection] = field(default_factory=list)
    restorations: list[Restoration] = field(default_factory=list)
    supervision: bool = False
    duration_ms: int | None = None
    timings: RecoveryTimings = field(default_factory=RecoveryTimings)
    emitter: EmitterConfig = field(default_factory=EmitterConfig)
    experiment_id: str = ""
    start_epoch: int = DEFAULT_START_EPOCH
    flow_rate: int = 1000
    detection_jitter_ms: int = 0
    scenario_flags: list[str] = field(default_factory=list)

    @property
    def end_ms(self) -> int:
        if self.duration_ms is not None:
            return self.duration_ms
        last = max([i.at_ms for i in self.injections] + [r.at_ms for r in self.restorations] + [0])
        return last + 600_000

    @property
    def scenario(self) -> str:
        """Scenario label such as ``SCF (Random)``; route corruption is listed only when alone."""
        faults = [i for i in self.injections if i.cmd != "RouteCorrupt"] or self.injections
        labels = [i.cmd + (" (Random)" if i.target == RANDOM else "") for i in faults]
        return "+".join(dict.fromkeys(labels)) or "none"

    def to_json(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "name": self.name,
            "experiment_id": self.experiment_id,
            "dims": str(self.dims),
            "seed": self.seed,
            "start_epoch": self.start_epoch,
            "duration_ms": self.end_ms,
            "supervision": self.supervision,
            "flow_rate": self.flow_rate,
            "detection_jitter_ms": self.detection_jitter_ms,
            "scenario_flags": list(self.scenario_flags),
            "workload": self.workload.to_json(),
            "timings": dict(self.timings.__dict__),
            "emitter": dict(self.emitter.__dict__),
            "injections": [i.to_json() for i in self.injections],
            "restorations": [r.to_json() for r in self.restorations],
        }

    def digest(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def with_overrides(self, seed: int | None = None, dims: TorusDims | None = None) -> "Campaign":
        out = copy.deepcopy(self)
        if seed is not None:
            out.seed = seed
        if dims is not None:
            out.dims = dims
        validate_campaign(out)
        return out


def _int(doc: dict, key: str, where: str, default=None, minimum: int = 0) -> int:
    value = doc.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int):
        raise CampaignInvalid(where, f"{key} must be an integer, got {value!r}")
    if value < minimum:
        raise CampaignInvalid(where, f"{key} must be >= {minimum}, got {value}")
    return value


def _parse_dims(value, where: str) -> TorusDims:
    try:
        if isinstance(value, str):
            return TorusDims.parse(value)
        if isinstance(value, (list, tuple)) and len(value) == 3:
            return TorusDims(*(int(v) for v in value))
    except ValueError as exc:
        raise CampaignInvalid(where, str(exc)) from None
    raise CampaignInvalid(where, f"dims must be 'XxYxZ' or [x, y, z], got {value!r}")


_CAMPAIGN_KEYS = {
    "schema", "name", "experiment_id", "dims", "seed", "start_epoch", "duration_ms", "supervision", "flow_rate",
    "detection_jitter_ms", "scenario_flags", "workload", "timings", "emitter", "injections", "restorations",
}


def campaign_from_json(doc: dict) -> Campaign:
    if not isinstance(doc, dict):
        raise CampaignInvalid("campaign", "top level must be a JSON object")
    extra = set(doc) - _CAMPAIGN_KEYS
    if extra:
        raise CampaignInvalid("campaign", f"unknown fields {sorted(extra)}")
    if doc.get("schema", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise CampaignInvalid("schema", f"unsupported schema {doc['schema']!r}")
    if "name" not in doc or not isinstance(doc["name"], str):
        raise CampaignInvalid("name", "campaign needs a string name")
    dims = _parse_dims(doc.get("dims", "16x12x24"), "dims")
    try:
        workload = WorkloadSpec.from_json(doc.get("workload"))
        timings = RecoveryTimings.from_json(doc.get("timings"))
        emitter = EmitterConfig(**(doc.get("emitter") or {}))
    except (TypeError, ValueError) as exc:
        raise CampaignInvalid("workload/timings/emitter", str(exc)) from None

    injections = []
    for i, item in enumerate(doc.get("injections") or []):
        where = f"injections[{i}]"
        if not isinstance(item, dict):
            raise CampaignInvalid(where, "entry must be an object")
        extra = set(item) - {"at_ms", "cmd", "target", "gap_ms", "dirs"}
        if extra:
            raise CampaignInvalid(where, f"unknown fields {sorted(extra)}")
        injections.append(Injection(
            _int(item, "at_ms", where), item.get("cmd"), item.get("target", RANDOM),
            item.get("gap_ms", 0), item.get("dirs"),
        ))
    restorations = []
    for i, item in enumerate(doc.get("restorations") or []):
        where = f"restorations[{i}]"
        if not isinstance(item, dict):
            raise CampaignInvalid(where, "entry must be an object")
        extra = set(item) - {"at_ms", "cmd", "targets", "fail_step"}
        if extra:
            raise CampaignInvalid(where, f"unknown fields {sorted(extra)}")
        restorations.append(Restoration(
            _int(item, "at_ms", where), item.get("cmd"), item.get("targets", INJECTED), item.get("fail_step"),
        ))
    duration = doc.get("duration_ms")
    camp = Campaign(
        name=doc["name"],
        dims=dims,
        seed=_int(doc, "seed", "seed", 0),
        workload=workload,
        injections=injections,
        restorations=restorations,
        supervision=bool(doc.get("supervision", False)),
        duration_ms=None if duration is None else _int(doc, "duration_ms", "duration_ms"),
        timings=timings,
        emitter=emitter,
        experiment_id=str(doc.get("experiment_id", "")),
        start_epoch=_int(doc, "start_epoch", "start_epoch", DEFAULT_START_EPOCH),
        flow_rate=_int(doc, "flow_rate", "flow_rate", 1000, minimum=1),
        detection_jitter_ms=_int(doc, "detection_jitter_ms", "detection_jitter_ms", 0),
        scenario_flags=list(doc.get("scenario_flags") or []),
    )
    validate_campaign(camp)
    return camp


def load_campaign(path: str | Path) -> Campaign:
    """Read and validate a campaign file.  Missing files raise OSError."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CampaignInvalid(str(path), f"not valid JSON: {exc}") from None
    return campaign_from_json(doc)


def _check_kind(topo: Topology, text, kinds: tuple[str, ...], where: str) -> None:
    if not isinstance(text, str):
        raise CampaignInvalid(where, f"target must be a cname string, got {text!r}")
    try:
        ref, _ = topo.resolve(text)
    except (MalformedCname, ValueError) as exc:
        raise CampaignInvalid(where, str(exc)) from None
    if ref.kind not in kinds:
        raise CampaignInvalid(where, f"{text} is a {ref.kind}, expected {' or '.join(kinds)}")


def _check_connection(topo: Topology, text, where: str) -> None:
    if not isinstance(text, str) or ":" not in text:
        raise CampaignInvalid(where, f"connection target must be 'router_cname:DIR', got {text!r}")
    cname, _, label = text.partition(":")
    _check_kind(topo, cname, ("router",), where)
    try:
        Direction.parse(label)
    except ValueError as exc:
        raise CampaignInvalid(where, str(exc)) from None


def _check_gap(gap, where: str) -> None:
    gaps = gap if isinstance(gap, list) else [gap]
    if not gaps:
        raise CampaignInvalid(where, "gap_ms list is empty")
    for g in gaps:
        if isinstance(g, bool) or not isinstance(g, int) or g < 0:
            raise CampaignInvalid(where, f"gap_ms must be non-negative integers, got {gap!r}")


def validate_campaign(camp: Campaign) -> None:
    """Raise CampaignInvalid naming the first offending entry."""
    topo = build_topology(camp.dims)
    for flag in camp.scenario_flags:
        if flag not in SCENARIO_FLAGS:
            raise CampaignInvalid("scenario_flags", f"unknown flag {flag!r}")
    if camp.workload.total_nodes() > topo.n_nodes:
        raise CampaignInvalid("workload", f"needs {camp.workload.total_nodes()} nodes, torus has {topo.n_nodes}")
    prev = 0
    for i, inj in enumerate(camp.injections):
        where = f"injections[{i}]"
        if inj.cmd not in INJECT_COMMANDS:
            raise CampaignInvalid(where, f"unknown command {inj.cmd!r}")
        if inj.at_ms < prev:
            raise CampaignInvalid(where, "injection times must be non-decreasing")
        prev = inj.at_ms
        _check_gap(inj.gap_ms, where)
        if inj.dirs is not None:
            if inj.cmd != "2CF" or not isinstance(inj.dirs, list) or len(inj.dirs) != 2:
                raise CampaignInvalid(where, "dirs is a pair of directions and only applies to 2CF")
            try:
                a, b = (Direction.parse(d) for d in inj.dirs)
            except (ValueError, AttributeError) as exc:
                raise CampaignInvalid(where, str(exc)) from None
            if a.dim == b.dim:
                raise CampaignInvalid(where, "2CF directions must lie in different dimensions")
        if inj.target == RANDOM:
            continue
        if inj.cmd == "NF":
            _check_kind(topo, inj.target, ("node",), where)
        elif inj.cmd == "LF":
            _check_kind(topo, inj.target, ("link",), where)
        elif inj.cmd == "SCF":
            _check_connection(topo, inj.target, where)
        elif inj.cmd == "2CF":
            if not isinstance(inj.target, list) or len(inj.target) != 2:
                raise CampaignInvalid(where, "2CF target is Random or a list of two connections")
            for t in inj.target:
                _check_connection(topo, t, where)
        elif inj.cmd == "BF":
            _check_kind(topo, inj.target, ("blade",), where)
        elif inj.cmd == "RouteCorrupt":
            _check_kind(topo, inj.target, ("router",), where)
    for i, rst in enumerate(camp.restorations):
        where = f"restorations[{i}]"
        if rst.cmd not in RESTORE_COMMANDS:
            raise CampaignInvalid(where, f"unknown command {rst.cmd!r}")
        if rst.fail_step is not None and rst.fail_step not in FAIL_STEPS:
            raise CampaignInvalid(where, f"fail_step must be one of {FAIL_STEPS}")
        if rst.cmd == "LR" and rst.fail_step not in (None, "add"):
            raise CampaignInvalid(where, "a link warm swap can only fail at the add step")
        if rst.targets == INJECTED:
            continue
        targets = rst.targets if isinstance(rst.targets, list) else [rst.targets]
        if rst.cmd == "BR" and len(targets) != 1:
            raise CampaignInvalid(where, "BR targets exactly one blade")
        for t in targets:
            _check_kind(topo, t, ("link",) if rst.cmd == "LR" else ("blade",), where)


# -- target selection ---------------------------------------------------------

def _generator(seed_or_rng) -> np.random.Generator:
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return make_rng(int(seed_or_rng))


def pick_2cf_targets(topo: Topology, seed, dirs: tuple[Direction, Direction] | None = None
                     ) -> tuple[tuple[int, Direction], tuple[int, Direction]]:
    """Two connections on blades that differ in x, y and blade column.

    Directions come from ``dirs`` or are drawn from two different dimensions.
    """
    rng = _generator(seed)
    X, Y, Z = topo.dims.as_tuple()
    K = Z // 2
    xa, ya, ka = (int(v) for v in (rng.integers(X), rng.integers(Y), rng.integers(K)))
    xb = (xa + 1 + int(rng.integers(X - 1))) % X
    yb = (ya + 1 + int(rng.integers(Y - 1))) % Y
    kb = (ka + 1 + int(rng.integers(K - 1))) % K
    ga, gb = int(rng.integers(2)), int(rng.integers(2))
    if dirs is None:
        da_dim, db_dim = (int(v) for v in rng.choice(3, size=2, replace=False))
        dirs = (Direction(2 * da_dim + int(rng.integers(2))), Direction(2 * db_dim + int(rng.integers(2))))
    ra = (xa * Y + ya) * Z + 2 * ka + ga
    rb = (xb * Y + yb) * Z + 2 * kb + gb
    return (ra, dirs[0]), (rb, dirs[1])


def injection_schedule(n_links: int, gap_ms, start_ms: int = 0, offset: int = 0) -> list[int]:
    """Failure times for ``n_links`` sequential link injections; list gaps are cycled."""
    gaps = gap_ms if isinstance(gap_ms, list) else [gap_ms]
    times, t = [], start_ms
    for i in range(n_links):
        times.append(t)
        t += gaps[(offset + i) % len(gaps)]
    return times


def inject_connection(topo: Topology, link_states: np.ndarray, router: int, d: Direction, gap_ms,
                      start_ms: int = 0) -> list[tuple[int, int]]:
    """``(time_ms, link_id)`` for every Up link of a connection, spaced by the gap."""
    lids = [int(v) for v in topo.connection_links(router, d) if link_states[v] == LINK_UP]
    if not lids:
        raise AlreadyDown(f"{topo.router_cname(router)}:{d.label} has no Up link")
    return list(zip(injection_schedule(len(lids), gap_ms, start_ms), lids))


def blade_report_groups(topo: Topology, bid: int) -> list[list[tuple[int, str]]]:
    """The blade's distinct links split into one group of 36 per ASIC.

    Each ASIC reports its 32 external links plus half of the 8 links joining
    it to its sibling; names are taken from the reporting ASIC's side.
    """
    g0, g1 = topo.blade_routers(bid)
    groups: list[list[tuple[int, str]]] = []
    for r, internal_dir, half in ((g0, Direction.ZP, range(0, 4)), (g1, Direction.ZM, range(4, 8))):
        group = []
        for local in range(40):
            d, idx = local_index_direction(local)
            if d == internal_dir and idx not in half:
                continue
            group.append((topo.link_id_local(r, local), topo.link_cname(r, local)))
        groups.append(group)
    return groups


# -- simulation ---------------------------------------------------------------

@dataclass
class ExperimentArtifacts:
    campaign: Campaign
    header: str
    records: list[LogRecord]
    telemetry: list[str]
    jobs: list[AppJob]
    procedures: list[Procedure]
    final_links_down: int = 0

    def events_text(self) -> str:
        return self.header + "\n" + "".join(r.format() + "\n" for r in self.records)

    def telemetry_text(self) -> str:
        return "t,router,direction,bytes,up_links\n" + "".join(line + "\n" for line in self.telemetry)

    def jobs_text(self) -> str:
        return JOBS_HEADER + "\n" + "".join(j.csv_row() + "\n" for j in self.jobs)

    def procedures_json(self) -> str:
        return json.dumps([p.to_json() for p in self.procedures], indent=2, sort_keys=True) + "\n"


def run_header(camp: Campaign) -> str:
    return f"#run seed={camp.seed & 0xFFFF_FFFF_FFFF_FFFF} dims={camp.dims} config_digest={camp.digest()}"


class Simulation:
    """One campaign run: workload (S2), verification (S3), injections (S4), restorations (S6)."""

    def __init__(self, camp: Campaign, topo: Topology | None = None):
        self.camp = camp
        self.topo = topo or build_topology(camp.dims)
        self.kernel = Kernel(camp.seed)
        self.epoch_ms = camp.start_epoch * 1000
        self.records: list[LogRecord] = []
        self.telemetry: list[str] = []
        self.jobs = generate_workload(camp.workload, self.topo, camp.seed, self.epoch_ms)
        self.net = NetworkState(self.topo, self.jobs, camp.flow_rate)
        self.fsm = RecoveryFSM(self.kernel, self.net, self.records.append, camp.timings, self.epoch_ms)
        self.emitter = HwErrorEmitter(self.topo, camp.emitter)
        self.writer = TelemetryWriter(self.topo)
        self.injected_links: list[int] = []
        self.failed_blades: list[int] = []
        self.blade_down: set[int] = set()
        self._gap_cursor = 0

    # -- log helpers ---------------------------------------------------------
    def log(self, source: str, severity: str, event_type: str, cname: str, message: str) -> None:
        self.records.append(LogRecord(self.epoch_ms + self.kernel.now, source, severity, event_type, cname, message))

    def console(self, event_type: str, message: str, severity: str = "info", cname: str = "") -> None:
        self.log("CONSOLE", severity, event_type, cname, message)

    # -- run -----------------------------------------------------------------
    def run(self) -> ExperimentArtifacts:
        camp, k = self.camp, self.kernel
        end = camp.end_ms
        k.schedule(0, EventKind.LOG_EMIT, self._start)
        for inj in camp.injections:
            k.schedule(inj.at_ms, EventKind.INJECT, self._inject, inj)
        for rst in camp.restorations:
            k.schedule(rst.at_ms, EventKind.RESTORE, self._restore, rst)
        for t in range(1000, end + 1, 1000):
            k.schedule(t, EventKind.TELEMETRY_TICK, self._tick)
        k.schedule(end, EventKind.LOG_EMIT, self._finish)
        k.run_until(end)
        return ExperimentArtifacts(
            camp, run_header(camp), self.records, self.telemetry, self.jobs, self.fsm.procedures,
            int((self.net.link_states != LINK_UP).sum()),
        )

    def _start(self) -> None:
        camp = self.camp
        self.console("campaign_start",
                     f"HPCArrow campaign id={camp.experiment_id or camp.name} scenario={camp.scenario} "
                     f"dims={camp.dims} seed={camp.seed}")
        for job in self.jobs:
            self.log("ALPS", "info", "app_start", "", f"apid {job.id} started on {len(job.nodes)} nodes "
                     f"({job.cls.value}, {job.pattern})")
        # S3: every job's flows must be routable before faults go in
        self.console("workload_verified", f"{len(self.jobs)} applications running")

    def _finish(self) -> None:
        self.net.advance(self.kernel.now)
        self.records.extend(complete_running(self.jobs, self.epoch_ms + self.kernel.now))
        self.console("campaign_end", f"HPCArrow campaign {self.camp.name} finished")

    def _tick(self) -> None:
        t = self.kernel.now
        dl = self.net.deadlock
        if dl is not None:
            step = self.camp.emitter.deadlock_spread_ms
            while t >= dl.onset_ms + (dl.spreads + 1) * step:
                dl.spread(dl.onset_ms + (dl.spreads + 1) * step)
        frame = sample_telemetry(self.net, t, self.camp.start_epoch)
        if frame is not None:
            self.telemetry.extend(self.writer.rows(frame))
        self.records.extend(self.emitter.emit_for_state(self.net, t, self.epoch_ms))

    # -- injections ----------------------------------------------------------
    def _supervise(self, text: str) -> None:
        if self.camp.supervision:
            self.console("supervised_command", f"pending: {text}")

    def _inject(self, inj: Injection) -> None:
        self._supervise(f"inject {inj.cmd} {inj.target}")
        handler = {
            "NF": self._inject_nf, "LF": self._inject_lf, "SCF": self._inject_scf,
            "2CF": self._inject_2cf, "BF": self._inject_bf, "RouteCorrupt": self._inject_corrupt,
        }[inj.cmd]
        handler(inj)

    def _random_choice(self, n: int) -> int:
        return int(self.kernel.rng.integers(n))

    def _inject_nf(self, inj: Injection) -> None:
        if inj.target == RANDOM:
            node = self._random_choice(self.topo.n_nodes)
        else:
            node = self.topo.resolve(inj.target)[1]
        cname = self.topo.node_cname(node)
        self.console("fault_injected", f"NF {cname}", cname=cname)
        self.net.advance(self.kernel.now)
        self.net.node_down[node] = True
        for job in self.jobs:
            if node in job.nodes:
                self.records.extend(on_node_failure(job, cname, self.epoch_ms + self.kernel.now))
        self.net.invalidate()

    def _fail_links(self, timed: list[tuple[int, int]]) -> None:
        for at, lid in timed:
            self.kernel.schedule(at, EventKind.INJECT, self._fail_one_link, lid)

    def _fail_one_link(self, lid: int) -> None:
        net, topo = self.net, self.topo
        if net.link_states[lid] != LINK_UP or not net.alive[topo.link_endpoints(lid)[0][0]]:
            self.console("injection_rejected", f"link {topo.link_cname_at(lid)} is already down", "warning",
                         topo.link_cname_at(lid))
            return
        now = self.epoch_ms + self.kernel.now
        (ra, _, _), (rb, _, _) = topo.link_endpoints(lid)
        name_a, name_b = topo.link_cname_at(lid, 0), topo.link_cname_at(lid, 1)
        self.console("fault_injected", f"link {name_a}", cname=name_a)
        self.records.append(hw_record(now, HwErrorKind.NwSendPacketLengthError, topo.router_cname(ra)))
        for name in (name_a, name_b):
            self.log("BC", "error", "gemini_link_failed", name, f"link {name} failed")
        for name in (name_a, name_b):
            self.log("BC", "error", "gemini_channel_failed", name, f"all 3 lanes of {name} failed")
        if "receiver_8b10b" in self.camp.scenario_flags:
            self.records.append(hw_record(now, HwErrorKind.Receiver8b10b, topo.router_cname(rb)))
        if "ssid_stale" in self.camp.scenario_flags:
            self.records.append(hw_record(now, HwErrorKind.SsidStale, topo.router_cname(ra)))
        net.fail_link(lid, self.kernel.now)
        self.injected_links.append(lid)
        delay = self.camp.timings.detection_latency_ms
        if self.camp.detection_jitter_ms:
            delay += int(self.kernel.rng.integers(self.camp.detection_jitter_ms + 1))
        self.kernel.after(delay, EventKind.FAILURE_REPORT, self.fsm.on_failure_report, name_a, 0)

    def _inject_lf(self, inj: Injection) -> None:
        if inj.target == RANDOM:
            lid = self._random_choice(self.topo.n_links)
        else:
            lid = self.topo.resolve(inj.target)[1]
        self._fail_one_link(lid)

    def _connection_target(self, text) -> tuple[int, Direction]:
        if text == RANDOM:
            return self._random_choice(self.topo.n_routers), DIRECTIONS[self._random_choice(6)]
        cname, _, label = text.partition(":")
        return self.topo.resolve(cname)[1], Direction.parse(label)

    def _inject_connections(self, inj: Injection, conns: list[tuple[int, Direction]]) -> None:
        lids: list[int] = []
        for r, d in conns:
            rname = self.topo.router_cname(r)
            self.console("inject_connection", f"{inj.cmd} {rname}:{d.label}", cname=rname)
            try:
                lids.extend(lid for _, lid in inject_connection(self.topo, self.net.link_states, r, d, 0))
            except AlreadyDown as exc:
                self.console("injection_rejected", str(exc), "warning", rname)
        times = injection_schedule(len(lids), inj.gap_ms, self.kernel.now)
        self._fail_links(list(zip(times, lids)))

    def _inject_scf(self, inj: Injection) -> None:
        self._inject_connections(inj, [self._connection_target(inj.target)])

    def _inject_2cf(self, inj: Injection) -> None:
        if inj.target == RANDOM:
            dirs = None if inj.dirs is None else tuple(Direction.parse(d) for d in inj.dirs)
            conns = list(pick_2cf_targets(self.topo, self.kernel.rng, dirs))
        else:
            conns = [self._connection_target(t) for t in inj.target]
        self._inject_connections(inj, conns)

    def _inject_bf(self, inj: Injection) -> None:
        topo, net, now = self.topo, self.net, self.kernel.now
        bid = self._random_choice(topo.n_blades) if inj.target == RANDOM else topo.resolve(inj.target)[1]
        cname = topo.blade_cname(bid)
        if bid in self.blade_down:
            self.console("injection_rejected", f"blade {cname} is already down", "warning", cname)
            return
        self.console("fault_injected", f"BF {cname}", cname=cname)
        self.log("BC", "critical", "blade_failed", cname, f"blade {cname} powered off")
        self.blade_down.add(bid)
        self.failed_blades.append(bid)
        net.advance(now)
        for node in topo.blade_nodes(bid):
            net.node_down[node] = True
            for job in self.jobs:
                if node in job.nodes:
                    self.records.extend(on_node_failure(job, topo.node_cname(node), self.epoch_ms + now))
        lids = topo.blade_links(bid)
        net.link_states[lids] = LINK_DOWN
        net.set_routers(topo.blade_routers(bid), True, now)
        skew = 800
        for g, group in enumerate(blade_report_groups(topo, bid)):
            at = now + self.camp.timings.detection_latency_ms + g * skew
            for i, (_, name) in enumerate(group):
                self.kernel.schedule(at, EventKind.FAILURE_REPORT, self.fsm.on_failure_report, name,
                                     1 if i == 0 else 0)

    def _inject_corrupt(self, inj: Injection) -> None:
        if inj.target == RANDOM:
            hosts = sorted({n // 2 for j in self.net.running_jobs() for n in j.nodes})
            pool = hosts or list(range(self.topo.n_routers))
            r = pool[self._random_choice(len(pool))]
        else:
            r = self.topo.resolve(inj.target)[1]
        self.net.pending_corrupt = r
        self.console("fault_injected", f"RouteCorrupt {self.topo.router_cname(r)}", cname=self.topo.router_cname(r))

    # -- restorations --------------------------------------------------------
    def _restore(self, rst: Restoration) -> None:
        self._supervise(f"restore {rst.cmd} {rst.targets}")
        try:
            if rst.cmd == "LR":
                self._restore_links(rst)
            else:
                self._restore_blade(rst)
        except RestoreOnHealthy as exc:
            self.console("restore_rejected", str(exc), "error")

    def _restore_links(self, rst: Restoration) -> None:
        topo, net = self.topo, self.net
        if rst.targets == INJECTED:
            lids = list(dict.fromkeys(l for l in self.injected_links if net.link_states[l] != LINK_UP))
            if not lids:
                raise RestoreOnHealthy("no injected link is down")
        else:
            names = rst.targets if isinstance(rst.targets, list) else [rst.targets]
            lids = [topo.resolve(n)[1] for n in names]
            healthy = [n for n, l in zip(names, lids) if net.link_states[l] == LINK_UP]
            if healthy:
                raise RestoreOnHealthy(f"link {healthy[0]} is Up")
        names = [topo.link_cname_at(l) for l in lids]
        self.console("restore_issued", f"crayadm -c 'xtwarmswap -s {','.join(names)} -p p0'")

        def done(ok: bool, t_ms: int) -> None:
            if not ok:
                self.console("restore_failed", f"xtwarmswap of {len(lids)} links failed", "error")

        self.fsm.request_warm_swap(WarmSwap(names[0], lambda t: net.restore_links(lids, t),
                                            rst.fail_step == "add", done))

    def _restore_blade(self, rst: Restoration) -> None:
        topo = self.topo
        if rst.targets == INJECTED:
            if not self.failed_blades:
                raise RestoreOnHealthy("no blade was injected")
            bid = self.failed_blades[-1]
        else:
            target = rst.targets[0] if isinstance(rst.targets, list) else rst.targets
            bid = topo.resolve(target)[1]
        if bid not in self.blade_down:
            raise RestoreOnHealthy(f"blade {topo.blade_cname(bid)} is Up")
        cname = topo.blade_cname(bid)
        self.console("restore_issued", f"crayadm -c 'xtwarmswap --remove {cname}'", cname=cname)
        if rst.fail_step == "remove":
            self.console("restore_failed", f"xtwarmswap --remove {cname}: blade controller not responding",
                         "error", cname)
            return
        self.kernel.after(60_000, EventKind.RESTORE, self._blade_add, bid, rst.fail_step)

    def _blade_add(self, bid: int, fail_step: str | None) -> None:
        topo, net = self.topo, self.net
        cname = topo.blade_cname(bid)
        self.console("restore_issued", f"crayadm -c 'xtwarmswap --add {cname}'", cname=cname)

        def apply(t_ms: int) -> None:
            net.link_states[topo.blade_links(bid)] = LINK_UP
            net.set_routers(topo.blade_routers(bid), False, t_ms)

        def done(ok: bool, t_ms: int) -> None:
            if not ok:
                self.console("restore_failed", f"xtwarmswap --add {cname} failed", "error", cname)
                return
            self.console("restore_issued", f"crayadm -c 'boot CNL0 {cname}'", cname=cname)
            self.kernel.after(300_000, EventKind.RESTORE, self._blade_booted, bid, fail_step)

        self.fsm.request_warm_swap(WarmSwap(cname, apply, fail_step == "add", done))

    def _blade_booted(self, bid: int, fail_step: str | None) -> None:
        cname = self.topo.blade_cname(bid)
        if fail_step == "boot":
            self.console("restore_failed", f"boot CNL0 {cname}: node boot timed out", "error", cname)
            return
        for node in self.topo.blade_nodes(bid):
            self.net.node_down[node] = False
        self.blade_down.discard(bid)
        self.log("BC", "info", "blade_recovery_success", cname, f"blade {cname} booted and in service")


def run_campaign(camp: Campaign, topo: Topology | None = None, seed: int | None = None) -> ExperimentArtifacts:
    if seed is not None:
        camp = camp.with_overrides(seed=seed)
    return Simulation(camp, topo).run()


def write_run_dir(art: ExperimentArtifacts, out: str | Path) -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "campaign.json").write_text(json.dumps(art.campaign.to_json(), indent=2, sort_keys=True) + "\n")
    (out / "events.log").write_text(art.events_text())
    (out / "telemetry.csv").write_text(art.telemetry_text())
    (out / "jobs.csv").write_text(art.jobs_text())
    (out / "procedures.json").write_text(art.procedures_json())
    return out
