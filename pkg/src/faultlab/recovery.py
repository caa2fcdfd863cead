"""Automatic network recovery: report intake, aggregation, quiesce, reroute, install, unquiesce.

Link warm swaps run through the same pipeline with an initial warm-swap step
and their own start/terminal records.  Only one procedure is active at a time;
warm swap requests wait for the machine to go idle and failure reports that
arrive during a warm swap are held until it ends.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import asdict, dataclass, field
from typing import Callable

from .emitter import LogRecord
from .network import NetworkState
from .routing import RouteTable, UnroutableError, compute_routes
from .simkernel import EventKind, Kernel
from .topology import parse_cname


@dataclass
class RecoveryTimings:
    detection_latency_ms: int = 1_000
    aggregation_window_ms: int = 10_000
    quiesce_ms: int = 30_000
    route_compute_ms: int = 5_000
    per_asic_compute_ms: int = 14_000
    route_install_ms: int = 4_000
    unquiesce_ms: int = 1_000
    warm_swap_init_ms: int = 50_000

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not isinstance(value, int) or value < 0:
                raise ValueError(f"timing {name} must be a non-negative integer, got {value!r}")

    @classmethod
    def from_json(cls, doc: dict | None) -> "RecoveryTimings":
        doc = dict(doc or {})
        known = set(cls.__dataclass_fields__)
        extra = set(doc) - known
        if extra:
            raise ValueError(f"unknown timings: {sorted(extra)}")
        return cls(**doc)


class Phase(enum.Enum):
    WarmSwapInit = "WarmSwapInit"
    Aggregating = "Aggregating"
    Quiesce = "Quiesce"
    RouteCompute = "RouteCompute"
    RouteInstall = "RouteInstall"
    Unquiesce = "Unquiesce"


class Outcome(enum.Enum):
    Success = "Success"
    Aborted = "Aborted"
    Failed = "Failed"


@dataclass
class Procedure:
    id: int
    kind: str  # "recovery" or "warm_swap"
    opened_ms: int
    triggers: list[str]
    phases: dict[str, int] = field(default_factory=dict)
    outcome: Outcome | None = None
    reason: str = ""
    end_ms: int | None = None
    predecessor: int | None = None
    failed_asics: int = 0

    @property
    def duration_ms(self) -> int | None:
        return None if self.end_ms is None else self.end_ms - self.opened_ms

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind,
            "opened_ms": self.opened_ms,
            "end_ms": self.end_ms,
            "duration_ms": self.duration_ms,
            "outcome": None if self.outcome is None else self.outcome.value,
            "reason": self.reason,
            "triggers": list(self.triggers),
            "phases": dict(self.phases),
            "predecessor": self.predecessor,
        }


@dataclass
class WarmSwap:
    """A queued warm swap: ``apply`` brings the components back, ``done`` hears the outcome."""

    cname: str
    apply: Callable[[int], None]
    fail: bool = False
    done: Callable[[bool, int], None] | None = None


class RecoveryFSM:
    def __init__(self, kernel: Kernel, net: NetworkState, log: Callable[[LogRecord], None],
                 timings: RecoveryTimings | None = None, epoch_ms: int = 0):
        self.kernel = kernel
        self.net = net
        self.topo = net.topo
        self.log = log
        self.timings = timings or RecoveryTimings()
        self.epoch_ms = epoch_ms
        self.procedures: list[Procedure] = []
        self.active: Procedure | None = None
        self.phase: Phase | None = None
        self._token = 0
        self._table: RouteTable | None = None
        self._swap: WarmSwap | None = None
        self._swaps: deque[WarmSwap] = deque()
        self._held: list[tuple[str, int, int]] = []
        self._generation = 0

    # -- plumbing ------------------------------------------------------------
    def _record(self, source: str, severity: str, event_type: str, cname: str, message: str) -> None:
        self.log(LogRecord(self.epoch_ms + self.kernel.now, source, severity, event_type, cname, message))

    def _later(self, delay: int, step: Callable[[], None]) -> None:
        token = self._token

        def fire():
            if token == self._token:
                step()

        self.kernel.after(delay, EventKind.RECOVERY_PHASE, fire)

    def _enter(self, phase: Phase) -> None:
        self.phase = phase
        self.active.phases[phase.value] = self.kernel.now

    @property
    def idle(self) -> bool:
        return self.active is None

    # -- intake --------------------------------------------------------------
    def on_failure_report(self, cname: str, failed_asics: int = 0) -> None:
        """A blade controller reported ``cname`` as newly failed."""
        self._record("SMW", "warning", "failure_detected", cname, f"failure detected on {cname}")
        if self.active is not None and self.active.kind == "warm_swap":
            self._held.append((cname, failed_asics, self.kernel.now))
            return
        if self.active is None:
            self._open([cname], failed_asics)
        elif self.phase is Phase.Aggregating:
            self.active.triggers.append(cname)
            self.active.failed_asics += failed_asics
        else:
            prev = self.active
            self._terminate(Outcome.Aborted, "NewFailureDuringRecovery")
            self._record("BC", "error", "gemini_link_recovery_failed", prev.triggers[0],
                         f"link recovery aborted for {prev.triggers[0]}")
            self._open(prev.triggers + [cname], prev.failed_asics + failed_asics, prev.id)

    def request_warm_swap(self, swap: WarmSwap) -> None:
        self._swaps.append(swap)
        if self.active is None:
            self._next()

    def _open(self, triggers: list[str], failed_asics: int, predecessor: int | None = None) -> None:
        proc = Procedure(len(self.procedures) + 1, "recovery", self.kernel.now, list(triggers),
                         predecessor=predecessor, failed_asics=failed_asics)
        self.procedures.append(proc)
        self.active = proc
        self._record("SMW", "info", "recovery_start", "", f"network recovery {proc.id} started")
        self._enter(Phase.Aggregating)
        self._later(self.timings.aggregation_window_ms, self._quiesce)

    def _start_swap(self, swap: WarmSwap) -> None:
        proc = Procedure(len(self.procedures) + 1, "warm_swap", self.kernel.now, [swap.cname])
        self.procedures.append(proc)
        self.active = proc
        self._swap = swap
        self._record("SMW", "info", "warm_swap_start", swap.cname, f"warm swap {proc.id} started for {swap.cname}")
        self._enter(Phase.WarmSwapInit)
        self._later(self.timings.warm_swap_init_ms, self._swap_ready)

    def _swap_ready(self) -> None:
        swap = self._swap
        if swap.fail:
            self._record("SMW", "error", "warm_swap_failed", swap.cname,
                         f"warm swap of {swap.cname} failed during link initialization")
            self._finish(Outcome.Failed, "WarmSwapFailed")
            return
        self._quiesce()

    # -- pipeline ------------------------------------------------------------
    def _quiesce(self) -> None:
        self._enter(Phase.Quiesce)
        self.net.close_gate(self.kernel.now)
        self._record("SMW", "info", "quiesce", "", "network quiesced")
        self._later(self.timings.quiesce_ms, self._compute)

    def _compute(self) -> None:
        now = self.kernel.now
        if self._swap is not None:
            self._swap.apply(now)
        self._enter(Phase.RouteCompute)
        self._record("SMW", "info", "reroute_start", "", "computing routes")
        try:
            self._generation += 1
            self._table = compute_routes(self.topo, self.net.link_states, self.net.router_down, self._generation)
        except UnroutableError as exc:
            self._table = None
            reason = str(exc)
        else:
            reason = ""
            if self._table.same_routes(self.net.table.up, self.net.table.alive):
                # nothing to reroute: injection resumes as soon as the quiesce ends
                self.net.open_gate(now)
        delay = self.timings.route_compute_ms + self.timings.per_asic_compute_ms * self.active.failed_asics
        self._later(delay, self._install if self._table is not None else lambda: self._reroute_failed(reason))

    def _reroute_failed(self, why: str) -> None:
        proc = self.active
        self._record("SMW", "error", "reroute_failed", "", f"route computation failed: {why}")
        if proc.kind == "warm_swap":
            self._record("SMW", "error", "warm_swap_failed", proc.triggers[0], "warm swap failed: unroutable")
        else:
            self._record("SMW", "error", "recovery_failed", "", f"network recovery {proc.id} failed: reroute failure")
            self._record("BC", "error", "gemini_link_recovery_failed", proc.triggers[0],
                         f"link recovery failed for {proc.triggers[0]}")
        self.net.open_gate(self.kernel.now)
        self._finish(Outcome.Failed, "RerouteFailure")

    def _install(self) -> None:
        self._enter(Phase.RouteInstall)
        self._record("SMW", "info", "reroute_done", "", "routes computed")
        self._later(self.timings.route_install_ms, self._installed)

    def _installed(self) -> None:
        self.net.install(self._table, self.kernel.now)
        self._record("SMW", "info", "routes_installed", "", "new routes installed on all ASICs")
        self._enter(Phase.Unquiesce)
        self._later(self.timings.unquiesce_ms, self._success)

    def _success(self) -> None:
        proc = self.active
        now = self.kernel.now
        self._record("SMW", "info", "unquiesce", "", "network unquiesced")
        self.net.open_gate(now)
        if proc.kind == "warm_swap":
            self._record("SMW", "info", "warm_swap_success", proc.triggers[0], f"warm swap {proc.id} complete")
        else:
            self._record("SMW", "info", "recovery_success", "", f"network recovery {proc.id} complete")
            for cname in dict.fromkeys(proc.triggers):
                if parse_cname(cname).kind == "link":
                    self._record("BC", "info", "link_recovery_success", cname, f"link {cname} recovered")
        self._finish(Outcome.Success, "")

    # -- endings -------------------------------------------------------------
    def _terminate(self, outcome: Outcome, reason: str) -> Procedure:
        proc = self.active
        proc.outcome = outcome
        proc.reason = reason
        proc.end_ms = self.kernel.now
        if outcome is Outcome.Aborted:
            self._record("SMW", "warning", "recovery_aborted", "",
                         f"network recovery {proc.id} aborted: new failure during recovery")
        self._token += 1
        self.active = None
        self.phase = None
        self._table = None
        return proc

    def _finish(self, outcome: Outcome, reason: str) -> None:
        self._terminate(outcome, reason)
        swap, self._swap = self._swap, None
        if swap is not None and swap.done is not None:
            swap.done(outcome is Outcome.Success, self.kernel.now)
        self._next()

    def _next(self) -> None:
        if self.active is not None:
            return
        if self._held:
            held, self._held = self._held, []
            self._open([c for c, _, _ in held], sum(a for _, a, _ in held))
            # the held reports were logged before this start; the last one opens it
            self.active.opened_ms = held[-1][2]
        elif self._swaps:
            self._start_swap(self._swaps.popleft())
