"""Observable streams: hardware/SMW/console log records and 1 Hz telemetry.

Log line (bit-exact)::

    <epoch.millis>|<source>|<severity>|<event_type>|<cname>|<message>

Telemetry CSV header ``t,router,direction,bytes,up_links``; one row per live
(router, direction) per tick.  Ticks that fall inside a global quiesce produce
no rows at all.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Iterator, TextIO

import numpy as np

from .topology import DIRECTIONS, Topology

SOURCES = ("BC", "SMW", "ALPS", "CONSOLE", "HW")
SEVERITIES = ("debug", "info", "notice", "warning", "error", "critical")
TELEMETRY_HEADER = "t,router,direction,bytes,up_links"


class HwErrorKind(enum.Enum):
    OrbRamScrubbedUpper = ("orb_ram_scrubbed_upper", "ORB RAM Scrubbed Upper Entry")
    OrbRamScrubbedLower = ("orb_ram_scrubbed_lower", "ORB RAM Scrubbed Lower Entry")
    OrbRequestNoEntry = ("orb_request_no_entry", "ORB Request with No Entry")
    Receiver8b10b = ("receiver_8b10b", "Receiver 8b10b Error")
    LbLackForwardProgress = ("lb_lack_forward_progress", "LB Lack of Forward Progress")
    NwSendPacketLengthError = ("nw_send_packet_length_error", "NW Send Packet Length Error")
    SsidStaleOnResponse = ("ssid_stale_on_response", "SSID Stale on Response")
    SsidStale = ("ssid_stale", "SSID Stale")
    NifSquashedTileRequest = ("nif_squashed_tile_request", "NIF Squashed from Tile Request")

    @property
    def event_type(self) -> str:
        return self.value[0]

    @property
    def text(self) -> str:
        return self.value[1]


ORB_SCRUB_TYPES = frozenset({HwErrorKind.OrbRamScrubbedUpper.event_type, HwErrorKind.OrbRamScrubbedLower.event_type})
HW_EVENT_TYPES = {k.event_type: k for k in HwErrorKind}


def severity_rank(severity: str) -> int:
    return SEVERITIES.index(severity)


@dataclass(frozen=True)
class LogRecord:
    time_ms: int  # epoch milliseconds
    source: str
    severity: str
    event_type: str
    cname: str
    message: str

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ValueError(f"unknown source {self.source!r}")
        if self.severity not in SEVERITIES:
            raise ValueError(f"unknown severity {self.severity!r}")
        for part in (self.event_type, self.cname, self.message):
            if "|" in part or "\n" in part:
                raise ValueError(f"field {part!r} may not contain '|' or newline")

    def format(self) -> str:
        sec, ms = divmod(self.time_ms, 1000)
        return f"{sec}.{ms:03d}|{self.source}|{self.severity}|{self.event_type}|{self.cname or '-'}|{self.message}"

    @classmethod
    def parse(cls, line: str) -> "LogRecord":
        parts = line.rstrip("\n").split("|", 5)
        if len(parts) != 6:
            raise ValueError(f"expected 6 '|'-separated fields, got {len(parts)}")
        stamp, source, severity, event_type, cname, message = parts
        sec, dot, ms = stamp.partition(".")
        if not dot or not sec.isdigit() or len(ms) != 3 or not ms.isdigit():
            raise ValueError(f"bad timestamp {stamp!r}")
        return cls(int(sec) * 1000 + int(ms), source, severity, event_type, "" if cname == "-" else cname, message)

    @property
    def time_s(self) -> float:
        return self.time_ms / 1000.0


def hw_record(time_ms: int, kind: HwErrorKind, cname: str, severity: str = "warning") -> LogRecord:
    return LogRecord(time_ms, "HW", severity, kind.event_type, cname, kind.text)


def write_log(records: Iterable[LogRecord], out: TextIO, header: str | None = None) -> None:
    if header:
        out.write(header + "\n")
    for rec in records:
        out.write(rec.format() + "\n")


@dataclass(frozen=True)
class TelemetrySample:
    t: int  # epoch seconds
    router: str
    direction: str
    bytes: int
    up_links: int


@dataclass
class TelemetryFrame:
    """All samples of one tick in array form: bytes and up-link counts per (router, dir)."""

    t: int
    bytes: np.ndarray
    up_links: np.ndarray
    alive: np.ndarray

    def samples(self, topo: Topology) -> list[TelemetrySample]:
        out = []
        for r in np.flatnonzero(self.alive):
            cname = topo.router_cname(int(r))
            for d in DIRECTIONS:
                out.append(TelemetrySample(self.t, cname, d.label, int(self.bytes[r, d]), int(self.up_links[r, d])))
        return out


def up_link_counts(topo: Topology, link_states: np.ndarray) -> np.ndarray:
    counts = np.empty((topo.n_routers, 6), dtype=np.int64)
    for d in DIRECTIONS:
        counts[:, d] = (link_states[topo._conn_links[d]] == 0).sum(axis=1)
    return counts


class TelemetryWriter:
    """Formats frames as CSV rows; per-(router, direction) prefixes are cached."""

    def __init__(self, topo: Topology):
        self.topo = topo
        self._prefix = [
            [f"{topo.router_cname(r)},{d.label}," for d in DIRECTIONS] for r in range(topo.n_routers)
        ]

    def rows(self, frame: TelemetryFrame) -> Iterator[str]:
        ts = f"{frame.t},"
        b = frame.bytes.tolist()
        u = frame.up_links.tolist()
        for r in np.flatnonzero(frame.alive).tolist():
            pre, br, ur = self._prefix[r], b[r], u[r]
            for d in range(6):
                yield f"{ts}{pre[d]}{br[d]},{ur[d]}"

    def write(self, frames: Iterable[TelemetryFrame], out: TextIO) -> None:
        out.write(TELEMETRY_HEADER + "\n")
        for frame in frames:
            lines = list(self.rows(frame))
            if lines:
                out.write("\n".join(lines))
                out.write("\n")


def read_telemetry(lines: Iterable[str]) -> list[TelemetrySample]:
    out = []
    it = iter(lines)
    for line in it:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if line == TELEMETRY_HEADER:
            continue
        t, router, direction, nbytes, up = line.split(",")
        out.append(TelemetrySample(int(t), router, direction, int(nbytes), int(up)))
    return out


@dataclass
class EmitterConfig:
    scrub_window_ms: int = 5_000
    quiesce_scrub_timeout_ms: int = 60_000
    lb_cadence_ms: int = 30_000
    late_error_delay_ms: int = 300_000
    late_error_cadence_ms: int = 60_000
    deadlock_spread_ms: int = 60_000


@dataclass
class HwErrorEmitter:
    """Per-tick hardware error rules.

    R1: a router with demand that has had no usable route for at least one
    tick (or that has been quiesce-stalled past the scrub timeout) logs one ORB
    scrub per scrub window, alternating upper/lower entries.
    R3: in a deadlock the stalled set spreads upstream along the corrupted
    paths; routers adjacent to the corrupted one report lack of forward
    progress, and after a delay SSID-stale-on-response and ORB-no-entry appear.
    R4: the corrupted router squashes misrouted packets.
    """

    topo: Topology
    config: EmitterConfig = field(default_factory=EmitterConfig)
    _blocked_since: dict[int, int] = field(default_factory=dict)
    _scrub_parity: dict[int, int] = field(default_factory=dict)
    _last_lb: int | None = None
    _last_late: int | None = None

    def _scrub(self, time_ms: int, routers: Iterable[int]) -> list[LogRecord]:
        out = []
        for r in sorted(set(routers)):
            parity = self._scrub_parity.get(r, 0)
            kind = HwErrorKind.OrbRamScrubbedUpper if parity == 0 else HwErrorKind.OrbRamScrubbedLower
            self._scrub_parity[r] = parity ^ 1
            out.append(hw_record(time_ms, kind, self.topo.router_cname(r)))
        return out

    def emit_for_state(self, state, t_ms: int, epoch_ms: int) -> list[LogRecord]:
        """Records due at sim time ``t_ms`` for the given network state.

        ``state`` provides ``blocked_routers()``, ``quiesce_stalled(t_ms)``
        and ``deadlock``.
        """
        cfg = self.config
        stamp = epoch_ms + t_ms
        blocked = set(state.blocked_routers())
        for r in list(self._blocked_since):
            if r not in blocked:
                del self._blocked_since[r]
        for r in blocked:
            self._blocked_since.setdefault(r, t_ms)
        if t_ms % cfg.scrub_window_ms:
            return []

        out: list[LogRecord] = []
        scrubbing = {r for r, since in self._blocked_since.items() if t_ms - since >= 1000}
        scrubbing |= set(state.quiesce_stalled(t_ms, cfg.quiesce_scrub_timeout_ms))
        dl = state.deadlock
        if dl is not None:
            scrubbing |= {r for r, since in dl.stalled.items() if t_ms - since >= 1000}
        out.extend(self._scrub(stamp, scrubbing))

        if dl is not None and t_ms - dl.onset_ms >= cfg.scrub_window_ms:
            c = dl.router
            cname = self.topo.router_cname(c)
            out.append(hw_record(stamp, HwErrorKind.NifSquashedTileRequest, cname))
            if self._last_lb is None or t_ms - self._last_lb >= cfg.lb_cadence_ms:
                self._last_lb = t_ms
                for r in sorted(dl.adjacent):
                    out.append(hw_record(stamp, HwErrorKind.LbLackForwardProgress, self.topo.router_cname(r), "error"))
            if t_ms - dl.onset_ms >= cfg.late_error_delay_ms and (
                self._last_late is None or t_ms - self._last_late >= cfg.late_error_cadence_ms
            ):
                self._last_late = t_ms
                out.append(hw_record(stamp, HwErrorKind.SsidStaleOnResponse, cname, "error"))
                out.append(hw_record(stamp, HwErrorKind.OrbRequestNoEntry, cname, "critical"))
        return out


def sample_telemetry(state, t_ms: int, epoch_s: int) -> TelemetryFrame | None:
    """Frame for the tick at ``t_ms``; ``None`` while the network is quiesced.

    ``state`` provides ``gate_closed``, ``take_traffic(t_ms)`` (bytes since
    the previous tick), ``up_links()`` and ``alive``.
    """
    nbytes = state.take_traffic(t_ms)
    if state.gate_closed:
        return None
    return TelemetryFrame(epoch_s + t_ms // 1000, nbytes, state.up_links(), state.alive.copy())
