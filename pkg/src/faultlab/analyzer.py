"""Offline analysis of run streams: recovery reconstruction, experiment report, deadlock detection."""

from __future__ import annotations

import json
import re
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable

from .emitter import ORB_SCRUB_TYPES, HW_EVENT_TYPES, LogRecord, TelemetrySample, read_telemetry, severity_rank


class MalformedLog(ValueError):
    def __init__(self, line_no: int, why: str):
        super().__init__(f"line {line_no}: {why}")
        self.line_no = line_no
        self.why = why


class WindowEmpty(ValueError):
    pass


RECOVERY_TERMINALS = {"recovery_success": "Success", "recovery_aborted": "Aborted", "recovery_failed": "Failed"}
SWAP_TERMINALS = {"warm_swap_success": "Success", "warm_swap_failed": "Failed"}
PHASE_RECORDS = {
    "quiesce": "Quiesce",
    "reroute_start": "RouteCompute",
    "reroute_done": "RouteInstall",
    "routes_installed": "Unquiesce",
}

COUNTERS = (
    ("Warm Swap Failed", "warm_swap_failed"),
    ("Gemini Link Failed", "gemini_link_failed"),
    ("EC Node Failed", "ec_node_failed"),
    ("Gemini Link Recovery failed", "gemini_link_recovery_failed"),
    ("Gemini Lane Recovery failed", "gemini_lane_recovery_failed"),
    ("Gemini Channel Failed", "gemini_channel_failed"),
    ("Blade Recovery Success", "blade_recovery_success"),
    ("Warm Swap Success", "warm_swap_success"),
    ("Link Recovery Success", "link_recovery_success"),
)

# Free-text recognisers for logs that do not carry structured event types.
COMPAT_PATTERNS: tuple[tuple[str, re.Pattern], ...] = tuple(
    (etype, re.compile(rx, re.IGNORECASE)) for etype, rx in (
        ("recovery_success", r"network recovery .*(complete|succeeded)"),
        ("recovery_aborted", r"network recovery .*abort"),
        ("recovery_failed", r"network recovery .*fail"),
        ("recovery_start", r"network recovery .*start"),
        ("warm_swap_success", r"warm ?swap .*(complete|success)"),
        ("warm_swap_failed", r"warm ?swap .*(fail|abort)"),
        ("warm_swap_start", r"warm ?swap .*start"),
        ("failure_detected", r"failure detected on"),
        ("quiesce", r"\b(quiesced|throttle)\b"),
        ("reroute_start", r"computing routes|reroute start"),
        ("reroute_done", r"routes computed"),
        ("routes_installed", r"routes installed"),
        ("gemini_link_failed", r"link .* failed$|gemini_link_failed"),
        ("gemini_channel_failed", r"lanes? .* failed|gemini_channel_failed"),
        ("ec_node_failed", r"ec_node_failed"),
        ("orb_ram_scrubbed_upper", r"ORB RAM Scrubbed Upper Entry"),
        ("orb_ram_scrubbed_lower", r"ORB RAM Scrubbed Lower Entry"),
        ("lb_lack_forward_progress", r"LB Lack of Forward Progress"),
    )
)
_COMPAT_LINE = re.compile(r"^(?P<sec>\d+)(?:\.(?P<ms>\d{1,3}))?\s+(?:(?P<cname>c\d+-\d+c\d+s\d+\S*)\s+)?(?P<text>.*)$")


@dataclass
class ParsedLog:
    header: dict[str, str]
    records: list[LogRecord]


def _parse_header(line: str) -> dict[str, str]:
    out = {}
    for part in line[1:].split()[1:]:
        key, _, value = part.partition("=")
        out[key] = value
    return out


def parse_log(lines: Iterable[str]) -> ParsedLog:
    """Parse an events.log stream; raises MalformedLog on bad or out-of-order lines."""
    header: dict[str, str] = {}
    records: list[LogRecord] = []
    last = None
    for no, raw in enumerate(lines, 1):
        line = raw.rstrip("\n")
        if not line.strip():
            continue
        if line.startswith("#"):
            if line.startswith("#run "):
                header = _parse_header(line)
            continue
        try:
            rec = LogRecord.parse(line)
        except ValueError as exc:
            raise MalformedLog(no, str(exc)) from None
        if last is not None and rec.time_ms < last:
            raise MalformedLog(no, "timestamp goes backwards")
        last = rec.time_ms
        records.append(rec)
    return ParsedLog(header, records)


def parse_compat(lines: Iterable[str]) -> ParsedLog:
    """Regex mode for free-text logs: ``<epoch[.ms]> [cname] <text>`` lines.

    The first matching recogniser names the event; other lines are dropped.
    """
    records = []
    for raw in lines:
        m = _COMPAT_LINE.match(raw.strip())
        if not m:
            continue
        text = m["text"].replace("|", "/")
        for etype, rx in COMPAT_PATTERNS:
            if rx.search(text):
                ms = int((m["ms"] or "0").ljust(3, "0"))
                source = "HW" if etype in HW_EVENT_TYPES else "SMW"
                records.append(LogRecord(int(m["sec"]) * 1000 + ms, source, "info", etype, m["cname"] or "", text))
                break
    records.sort(key=lambda r: r.time_ms)
    return ParsedLog({}, records)


# -- recovery reconstruction --------------------------------------------------

@dataclass
class ProcedureView:
    kind: str
    start_ms: int
    opened_ms: int
    triggers: list[str] = field(default_factory=list)
    phases: dict[str, int] = field(default_factory=dict)
    outcome: str | None = None
    end_ms: int | None = None
    anomaly: str = ""

    @property
    def duration_ms(self) -> int | None:
        return None if self.end_ms is None else self.end_ms - self.opened_ms


def reconstruct_recoveries(records: Iterable[LogRecord]) -> list[ProcedureView]:
    """Group start..terminal spans into procedures.

    A recovery's clock starts at the last failure report logged before its
    start record; a warm swap's clock starts at its own start record.
    Overlapping spans are closed and flagged rather than rejected.
    """
    out: list[ProcedureView] = []
    current: ProcedureView | None = None
    unresolved: list[str] = []
    last_report: int | None = None
    for rec in records:
        et = rec.event_type
        if et == "failure_detected":
            last_report = rec.time_ms
            unresolved.append(rec.cname)
            if current is not None and current.kind == "recovery":
                current.triggers.append(rec.cname)
        elif et in ("recovery_start", "warm_swap_start"):
            if current is not None:
                current.anomaly = "overlapping span"
                out.append(current)
            if et == "recovery_start":
                opened = last_report if last_report is not None else rec.time_ms
                current = ProcedureView("recovery", rec.time_ms, opened, list(unresolved))
                current.phases["Aggregating"] = rec.time_ms
                last_report = None
            else:
                current = ProcedureView("warm_swap", rec.time_ms, rec.time_ms, [rec.cname])
                current.phases["WarmSwapInit"] = rec.time_ms
        elif et in PHASE_RECORDS and current is not None:
            current.phases.setdefault(PHASE_RECORDS[et], rec.time_ms)
        elif current is not None and (
            (current.kind == "recovery" and et in RECOVERY_TERMINALS)
            or (current.kind == "warm_swap" and et in SWAP_TERMINALS)
        ):
            current.outcome = (RECOVERY_TERMINALS | SWAP_TERMINALS)[et]
            current.end_ms = rec.time_ms
            if current.kind == "recovery" and current.outcome != "Aborted":
                unresolved = []
            out.append(current)
            current = None
    if current is not None:
        current.anomaly = current.anomaly or "unterminated"
        out.append(current)
    return out


# -- deadlock detector --------------------------------------------------------

@dataclass
class DeadlockAlarm:
    onset_ms: int
    success_ms: int
    window_counts: list[int]
    forward_progress_errors: int
    post_success: bool = True

    def to_json(self) -> dict:
        return asdict(self)


def orb_window_counts(records: list[LogRecord], start_ms: int, window_ms: int = 60_000) -> list[int]:
    """Distinct ORB-scrub emitters in each full window from ``start_ms``."""
    if not records:
        return []
    last = records[-1].time_ms
    n = max(0, (last - start_ms) // window_ms)
    emitters: list[set[str]] = [set() for _ in range(n)]
    for rec in records:
        if rec.event_type in ORB_SCRUB_TYPES and rec.time_ms >= start_ms:
            i = (rec.time_ms - start_ms) // window_ms
            if i < n:
                emitters[i].add(rec.cname)
    return [len(e) for e in emitters]


def detect_deadlock(records: list[LogRecord], window_ms: int = 60_000, k: int = 3) -> DeadlockAlarm | None:
    """Alarm when, after the latest recovery ended in success, ORB-scrub emitters
    keep growing for ``k`` consecutive windows and lack-of-forward-progress is reported."""
    terminal = None
    for rec in records:
        if rec.event_type in RECOVERY_TERMINALS:
            terminal = rec
    if terminal is None or terminal.event_type != "recovery_success":
        return None
    success = terminal.time_ms
    lb = sum(1 for r in records if r.event_type == "lb_lack_forward_progress" and r.time_ms >= success)
    if lb == 0:
        return None
    counts = orb_window_counts(records, success, window_ms)
    for i in range(k - 1, len(counts)):
        run = counts[i - k + 1:i + 1]
        if run[0] >= 1 and all(a < b for a, b in zip(run, run[1:])):
            return DeadlockAlarm(success + (i + 1) * window_ms, success, counts[:i + 1], lb)
    return None


# -- experiment report --------------------------------------------------------

@dataclass
class ExperimentReport:
    fields: dict[str, object]
    alarm: DeadlockAlarm | None = None

    def text(self) -> str:
        width = max(len(k) for k in self.fields) + 2
        return "".join(f"{k + ':':<{width}}{_fmt(v)}\n" for k, v in self.fields.items())

    def to_json(self) -> str:
        doc = {"report": self.fields, "deadlock_alarm": None if self.alarm is None else self.alarm.to_json()}
        return json.dumps(doc, indent=2) + "\n"


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "Yes" if v else "No"
    return str(v)


_CAMPAIGN_ID = re.compile(r"id=(\S+)")
_SCENARIO = re.compile(r"scenario=(.*?)(?: dims=|$)")


def build_report(records: list[LogRecord], telemetry: list[TelemetrySample] | None = None,
                 jobs: list[dict] | None = None, window: tuple[int, int] | None = None,
                 window_ms: int = 60_000, k: int = 3) -> ExperimentReport:
    """Table-IV style summary of one experiment.  ``window`` is in epoch seconds, inclusive."""
    if window is not None:
        lo, hi = window
        if lo > hi:
            raise WindowEmpty(f"window start {lo} is after its end {hi}")
        records = [r for r in records if lo * 1000 <= r.time_ms <= hi * 1000 + 999]
        if telemetry is not None:
            telemetry = [s for s in telemetry if lo <= s.t <= hi]
    if not records:
        raise WindowEmpty("no log records in the analysis window")

    counts = Counter(r.event_type for r in records)
    start = next((r for r in records if r.event_type == "campaign_start"), records[0])
    end = next((r for r in reversed(records) if r.event_type == "campaign_end"), records[-1])
    start_s, end_s = start.time_ms // 1000, end.time_ms // 1000
    m = _CAMPAIGN_ID.search(start.message) if start.event_type == "campaign_start" else None
    s = _SCENARIO.search(start.message) if start.event_type == "campaign_start" else None
    procs = reconstruct_recoveries(records)
    recoveries = [p for p in procs if p.kind == "recovery" and p.end_ms is not None]
    recovery_time = 0
    if recoveries:
        recovery_time = (max(p.end_ms for p in recoveries) - min(p.opened_ms for p in recoveries)) // 1000
    success = sum(1 for p in procs if p.outcome == "Success")
    failure = sum(1 for p in procs if p.outcome in ("Aborted", "Failed"))
    targeted = {r.cname for r in records if r.event_type == "fault_injected"}
    console_errors = any(
        r.source == "CONSOLE" and severity_rank(r.severity) >= severity_rank("error") for r in records
    )
    fields: dict[str, object] = {
        "Experiment ID": m.group(1) if m else "",
        "Start Time": start_s,
        "End Time": end_s,
        "Experiment Window [hours]": f"{(end_s - start_s) / 3600:.9f}",
        "Failure Scenario": s.group(1) if s else "",
        "Components Targeted": len(targeted),
        "Errors on Admin Console": console_errors,
        "Recovery Time [seconds]": recovery_time,
        "Number of Recovery Procedures": len(procs),
        "Number of Procedures: Success": success,
        "Number of Procedures: Failure": failure,
        "Is Last Recovery Failed?": bool(recoveries) and recoveries[-1].outcome != "Success",
        "Application Errors": counts["app_error"],
    }
    for label, etype in COUNTERS:
        fields[label] = counts[etype]
    if telemetry is not None:
        ticks = sorted({smp.t for smp in telemetry})
        gaps = [b - a - 1 for a, b in zip(ticks, ticks[1:])]
        fields["Telemetry Samples"] = len(telemetry)
        fields["Longest Telemetry Gap [seconds]"] = max(gaps, default=0)
    if jobs is not None:
        status = Counter(j.get("status", "") for j in jobs)
        fields["Jobs Completed"] = status["Completed"]
        fields["Jobs Killed"] = status["Killed"]
        fields["Jobs Hung"] = status["Hung"]
    alarm = detect_deadlock(records, window_ms, k)
    fields["Deadlock Alarm"] = alarm is not None
    return ExperimentReport(fields, alarm)


# -- cumulative curves --------------------------------------------------------

def traffic_cdf(telemetry: list[TelemetrySample], router: str | None = None, direction: str | None = None
                ) -> list[tuple[int, float, float]]:
    """Per tick: cumulative traffic fraction on the selected connection and on all others."""
    sel: dict[int, int] = defaultdict(int)
    rest: dict[int, int] = defaultdict(int)
    for smp in telemetry:
        hit = router is None or (smp.router == router and (direction is None or smp.direction == direction))
        (sel if hit else rest)[smp.t] += smp.bytes
    ticks = sorted(set(sel) | set(rest))
    tot_sel, tot_rest = sum(sel.values()) or 1, sum(rest.values()) or 1
    out, a, b = [], 0, 0
    for t in ticks:
        a += sel.get(t, 0)
        b += rest.get(t, 0)
        out.append((t, a / tot_sel, b / tot_rest))
    return out


def error_cdf(records: list[LogRecord]) -> list[tuple[int, str, float]]:
    """Per hardware-error type, cumulative fraction of its records at each second they occur."""
    by_type: dict[str, list[int]] = defaultdict(list)
    for r in records:
        if r.event_type in HW_EVENT_TYPES:
            by_type[r.event_type].append(r.time_ms // 1000)
    out = []
    for etype in sorted(by_type):
        times = by_type[etype]
        per_sec = Counter(times)
        seen = 0
        for t in sorted(per_sec):
            seen += per_sec[t]
            out.append((t, etype, seen / len(times)))
    return out


# -- run directories ----------------------------------------------------------

def read_jobs(lines: Iterable[str]) -> list[dict]:
    it = iter(lines)
    head = next(it, "").strip().split(",")
    return [dict(zip(head, line.strip().split(","))) for line in it if line.strip()]


@dataclass
class RunAnalysis:
    log: ParsedLog
    procedures: list[ProcedureView]
    report: ExperimentReport
    telemetry: list[TelemetrySample]


def analyze_run_dir(run_dir: str | Path, window: tuple[int, int] | None = None, compat: bool = False,
                    window_ms: int = 60_000, k: int = 3) -> RunAnalysis:
    run_dir = Path(run_dir)
    with open(run_dir / "events.log", encoding="utf-8") as fh:
        log = parse_compat(fh) if compat else parse_log(fh)
    telemetry: list[TelemetrySample] = []
    if (run_dir / "telemetry.csv").exists():
        with open(run_dir / "telemetry.csv", encoding="utf-8") as fh:
            telemetry = read_telemetry(fh)
    jobs = None
    if (run_dir / "jobs.csv").exists():
        with open(run_dir / "jobs.csv", encoding="utf-8") as fh:
            jobs = read_jobs(fh)
    report = build_report(log.records, telemetry, jobs, window, window_ms, k)
    return RunAnalysis(log, reconstruct_recoveries(log.records), report, telemetry)


def write_plots(analysis: RunAnalysis, out: str | Path) -> list[Path]:
    out = Path(out)
    tpath, epath = out / "traffic_cdf.csv", out / "error_cdf.csv"
    with open(tpath, "w", encoding="utf-8") as fh:
        fh.write("t,fraction\n")
        for t, frac, _ in traffic_cdf(analysis.telemetry):
            fh.write(f"{t},{frac:.6f}\n")
    with open(epath, "w", encoding="utf-8") as fh:
        fh.write("t,event_type,fraction\n")
        for t, etype, frac in error_cdf(analysis.log.records):
            fh.write(f"{t},{etype},{frac:.6f}\n")
    return [tpath, epath]
