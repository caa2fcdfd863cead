"""``faultlab`` command line: topo, routes, run, analyze, patterns, replay."""

from __future__ import annotations

import argparse
import json
import sys
import tempfile
from pathlib import Path

from . import __version__
from .analyzer import MalformedLog, WindowEmpty, analyze_run_dir, write_plots
from .emitter import LogRecord
from .hpcarrow import SCHEMA_VERSION, CampaignInvalid, campaign_from_json, load_campaign, run_campaign, write_run_dir
from .patterns import Dictionary, aggregate, count_patterns, sort_by_weight
from .routing import NoRoute, UnroutableError, compute_routes, down_connection, format_path, healthy_link_states, path_of
from .topology import Direction, InvalidDims, MalformedCname, TorusDims, build_topology

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_ANOMALY, EXIT_IO = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _dims(text: str) -> TorusDims:
    try:
        return TorusDims.parse(text)
    except (InvalidDims, ValueError) as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _window(text: str) -> tuple[int, int]:
    try:
        lo, hi = (int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("window is <start,end> in epoch seconds") from None
    return lo, hi


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="faultlab", description="Torus interconnect fault-injection simulator and log analyzer.")
    p.add_argument("--version", action="version",
                   version=f"faultlab {__version__} (campaign schema {SCHEMA_VERSION})")
    sub = p.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    t = sub.add_parser("topo", help="dump every component as kind,cname,x,y,z")
    t.add_argument("--dims", type=_dims, default=TorusDims(16, 12, 24))
    t.add_argument("--summary", action="store_true", help="print component counts only")

    r = sub.add_parser("routes", help="print the route between two routers")
    r.add_argument("src")
    r.add_argument("dst")
    r.add_argument("--dims", type=_dims, default=TorusDims(16, 12, 24))
    r.add_argument("--down", action="append", default=[], metavar="CNAME:DIR",
                   help="take a whole connection down first (repeatable)")

    run = sub.add_parser("run", help="execute a campaign file")
    run.add_argument("campaign")
    run.add_argument("--out", required=True)
    run.add_argument("--seed", type=int)
    run.add_argument("--dims", type=_dims)

    a = sub.add_parser("analyze", help="report on a run directory")
    a.add_argument("run_dir")
    a.add_argument("--window", type=_window)
    a.add_argument("--plots", action="store_true", help="also write traffic_cdf.csv and error_cdf.csv")
    a.add_argument("--compat", action="store_true", help="parse events.log as free text with regexes")
    a.add_argument("--deadlock-window", type=int, default=60, metavar="SECONDS")
    a.add_argument("--deadlock-k", type=int, default=3)

    pt = sub.add_parser("patterns", help="mine message templates from a log")
    pt.add_argument("logfile")
    pt.add_argument("--dict", dest="dict_file")
    pt.add_argument("--dump-patterns", action="store_true", help="print patterns before aggregation")
    pt.add_argument("--by-weight", action="store_true", help="order by dictionary word weights")

    rp = sub.add_parser("replay", help="re-run a run directory and compare its outputs byte for byte")
    rp.add_argument("run_dir")
    return p


def _cmd_topo(args) -> int:
    topo = build_topology(args.dims)
    if args.summary:
        print(f"dims={topo.dims} routers={topo.n_routers} blades={topo.n_blades} "
              f"nodes={topo.n_nodes} links={topo.n_links}")
        return EXIT_OK
    out = sys.stdout
    for line in topo.dump():
        out.write(line + "\n")
    return EXIT_OK


def _cmd_routes(args) -> int:
    topo = build_topology(args.dims)
    states = healthy_link_states(topo)
    try:
        for spec in args.down:
            cname, _, label = spec.partition(":")
            down_connection(topo, states, topo.resolve(cname)[1], Direction.parse(label))
        src = topo.resolve(args.src)
        dst = topo.resolve(args.dst)
    except (MalformedCname, ValueError) as exc:
        raise UsageError(str(exc)) from None
    if src[0].kind != "router" or dst[0].kind != "router":
        raise UsageError("routes takes two router cnames")
    try:
        table = compute_routes(topo, states)
        path = path_of(table, src[1], dst[1])
    except (UnroutableError, NoRoute) as exc:
        print(f"faultlab: {exc}", file=sys.stderr)
        return EXIT_ANOMALY
    print(format_path(topo, path, src[1], dst[1]))
    return EXIT_OK


def _cmd_run(args) -> int:
    camp = load_campaign(args.campaign)
    if args.seed is not None or args.dims is not None:
        camp = camp.with_overrides(args.seed, args.dims)
    art = run_campaign(camp)
    out = write_run_dir(art, args.out)
    procs = art.procedures
    ok = sum(1 for p in procs if p.outcome is not None and p.outcome.value == "Success")
    print(f"{camp.name}: {len(art.records)} records, {len(art.telemetry)} samples, "
          f"{len(procs)} procedures ({ok} success) -> {out}")
    return EXIT_OK


def _cmd_analyze(args) -> int:
    run_dir = Path(args.run_dir)
    if not (run_dir / "events.log").is_file():
        raise FileNotFoundError(f"{run_dir / 'events.log'} not found")
    try:
        res = analyze_run_dir(run_dir, args.window, args.compat, args.deadlock_window * 1000, args.deadlock_k)
    except MalformedLog as exc:
        print(f"faultlab: events.log {exc}", file=sys.stderr)
        return EXIT_ANOMALY
    except WindowEmpty as exc:
        print(f"faultlab: {exc}", file=sys.stderr)
        return EXIT_ANOMALY
    sys.stdout.write(res.report.text())
    (run_dir / "report.json").write_text(res.report.to_json(), encoding="utf-8")
    if args.plots:
        write_plots(res, run_dir)
    anomalies = [p for p in res.procedures if p.anomaly]
    for p in anomalies:
        print(f"faultlab: {p.kind} starting at {p.start_ms / 1000:.3f}: {p.anomaly}", file=sys.stderr)
    if res.report.alarm is not None:
        print(f"faultlab: deadlock alarm, onset {res.report.alarm.onset_ms / 1000:.3f}", file=sys.stderr)
        return EXIT_ANOMALY
    return EXIT_ANOMALY if anomalies else EXIT_OK


def _messages(path: Path):
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            try:
                yield LogRecord.parse(line).message
            except ValueError:
                yield line


def _cmd_patterns(args) -> int:
    if args.dict_file:
        with open(args.dict_file, encoding="utf-8") as fh:
            dictionary = Dictionary.from_lines(fh)
    else:
        dictionary = Dictionary.default()
    pcs = count_patterns(_messages(Path(args.logfile)), dictionary)
    if args.dump_patterns:
        for pc in pcs:
            print(f"{pc.count}\t{pc.pattern.text}")
        return EXIT_OK
    metas = aggregate(pcs)
    if args.by_weight:
        metas = sort_by_weight(metas, dictionary)
    for m in metas:
        print(f"{m.count}\t{m.text}")
    return EXIT_OK


REPLAYED = ("events.log", "telemetry.csv")


def _cmd_replay(args) -> int:
    run_dir = Path(args.run_dir)
    try:
        doc = json.loads((run_dir / "campaign.json").read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CampaignInvalid("campaign.json", str(exc)) from None
    camp = campaign_from_json(doc)
    with tempfile.TemporaryDirectory() as tmp:
        write_run_dir(run_campaign(camp), tmp)
        diffs = [name for name in REPLAYED if (Path(tmp) / name).read_bytes() != (run_dir / name).read_bytes()]
    if diffs:
        print(f"faultlab: replay differs in {', '.join(diffs)}", file=sys.stderr)
        return EXIT_ANOMALY
    print(f"replay identical: {', '.join(REPLAYED)}")
    return EXIT_OK


COMMANDS = {
    "topo": _cmd_topo, "routes": _cmd_routes, "run": _cmd_run, "analyze": _cmd_analyze,
    "patterns": _cmd_patterns, "replay": _cmd_replay,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    try:
        return COMMANDS[args.cmd](args)
    except UsageError as exc:
        print(f"faultlab: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CampaignInvalid as exc:
        print(f"faultlab: invalid campaign: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (OSError, UnicodeDecodeError) as exc:
        print(f"faultlab: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
