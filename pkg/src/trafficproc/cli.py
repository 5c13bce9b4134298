"""Command line: validate, simulate, run, metrics, ttest, bench.

Exit status is 0 on success, 1 on a domain failure (invalid network, a
rejected t test, an unknown definition, a failed stage) and 2 on usage or
I/O errors.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime as dt
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from .gateway import format_detection
from .metrics import METRIC_HEADER
from .network import NetworkError, NetworkParseError, load_network
from .pipeline import RunConfig, StageError, data_path, run, simulate
from .simulator import ProfileError, format_ground_truth, load_profiles
from .stats import report
from .topology import AreaMap, load_area_map

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("trafficproc")


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_DOMAIN):
        super().__init__(message)
        self.code = code


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    # Defaults are suppressed so that only flags actually given override the
    # config file.
    s = argparse.SUPPRESS
    p.add_argument("--config", default=s, help="JSON file with run settings; flags take precedence")
    p.add_argument("--network", default=s, help="road network file")
    p.add_argument("--areas", default=s, help="area map file (defaults to the network file)")
    p.add_argument("--dataset", default=s, help="link profile CSV")
    p.add_argument("--journeys", default=s, type=lambda v: [j for j in v.split(",") if j],
                   help="comma-separated journey ids to simulate")
    p.add_argument("--date", default=s, help="dataset date to simulate (YYYY-MM-DD)")
    p.add_argument("--periods", default=s, type=_periods, help="15-minute periods, e.g. 32 or 28-40")
    p.add_argument("--seed", default=s, type=int)
    p.add_argument("--mode", default=s, choices=["strict", "discovery"])
    p.add_argument("--ttl-min", dest="ttl_min", default=s, type=float)
    p.add_argument("--window-min", dest="window_min", default=s, type=float)
    p.add_argument("--cv", default=s, type=float, help="coefficient of variation of link times")
    p.add_argument("--miss-rate", dest="miss_rate", default=s, type=float,
                   help="fraction of vehicles with one missed interior detection")
    p.add_argument("--thresholds", default=s, help="threshold CSV")
    p.add_argument("--alpha", default=s, type=float)
    p.add_argument("--paired", default=s, action="store_true", help="per-period paired t test")
    p.add_argument("--tz", default=s, help="zone for journey dates")
    p.add_argument("--out", default=s, help="output directory (default $TRAFFICPROC_OUT)")


def _periods(text: str) -> list[int]:
    out: list[int] = []
    for part in text.split(","):
        lo, sep, hi = part.partition("-")
        try:
            out.extend(range(int(lo), int(hi) + 1) if sep else [int(lo)])
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad period list {text!r}") from None
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trafficproc", description="ANPR journey analytics pipeline")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a road network file")
    p.add_argument("network", nargs="?", default=None)
    p.add_argument("--areas", default=None, help="also check an area map")

    p = sub.add_parser("simulate", help="write detections and ground truth")
    _add_config_flags(p)

    p = sub.add_parser("run", help="full pipeline with all outputs")
    _add_config_flags(p)

    p = sub.add_parser("metrics", help="query metric tables of a finished run")
    p.add_argument("definition")
    p.add_argument("--out", default=None, help="run output directory")
    p.add_argument("--from", dest="start", default=None, help="first window start (ISO time)")
    p.add_argument("--to", dest="end", default=None, help="last window start (ISO time)")
    p.add_argument("--vector", action="store_true", help="journey flow per path component")

    p = sub.add_parser("ttest", help="simulate and test observed link means")
    _add_config_flags(p)

    p = sub.add_parser("bench", help="latency and throughput benchmark")
    p.add_argument("--events", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--serial", action="store_true", help="add a serial attribution run")
    p.add_argument("--network", default=None)
    p.add_argument("--dataset", default=None)
    p.add_argument("--out", default=None, help="also write the report here")
    return parser


def load_config(args: argparse.Namespace) -> RunConfig:
    values: dict = {}
    path = getattr(args, "config", None)
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                values.update(json.load(fh))
        except OSError as exc:
            raise CliError(f"cannot read config: {exc}", EXIT_USAGE) from None
        except json.JSONDecodeError as exc:
            raise CliError(f"bad config file {path}: {exc}", EXIT_USAGE) from None
    names = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = sorted(set(values) - names)
    if unknown:
        raise CliError(f"unknown config keys: {', '.join(unknown)}", EXIT_USAGE)
    for name in names:
        if hasattr(args, name):
            values[name] = getattr(args, name)
    cfg = RunConfig(**values)
    for label in ("network", "dataset", "areas", "thresholds"):
        p = getattr(cfg, label)
        if p is not None and not Path(p).is_file():
            raise CliError(f"{label} file not found: {p}", EXIT_USAGE)
    if cfg.ttl_min <= 0 or cfg.window_min <= 0:
        raise CliError("ttl and window lengths must be positive", EXIT_USAGE)
    if not 0 <= cfg.miss_rate <= 1 or cfg.cv < 0:
        raise CliError("miss rate must lie in [0, 1] and cv must be non-negative", EXIT_USAGE)
    return cfg


def cmd_validate(args) -> int:
    path = args.network or str(data_path("birmingham_staffordshire.net"))
    try:
        net = load_network(path, validate=False)
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror or exc}", EXIT_USAGE) from None
    except NetworkParseError as exc:
        print(f"{path}: {exc}")
        return EXIT_DOMAIN
    problems = net.violations()
    try:
        amap = load_area_map(args.areas or path)
    except OSError as exc:
        raise CliError(f"cannot read {args.areas}: {exc.strerror or exc}", EXIT_USAGE) from None
    if amap.junction_area:
        problems += amap.violations(net)
    for v in problems:
        print(v)
    if problems:
        return EXIT_DOMAIN
    print(f"ok: {len(net.junctions)} junctions, {len(net.sections)} sections, {len(net.journeys)} journeys")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = load_config(args)
    try:
        net = load_network(cfg.network)
        profiles = load_profiles(cfg.dataset)
        amap = load_area_map(cfg.areas or cfg.network)
    except (NetworkError, NetworkParseError, ProfileError) as exc:
        raise CliError(f"load: {exc}") from None
    if not amap.junction_area:
        amap = AreaMap.single(net)
    try:
        sim = simulate(cfg, net, profiles, amap)
    except (KeyError, ValueError, ProfileError) as exc:
        raise CliError(f"simulate: {exc}") from None
    out = cfg.output_dir()
    out.mkdir(parents=True, exist_ok=True)
    (out / "detections.csv").write_text("".join(format_detection(d) + "\n" for d in sim.detections), encoding="utf-8")
    (out / "ground_truth.csv").write_text(
        "".join(format_ground_truth(g) + "\n" for g in sim.ground_truth), encoding="utf-8"
    )
    print(f"{len(sim.ground_truth)} vehicles, {len(sim.detections)} detections -> {out}")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = load_config(args)
    result = run(cfg)
    summary = json.loads((cfg.output_dir() / "run.json").read_text(encoding="utf-8"))
    print(
        f"{summary['vehicles']} vehicles, {summary['events']} events, {summary['completed']} completed, "
        f"{summary['discarded']} discarded, {summary['rejections']} rejections -> {cfg.output_dir()}"
    )
    if result.truncated:
        print("interrupted: outputs are partial")
    sys.stdout.write(report(result.ttest))
    return EXIT_OK


def _parse_iso(text: str | None) -> dt.datetime | None:
    if text is None:
        return None
    t = dt.datetime.fromisoformat(text.replace("Z", "+00:00"))
    if t.tzinfo is None:
        t = t.replace(tzinfo=dt.timezone.utc)
    return t


def cmd_metrics(args) -> int:
    out = Path(args.out) if args.out else RunConfig().output_dir()
    table = out / ("journey_vectors.csv" if args.vector else "metrics.csv")
    if not table.is_file():
        raise CliError(f"no run outputs in {out}", EXIT_USAGE)
    try:
        start, end = _parse_iso(args.start), _parse_iso(args.end)
    except ValueError as exc:
        raise CliError(f"bad time: {exc}", EXIT_USAGE) from None
    known = set()
    net_file = out / "network.net"
    if net_file.is_file():
        net = load_network(net_file, validate=False)
        known = set(net.sections) | set(net.journeys)
    with open(table, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")][1:]
    known |= {r[0] for r in rows}
    if args.definition not in known:
        raise CliError(f"unknown definition {args.definition}")

    def in_range(iso: str) -> bool:
        t = _parse_iso(iso)
        return (start is None or t >= start) and (end is None or t <= end)

    selected = [r for r in rows if r[0] == args.definition and in_range(r[1])]
    if not args.vector:
        print(METRIC_HEADER)
        for r in selected:
            print(",".join(r))
        return EXIT_OK
    # One row per path component, flows summed over the selected windows.
    print("definition_id,component_index,section_id,flow")
    totals: dict[int, list] = {}
    for r in selected:
        idx = int(r[2])
        slot = totals.setdefault(idx, [r[3], 0])
        slot[1] += int(r[4])
    for idx in sorted(totals):
        sid, flow = totals[idx]
        print(f"{args.definition},{idx},{sid},{flow}")
    return EXIT_OK


def cmd_ttest(args) -> int:
    cfg = load_config(args)
    result = run(cfg, write=False)
    sys.stdout.write(report(result.ttest))
    if cfg.out is not None:
        out = cfg.output_dir()
        out.mkdir(parents=True, exist_ok=True)
        (out / "ttest.csv").write_text(report(result.ttest), encoding="utf-8")
    return EXIT_DOMAIN if result.any_rejected else EXIT_OK


def cmd_bench(args) -> int:
    from .bench import format_bench, run_bench

    if args.events <= 0:
        raise CliError("empty workload")
    result = run_bench(args.events, seed=args.seed, serial=args.serial, network=args.network, dataset=args.dataset)
    text = format_bench(result)
    sys.stdout.write(text)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "bench.txt").write_text(text, encoding="utf-8")
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "simulate": cmd_simulate,
    "run": cmd_run,
    "metrics": cmd_metrics,
    "ttest": cmd_ttest,
    "bench": cmd_bench,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except StageError as exc:
        print(f"error [{exc.stage}]: {exc.cause}", file=sys.stderr)
        return EXIT_USAGE if isinstance(exc.cause, OSError) else EXIT_DOMAIN
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return 130


if __name__ == "__main__":
    sys.exit(main())
