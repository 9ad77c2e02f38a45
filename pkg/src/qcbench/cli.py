"""Command-line entry point: run, report, serve, device."""

from __future__ import annotations

import argparse
import json
import sys
from typing import Optional, Sequence

from .device import load_device
from .suite import BENCHMARKS, FORMATS, ConfigError, EmptyPlotError, SuiteConfig, emit_report, load_config, load_reports, run_suite


def _backend_flags(flag: Optional[str]) -> dict:
    """--backend takes 'local', a device profile/file for the local twin, or an http(s) URL."""
    if flag is None:
        return {}
    if flag.startswith(("http://", "https://")) or flag == "local":
        return {"backend": flag}
    return {"backend": "local", "device": flag}


def cmd_run(args) -> int:
    try:
        config = load_config(args.config) if args.config else SuiteConfig(benchmarks=())
        names = args.benchmarks.split(",") if args.benchmarks else None
        config = config.override(
            seed=args.seed,
            out_dir=args.out_dir,
            workers=args.workers,
            parallel=True if args.parallel else None,
            benchmarks=[n for n in names if n] if names is not None else None,
            **_backend_flags(args.backend),
        )
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        result = run_suite(config)
    except ConnectionError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    for rep, rid in zip(result.reports, result.record_ids):
        state = "error" if rep.errors else "ok"
        print(f"{rep.benchmark:<11} {state:<5} {rid}")
    return result.exit_status


def cmd_report(args) -> int:
    try:
        reports = load_reports(args.input)
        paths = emit_report(reports, args.format, args.out_dir)
    except (EmptyPlotError, ValueError, OSError) as exc:
        print(f"report error: {exc}", file=sys.stderr)
        return 1
    for p in paths:
        print(p)
    return 0


def cmd_serve(args) -> int:
    from .execution import LocalBackend
    from .execution.api import serve_api

    backend = LocalBackend(load_device(args.device), workers=args.workers)
    serve_api(backend, bind=args.bind, workers=args.workers, block=True)
    return 0


def cmd_device(args) -> int:
    if args.backend and args.backend.startswith(("http://", "https://")):
        from .execution.remote import RemoteBackend

        device = RemoteBackend(args.backend).device
    else:
        device = load_device(args.backend or "garnet-median")
    print(json.dumps(device.to_dict(), indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qcbench", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a benchmark suite")
    run.add_argument("--config", help="YAML or JSON suite config")
    run.add_argument("--backend", help="'local', a device profile or file, or a service URL")
    run.add_argument("--seed", type=int)
    run.add_argument("--out-dir")
    run.add_argument("--benchmarks", help=f"comma-separated subset of: {','.join(BENCHMARKS)}")
    run.add_argument("--workers", type=int, help="simulator worker threads")
    run.add_argument("--parallel", action="store_true", help="run independent benchmarks concurrently")
    run.set_defaults(func=cmd_run)

    rep = sub.add_parser("report", help="emit JSON, CSV or SVG from stored reports")
    rep.add_argument("input", help="run store (.jsonl), report JSON, or an output directory")
    rep.add_argument("--format", choices=FORMATS, default="json")
    rep.add_argument("--out-dir", default=".")
    rep.set_defaults(func=cmd_report)

    srv = sub.add_parser("serve", help="serve the local twin over HTTP")
    srv.add_argument("--device", default="garnet-median", help="device profile or file")
    srv.add_argument("--bind", help="host:port (default from QCBENCH_BIND or 127.0.0.1:8765)")
    srv.add_argument("--workers", type=int, default=1)
    srv.set_defaults(func=cmd_serve)

    dev = sub.add_parser("device", help="print the device model as JSON")
    dev.add_argument("--backend", help="device profile, file or service URL")
    dev.set_defaults(func=cmd_device)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
