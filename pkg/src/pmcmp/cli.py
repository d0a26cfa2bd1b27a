"""Command-line front end: local comparison runs, the service launcher and
the benchmark harness.

Exit codes: 0 success, 1 comparison errors occurred (partial results were
still written), 2 usage or I/O errors.
"""

from __future__ import annotations

import argparse
import contextlib
import sys
import tempfile
from pathlib import Path

from . import bench as bench_mod
from .config import load_config
from .engine import Engine
from .errors import PmCmpError
from .measures import ComparisonMode, ScaleMode, parse_measures

_MODES = {
    "1n": ComparisonMode.ONE_VS_ALL,
    "nn": ComparisonMode.ALL_VS_ALL,
    "first against all": ComparisonMode.ONE_VS_ALL,
    "all against all": ComparisonMode.ALL_VS_ALL,
}

_SCALES = {
    "match": ScaleMode.MATCH_LENGTH,
    "total": ScaleMode.TOTAL_LENGTH,
    "match length": ScaleMode.MATCH_LENGTH,
    "total length": ScaleMode.TOTAL_LENGTH,
}


def _config_from_args(args) -> "EngineConfig":
    overrides = {
        name: getattr(args, name, None)
        for name in (
            "queue_rate",
            "bucket_size",
            "workers",
            "chunk_budget",
            "max_retries",
            "retention_days",
            "cache_capacity",
        )
    }
    return load_config(getattr(args, "config", None), **overrides)


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--queue-rate", type=float, dest="queue_rate",
                        help="token bucket refill rate, tasks/second (max 100)")
    parser.add_argument("--bucket-size", type=int, dest="bucket_size",
                        help="token bucket capacity")
    parser.add_argument("--workers", type=int, help="worker thread count")
    parser.add_argument("--chunk-budget", type=int, dest="chunk_budget",
                        help="pair tasks enqueued per distribution chunk")
    parser.add_argument("--max-retries", type=int, dest="max_retries",
                        help="retries before a task is recorded as failed")
    parser.add_argument("--retention-days", type=float, dest="retention_days",
                        help="experiment retention for the cleanup task")
    parser.add_argument("--cache-capacity", type=int, dest="cache_capacity",
                        help="structure cache entries")


def cmd_compare(args) -> int:
    try:
        mode = _MODES[args.mode.lower()]
        scale = _SCALES[args.scale.lower()]
        measures = parse_measures(args.measures.split(","))
    except (KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    files = []
    for name in args.files:
        path = Path(name)
        try:
            files.append((path, path.read_bytes()))
        except OSError as exc:
            print(f"error: cannot read {name}: {exc}", file=sys.stderr)
            return 2
    if len(files) < 2:
        print("error: need at least 2 structure files", file=sys.stderr)
        return 2

    try:
        config = _config_from_args(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    with contextlib.ExitStack() as stack:
        data_dir = args.data_dir or stack.enter_context(
            tempfile.TemporaryDirectory(prefix="pmcmp-")
        )
        engine = Engine(data_dir, config)
        try:
            exp_id = engine.create_experiment(args.label, measures, mode, scale)
            for path, body in files:
                engine.add_structure(exp_id, path.name, body)
            with engine:
                engine.start_experiment(exp_id)
                exp = engine.wait_until_done(exp_id, timeout=args.timeout)
            results = engine.results_bytes(exp_id)
            histograms = engine.histograms_bytes(exp_id)
        except (PmCmpError, TimeoutError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2

    if args.out:
        Path(args.out).write_bytes(results)
        Path(args.out + ".histograms.json").write_bytes(histograms)
        print(f"wrote {args.out} ({exp.total_pairs} pairs, "
              f"{exp.error_pairs} errors)", file=sys.stderr)
    else:
        sys.stdout.buffer.write(results)
        sys.stdout.buffer.write(histograms)
        sys.stdout.buffer.write(b"\n")
        sys.stdout.buffer.flush()
    return 1 if exp.error_pairs else 0


def cmd_serve(args) -> int:
    from .service import make_server

    try:
        config = _config_from_args(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    data_dir = args.data_dir or tempfile.mkdtemp(prefix="pmcmp-serve-")
    engine = Engine(data_dir, config)
    server = make_server(engine, args.host, args.port)
    host, port = server.server_address[:2]
    print(f"pm-cmp service listening on http://{host}:{port}", flush=True)
    print(f"data dir: {data_dir}", flush=True)
    engine.start()
    engine.queue.recover()
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
        engine.stop(drain=True)
    return 0


def cmd_bench(args) -> int:
    worker_counts = []
    for part in args.workers.split(","):
        part = part.strip()
        if part:
            worker_counts.append(int(part))
    if not worker_counts:
        print("error: --workers must name at least one worker count", file=sys.stderr)
        return 2

    if not args.skip_kernels:
        for line in bench_mod.compare_backends(args.residues):
            print(line, flush=True)

    print(f"pool throughput, {args.pairs} pairs of {args.residues}-residue models:",
          flush=True)
    runs = []
    for workers in worker_counts:
        run = bench_mod.run_pool_bench(
            args.pairs,
            workers,
            residues=args.residues,
            queue_rate=args.rate,
            bucket_size=args.bucket,
        )
        runs.append(run)
        bound = "ok" if run["bound_ok"] else "VIOLATED"
        print(
            f"  workers={workers}: {run['elapsed']:.2f}s "
            f"({run['pairs_per_second']:.1f} pairs/s, {run['errors']} errors, "
            f"token-bucket bound {bound})",
            flush=True,
        )
    if len(runs) > 1:
        speedup = runs[0]["elapsed"] / runs[-1]["elapsed"]
        print(
            f"speedup ({runs[0]['workers']} -> {runs[-1]['workers']} workers): "
            f"{speedup:.2f}x",
            flush=True,
        )
    if not all(r["bound_ok"] for r in runs):
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pmcmp",
        description="Compare sets of protein structural models with RMSD, "
        "GDT_TS, TM-score and Q-score.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    compare = sub.add_parser("compare", help="run a comparison locally")
    compare.add_argument("--mode", required=True,
                         help="1n (first against all) or nn (all against all)")
    compare.add_argument("--measures", required=True,
                         help="comma-separated subset of rmsd,gdt_ts,tm_score,q_score")
    compare.add_argument("--scale", required=True, help="match or total")
    compare.add_argument("--label", default="cli", help="experiment label")
    compare.add_argument("--out", help="write the results file here "
                         "(histograms land next to it); default: stdout")
    compare.add_argument("--data-dir", dest="data_dir",
                         help="persistent data directory (default: temporary)")
    compare.add_argument("--timeout", type=float, default=3600.0)
    _add_config_flags(compare)
    compare.add_argument("files", nargs="+", help="PDB files (>= 2)")
    compare.set_defaults(func=cmd_compare)

    serve = sub.add_parser("serve", help="run the HTTP service")
    serve.add_argument("--host", default="127.0.0.1",
                       help="bind address (default: loopback only)")
    serve.add_argument("--port", type=int, default=8080,
                       help="TCP port; 0 picks a free one")
    serve.add_argument("--data-dir", dest="data_dir")
    _add_config_flags(serve)
    serve.set_defaults(func=cmd_serve)

    bench = sub.add_parser("bench", help="benchmark kernels and the worker pool")
    bench.add_argument("--pairs", type=int, default=100)
    bench.add_argument("--residues", type=int, default=60)
    bench.add_argument("--workers", default="1,4",
                       help="comma-separated worker counts to compare")
    bench.add_argument("--rate", type=float, default=100.0)
    bench.add_argument("--bucket", type=int, default=1_000_000)
    bench.add_argument("--skip-kernels", action="store_true",
                       help="skip the numba/numpy kernel comparison")
    bench.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
