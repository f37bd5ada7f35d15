"""
edat-lite command line.

Subcommands:
1. bfs           level-synchronous distributed BFS, validated against an oracle
2. barrier-demo  all-to-all barrier built from an ALL-source dependency
3. reduce-demo   sum of rank ids collected on rank 0
4. conformance   matcher, ordering and termination property suites
5. report        HTML report of recorded runs

Usage:
    python -m src.main bfs --scale 10 --edge-factor 16 --seed 1 --ranks 4
    python -m src.main reduce-demo --ranks 4
    python -m src.main conformance --quick
"""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional

import yaml

from .bench import (
    BARRIER_MESSAGE,
    GENERATORS,
    SUITES,
    DistributedGraph,
    barrier_demo,
    bfs_run,
    choose_roots,
    expected_reduction,
    format_rate,
    level_profile,
    reduce_demo,
    teps_statistics,
    validate_bfs,
)
from .core.errors import EdatError
from .generator import generate_report
from .runtime import RuntimeConfig
from .runtime.config import TRANSPORTS
from .storage import BenchRun, init_db, record_run
from .transport import load_roster

logger = logging.getLogger(__name__)

CONFIG_DIR = Path(__file__).parent.parent / "config"

QUICK_SUITES = {
    "matcher": {"cases": 500},
    "listing": {"seeds": 10},
    "ordering": {"seeds": 20, "tcp_runs": 0},
    "detector": {"seeds": 20},
    "persistence": {},
}


def load_bench_defaults() -> dict:
    """
    Load bench defaults from config/bench.yaml.

    Returns:
        Parsed YAML, empty sections when the file is missing
    """
    path = CONFIG_DIR / "bench.yaml"
    if not path.exists():
        return {}
    with open(path) as f:
        return yaml.safe_load(f) or {}


def runtime_config(args: argparse.Namespace) -> RuntimeConfig:
    """Runtime config from runtime.yaml, EDAT_* variables and CLI flags."""
    config = RuntimeConfig.load(
        transport=args.transport,
        ranks=args.ranks,
        workers=args.workers,
        progress_mode=args.progress_mode,
        roster=args.roster,
        rank=args.rank,
        deterministic_seed=args.det_seed,
    )
    if config.roster is not None:
        config = config.with_overrides(ranks=load_roster(config.roster, config.rank or 0).world_size)
    return config


def record(args: argparse.Namespace, run: BenchRun) -> None:
    if not args.record:
        return
    init_db()
    row = record_run(run)
    logger.info(f"Recorded run #{row}")


def emit_json(args: argparse.Namespace, payload: dict) -> None:
    if args.json:
        print(json.dumps(payload, indent=2, sort_keys=True, default=str))


def cmd_bfs(args: argparse.Namespace, defaults: dict) -> int:
    config = runtime_config(args)
    graph = DistributedGraph.generate(
        args.scale, args.edge_factor, args.seed, world_size=config.ranks, generator=args.generator
    )
    roots = choose_roots(graph, args.roots, args.seed)

    searches, all_valid = [], True
    for root in roots:
        result = bfs_run(graph, root, config, timeout=args.timeout)
        if result is None:
            logger.info(f"[rank {config.rank}] search from {root} done")
            continue
        report = validate_bfs(graph, result.parent, root, result.level, result.traversed_edges)
        if not report:
            all_valid = False
            for error in report.errors:
                logger.warning(f"root {root}: {error}")
        logger.info(
            f"root {root}: {'VALID' if report else 'INVALID'}, "
            f"TEPS {format_rate(result.teps)}, {level_profile(result.level_counts)}"
        )
        searches.append({
            "root": root,
            "valid": bool(report),
            "traversed_edges": result.traversed_edges,
            "elapsed": result.elapsed,
            "teps": result.teps,
            "visited": result.visited,
            "reachable": report.reachable,
            "level_counts": result.level_counts,
        })

    if not searches:
        return 0

    stats = teps_statistics(
        [s["traversed_edges"] for s in searches], [s["elapsed"] for s in searches]
    )
    teps = stats.get("harmonic_mean", 0.0)
    print(f"TEPS={teps:.6e}")
    print("VALID" if all_valid else "INVALID")
    print(level_profile(searches[0]["level_counts"]))

    emit_json(args, {
        "command": "bfs",
        "scale": args.scale,
        "edge_factor": args.edge_factor,
        "seed": args.seed,
        "generator": args.generator,
        "ranks": config.ranks,
        "workers": config.workers,
        "transport": config.transport,
        "num_vertices": graph.num_vertices,
        "num_edges": graph.num_edges,
        "valid": all_valid,
        "statistics": stats,
        "searches": searches,
    })
    record(args, BenchRun(
        command="bfs",
        transport=config.transport,
        ranks=config.ranks,
        workers=config.workers,
        passed=all_valid,
        scale=args.scale,
        edge_factor=args.edge_factor,
        seed=args.seed,
        generator=args.generator,
        roots=len(searches),
        harmonic_teps=stats.get("harmonic_mean"),
        median_teps=stats.get("median"),
        mean_time=stats.get("mean_time"),
        detail=json.dumps(stats),
    ))
    return 0 if all_valid else 1


def cmd_barrier(args: argparse.Namespace, defaults: dict) -> int:
    config = runtime_config(args)
    report = barrier_demo(config, timeout=args.timeout)
    if report.ok:
        print(BARRIER_MESSAGE)
    else:
        print("barrier check FAILED")
        for r in report.records:
            logger.warning(
                f"rank {r.rank}: ran {r.runs} time(s), saw {r.events_seen} event(s), "
                f"{r.early_starts} early start(s)"
            )
    emit_json(args, {"command": "barrier-demo", "ok": report.ok, "records": [vars(r) for r in report.records]})
    record(args, BenchRun("barrier-demo", config.transport, config.ranks, config.workers, report.ok))
    return 0 if report.ok else 1


def cmd_reduce(args: argparse.Namespace, defaults: dict) -> int:
    config = runtime_config(args)
    total = reduce_demo(config, timeout=args.timeout)
    if total is None:
        return 0
    expected = expected_reduction(config.ranks)
    ok = total == expected
    print(total)
    if not ok:
        logger.warning(f"reduction gave {total}, expected {expected}")
    emit_json(args, {"command": "reduce-demo", "total": total, "expected": expected, "ok": ok})
    record(args, BenchRun("reduce-demo", config.transport, config.ranks, config.workers, ok))
    return 0 if ok else 1


def suite_sizes(quick: bool, seed: int) -> dict:
    """
    Keyword arguments for each conformance suite.

    Full runs use each suite's own default size; quick runs shrink them and
    skip the TCP processes.
    """
    sizes = {name: dict(QUICK_SUITES[name]) if quick else {} for name in SUITES}
    sizes["matcher"]["seed"] = seed
    return sizes


def cmd_conformance(args: argparse.Namespace, defaults: dict) -> int:
    sizes = suite_sizes(args.quick, args.seed)
    selected = args.suite or list(SUITES)

    results = []
    for name in selected:
        logger.info(f"Running {name} suite...")
        result = SUITES[name](**sizes[name])
        results.append(result)
        status = "PASS" if result.passed else "FAIL"
        print(f"{name:<12} {status} {result.cases} case(s), {result.violations} violation(s), {result.elapsed:.2f}s")
        for failure in result.failures:
            logger.warning(f"  {failure}")

    ok = all(result.passed for result in results)
    emit_json(args, {"command": "conformance", "ok": ok, "suites": [vars(r) for r in results]})
    record(args, BenchRun("conformance", "loopback", 0, 0, ok, seed=args.seed, detail=",".join(selected)))
    return 0 if ok else 1


def cmd_report(args: argparse.Namespace, defaults: dict) -> int:
    init_db()
    output = generate_report(limit=args.limit)
    print(output)
    return 0


def add_runtime_flags(parser: argparse.ArgumentParser, ranks: Optional[int]) -> None:
    parser.add_argument("--ranks", type=int, default=ranks, help="Number of ranks (default: %(default)s)")
    parser.add_argument("--workers", type=int, default=None, help="Workers per rank")
    parser.add_argument("--transport", choices=TRANSPORTS, default=None, help="Transport kind")
    parser.add_argument("--roster", type=Path, default=None, help="Roster file; run this process as one rank")
    parser.add_argument("--rank", type=int, default=None, help="This process's rank in the roster")
    parser.add_argument("--det-seed", type=int, default=None, help="Deterministic loopback delivery seed")
    parser.add_argument("--progress-mode", choices=("dedicated", "idle_worker"), default=None)
    parser.add_argument("--timeout", type=float, default=120.0, help="Finalise timeout in seconds")
    parser.add_argument("--json", action="store_true", help="Dump metrics as JSON")
    parser.add_argument("--record", action="store_true", help="Append the result to the run history")


def build_parser(defaults: dict) -> argparse.ArgumentParser:
    bfs_defaults = defaults.get("bfs", {})
    demo_defaults = defaults.get("demos", {})

    parser = argparse.ArgumentParser(
        prog="edat-bench",
        description="Event-driven task runtime benchmarks",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python -m src.main bfs --scale 10 --edge-factor 16 --seed 1 --ranks 4
  python -m src.main bfs --scale 12 --ranks 4 --transport tcp --roots 8
  python -m src.main barrier-demo --ranks 3 --det-seed 5
  python -m src.main reduce-demo --ranks 4
  python -m src.main conformance --suite matcher --suite detector
  python -m src.main report
        """
    )
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="Warnings and errors only")
    sub = parser.add_subparsers(dest="command", required=True)

    bfs = sub.add_parser("bfs", help="Distributed BFS with validation and TEPS")
    bfs.add_argument("--scale", type=int, default=bfs_defaults.get("scale", 10))
    bfs.add_argument("--edge-factor", type=int, default=bfs_defaults.get("edge_factor", 16))
    bfs.add_argument("--seed", type=int, default=bfs_defaults.get("seed", 1))
    bfs.add_argument("--roots", type=int, default=bfs_defaults.get("roots", 1), help="Searches from distinct roots")
    bfs.add_argument("--generator", choices=GENERATORS, default=bfs_defaults.get("generator", "uniform"))
    add_runtime_flags(bfs, bfs_defaults.get("ranks", 4))
    if bfs_defaults.get("workers") is not None:
        bfs.set_defaults(workers=bfs_defaults["workers"])
    if bfs_defaults.get("timeout") is not None:
        bfs.set_defaults(timeout=float(bfs_defaults["timeout"]))
    bfs.set_defaults(handler=cmd_bfs)

    barrier = sub.add_parser("barrier-demo", help="All-to-all barrier")
    add_runtime_flags(barrier, demo_defaults.get("ranks", 4))
    barrier.set_defaults(handler=cmd_barrier)

    reduce = sub.add_parser("reduce-demo", help="Sum of rank ids on rank 0")
    add_runtime_flags(reduce, demo_defaults.get("ranks", 4))
    reduce.set_defaults(handler=cmd_reduce)

    conformance = sub.add_parser("conformance", help="Matcher and termination property suites")
    conformance.add_argument("--suite", action="append", choices=list(SUITES), help="Run only this suite (repeatable)")
    conformance.add_argument("--seed", type=int, default=0, help="Matcher scenario seed")
    conformance.add_argument("--quick", action="store_true", help="Small case counts")
    conformance.add_argument("--json", action="store_true", help="Dump results as JSON")
    conformance.add_argument("--record", action="store_true", help="Append the result to the run history")
    conformance.set_defaults(handler=cmd_conformance)

    report = sub.add_parser("report", help="Render docs/report.html from recorded runs")
    report.add_argument("--limit", type=int, default=100)
    report.set_defaults(handler=cmd_report)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    """Main entry point. Returns the process exit code."""
    defaults = load_bench_defaults()
    parser = build_parser(defaults)
    args = parser.parse_args(argv)

    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(
        level=level,
        format='%(asctime)s [%(levelname)s] %(message)s',
        datefmt='%H:%M:%S'
    )

    try:
        return args.handler(args, defaults)
    except (EdatError, ValueError) as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
