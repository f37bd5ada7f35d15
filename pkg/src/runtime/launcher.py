"""
Launchers: run one main function per rank and finalise every rank.

Loopback runs put every rank in this process, one thread per rank. TCP runs
either join an existing roster as a single rank, or start one OS process per
rank on a generated localhost roster.
"""
import logging
import multiprocessing
import tempfile
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Any, Callable, Optional

from ..transport import LoopbackHub, localhost_roster, write_roster
from .config import RuntimeConfig
from .runtime import Runtime, bind_runtime

logger = logging.getLogger(__name__)

MainFunction = Callable[[Runtime], Any]


def run_loopback(
    config: RuntimeConfig,
    main: MainFunction,
    timeout: Optional[float] = None,
    hub: Optional[LoopbackHub] = None,
) -> list[Any]:
    """
    Run `main(runtime)` on every loopback rank, then finalise all of them.

    Args:
        config: Runtime config; config.ranks sets the world size
        main: Called once per rank from that rank's main context
        timeout: Per-rank finalise timeout in seconds
        hub: Pre-built hub (for tests that inspect or step it)

    Returns:
        main's return value for each rank, indexed by rank

    Raises:
        The first exception raised by any rank; the other ranks are aborted
    """
    hub = hub or LoopbackHub(config.ranks, config.deterministic_seed)
    runtimes = [Runtime(config, rank=rank, hub=hub) for rank in range(config.ranks)]

    def rank_main(runtime: Runtime) -> Any:
        runtime.init()
        bind_runtime(runtime)
        result = main(runtime)
        runtime.finalise(timeout)
        return result

    with ThreadPoolExecutor(max_workers=config.ranks, thread_name_prefix="edat-main") as executor:
        futures = [executor.submit(rank_main, runtime) for runtime in runtimes]
        results, failure = [], None
        for rank, future in enumerate(futures):
            try:
                results.append(future.result())
            except Exception as exc:
                if failure is None:
                    failure = exc
                    logger.error(f"[rank {rank}] failed: {exc}")
                    for runtime in runtimes:
                        runtime.abort()
                results.append(None)
    if failure is not None:
        raise failure
    return results


def run_rank(config: RuntimeConfig, main: MainFunction, timeout: Optional[float] = None) -> Any:
    """Run this process as one rank of a roster-based run."""
    runtime = Runtime(config).init()
    bind_runtime(runtime)
    try:
        result = main(runtime)
        runtime.finalise(timeout)
    except BaseException:
        runtime.abort()
        raise
    return result


def _process_rank(config: RuntimeConfig, main: MainFunction, timeout: Optional[float], level: int) -> Any:
    logging.basicConfig(
        level=level,
        format='%(asctime)s [%(levelname)s] %(message)s',
        datefmt='%H:%M:%S'
    )
    return run_rank(config, main, timeout)


def run_tcp_processes(
    config: RuntimeConfig,
    main: MainFunction,
    timeout: Optional[float] = None,
    roster_dir: Optional[Path] = None,
) -> list[Any]:
    """
    Start config.ranks OS processes on a fresh localhost roster.

    `main` and its return value cross process boundaries and must pickle.
    """
    roster = localhost_roster(config.ranks)
    with tempfile.TemporaryDirectory(dir=roster_dir) as tmp:
        path = write_roster(Path(tmp) / "roster.txt", roster)
        logger.info(f"Launching {config.ranks} tcp rank process(es), roster {path}")
        context = multiprocessing.get_context("spawn")
        level = logging.getLogger().getEffectiveLevel()
        with ProcessPoolExecutor(max_workers=config.ranks, mp_context=context) as executor:
            futures = [
                executor.submit(
                    _process_rank,
                    replace(config, transport="tcp", roster=path, rank=rank, deterministic_seed=None),
                    main,
                    timeout,
                    level,
                )
                for rank in range(config.ranks)
            ]
            return [future.result() for future in futures]
