"""
SQLite history of bench runs.

Append-only: every recorded invocation is one row, nothing is updated.
"""
import sqlite3
from contextlib import contextmanager
from datetime import datetime
from pathlib import Path
from typing import Generator, Optional

from .models import BenchRun

DB_PATH = Path(__file__).parent.parent.parent / "data" / "edat_bench.db"

SCHEMA = """
CREATE TABLE IF NOT EXISTS bench_runs (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    command TEXT NOT NULL,
    transport TEXT NOT NULL,
    ranks INTEGER NOT NULL,
    workers INTEGER NOT NULL,
    passed INTEGER NOT NULL,
    scale INTEGER,
    edge_factor INTEGER,
    seed INTEGER,
    generator TEXT,
    roots INTEGER DEFAULT 0,
    harmonic_teps REAL,
    median_teps REAL,
    mean_time REAL,
    detail TEXT,
    recorded_at TEXT DEFAULT (datetime('now'))
);

CREATE INDEX IF NOT EXISTS idx_runs_command ON bench_runs(command);
CREATE INDEX IF NOT EXISTS idx_runs_recorded ON bench_runs(recorded_at DESC);
"""


@contextmanager
def get_connection(db_path: Optional[Path] = None) -> Generator[sqlite3.Connection, None, None]:
    """Context manager for database connections."""
    path = Path(db_path or DB_PATH)
    path.parent.mkdir(parents=True, exist_ok=True)
    conn = sqlite3.connect(path)
    conn.row_factory = sqlite3.Row
    try:
        yield conn
        conn.commit()
    except Exception:
        conn.rollback()
        raise
    finally:
        conn.close()


def init_db(db_path: Optional[Path] = None) -> None:
    """Initialize database schema."""
    with get_connection(db_path) as conn:
        conn.executescript(SCHEMA)


def record_run(run: BenchRun, db_path: Optional[Path] = None) -> int:
    """Append a run. Returns its row id."""
    recorded = run.recorded_at or datetime.now()
    with get_connection(db_path) as conn:
        cursor = conn.execute("""
            INSERT INTO bench_runs (command, transport, ranks, workers, passed, scale,
                                    edge_factor, seed, generator, roots, harmonic_teps,
                                    median_teps, mean_time, detail, recorded_at)
            VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?)
        """, (run.command, run.transport, run.ranks, run.workers, int(run.passed), run.scale,
              run.edge_factor, run.seed, run.generator, run.roots, run.harmonic_teps,
              run.median_teps, run.mean_time, run.detail, recorded.isoformat(timespec="seconds")))
        return cursor.lastrowid


def get_runs(command: Optional[str] = None, limit: int = 100, db_path: Optional[Path] = None) -> list[dict]:
    """Most recent runs first, optionally for one command."""
    with get_connection(db_path) as conn:
        if command is None:
            rows = conn.execute("""
                SELECT * FROM bench_runs
                ORDER BY recorded_at DESC, id DESC
                LIMIT ?
            """, (limit,)).fetchall()
        else:
            rows = conn.execute("""
                SELECT * FROM bench_runs
                WHERE command = ?
                ORDER BY recorded_at DESC, id DESC
                LIMIT ?
            """, (command, limit)).fetchall()
        return [dict(row) for row in rows]


def get_teps_history(limit: int = 50, db_path: Optional[Path] = None) -> list[float]:
    """Harmonic-mean TEPS of recorded BFS runs, oldest first."""
    with get_connection(db_path) as conn:
        rows = conn.execute("""
            SELECT harmonic_teps FROM bench_runs
            WHERE command = 'bfs' AND harmonic_teps IS NOT NULL
            ORDER BY recorded_at DESC, id DESC
            LIMIT ?
        """, (limit,)).fetchall()
        return [row["harmonic_teps"] for row in reversed(rows)]
