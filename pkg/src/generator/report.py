"""
Static HTML report of recorded bench runs.

Renders templates/report.html with Jinja2 into docs/report.html.
"""
import logging
from datetime import datetime
from pathlib import Path
from typing import Any, Optional

from jinja2 import Environment, FileSystemLoader

from ..bench.metrics import format_rate, teps_trend
from ..storage.database import get_runs, get_teps_history

logger = logging.getLogger(__name__)

TEMPLATE_DIR = Path(__file__).parent.parent.parent / "templates"
OUTPUT_DIR = Path(__file__).parent.parent.parent / "docs"

COMMANDS = ("bfs", "barrier-demo", "reduce-demo", "conformance")


def verdict_label(passed: Any) -> str:
    """PASS / FAIL for a stored 0/1 flag."""
    return "PASS" if passed else "FAIL"


def format_seconds(value: Optional[float]) -> str:
    if value is None:
        return "-"
    if value < 1e-3:
        return f"{value * 1e6:.0f}us"
    if value < 1:
        return f"{value * 1e3:.1f}ms"
    return f"{value:.2f}s"


def build_report_context(limit: int = 100, db_path: Optional[Path] = None) -> dict[str, Any]:
    """
    Collect recorded runs grouped by command.

    Returns:
        Dictionary with everything the report template renders
    """
    runs = get_runs(limit=limit, db_path=db_path)
    sections = []
    for command in COMMANDS:
        rows = [run for run in runs if run["command"] == command]
        if rows:
            passed = sum(1 for run in rows if run["passed"])
            sections.append({"command": command, "runs": rows, "passed": passed})

    history = get_teps_history(db_path=db_path)
    best = max(history) if history else None
    return {
        "generated_at": datetime.now().strftime("%Y-%m-%d %H:%M"),
        "total_runs": len(runs),
        "sections": sections,
        "teps_trend": teps_trend(history, width=40),
        "best_teps": best,
    }


def generate_report(limit: int = 100, db_path: Optional[Path] = None, output_dir: Optional[Path] = None) -> Path:
    """
    Render the run-history report.

    Returns:
        Path of the written HTML file
    """
    env = Environment(
        loader=FileSystemLoader(TEMPLATE_DIR),
        autoescape=True
    )
    env.filters["rate"] = format_rate
    env.filters["seconds"] = format_seconds
    env.filters["verdict"] = verdict_label

    template = env.get_template("report.html")
    context = build_report_context(limit, db_path)
    html = template.render(**context)

    output_dir = Path(output_dir or OUTPUT_DIR)
    output_dir.mkdir(parents=True, exist_ok=True)
    output_path = output_dir / "report.html"
    output_path.write_text(html, encoding="utf-8")
    logger.info(f"Report of {context['total_runs']} run(s) written to {output_path}")
    return output_path
