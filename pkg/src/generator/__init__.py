"""HTML report generator."""
from .report import generate_report, build_report_context, format_seconds, verdict_label

__all__ = ["generate_report", "build_report_context", "format_seconds", "verdict_label"]
