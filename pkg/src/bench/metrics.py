"""
Benchmark metrics.

Supports:
- TEPS statistics over several searches (Graph500 style, harmonic mean)
- Per-level profile lines and log-scaled TEPS trends in bar characters
"""
from typing import Optional

import numpy as np


def teps_statistics(traversed_edges: list[int], elapsed: list[float]) -> dict[str, Optional[float]]:
    """
    Summarise TEPS over several searches.

    TEPS is a rate, so its mean is the harmonic mean; the standard deviation
    of the harmonic mean follows the Graph500 reference output.

    Args:
        traversed_edges: Edges traversed per search
        elapsed: Seconds per search, same order

    Returns:
        Dict with min/firstquartile/median/thirdquartile/max,
        harmonic_mean and harmonic_stddev of TEPS, plus mean_time
    """
    if len(traversed_edges) != len(elapsed):
        raise ValueError("traversed_edges and elapsed must have the same length")
    if not elapsed:
        return {}

    edges = np.asarray(traversed_edges, dtype=float)
    times = np.asarray(elapsed, dtype=float)
    valid = times > 0
    teps = edges[valid] / times[valid]
    if len(teps) == 0:
        return {"mean_time": float(times.mean())}

    stats = {
        "min": float(np.percentile(teps, 0)),
        "firstquartile": float(np.percentile(teps, 25)),
        "median": float(np.percentile(teps, 50)),
        "thirdquartile": float(np.percentile(teps, 75)),
        "max": float(np.percentile(teps, 100)),
        "mean_time": float(times.mean()),
    }
    if np.all(teps > 0):
        inverse = 1.0 / teps
        harmonic = len(teps) / inverse.sum()
        stats["harmonic_mean"] = float(harmonic)
        if len(teps) > 1:
            stddev = np.sqrt(((inverse - inverse.mean()) ** 2).sum() / (len(teps) - 1))
            stats["harmonic_stddev"] = float(stddev * harmonic ** 2 / np.sqrt(len(teps)))
        else:
            stats["harmonic_stddev"] = 0.0
    else:
        stats["harmonic_mean"] = 0.0
        stats["harmonic_stddev"] = 0.0
    return stats


BARS = "▁▂▃▄▅▆▇█"


def _bars(heights: np.ndarray) -> str:
    """One bar per height in [0, 1]; anything above zero shows at least one step."""
    steps = np.clip(np.ceil(heights * len(BARS)).astype(int) - 1, 0, len(BARS) - 1)
    return "".join(BARS[step] for step in steps)


def teps_trend(history: list[Optional[float]], width: int = 40) -> str:
    """
    Log-scaled trend of recorded TEPS, newest run last.

    Rates from different scales and rank counts span several decades, so
    bar heights follow log10 of the rate. Only the newest `width` positive
    rates are drawn, labelled with the lowest and highest of them.

    Returns:
        e.g. "1.000000e+03 ▁▄█ 1.000000e+09", or "" without any rate
    """
    rates = np.asarray([rate for rate in history if rate and rate > 0], dtype=float)[-width:]
    if len(rates) == 0:
        return ""
    logs = np.log10(rates)
    span = logs.max() - logs.min()
    heights = (logs - logs.min()) / span if span > 0 else np.full(len(rates), 0.5)
    return f"{format_rate(rates.min())} {_bars(heights)} {format_rate(rates.max())}"


def level_profile(level_counts: list[int], width: int = 24) -> str:
    """
    One-line summary of new visits per level.

    The trailing zero count that ends a search is not shown. Searches deeper
    than `width` levels have adjacent levels summed into one bar.
    """
    counts = list(level_counts)
    if counts and counts[-1] == 0:
        counts = counts[:-1]
    if not counts:
        return "levels=0"
    visits = np.asarray(counts, dtype=float)
    if len(visits) > width:
        visits = np.array([chunk.sum() for chunk in np.array_split(visits, width)])
    peak = visits.max() or 1.0
    return f"levels={len(counts)} peak={max(counts)} {_bars(visits / peak)}"


def format_rate(value: Optional[float]) -> str:
    """Engineering-style rate, e.g. 1.23e+06."""
    if value is None:
        return "-"
    return f"{value:.6e}"
