"""Fairness and efficiency metrics, rolling-window aggregation, and
plot-ready CSV/SVG emission from training logs.
"""

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DomainError, SchemaError

LOG_COLUMNS = [
    "step",
    "episode",
    "agent",
    "return",
    "apples",
    "gini",
    "actor_loss",
    "critic_loss",
    "entropy",
    "floor_hits",
]
DEFAULT_WINDOW = 50

_SVG_WIDTH = 640
_SVG_HEIGHT = 360
_SVG_MARGIN = 40
_LINE_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2")


@dataclass(frozen=True)
class EpisodeMetrics:
    """Per-episode consumption breakdown with its inequality summary."""

    consumptions: tuple[float, ...]
    gini: float
    total: float
    episode: int
    step: int

    @classmethod
    def from_consumptions(
        cls, consumptions: Sequence[float], episode: int, step: int
    ) -> "EpisodeMetrics":
        values = tuple(float(c) for c in consumptions)
        return cls(
            consumptions=values,
            gini=gini(values),
            total=float(sum(values)),
            episode=episode,
            step=step,
        )


def gini(consumptions: Sequence[float]) -> float:
    """Normalized mean absolute pairwise difference:

        sum_i sum_j |c_i - c_j| / (2 N sum_i c_i)

    0 for an even distribution, (N-1)/N for a one-hot vector. A zero total
    would leave the ratio undefined; by convention it maps to 0.
    """
    values = np.asarray(consumptions, dtype=float)
    if values.ndim != 1 or values.size == 0:
        raise DomainError("gini needs a nonempty vector of consumptions")
    if np.any(values < 0.0):
        raise DomainError("consumptions must be nonnegative")
    total = values.sum()
    if total == 0.0:
        return 0.0
    pairwise = np.abs(values[:, None] - values[None, :]).sum()
    return float(pairwise / (2.0 * values.size * total))


def rolling_aggregate(
    series: Sequence[float], window: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Trailing mean/min/max over a window, with shorter prefix windows."""
    if window < 1:
        raise DomainError("window must be at least 1")
    values = np.asarray(series, dtype=float)
    if values.size == 0:
        raise DomainError("series is empty")
    means = np.empty_like(values)
    mins = np.empty_like(values)
    maxs = np.empty_like(values)
    for i in range(values.size):
        chunk = values[max(0, i - window + 1) : i + 1]
        means[i] = chunk.mean()
        mins[i] = chunk.min()
        maxs[i] = chunk.max()
    return means, mins, maxs


def _read_log(log_csv_path) -> list[dict]:
    with open(log_csv_path, newline="") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None:
            raise SchemaError("log CSV is empty (missing header)")
        missing = [c for c in LOG_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise SchemaError(f"log CSV missing columns: {', '.join(missing)}")
        return list(reader)


def _episode_series(rows: list[dict]) -> tuple[list[int], list[int], dict[int, dict[int, dict]]]:
    """Group rows by (episode, agent); return sorted episodes, agents, table."""
    table: dict[int, dict[int, dict]] = {}
    for row in rows:
        episode = int(row["episode"])
        agent = int(row["agent"])
        table.setdefault(episode, {})[agent] = row
    episodes = sorted(table)
    agents = sorted({a for per_ep in table.values() for a in per_ep})
    return episodes, agents, table


def _write_panel(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(x: float) -> str:
    return format(float(x), ".6g")


def _svg_polyline(points: list[tuple[float, float]], color: str, width: float = 1.5) -> str:
    coords = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in points)
    return f'<polyline fill="none" stroke="{color}" stroke-width="{width}" points="{coords}"/>'


def _svg_band(
    xs: list[float], lows: list[float], highs: list[float], color: str
) -> str:
    forward = [f"{_fmt(x)},{_fmt(y)}" for x, y in zip(xs, highs)]
    backward = [f"{_fmt(x)},{_fmt(y)}" for x, y in zip(reversed(xs), list(reversed(lows)))]
    return (
        f'<polygon fill="{color}" fill-opacity="0.2" stroke="none" '
        f'points="{" ".join(forward + backward)}"/>'
    )


def _render_panel_svg(
    path: Path,
    title: str,
    steps: list[float],
    series: list[tuple[str, np.ndarray, np.ndarray, np.ndarray]],
) -> None:
    """Minimal hand-rolled line chart: one mean polyline and min/max band per
    series, fixed canvas, deterministic float formatting."""
    body = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_SVG_WIDTH}" height="{_SVG_HEIGHT}" '
        f'viewBox="0 0 {_SVG_WIDTH} {_SVG_HEIGHT}">',
        f'<rect width="{_SVG_WIDTH}" height="{_SVG_HEIGHT}" fill="white"/>',
        f'<text x="{_SVG_WIDTH // 2}" y="20" text-anchor="middle" '
        f'font-family="sans-serif" font-size="14">{title}</text>',
    ]
    if steps:
        x_lo, x_hi = min(steps), max(steps)
        x_span = (x_hi - x_lo) or 1.0
        all_values = np.concatenate([np.concatenate([lo, hi]) for _, _, lo, hi in series])
        y_lo, y_hi = float(all_values.min()), float(all_values.max())
        y_span = (y_hi - y_lo) or 1.0

        def sx(x: float) -> float:
            return _SVG_MARGIN + (x - x_lo) / x_span * (_SVG_WIDTH - 2 * _SVG_MARGIN)

        def sy(y: float) -> float:
            return _SVG_HEIGHT - _SVG_MARGIN - (y - y_lo) / y_span * (_SVG_HEIGHT - 2 * _SVG_MARGIN)

        xs = [sx(x) for x in steps]
        for index, (label, mean, low, high) in enumerate(series):
            color = _LINE_COLORS[index % len(_LINE_COLORS)]
            body.append(_svg_band(xs, [sy(v) for v in low], [sy(v) for v in high], color))
            body.append(_svg_polyline(list(zip(xs, [sy(v) for v in mean])), color))
            body.append(
                f'<text x="{_SVG_WIDTH - _SVG_MARGIN}" y="{20 + 14 * index}" text-anchor="end" '
                f'font-family="sans-serif" font-size="11" fill="{color}">{label}</text>'
            )
        body.append(
            f'<line x1="{_SVG_MARGIN}" y1="{_SVG_HEIGHT - _SVG_MARGIN}" x2="{_SVG_WIDTH - _SVG_MARGIN}" '
            f'y2="{_SVG_HEIGHT - _SVG_MARGIN}" stroke="black" stroke-width="1"/>'
        )
    body.append("</svg>")
    path.write_text("\n".join(body) + "\n")


def emit_plot_data(log_csv_path, out_path, window: int = DEFAULT_WINDOW) -> list[Path]:
    """Aggregate a training log into one CSV + SVG per figure panel:
    total apples, per-agent apples, and the Gini coefficient versus steps,
    each smoothed by a trailing window with min/max bands.
    """
    rows = _read_log(log_csv_path)
    out = Path(out_path)
    out.mkdir(parents=True, exist_ok=True)
    episodes, agents, table = _episode_series(rows)

    steps = [int(next(iter(table[e].values()))["step"]) for e in episodes]
    totals = np.array(
        [sum(float(table[e][a]["apples"]) for a in table[e]) for e in episodes]
    )
    ginis = np.array([float(next(iter(table[e].values()))["gini"]) for e in episodes])

    written: list[Path] = []

    def emit(name: str, header: list[str], csv_rows: list[list],
             title: str, svg_series, svg_steps) -> None:
        csv_path = out / f"{name}.csv"
        _write_panel(csv_path, header, csv_rows)
        svg_path = out / f"{name}.svg"
        _render_panel_svg(svg_path, title, svg_steps, svg_series)
        written.extend([csv_path, svg_path])

    if episodes:
        mean, low, high = rolling_aggregate(totals, window)
        emit(
            "panel_total",
            ["step", "mean", "min", "max"],
            [[s, _fmt(m), _fmt(lo), _fmt(hi)] for s, m, lo, hi in zip(steps, mean, low, high)],
            "Total apples per episode",
            [("total", mean, low, high)],
            steps,
        )
        per_agent_rows = []
        per_agent_series = []
        for agent in agents:
            series = np.array(
                [float(table[e].get(agent, {"apples": "nan"})["apples"]) for e in episodes]
            )
            mean, low, high = rolling_aggregate(series, window)
            per_agent_rows.extend(
                [s, _fmt(m), _fmt(lo), _fmt(hi), agent]
                for s, m, lo, hi in zip(steps, mean, low, high)
            )
            per_agent_series.append((f"agent {agent}", mean, low, high))
        emit(
            "panel_per_agent",
            ["step", "mean", "min", "max", "agent"],
            per_agent_rows,
            "Apples per agent per episode",
            per_agent_series,
            steps,
        )
        mean, low, high = rolling_aggregate(ginis, window)
        emit(
            "panel_gini",
            ["step", "mean", "min", "max"],
            [[s, _fmt(m), _fmt(lo), _fmt(hi)] for s, m, lo, hi in zip(steps, mean, low, high)],
            "Gini coefficient per episode",
            [("gini", mean, low, high)],
            steps,
        )
    else:
        emit("panel_total", ["step", "mean", "min", "max"], [], "Total apples per episode", [], [])
        emit(
            "panel_per_agent",
            ["step", "mean", "min", "max", "agent"],
            [],
            "Apples per agent per episode",
            [],
            [],
        )
        emit("panel_gini", ["step", "mean", "min", "max"], [], "Gini coefficient per episode", [], [])
    return written
