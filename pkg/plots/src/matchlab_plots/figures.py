"""Render experiment CSVs into figures.

Four kinds, one input file each:

  envy_time     envy-over-time curves, one line per algorithm; accepts the
                aggregated schema (algorithm,t,mean_max_menvy,p10,p90) or
                the raw trace schema (algorithm,run,t,max_menvy)
  pareto        cutoff sweep frontier (c,max_menvy,max_reldist) with the
                two-choice row (c = "alg1") highlighted
  gap_scaling   gap traces (process,run,t,gap), mean gap vs t on a log axis
  coverage_bars per-county coverage ratios
                (node_id,foodbank_id,per_capita,proportional_share,ratio)

Rendering never modifies inputs, and the plotted series are a pure
function of the file contents. Schema problems raise SchemaError.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

KINDS = ("envy_time", "pareto", "gap_scaling", "coverage_bars")

GREEN_LOW, GREEN_HIGH = 0.8, 1.25


class SchemaError(ValueError):
    """Input CSV is missing, empty, or has the wrong columns."""


@dataclass(frozen=True)
class FigureSpec:
    inputs: tuple[str, ...]
    kind: str
    output: str
    title: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"unknown figure kind {self.kind!r}; expected one of {KINDS}")
        if len(self.inputs) != 1:
            raise SchemaError(f"kind {self.kind!r} takes exactly one input CSV")


@dataclass(frozen=True)
class RenderInfo:
    output: str
    kind: str
    series: int
    points: int
    highlighted_points: int = 0


def read_table(path, required: set[str] | None = None) -> list[dict]:
    p = Path(path)
    if not p.exists():
        raise SchemaError(f"input not found: {path}")
    with open(p, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    if required and not required <= set(rows[0]):
        raise SchemaError(f"{path}: missing columns {sorted(required - set(rows[0]))}")
    return rows


def _f(cell: str) -> float:
    return float(cell)  # float() accepts the 'inf' sentinel directly


def envy_time_series(path) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    rows = read_table(path)
    cols = set(rows[0])
    series: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    if {"algorithm", "t", "mean_max_menvy"} <= cols:
        for algo in sorted({r["algorithm"] for r in rows}):
            mine = [r for r in rows if r["algorithm"] == algo]
            t = np.array([int(r["t"]) for r in mine])
            series[algo] = (t, np.array([_f(r["mean_max_menvy"]) for r in mine]))
    elif {"algorithm", "run", "t", "max_menvy"} <= cols:
        for algo in sorted({r["algorithm"] for r in rows}):
            mine = [r for r in rows if r["algorithm"] == algo]
            ts = sorted({int(r["t"]) for r in mine})
            by_t = {t: [] for t in ts}
            for r in mine:
                by_t[int(r["t"])].append(_f(r["max_menvy"]))
            series[algo] = (np.array(ts), np.array([np.mean(by_t[t]) for t in ts]))
    else:
        raise SchemaError(f"{path}: not an envy trace (columns {sorted(cols)})")
    return series


def pareto_series(path) -> tuple[list[tuple[str, float, float]], list[tuple[float, float]]]:
    rows = read_table(path, {"c", "max_menvy", "max_reldist"})
    frontier = []
    highlighted = []
    for r in rows:
        point = (_f(r["max_reldist"]), _f(r["max_menvy"]))
        if r["c"] == "alg1":
            highlighted.append(point)
        else:
            frontier.append((r["c"], *point))
    return frontier, highlighted


def gap_series(path) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    rows = read_table(path, {"process", "run", "t", "gap"})
    series = {}
    for proc in sorted({r["process"] for r in rows}):
        mine = [r for r in rows if r["process"] == proc]
        ts = sorted({int(r["t"]) for r in mine})
        by_t = {t: [] for t in ts}
        for r in mine:
            by_t[int(r["t"])].append(_f(r["gap"]))
        series[proc] = (np.array(ts), np.array([np.mean(by_t[t]) for t in ts]))
    return series


def coverage_series(path) -> tuple[list[int], np.ndarray]:
    rows = read_table(path, {"node_id", "foodbank_id", "ratio"})
    nodes = [int(r["node_id"]) for r in rows]
    ratios = np.array([_f(r["ratio"]) for r in rows])
    return nodes, ratios


def render(spec: FigureSpec) -> RenderInfo:
    """Write the figure; returns counts the smoke tests inspect."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    try:
        if spec.kind == "envy_time":
            series = envy_time_series(spec.inputs[0])
            points = 0
            for algo, (t, envy) in series.items():
                finite = np.isfinite(envy)
                ax.plot(t[finite], envy[finite], label=algo)
                points += int(finite.sum())
            ax.set_xlabel("donations matched")
            ax.set_ylabel("max multiplicative envy")
            ax.legend()
            info = RenderInfo(spec.output, spec.kind, len(series), points)
        elif spec.kind == "pareto":
            frontier, highlighted = pareto_series(spec.inputs[0])
            if frontier:
                xs = [x for _, x, _ in frontier]
                ys = [y for _, _, y in frontier]
                ax.plot(xs, ys, "o-", color="tab:blue", label="greedy with cutoff")
                for c, x, y in frontier:
                    ax.annotate(f"c={c}", (x, y), fontsize=7, xytext=(3, 3),
                                textcoords="offset points")
            for x, y in highlighted:
                ax.plot([x], [y], "*", color="tab:red", markersize=16, label="two-choice")
            ax.set_xlabel("max relative distance")
            ax.set_ylabel("max multiplicative envy")
            ax.legend()
            info = RenderInfo(spec.output, spec.kind, 1 + bool(highlighted),
                              len(frontier) + len(highlighted), len(highlighted))
        elif spec.kind == "gap_scaling":
            series = gap_series(spec.inputs[0])
            points = 0
            for proc, (t, gap) in series.items():
                ax.plot(t, gap, "o-", label=proc)
                points += len(t)
            ax.set_xscale("log")
            ax.set_xlabel("balls thrown")
            ax.set_ylabel("mean gap")
            ax.legend()
            info = RenderInfo(spec.output, spec.kind, len(series), points)
        else:  # coverage_bars
            nodes, ratios = coverage_series(spec.inputs[0])
            colors = [
                "tab:red" if r < GREEN_LOW else ("tab:green" if r <= GREEN_HIGH else "tab:brown")
                for r in ratios
            ]
            ax.bar(range(len(nodes)), np.clip(ratios, 0, 3), color=colors)
            ax.axhline(1.0, color="k", linewidth=0.8, linestyle="--")
            ax.set_xticks(range(len(nodes)))
            ax.set_xticklabels([str(n) for n in nodes], rotation=90, fontsize=6)
            ax.set_xlabel("county")
            ax.set_ylabel("coverage ratio (clipped at 3)")
            info = RenderInfo(spec.output, spec.kind, 1, len(nodes))
        if spec.title:
            ax.set_title(spec.title)
        fig.tight_layout()
        fig.savefig(spec.output)
    finally:
        plt.close(fig)
    return info
