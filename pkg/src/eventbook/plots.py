"""Figure rendering for the report-producing commands.

Every function writes one PNG next to the command's delimited/JSON
output and returns the path.  Rendering is headless (Agg) and optional:
commands only call in here when a figures directory was requested.
"""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .core import BookState
from .ingest import IngestReport


def _finish(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def spread_histogram(report: IngestReport, out_dir: str | Path) -> Path:
    """Bar chart of post-event spreads (ticks) from an ingest report."""
    items = sorted(report.spread_histogram.items())
    ticks = [k for k, _ in items]
    counts = [v for _, v in items]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(ticks, counts, color="steelblue", edgecolor="black", linewidth=0.4)
    ax.set_xlabel("spread (ticks)")
    ax.set_ylabel("events")
    ax.set_title(
        f"spread histogram ({report.total_events} events, "
        f"{report.a2_violation_rate:.2%} one-tick violations)"
    )
    ax.set_xticks(ticks)
    return _finish(fig, Path(out_dir) / "spread_histogram.png")


def trajectory(states: Sequence[BookState], out_dir: str | Path) -> Path:
    """Best bid/ask and mid price over event time for a simulated run."""
    delta = float(states[0].tick.delta)
    idx = np.arange(len(states))
    s_b = np.array([s.s_b for s in states]) * delta
    s_a = np.array([s.s_a for s in states]) * delta
    fig, axes = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    axes[0].step(idx, s_a, where="post", label="best ask", color="firebrick", lw=0.8)
    axes[0].step(idx, s_b, where="post", label="best bid", color="seagreen", lw=0.8)
    axes[0].step(idx, (s_a + s_b) / 2, where="post", label="mid", color="black", lw=0.6, ls="--")
    axes[0].set_ylabel("price")
    axes[0].legend(loc="best", fontsize=8)
    q_b = [s.q_b for s in states]
    q_a = [s.q_a for s in states]
    axes[1].step(idx, q_a, where="post", label="ask queue", color="firebrick", lw=0.7)
    axes[1].step(idx, q_b, where="post", label="bid queue", color="seagreen", lw=0.7)
    axes[1].set_ylabel("best queue size")
    axes[1].set_xlabel("event index")
    axes[1].legend(loc="best", fontsize=8)
    return _finish(fig, Path(out_dir) / "trajectory.png")


def passage_curve(
    qa_values: Sequence[int],
    p_up: np.ndarray,
    p_down: np.ndarray,
    q_star: int | None,
    out_dir: str | Path,
) -> Path:
    """p_up / p_down against the ask queue size, with the crossing marked."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(qa_values, p_up, "o-", ms=3, label="p_up", color="firebrick")
    ax.plot(qa_values, p_down, "s-", ms=3, label="p_down", color="seagreen")
    if q_star is not None:
        ax.axvline(q_star, color="black", ls="--", lw=0.8, label=f"q* = {q_star}")
    ax.set_xlabel("ask queue size")
    ax.set_ylabel("probability of next move")
    ax.legend(loc="best", fontsize=8)
    return _finish(fig, Path(out_dir) / "passage_curve.png")


def evaluation(metrics: dict, out_dir: str | Path) -> Path:
    """Hit rates and MSE lift bars from an evaluation metrics document."""
    d = metrics["direction"]
    f = metrics["flow"]
    fig, axes = plt.subplots(1, 2, figsize=(9, 4))
    labels = ["model", "larger queue", "coin flip", "shuffled"]
    rates = [
        d["hit_rate"],
        d["naive_larger_queue_hit_rate"],
        d["coin_flip_hit_rate"],
        d["shuffled_hit_rate"],
    ]
    axes[0].bar(labels, rates, color=["firebrick", "steelblue", "gray", "lightgray"])
    axes[0].axhline(0.5, color="black", lw=0.8, ls=":")
    axes[0].set_ylim(0, 1)
    axes[0].set_ylabel("direction hit rate")
    axes[0].tick_params(axis="x", labelsize=8)
    axes[1].bar(
        ["model", "train mean"],
        [f["mse_model"], f["mse_baseline"]],
        color=["firebrick", "gray"],
    )
    axes[1].set_ylabel("one-step flow MSE")
    axes[1].set_title(f"MSE lift: {f['mse_lift']:.3f}", fontsize=10)
    return _finish(fig, Path(out_dir) / "evaluation.png")
