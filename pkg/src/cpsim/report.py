"""Experiment artifacts: per-trial CSV, summary text, paired-metric charts,
and single-trial replay renders.

Every writer is deterministic byte-for-byte for a given summary: floats use
fixed %.6f formatting, matplotlib element ids are salted with a constant,
and SVG metadata that would embed a timestamp is suppressed.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "cpsim"

import matplotlib.pyplot as plt
import numpy as np

from .costmap import inflate
from .harness import ExperimentSummary, TrialResult

CSV_COLUMNS = [
    "trial_id", "seed", "start_x", "start_y", "goal_x", "goal_y",
    "oracle_dist_m", "dist_sp_m", "dist_cp_m", "time_sp_s", "time_cp_s",
    "replans_sp", "replans_cp", "reached_sp", "reached_cp",
]

_FLOAT_COLUMNS = {"oracle_dist_m", "dist_sp_m", "dist_cp_m",
                  "time_sp_s", "time_cp_s"}

_SP_COLOR = "#c23b22"
_CP_COLOR = "#1f6f8b"


def _fmt(col: str, value) -> str:
    if col in _FLOAT_COLUMNS:
        return f"{value:.6f}"
    return str(value)


def write_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow([_fmt(c, row[c]) for c in CSV_COLUMNS])


def read_csv(path):
    """Typed rows back from trials.csv (for independent re-aggregation)."""
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            typed = {}
            for col in CSV_COLUMNS:
                typed[col] = float(row[col]) if col in _FLOAT_COLUMNS \
                    else int(row[col])
            out.append(typed)
    return out


def summary_text(summary: ExperimentSummary) -> str:
    lines = [
        "paired SP vs CP experiment",
        f"trials: {len(summary.rows)}",
        "",
        f"{'metric':<12} {'mean SP':>12} {'mean CP':>12} {'mean SP-CP':>12}",
    ]
    for metric in ("distance_m", "time_s", "replans"):
        m = summary.means[metric]
        lines.append(f"{metric:<12} {m['sp']:>12.6f} {m['cp']:>12.6f} "
                     f"{m['delta']:>12.6f}")
    lines += [
        "",
        "spearman(oracle distance, distance saved by CP): "
        f"{summary.correlation:.6f}",
        f"collisions: {summary.collisions}",
        f"truncated missions: {summary.truncated}",
        "",
    ]
    return "\n".join(lines)


def write_summary(path, summary: ExperimentSummary) -> None:
    Path(path).write_text(summary_text(summary))


def _save(fig, path) -> None:
    fig.savefig(path, metadata={"Date": None})
    plt.close(fig)


def _paired_chart(rows, sp_key, cp_key, ylabel, title, path) -> None:
    order = sorted(range(len(rows)),
                   key=lambda i: (rows[i]["oracle_dist_m"],
                                  rows[i]["trial_id"]))
    xs = np.arange(1, len(rows) + 1)
    sp = [rows[i][sp_key] for i in order]
    cp = [rows[i][cp_key] for i in order]
    fig, ax = plt.subplots(figsize=(7.5, 4.0))
    ax.plot(xs, sp, marker="o", ms=3.5, lw=1.0, color=_SP_COLOR, label="SP")
    ax.plot(xs, cp, marker="s", ms=3.5, lw=1.0, color=_CP_COLOR, label="CP")
    ax.set_xlabel("trial (sorted by oracle start-goal distance)")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.legend(loc="upper left")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    _save(fig, path)


def write_charts(out_dir, summary: ExperimentSummary) -> list[Path]:
    out_dir = Path(out_dir)
    rows = summary.rows
    specs = [
        ("distance.svg", "dist_sp_m", "dist_cp_m", "distance traveled (m)",
         "Distance to goal per trial"),
        ("time.svg", "time_sp_s", "time_cp_s", "time to goal (s)",
         "Time to goal per trial"),
        ("replans.svg", "replans_sp", "replans_cp", "replanning events",
         "Replans per trial"),
    ]
    written = []
    for name, sp_key, cp_key, ylabel, title in specs:
        path = out_dir / name
        _paired_chart(rows, sp_key, cp_key, ylabel, title, path)
        written.append(path)
    return written


def write_artifacts(out_dir, summary: ExperimentSummary) -> list[Path]:
    """trials.csv + summary.txt + three charts, creating out_dir."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "trials.csv"
    write_csv(csv_path, summary.rows)
    txt_path = out_dir / "summary.txt"
    write_summary(txt_path, summary)
    return [csv_path, txt_path] + write_charts(out_dir, summary)


def render_replay(config, result: TrialResult, path) -> None:
    """One panel per mode: full-knowledge inflated costmap, the executed
    trajectory, and the final plan, as a vector image."""
    from .harness import _base_world  # local import to avoid a cycle at load
    from .world import ground_truth_costmap, spawn_obstacle

    world = _base_world(config)
    for fp in result.spec.obstacle_footprints:
        spawn_obstacle(world, list(fp), 0.0)
    full = inflate(ground_truth_costmap(world), config.inflation)

    modes = sorted(result.by_mode)
    fig, axes = plt.subplots(1, len(modes), figsize=(6.0 * len(modes), 5.0),
                             squeeze=False)
    extent = (0.0, world.width * world.resolution,
              world.height * world.resolution, 0.0)
    res = world.resolution
    for ax, mode in zip(axes[0], modes):
        mission_result = result.by_mode[mode]
        ax.imshow(full.costs, cmap="magma", origin="upper", extent=extent,
                  interpolation="nearest", vmin=0, vmax=254)
        for plan in mission_result.plans:
            px = [(c[0] + 0.5) * res for c in plan.waypoints]
            py = [(c[1] + 0.5) * res for c in plan.waypoints]
            ax.plot(px, py, lw=0.8, color="#9ad1aa", alpha=0.8)
        tx = [(c[0] + 0.5) * res for c in mission_result.trajectory]
        ty = [(c[1] + 0.5) * res for c in mission_result.trajectory]
        ax.plot(tx, ty, lw=1.8, color="#ffd166",
                label=f"executed ({mission_result.replans} replans)")
        start, goal = result.spec.mission.start, result.spec.mission.goal
        ax.plot((start[0] + 0.5) * res, (start[1] + 0.5) * res, "^",
                color="white", ms=8, label="start")
        ax.plot((goal[0] + 0.5) * res, (goal[1] + 0.5) * res, "o",
                color="white", ms=8, mfc="none", label="goal")
        ax.set_title(f"{mode}: {mission_result.distance:.2f} m, "
                     f"{mission_result.time:.2f} s")
        ax.set_xlabel("x (m)")
        ax.set_ylabel("y (m)")
        ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    _save(fig, path)
