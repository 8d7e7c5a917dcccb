"""Figure rendering for the report path.

Figures are derived views of data already written to CSV/JSON; nothing here
feeds back into any computation. Rendering uses the Agg backend so it works
headless, and every helper returns the list of files it wrote.
"""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .sampler import RunReport

_DPI = 130


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=_DPI, bbox_inches="tight")
    plt.close(fig)
    return path


def render_run_figures(report: RunReport, outdir) -> list:
    """Latent-norm trace plus, where the run produced them, ARI series,
    distance ratios, and token trajectory projections."""
    outdir = Path(outdir)
    written = []

    by_metric = defaultdict(list)
    for row in report.trace_rows:
        by_metric[row["metric"]].append((row["step"], row["value"]))
    if by_metric.get("latent_norm"):
        steps, values = zip(*sorted(by_metric["latent_norm"]))
        fig, ax = plt.subplots(figsize=(6, 3.2))
        ax.plot(steps, values, lw=1.4)
        full_steps = [s for s, v in sorted(by_metric.get("plan_full", [])) if v > 0.5]
        for s in full_steps:
            ax.axvline(s, color="0.85", lw=0.8, zorder=0)
        ax.set_xlabel("denoising step")
        ax.set_ylabel("latent Frobenius norm")
        ax.set_title(f"{report.run_id}: latent norm (shaded lines mark full steps)")
        written.append(_save(fig, outdir / f"{report.run_id}.latent_norm.png"))

    if report.ari_rows:
        xs = [row["step_b"] for row in report.ari_rows]
        ys = [row["ari"] for row in report.ari_rows]
        fig, ax = plt.subplots(figsize=(6, 3.2))
        ax.plot(xs, ys, marker="o", lw=1.2)
        ax.set_ylim(-0.05, 1.05)
        ax.set_xlabel("denoising step")
        ax.set_ylabel("ARI vs previous refresh")
        ax.set_title(f"{report.run_id}: cluster assignment stability")
        written.append(_save(fig, outdir / f"{report.run_id}.ari.png"))

    if report.distance_rows:
        xs = [row["step"] for row in report.distance_rows]
        fig, ax = plt.subplots(figsize=(6, 3.2))
        ax.plot(xs, [r["intra_mean"] for r in report.distance_rows], marker="o", label="intra-cluster")
        ax.plot(xs, [r["global_mean"] for r in report.distance_rows], marker="s", label="all pairs")
        ax.set_xlabel("denoising step")
        ax.set_ylabel("mean pairwise distance")
        ax.legend(frameon=False)
        ax.set_title(f"{report.run_id}: token distances at refresh steps")
        written.append(_save(fig, outdir / f"{report.run_id}.distances.png"))

    if report.pca_rows:
        tracks = defaultdict(list)
        for row in report.pca_rows:
            tracks[row["token"]].append((row["step"], row["x"], row["y"]))
        fig, ax = plt.subplots(figsize=(4.6, 4.2))
        for token, pts in sorted(tracks.items()):
            pts.sort()
            ax.plot([p[1] for p in pts], [p[2] for p in pts], lw=0.9, alpha=0.8)
            ax.scatter(pts[-1][1], pts[-1][2], s=12)
        ax.set_xlabel("pc 1")
        ax.set_ylabel("pc 2")
        ax.set_title(f"{report.run_id}: token feature trajectories")
        written.append(_save(fig, outdir / f"{report.run_id}.trajectories.png"))

    return written


def render_compare_figure(rows, outdir) -> list:
    """Per-policy speedup and error bars from compare rows."""
    if not rows:
        return []
    outdir = Path(outdir)
    labels = [row["policy"] for row in rows]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8.2, 3.4))
    ax1.bar(labels, [row["speedup"] for row in rows], color="#4878d0")
    ax1.set_ylabel("model-FLOPs speedup")
    ax2.bar(labels, [row["rel_error"] for row in rows], color="#d65f5f")
    ax2.set_ylabel("relative error vs oracle")
    for ax in (ax1, ax2):
        ax.tick_params(axis="x", rotation=25)
    fig.suptitle("policy comparison")
    return [_save(fig, outdir / "compare.png")]


def render_sweep_figure(axis: str, rows, outdir) -> list:
    """Error and speedup against the swept value."""
    if not rows:
        return []
    outdir = Path(outdir)
    xs = [row["value"] for row in rows]
    fig, ax = plt.subplots(figsize=(6, 3.4))
    ax.plot(xs, [row["rel_error"] for row in rows], marker="o", color="#d65f5f")
    ax.set_xlabel(axis)
    ax.set_ylabel("relative error vs oracle", color="#d65f5f")
    twin = ax.twinx()
    twin.plot(xs, [row["speedup"] for row in rows], marker="s", color="#4878d0", alpha=0.7)
    twin.set_ylabel("model-FLOPs speedup", color="#4878d0")
    if axis == "gamma" and len(set(xs)) > 2:
        ax.set_xscale("symlog", linthresh=max(min(x for x in xs if x > 0), 1e-6))
    ax.set_title(f"sweep over {axis}")
    return [_save(fig, outdir / f"sweep_{axis}.png")]
