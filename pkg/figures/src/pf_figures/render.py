"""The six figure renderers over the pfsolve export contract.

Figures: trajectory (residual-space training path, stage-colored),
energy-decay (log-scale energy with stage boundary markers), contour-3d
(energy-valley surface and contours under the logged trajectory),
voltage-compare, angle-compare, and scatter (NN vs Newton with the ideal
line). Rendering is read-only over its inputs; sizes are fixed so identical
inputs produce identically-sized images.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .io import (
    Comparison,
    Meta,
    Trajectory,
    read_comparison,
    read_meta,
    read_trajectory,
)

FIGURES = (
    "trajectory",
    "energy-decay",
    "contour-3d",
    "voltage-compare",
    "angle-compare",
    "scatter",
)

STAGE_COLORS = {
    "sobol": "tab:blue",
    "lhs": "tab:orange",
    "adaptive": "tab:green",
    "random": "tab:red",
}

_FIGSIZE = (9.0, 6.0)
_DPI = 110


@dataclass
class FigureJob:
    input_dir: Path
    out_dir: Path
    figure: str
    fmt: str = "png"


class RenderWarning(UserWarning):
    pass


def _caption(fig, meta: Meta) -> None:
    fig.text(0.99, 0.01, meta.caption, ha="right", va="bottom", fontsize=7, alpha=0.7)


def _finish(fig, job: FigureJob, name: str) -> Path:
    job.out_dir.mkdir(parents=True, exist_ok=True)
    path = job.out_dir / f"{name}.{job.fmt}"
    fig.savefig(path, dpi=_DPI, format=job.fmt)
    plt.close(fig)
    return path


def _placeholder(job: FigureJob, meta: Meta, reason: str) -> Path:
    warnings.warn(f"{job.figure}: {reason}; writing placeholder", RenderWarning)
    fig = plt.figure(figsize=_FIGSIZE)
    fig.text(0.5, 0.5, f"no data\n({reason})", ha="center", va="center", fontsize=14)
    _caption(fig, meta)
    return _finish(fig, job, job.figure)


def _stage_color(stage: str, fallback_index: int) -> str:
    return STAGE_COLORS.get(stage, f"C{fallback_index % 10}")


def render_trajectory(job: FigureJob, tr: Trajectory, meta: Meta) -> Path:
    if len(tr) == 0:
        return _placeholder(job, meta, "trajectory.csv has no rows")
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    for i, stage in enumerate(tr.stage_names()):
        mask = np.array([s == stage for s in tr.stage])
        ax.plot(
            tr.mean_dP[mask], tr.mean_dQ[mask], ".", ms=4, alpha=0.7,
            color=_stage_color(stage, i), label=stage,
        )
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("mean |dP| (p.u.)")
    ax.set_ylabel("mean |dQ| (p.u.)")
    ax.set_title("Training trajectory in residual space")
    ax.legend(title="stage")
    _caption(fig, meta)
    return _finish(fig, job, job.figure)


def render_energy_decay(job: FigureJob, tr: Trajectory, meta: Meta) -> Path:
    if len(tr) == 0:
        return _placeholder(job, meta, "trajectory.csv has no rows")
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    ax.semilogy(tr.epoch, tr.energy, lw=1.2, color="tab:purple", label="probe energy")
    ax.semilogy(tr.epoch, tr.loss, lw=0.8, alpha=0.6, color="tab:gray", label="batch loss")
    total = tr.epoch.max() + 1
    for frac in (0.3, 0.7):
        ax.axvline(frac * total, color="k", ls="--", lw=0.8, alpha=0.6)
        ax.annotate(
            f"{int(frac * 100)}%", (frac * total, ax.get_ylim()[1]),
            textcoords="offset points", xytext=(3, -12), fontsize=8,
        )
    ax.set_xlabel("epoch")
    ax.set_ylabel("energy / loss")
    ax.set_title("Energy decay")
    ax.legend()
    _caption(fig, meta)
    return _finish(fig, job, job.figure)


def render_contour_3d(job: FigureJob, tr: Trajectory, meta: Meta) -> Path:
    if len(tr) == 0:
        return _placeholder(job, meta, "trajectory.csv has no rows")
    fig = plt.figure(figsize=_FIGSIZE)
    ax3 = fig.add_subplot(1, 2, 1, projection="3d")
    axc = fig.add_subplot(1, 2, 2)

    # The energy valley over residual coordinates; the logged per-epoch mean
    # residual pair traces the descent path on it.
    span = max(tr.mean_dP.max(), tr.mean_dQ.max(), 1e-9) * 1.1
    grid = np.linspace(0.0, span, 60)
    gp, gq = np.meshgrid(grid, grid)
    bowl = 0.5 * (gp**2 + gq**2)
    ax3.plot_surface(gp, gq, bowl, cmap="viridis", alpha=0.45, linewidth=0)
    for i, stage in enumerate(tr.stage_names()):
        mask = np.array([s == stage for s in tr.stage])
        ax3.plot(
            tr.mean_dP[mask], tr.mean_dQ[mask], tr.energy[mask], ".",
            ms=3, color=_stage_color(stage, i), label=stage,
        )
    ax3.set_xlabel("mean |dP|")
    ax3.set_ylabel("mean |dQ|")
    ax3.set_zlabel("energy")
    ax3.set_title("Energy valley: 3D view")
    ax3.legend(loc="upper left", fontsize=7)

    cs = axc.contour(gp, gq, bowl, levels=12, cmap="viridis", linewidths=0.7)
    axc.clabel(cs, inline=True, fontsize=6)
    axc.plot(tr.mean_dP, tr.mean_dQ, "-", color="tab:red", lw=0.9, alpha=0.8)
    axc.plot(tr.mean_dP[-1:], tr.mean_dQ[-1:], "o", color="tab:red", ms=5)
    axc.set_xlabel("mean |dP|")
    axc.set_ylabel("mean |dQ|")
    axc.set_title("Contours with descent path")
    _caption(fig, meta)
    return _finish(fig, job, job.figure)


def render_voltage_compare(job: FigureJob, cmp: Comparison, meta: Meta) -> Path:
    if len(cmp) == 0:
        return _placeholder(job, meta, "comparison.csv has no rows")
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=_FIGSIZE, sharex=True)
    x = np.arange(len(cmp))
    width = 0.4
    ax1.bar(x - width / 2, cmp.v_newton, width, label="Newton", color="tab:blue")
    ax1.bar(x + width / 2, cmp.v_nn, width, label="NN", color="tab:orange")
    ax1.set_ylabel("V (p.u.)")
    ax1.set_ylim(min(cmp.v_newton.min(), cmp.v_nn.min()) - 0.05, None)
    ax1.legend()
    ax1.set_title("Voltage comparison")

    diff = np.abs(cmp.v_nn - cmp.v_newton)
    ax2.semilogy(x, np.maximum(diff, 1e-16), ".-", color="tab:red", lw=0.8)
    ax2.set_ylabel("|dV| (p.u.)")
    ax2.set_xlabel("bus")
    ax2.annotate(
        f"max {diff.max():.3e}, mean {diff.mean():.3e}",
        xy=(0.02, 0.9), xycoords="axes fraction", fontsize=8,
    )
    ax2.set_xticks(x[:: max(1, len(x) // 20)])
    ax2.set_xticklabels(cmp.bus[:: max(1, len(x) // 20)])
    _caption(fig, meta)
    return _finish(fig, job, job.figure)


def render_angle_compare(job: FigureJob, cmp: Comparison, meta: Meta) -> Path:
    if len(cmp) == 0:
        return _placeholder(job, meta, "comparison.csv has no rows")
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=_FIGSIZE, sharex=True)
    x = np.arange(len(cmp))
    ax1.plot(x, cmp.theta_newton_deg, "-", label="Newton", color="tab:blue", lw=1.0)
    ax1.plot(x, cmp.theta_nn_deg, "--", label="NN", color="tab:orange", lw=1.0)
    ax1.set_ylabel("theta (deg)")
    ax1.legend()
    ax1.set_title("Phase angle comparison")

    diff = np.abs(cmp.theta_nn_deg - cmp.theta_newton_deg)
    ax2.bar(x, diff, color="tab:red", width=0.8)
    ax2.set_ylabel("|dtheta| (deg)")
    ax2.set_xlabel("bus")
    ax2.annotate(
        f"max {diff.max():.3g} deg, mean {diff.mean():.3g} deg",
        xy=(0.02, 0.9), xycoords="axes fraction", fontsize=8,
    )
    ax2.set_xticks(x[:: max(1, len(x) // 20)])
    ax2.set_xticklabels(cmp.bus[:: max(1, len(x) // 20)])
    _caption(fig, meta)
    return _finish(fig, job, job.figure)


def render_scatter(job: FigureJob, cmp: Comparison, meta: Meta) -> Path:
    if len(cmp) == 0:
        return _placeholder(job, meta, "comparison.csv has no rows")
    fig, (axv, axt) = plt.subplots(1, 2, figsize=_FIGSIZE)
    for ax, a, b, label, unit in (
        (axv, cmp.v_newton, cmp.v_nn, "voltage", "p.u."),
        (axt, cmp.theta_newton_deg, cmp.theta_nn_deg, "angle", "deg"),
    ):
        lo = min(a.min(), b.min())
        hi = max(a.max(), b.max())
        pad = 0.05 * max(hi - lo, 1e-9)
        line = np.array([lo - pad, hi + pad])
        ax.plot(line, line, "k--", lw=0.9, label="ideal")
        ax.plot(a, b, "o", ms=4, alpha=0.75, color="tab:blue")
        ax.set_xlabel(f"Newton {label} ({unit})")
        ax.set_ylabel(f"NN {label} ({unit})")
        ax.set_title(f"{label} scatter")
        ax.legend()
    _caption(fig, meta)
    return _finish(fig, job, job.figure)


def render(job: FigureJob) -> Path:
    """Render one figure (or each of them for figure='all')."""
    if job.figure not in FIGURES:
        raise ValueError(f"unknown figure {job.figure!r}; choose from {FIGURES}")
    meta_path = job.input_dir / "meta.json"
    meta = read_meta(meta_path) if meta_path.exists() else Meta()

    if job.figure in ("trajectory", "energy-decay", "contour-3d"):
        tr = read_trajectory(job.input_dir / "trajectory.csv")
        fn = {
            "trajectory": render_trajectory,
            "energy-decay": render_energy_decay,
            "contour-3d": render_contour_3d,
        }[job.figure]
        return fn(job, tr, meta)

    cmp = read_comparison(job.input_dir / "comparison.csv")
    fn = {
        "voltage-compare": render_voltage_compare,
        "angle-compare": render_angle_compare,
        "scatter": render_scatter,
    }[job.figure]
    return fn(job, cmp, meta)
