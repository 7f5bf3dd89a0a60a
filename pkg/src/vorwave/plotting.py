"""Figure rendering for the CLI report paths.

Each helper writes one PNG next to the delimited data it depicts; the
data files remain the primary interface.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_surface_plot(surface, path, title="free surface") -> None:
    fig, ax = plt.subplots(figsize=(6.4, 3.2))
    x = np.append(surface.abscissae(), surface.period)
    h = np.append(surface.heights, surface.heights[0])
    ax.plot(x, h, "-", lw=1.5)
    ax.axhline(surface.mean_height(), color="gray", lw=0.8, ls="--")
    ax.set_xlabel("x1")
    ax.set_ylabel("height")
    ax.set_title(title)
    _finish(fig, path)


def save_trace_plot(trace, path) -> None:
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(6.4, 4.8), sharex=True)
    it = np.asarray(trace.iteration)
    energy = np.asarray(trace.energy)
    ax1.plot(it, energy - energy.min() + 1e-16, "-o", ms=2.5)
    ax1.set_yscale("log")
    ax1.set_ylabel("energy above best")
    ax2.plot(it, trace.residual, "-o", ms=2.5, label="Bernoulli residual")
    ax2.plot(it, np.maximum(trace.gap, 1e-20), "-s", ms=2.5, label="rearrangement gap")
    ax2.set_yscale("log")
    ax2.set_xlabel("iteration")
    ax2.legend(fontsize=8)
    _finish(fig, path)


def save_residual_plot(arc_positions, deviations, path) -> None:
    fig, ax = plt.subplots(figsize=(6.4, 3.2))
    ax.plot(arc_positions, deviations, "-", lw=1.2)
    ax.axhline(0.0, color="gray", lw=0.8)
    ax.set_xlabel("arclength")
    ax.set_ylabel("Bernoulli deviation")
    _finish(fig, path)


def save_follower_plot(trace, path) -> None:
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(6.4, 4.8), sharex=True)
    ax1.plot(trace.times, trace.l2_norms, "-")
    ax1.set_ylabel("L2 norm")
    ax2.plot(trace.times, trace.distribution_drifts, "-")
    ax2.set_ylabel("distribution drift")
    ax2.set_xlabel("t")
    _finish(fig, path)


def save_sweep_plot(rows, path) -> None:
    """rows: list of dicts with the sweep parameters and results."""
    ok = [r for r in rows if r.get("status") == "ok"]
    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    if ok:
        xs = [r["value"] for r in ok]
        ys = [r["lambda1"] for r in ok]
        ax.plot(xs, ys, "o-", ms=4)
    ax.set_xlabel("swept value")
    ax.set_ylabel("wave speed")
    _finish(fig, path)
