"""Figures written next to the delimited report files."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (6.0, 3.8),
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def ensemble_figure(result, path, max_paths: int = 20) -> Path:
    """Mean distance with a handful of individual trajectories, log scale."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        if result.trajectories:
            for tr in result.trajectories[:max_paths]:
                ax.plot(tr.times, np.maximum(tr.distances, 1e-16), color="0.7", lw=0.6)
        ax.plot(result.times, np.maximum(result.mean_distance, 1e-16), color="C0", lw=2, label="ensemble mean")
        ax.axhline(result.epsilon, color="C3", ls="--", lw=1, label=f"epsilon = {result.epsilon:g}")
        ax.set_yscale("log")
        ax.set_xlabel("t")
        ax.set_ylabel("D(rho_t, rho_d)")
        lo, hi = result.interval
        ax.set_title(f"P(converged) = {result.probability:.3f}  [{lo:.3f}, {hi:.3f}]")
        ax.legend(loc="lower left", frameon=False)
        return _save(fig, path)


def final_distance_histogram(result, path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        d = np.maximum(result.final_distances[~result.failed], 1e-16)
        bins = np.logspace(-16, 0, 33)
        ax.hist(d, bins=bins, color="C0", alpha=0.8)
        ax.axvline(result.epsilon, color="C3", ls="--", lw=1)
        ax.set_xscale("log")
        ax.set_xlabel("final distance")
        ax.set_ylabel("trajectories")
        return _save(fig, path)


def comparison_figure(report: dict, path) -> Path:
    c = report["curves"]
    t = np.asarray(c["times"])
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(t, c["mfc_mean_distance"], label="feedback (mean)")
        ax.plot(t, c["unitary_distance"], label="open loop, unitary")
        ax.plot(t, c["master_eq_distance"], label="open loop, master eq.")
        floor = report["unitary_olc"]["distance_floor"]
        ax.axhline(floor, color="0.4", ls=":", lw=1, label="unitary floor")
        ax.set_xlabel("t")
        ax.set_ylabel("D(rho_t, rho_d)")
        ax.set_ylim(-0.02, 1.02)
        ax.legend(frameon=False)
        return _save(fig, path)


def gamma_scan_figure(rows: list[dict], path) -> Path:
    g = [r["gamma"] for r in rows]
    p = np.array([r["probability"] for r in rows])
    lo = np.array([r["wilson_low"] for r in rows])
    hi = np.array([r["wilson_high"] for r in rows])
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.errorbar(g, p, yerr=[p - lo, hi - p], fmt="o-", capsize=3)
        ax.set_xlabel("gamma")
        ax.set_ylabel("convergence probability")
        ax.set_ylim(0, 1.05)
        return _save(fig, path)
