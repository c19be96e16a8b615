"""Figure builders for campaign reports.

All functions return a matplotlib Figure ready to be saved; the report
module writes them next to the delimited output. Uses the Agg backend so
reports render identically in headless runs.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def apply_style() -> None:
    """House style for report figures."""
    matplotlib.rcParams.update({
        "figure.dpi": 120,
        "font.size": 9,
        "axes.grid": True,
        "grid.alpha": 0.3,
        "lines.markersize": 4,
        "legend.frameon": False,
    })


def series_figure(record) -> plt.Figure:
    """Raw force series and per-component histograms for a static run."""
    apply_style()
    cycles = [c for c in record.cycles if c.converged]
    t = np.array([c.timestamp for c in cycles])
    f = np.array([c.force for c in cycles])
    fig, axes = plt.subplots(2, 2, figsize=(8, 5), constrained_layout=True)
    for row, (comp, label) in enumerate([(0, "x"), (1, "y")]):
        ax = axes[row, 0]
        ax.plot(t, f[:, comp], ".", color="C0")
        ax.axhline(record.mean_force[comp], color="C3", lw=1)
        ax.set_xlabel("time (s)")
        ax.set_ylabel(f"$F_{label}$ (N)")
        axh = axes[row, 1]
        axh.hist(f[:, comp], bins=min(40, max(10, len(cycles) // 12)),
                 color="C0", alpha=0.8)
        axh.set_xlabel(f"$F_{label}$ (N)")
        axh.set_ylabel("counts")
    fig.suptitle("reconstructed force series")
    return fig


def adev_figure(record) -> plt.Figure:
    """Allan deviation of both components with 1-sigma bounds, log-log."""
    apply_style()
    fig, ax = plt.subplots(figsize=(5.5, 4), constrained_layout=True)
    for analysis, color in [(record.analysis_x, "C0"), (record.analysis_y, "C1")]:
        a = analysis.adev
        ax.fill_between(a.taus, a.ci_lower, a.ci_upper, color=color, alpha=0.2)
        ax.loglog(a.taus, a.adev, "o-", color=color,
                  label=f"$F_{analysis.label}$")
        h = analysis.histogram
        tau_h = h.bin_sizes * record.config["campaign"]["cycle_time_s"]
        ax.loglog(tau_h, h.stability, "s--", color=color, alpha=0.5,
                  label=f"$F_{analysis.label}$ (binned)")
    ax.set_xlabel(r"averaging time $\tau_1$ (s)")
    ax.set_ylabel("Allan deviation (N)")
    ax.legend()
    return fig


def scaling_figure(record) -> plt.Figure:
    """Sensitivity versus force acting time, log-log, with the fitted law."""
    apply_style()
    fig, ax = plt.subplots(figsize=(5.5, 4), constrained_layout=True)
    for c, (label, color) in enumerate([("x", "C0"), ("y", "C1")]):
        ax.loglog(record.dts, record.sensitivity[:, c], "o", color=color,
                  label=(f"$S_{label}$: slope "
                         f"{record.exponent[c]:+.2f}"
                         f"$\\pm${record.exponent_sigma[c]:.2f}"))
        span = np.array([record.dts.min(), record.dts.max()])
        ref = record.sensitivity[0, c] * (span / record.dts[0]) ** record.exponent[c]
        ax.loglog(span, ref, "-", color=color, alpha=0.4)
    ax.set_xlabel(r"force acting time $\Delta T$ (s)")
    ax.set_ylabel(r"sensitivity (N/$\sqrt{\mathrm{Hz}}$)")
    ax.legend()
    return fig


def ac_figure(record) -> plt.Figure:
    """Triangular wavevector trace and per-plateau forces."""
    apply_style()
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7, 5.5),
                                   constrained_layout=True, sharex=True)
    t = record.sample_times
    ax1.errorbar(t * 1e3, record.k_measured[:, 1], yerr=record.sigma_k[:, 1],
                 fmt="o", ms=3, color="C0", label="measured $k_y$")
    ax1.set_ylabel(r"$k_y$ (m$^{-1}$)")
    ax1.legend()
    p = record.plateaus
    half = 0.5 / record.frequency
    for mid, f, sign in zip(p.mid_times, p.forces[:, 1], p.signs):
        color = "C0" if sign > 0 else "C3"
        ax2.hlines(f, (mid - half / 2) * 1e3, (mid + half / 2) * 1e3,
                   color=color, lw=2)
    ax2.axhline(p.positive_mean[1], color="C0", ls=":", alpha=0.7)
    ax2.axhline(p.negative_mean[1], color="C3", ls=":", alpha=0.7)
    ax2.plot(p.mid_times * 1e3, p.forces[:, 0], "s", color="C2", ms=3,
             label="$F_x$ per plateau")
    ax2.set_xlabel("force acting time (ms)")
    ax2.set_ylabel("plateau force (N)")
    ax2.legend()
    return fig
