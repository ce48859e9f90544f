"""Figure rendering for simulation reports.

Figures land next to the delimited metrics output; all plotting uses the
Agg backend so the CLI works headless.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .calibrator import MetricsReport


def save_figures(report: MetricsReport, outdir) -> list[str]:
    """Render OME, drift-tracking, and RD/trigger figures; returns paths."""
    os.makedirs(outdir, exist_ok=True)
    t = np.arange(report.frames) / report.rate_hz
    paths = []

    fig, ax = plt.subplots(figsize=(9, 4.5))
    for s, name in enumerate(report.sensor_names):
        ax.plot(t, report.ome_deg[:, s], lw=0.8, label=name)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("OME [deg]")
    ax.set_title("Orientation measurement error")
    ax.legend(fontsize=8, ncol=3)
    paths.append(_save(fig, outdir, "ome_timeseries.png"))

    fig, ax = plt.subplots(figsize=(9, 4.5))
    for s, name in enumerate(report.sensor_names):
        ax.plot(t, report.drift_angle_deg[:, s], lw=0.8, label=name)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("estimated drift angle [deg]")
    ax.set_title("Drift state tracking")
    ax.legend(fontsize=8, ncol=3)
    paths.append(_save(fig, outdir, "drift_tracking.png"))

    fig, ax = plt.subplots(figsize=(9, 4.5))
    for s, name in enumerate(report.sensor_names):
        ax.plot(t, report.rd[:, s], lw=0.8, label=name)
    trig_t, trig_s = np.nonzero(report.triggered)
    ax.scatter(trig_t / report.rate_hz, report.rd[trig_t, trig_s], s=6, c="k", zorder=3, label="update")
    ax.set_xlabel("time [s]")
    ax.set_ylabel("rotation diversity")
    ax.set_title("RD and triggered updates")
    ax.legend(fontsize=8, ncol=3)
    paths.append(_save(fig, outdir, "rd_triggers.png"))
    return paths


def _save(fig, outdir, name: str) -> str:
    path = os.path.join(outdir, name)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
