"""Energy-error panel figures and convergence plots.

Rendering is a pure function of the CSV bytes and the spec: fixed figure
geometry, no timestamps, so identical inputs reproduce identical images.
"""
from __future__ import annotations

from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .records import RecordFile, read_records

#: Cap on plotted points per panel; long runs are subsampled evenly.
MAX_POINTS = 4000


@dataclass(frozen=True)
class PanelSpec:
    """One stacked energy-error figure: one panel per record file."""

    csv_paths: tuple
    envelope_constant: float
    title: str = ""

    def __post_init__(self):
        if not self.csv_paths:
            raise ValueError("need at least one record file")


def _subsample(rec: RecordFile):
    n = len(rec.data)
    stride = max(1, n // MAX_POINTS)
    idx = np.arange(0, n, stride)
    if idx[-1] != n - 1:
        idx = np.append(idx, n - 1)
    return rec.tau[idx], rec.energy_rel_err[idx]


def build_energy_figure(spec: PanelSpec):
    """Stacked panels, y-range exactly +-c h^2, step size annotated."""
    records = [read_records(p) for p in spec.csv_paths]
    n_panels = len(records)
    fig, axes = plt.subplots(n_panels, 1, figsize=(8.0, 2.2 * n_panels),
                             squeeze=False)
    for ax, rec in zip(axes[:, 0], records):
        tau, err = _subsample(rec)
        ylim = spec.envelope_constant * rec.h * rec.h
        ax.plot(tau, err, lw=0.5, color="#1f4e9c")
        ax.axhline(0.0, lw=0.4, color="0.6")
        ax.set_xlim(0.0, rec.tau_end)
        ax.set_ylim(-ylim, ylim)
        ax.text(0.01, 0.96, f"h = {rec.h:g}", transform=ax.transAxes,
                ha="left", va="top", fontsize=9)
        ax.text(0.99, 0.96, f"tau_end = {rec.tau_end:g}",
                transform=ax.transAxes, ha="right", va="top", fontsize=9)
        ax.set_ylabel(f"±{spec.envelope_constant:g} h²", fontsize=9)
    axes[-1, 0].set_xlabel("proper time")
    if spec.title:
        axes[0, 0].set_title(spec.title, fontsize=10)
    fig.suptitle("relative energy error", fontsize=10)
    fig.tight_layout(rect=(0, 0, 1, 0.97))
    return fig


def render_energy_panels(spec: PanelSpec, out_path) -> None:
    fig = build_energy_figure(spec)
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def fit_order(h: np.ndarray, err: np.ndarray):
    """Least-squares slope of log(err) vs log(h); None when degenerate."""
    h = np.asarray(h, dtype=float)
    err = np.asarray(err, dtype=float)
    mask = (h > 0) & (err > 0)
    h, err = h[mask], err[mask]
    if len(h) < 2 or np.ptp(np.log(err)) < 1e-12 or np.ptp(np.log(h)) == 0:
        return None
    slope, _ = np.polyfit(np.log(h), np.log(err), 1)
    return float(slope)


def build_convergence_figure(table: np.ndarray):
    """Log-log error vs h with a slope-2 guide; slope fit annotated when
    defined (omitted for single points or error plateaus)."""
    h = table[:, 0]
    err = table[:, 1]
    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    ax.loglog(h, err, "o-", color="#1f4e9c", label="measured")
    slope = fit_order(h, err)
    positive = err[err > 0]
    if len(positive) and len(h) >= 2:
        anchor = h[np.argmax(err)]
        ref = np.max(err) * (h / anchor) ** 2
        ax.loglog(h, ref, "--", color="0.5", label="slope 2")
    if slope is not None:
        ax.text(0.05, 0.92, f"fitted slope = {slope:.3f}",
                transform=ax.transAxes, fontsize=10)
    ax.set_xlabel("step size h")
    ax.set_ylabel("error at tau_end")
    ax.legend(loc="lower right", fontsize=9)
    fig.tight_layout()
    return fig, slope


def render_convergence(table: np.ndarray, out_path):
    fig, slope = build_convergence_figure(table)
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return slope
