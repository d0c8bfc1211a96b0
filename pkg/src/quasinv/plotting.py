"""Static SVG figures drawn from the experiment tables.

Plots are conveniences only; every number they show is also in a CSV.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (6.4, 4.4),
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.6,
    "lines.markersize": 5,
    "font.size": 10,
    "legend.fontsize": 9,
    "legend.framealpha": 0.6,
    "svg.hashsalt": "quasinv",
}


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def errorbar_series(path, series, xlabel, ylabel, title="", logx=False, logy=False, reference=None):
    """``series`` maps a label to ``(x, y, yerr)``; ``reference`` to ``(x, y)`` drawn as lines."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for label, (x, y) in (reference or {}).items():
            ax.plot(x, y, "-", color="0.4", alpha=0.8, label=label)
        for label, (x, y, err) in series.items():
            ax.errorbar(x, y, yerr=err, fmt="o", capsize=3, label=label)
        if logx:
            ax.set_xscale("log")
        if logy:
            ax.set_yscale("log")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        if len(series) + len(reference or {}) > 1:
            ax.legend()
        return _save(fig, Path(path))


def bars(path, labels, values, ylabel, title="", hline=None):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        x = np.arange(len(values))
        ax.bar(x, values, color="tab:blue", alpha=0.8)
        if hline is not None:
            for h in np.atleast_1d(hline):
                ax.axhline(h, color="tab:red", ls="--", lw=1)
        step = max(1, len(labels) // 20)
        ax.set_xticks(x[::step], [labels[i] for i in range(0, len(labels), step)], rotation=60, fontsize=7)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        return _save(fig, Path(path))


def histogram(path, samples, xlabel, title="", bins=80, density_fn=None):
    """Histogram of ``samples`` with an optional reference density curve."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.hist(samples, bins=bins, density=True, color="tab:blue", alpha=0.6)
        if density_fn is not None:
            lo, hi = np.percentile(samples, [0.1, 99.9])
            x = np.linspace(lo, hi, 400)
            ax.plot(x, density_fn(x), "k-", lw=1.2)
        ax.set_xlabel(xlabel)
        ax.set_ylabel("density")
        if title:
            ax.set_title(title)
        return _save(fig, Path(path))


def scatter_fit(path, x, y, yerr, fits, xlabel, ylabel, title=""):
    """Points with error bars and one or more fitted lines ``(slope, intercept, label)``."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.errorbar(x, y, yerr=yerr, fmt="o", capsize=3, alpha=0.7)
        xs = np.linspace(0.0, float(np.max(x)) * 1.05, 50)
        for slope, intercept, label in fits:
            ax.plot(xs, intercept + slope * xs, "-", lw=1, label=label)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        if fits:
            ax.legend()
        return _save(fig, Path(path))


def planar_path(path, w, title=""):
    """Projection of a group path onto its first two horizontal coordinates."""
    w = np.asarray(w)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        y = w[:, 1] if w.shape[1] > 1 else np.zeros(len(w))
        ax.plot(w[:, 0], y, "-", color="tab:blue")
        ax.plot(w[[0, -1], 0], y[[0, -1]], "o", color="tab:red")
        ax.set_aspect("equal", adjustable="datalim")
        ax.set_xlabel("w_0")
        ax.set_ylabel("w_1")
        if title:
            ax.set_title(title)
        return _save(fig, Path(path))
