"""Static figures for scan and simulation outputs.

Figures are written with the Agg backend. SVG output is made reproducible
by fixing the id hash salt and dropping the date stamp.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 10,
    "axes.linewidth": 0.8,
    "lines.linewidth": 1.5,
    "legend.frameon": False,
    "svg.hashsalt": "uhcm",
    "svg.fonttype": "path",
}

_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def _save(fig, path) -> Path:
    path = Path(path)
    meta = {"Date": None} if path.suffix == ".svg" else {}
    fig.savefig(path, metadata=meta, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_scan(reports: dict, path, axis: str = "real_axis", title: str | None = None) -> Path:
    """Enveloped truncated P function (dashed) and minimal eigenvalue (solid) per k."""
    with plt.rc_context(STYLE):
        if axis == "grid2d":
            return _plot_grid(reports, path, title)
        fig, ax = plt.subplots(figsize=(5.0, 3.4))
        for i, (k, rep) in enumerate(sorted(reports.items())):
            x = rep.alpha.imag if axis == "imag_axis" else rep.alpha.real
            color = _COLORS[i % len(_COLORS)]
            ax.plot(x, rep.F_env, color=color, label=rf"$\mathcal{{F}}^{{({k})}}_w$")
            ax.plot(x, rep.P_env, color=color, ls="--", label=rf"$\mathcal{{P}}^{{({k})}}_w$")
        ax.axhline(0.0, color="0.4", lw=0.6)
        ax.set_xlabel(r"Im $\alpha$" if axis == "imag_axis" else r"Re $\alpha$")
        ax.set_ylabel("enveloped value")
        ax.legend(ncol=2, fontsize=8)
        if title:
            ax.set_title(title)
        return _save(fig, path)


def _plot_grid(reports, path, title):
    ks = sorted(reports)
    fig, axes = plt.subplots(2, len(ks), figsize=(3.2 * len(ks), 5.6), squeeze=False)
    for j, k in enumerate(ks):
        rep = reports[k]
        re = np.unique(rep.alpha.real)
        im = np.unique(rep.alpha.imag)
        for i, (name, vals) in enumerate((("P", rep.P_env), ("F", rep.F_env))):
            grid = vals.reshape(im.size, re.size)
            lim = max(abs(grid.min()), abs(grid.max())) or 1.0
            ax = axes[i, j]
            mesh = ax.pcolormesh(re, im, grid, cmap="RdBu", vmin=-lim, vmax=lim, shading="auto")
            ax.contour(re, im, grid, levels=[0.0], colors="k", linewidths=0.6)
            ax.set_title(f"{name}(k={k})")
            ax.set_aspect("equal")
            fig.colorbar(mesh, ax=ax, shrink=0.8)
    if title:
        fig.suptitle(title)
    return _save(fig, path)


def plot_correlations(rows, path, title: str | None = None) -> Path:
    """Moment estimates with error bars against analytic values, per order."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.2, 3.0))
        m = np.array([r[0] for r in rows])
        est = np.array([r[7] for r in rows], dtype=float)
        err = np.array([r[8] for r in rows], dtype=float)
        ax.errorbar(m, est, yerr=5 * err, fmt="o", capsize=3, label="estimate (5 s.e.)")
        ref = [r[9] for r in rows]
        if all(v is not None for v in ref):
            ax.plot(m, ref, "x", color="k", label="analytic")
        ax.set_xlabel("m")
        ax.set_ylabel(r"$\langle:[\hat n(\alpha)]^m:\rangle$")
        ax.set_xticks(m)
        ax.legend(fontsize=8)
        if title:
            ax.set_title(title)
        return _save(fig, path)
