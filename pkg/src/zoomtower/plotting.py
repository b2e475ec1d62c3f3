"""Report figures.  Everything renders off-screen to PNG files."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (5.0, 3.5),
    "figure.dpi": 100,
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "savefig.bbox": "tight",
}


def _save(fig, path):
    # no Software/date metadata, so identical inputs give identical files
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return str(path)


def plot_cells(induced, path):
    """Cells of the induced partition coloured by return time."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        R = induced.return_times
        c0 = induced.base.center.array()
        if induced.base.dim == 1:
            for cell in induced.cells:
                lo, hi = np.min(cell.boundary), np.max(cell.boundary)
                lo = c0[0] + ((lo - c0[0] + 0.5) % 1.0 - 0.5)
                ax.plot([lo, lo + (hi - np.min(cell.boundary))], [cell.return_time] * 2, lw=4, solid_capstyle="butt")
            ax.set_ylabel("return time R")
            ax.set_xlabel("x")
        else:
            pts = np.array([c.center for c in induced.cells])
            d = (pts - c0 + 0.5) % 1.0 - 0.5
            sc = ax.scatter(d[:, 0], d[:, 1], c=R, s=6, cmap="viridis")
            fig.colorbar(sc, ax=ax, label="return time R")
            ax.set_aspect("equal")
            ax.set_xlabel("x1 - c1")
            ax.set_ylabel("x2 - c2")
        ax.set_title(f"{len(induced.cells)} cells")
        return _save(fig, path)


def plot_return_histogram(levels, counts, path):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.bar(levels, counts, color="0.4")
        ax.set_xlabel("return time R")
        ax.set_ylabel("cells")
        return _save(fig, path)


def plot_sample_histogram(points, bins, path):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        if points.shape[1] == 1:
            ax.hist(points[:, 0], bins=bins, range=(0, 1), density=True, color="0.4")
            ax.set_xlabel("x")
            ax.set_ylabel("density")
        else:
            h = ax.hist2d(points[:, 0], points[:, 1], bins=bins, range=[[0, 1], [0, 1]], density=True)
            fig.colorbar(h[3], ax=ax)
            ax.set_aspect("equal")
        return _save(fig, path)


def plot_correlations(curve, path):
    """``log |C(k)|`` with error bars and the fitted line, if any."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        k = np.array(curve.lags[1:])
        c = np.abs(curve.correlations[1:])
        e = np.array(curve.errors[1:])
        ax.errorbar(k, c, yerr=e, fmt="o", ms=3, color="k", lw=0.8)
        fit = curve.fit
        if "slope" in fit:
            kk = np.array(fit["usable_lags"], float)
            ax.plot(kk, np.exp(fit["intercept"] + fit["slope"] * kk), "r-", lw=1, label=f"slope {fit['slope']:.3f}")
            ax.legend(frameon=False)
        ax.set_yscale("log")
        ax.set_xlabel("lag k")
        ax.set_ylabel("|C(k)|")
        return _save(fig, path)


def plot_tail(fit, path):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ns = np.array(fit.ns)
        ax.semilogy(ns, fit.tails, "ko", ms=3)
        if not fit.degenerate:
            ax.semilogy(ns, np.exp(fit.intercept + fit.slope * ns), "r-", lw=1, label=f"slope {fit.slope:.3f}")
            ax.legend(frameon=False)
        ax.set_xlabel("n")
        ax.set_ylabel("nu(R >= n)")
        return _save(fig, path)
