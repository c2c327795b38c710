"""Report figures written next to the tabular outputs."""

from __future__ import annotations

from math import sqrt

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

COLUMN_WIDTH_PT = 246.0
_inches = COLUMN_WIDTH_PT / 72.27
FIG_SIZE = (_inches, _inches * (sqrt(5.0) - 1.0) / 2.0)

RC = {
    "axes.labelsize": 9,
    "font.size": 9,
    "legend.fontsize": 7,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "font.family": "serif",
    "figure.figsize": FIG_SIZE,
    "savefig.dpi": 200,
    "savefig.bbox": "tight",
}


matplotlib.rcParams.update(RC)


def _new():
    return plt.subplots()


def _save(fig, path):
    fig.savefig(path)
    plt.close(fig)
    return path


def slme_figure(rows, path, title=None):
    """Autocorrelation bound against the gate time, one curve per ``(n, u_prime)``."""
    fig, ax = _new()
    curves: dict = {}
    for r in rows:
        curves.setdefault((r["n"], r["u_prime"]), []).append((r["tau"], r["bound"]))
    for (n, up), pts in sorted(curves.items()):
        pts.sort()
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", ms=3, label=f"n={n}, U'={up:g}")
    ax.set_yscale("log")
    ax.set_xlabel(r"$\tau J$")
    ax.set_ylabel(r"$-1/\log|\lambda_2|$")
    if title:
        ax.set_title(title)
    ax.legend(frameon=False)
    return _save(fig, path)


def rcurve_figure(curves, path):
    """Blocking ratio ``R`` against block size.  ``curves`` maps labels to RCurve."""
    fig, ax = _new()
    for label, c in curves.items():
        ax.plot(c.block_sizes, c.ratios, marker="s", ms=3, label=f"{label} (R={c.saturated:.3g})")
    ax.set_xscale("log", base=2)
    ax.set_xlabel("block size")
    ax.set_ylabel(r"$R=\sigma_b^2/\sigma^2$")
    ax.legend(frameon=False)
    return _save(fig, path)


def mu_sweep_figure(rows, path):
    """Filling and compressibility of the free-fermion reference against ``mu``."""
    fig, ax = _new()
    mus = [r["mu"] for r in rows]
    ax.plot(mus, [r["nu"] for r in rows], marker="o", ms=3, color="C0")
    ax.set_xlabel(r"$\mu/J$")
    ax.set_ylabel(r"$\nu$", color="C0")
    ax2 = ax.twinx()
    ax2.plot(mus, [r["kappa"] for r in rows], marker="^", ms=3, color="C1")
    ax2.set_ylabel(r"$\kappa J$", color="C1")
    return _save(fig, path)


def series_figure(values, path, label="energy"):
    """Raw sample trace, useful to eyeball burn-in."""
    fig, ax = _new()
    ax.plot(range(len(values)), values, lw=0.4)
    ax.set_xlabel("step")
    ax.set_ylabel(label)
    return _save(fig, path)
