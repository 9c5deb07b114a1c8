"""Report figures rendered headlessly to image files.

The CSV stays the canonical output of every run; these figures are a
convenience rendering of the same numbers, written next to the delimited
file when the command line asks for them.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

_DIAG = (("Lxx", 0, 0, "o"), ("Lyy", 1, 1, "s"), ("Lzz", 2, 2, "^"))


def campaign_figure(result, path, title: str = "") -> None:
    """Mean conductivity (with spread) against the sweep variable.

    One errorbar series per diagonal tensor entry, plus the percolation
    rate on a secondary axis.
    """
    values = [pt.sweep_value for pt in result.points]
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for name, a, b, marker in _DIAG:
        mean = [pt.mean[a, b] for pt in result.points]
        std = [pt.std[a, b] for pt in result.points]
        ax.errorbar(values, mean, yerr=std, marker=marker, markersize=4,
                    capsize=2, linewidth=1, label=name)
    ax.set_xlabel(_sweep_label(result))
    ax.set_ylabel("effective conductivity (dimensionless)")
    ax.grid(alpha=0.3)
    if title:
        ax.set_title(title)

    ax2 = ax.twinx()
    ax2.plot(values, [pt.percolation_rate for pt in result.points],
             color="gray", linestyle="--", linewidth=1, label="percolation rate")
    ax2.set_ylabel("percolation rate", color="gray")
    ax2.set_ylim(-0.05, 1.05)

    handles, labels = ax.get_legend_handles_labels()
    h2, l2 = ax2.get_legend_handles_labels()
    ax.legend(handles + h2, labels + l2, fontsize=8, loc="best")
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)


def _sweep_label(result) -> str:
    sweep = getattr(result.config, "sweep", None) if result.config else None
    if sweep == "repartition":
        return "share of solid volume in cylinders"
    return sweep or "sweep value"


def rve_scan_figure(rows, path, title: str = "") -> None:
    """Mean conductivity against volume-element size (inclusion count)."""
    n = [r.n_inclusions for r in rows]
    mean = [r.mean for r in rows]
    std = [r.std for r in rows]
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.errorbar(n, mean, yerr=std, marker="o", capsize=3, linewidth=1)
    ax.set_xlabel("inclusions per sample")
    ax.set_ylabel("mean effective conductivity")
    ax.set_xscale("log")
    ax.grid(alpha=0.3, which="both")
    if title:
        ax.set_title(title)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
