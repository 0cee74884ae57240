"""Figures for experiment reports (Agg backend, reproducible PNG bytes)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "svg.hashsalt": "vnrf",
}


def error_figure(report: dict, path: str | Path) -> Path:
    """Over/under/match fractions against window size, with the bound shapes on a second panel."""
    sizes = [s for s in report["per_size"] if "match" in s]
    n = np.array([s["sites_in_window"] for s in sizes], dtype=float)
    with plt.rc_context(_STYLE):
        fig, (ax, bx) = plt.subplots(1, 2, figsize=(7.0, 2.8))
        for key, marker in (("over", "^"), ("under", "v"), ("match", "o")):
            y = np.array([s[key]["fraction"] for s in sizes])
            se = np.array([s[key]["binomial_se"] for s in sizes])
            ax.errorbar(n, y, yerr=2 * se, marker=marker, ms=4, lw=1, capsize=2, label=key)
        ax.set_xscale("log")
        ax.set_ylim(-0.05, 1.05)
        ax.set_xlabel("sites in window")
        ax.set_ylabel("fraction of scored sites")
        ax.legend(frameon=False)

        rows = report["bounds"]["per_size"]
        m = np.array([r["region_size"] for r in rows], dtype=float)
        bx.plot(m, [r["overestimation_shape"] for r in rows], "^-", ms=4, lw=1, label="over (shape)")
        bx.plot(m, [max(r["underestimation_shape"], 1e-300) for r in rows], "v-", ms=4, lw=1,
                label="under (shape)")
        bx.set_xscale("log")
        bx.set_yscale("log")
        bx.set_xlabel("security region size")
        bx.set_ylabel("bound, C = 1")
        bx.legend(frameon=False)
        fig.tight_layout()
        path = Path(path)
        fig.savefig(path, dpi=120, metadata={"Software": None})
        plt.close(fig)
    return path
