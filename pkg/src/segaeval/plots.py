"""Standalone SVG summaries. Output bytes are reproducible (fixed id salt, no
date metadata)."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_RC = {"svg.hashsalt": "segaeval", "svg.fonttype": "path"}


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)


def metric_histograms(records, path):
    """DSC and HD histograms, one row per team."""
    with plt.rc_context(_RC):
        n = max(len(records), 1)
        fig, axes = plt.subplots(n, 2, figsize=(8, 2.2 * n), squeeze=False)
        for ax_row, rec in zip(axes, records):
            for ax, vals, label in zip(ax_row, (rec.dsc_values, rec.hd_values), ("DSC", "HD [mm]")):
                vals = np.asarray(vals, dtype=float)
                if vals.size:
                    ax.hist(vals, bins=20, color="0.4")
                ax.set_title(f"{rec.team_id}: {label}", fontsize=9)
        fig.tight_layout()
        _save(fig, path)


def sobol_bars(sensitivity, path):
    """First- and total-order indices per factor, for each team and output."""
    factors = sensitivity["factors"]
    teams = sorted(sensitivity["teams"])
    with plt.rc_context(_RC):
        n = max(len(teams), 1)
        fig, axes = plt.subplots(n, 2, figsize=(8, 2.2 * n), squeeze=False)
        x = np.arange(len(factors))
        for ax_row, team in zip(axes, teams):
            for ax, output in zip(ax_row, ("DSC", "HD")):
                idx = sensitivity["teams"][team][output]["indices"]
                s1 = [idx[f]["s1"] or 0.0 for f in factors]
                st = [idx[f]["st"] or 0.0 for f in factors]
                ax.bar(x - 0.2, s1, 0.4, label="first order")
                ax.bar(x + 0.2, st, 0.4, label="total order")
                ax.set_xticks(x, factors)
                ax.set_title(f"{team}: {output}", fontsize=9)
        if teams:
            axes[0][0].legend(fontsize=7)
        fig.tight_layout()
        _save(fig, path)
