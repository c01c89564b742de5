"""Figure rendering for experiment aggregates.

One SVG per metric: log-scale curves of the seed mean per algorithm with a
shaded 10/90-percentile band.  Diverged trajectories end early; the series is
truncated at the divergence point and marked.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

_METRIC_LABELS = {
    "grad_norm_sq": r"$\|Fz^k\|^2$",
    "dist_sq": r"$\|z^k - z^\star\|^2$",
    "residual": "natural residual",
    "tz_dist_sq": "operator residual (squared)",
}


def render_svg(result, out_dir) -> list[Path]:
    """Render one SVG per metric of the aggregate; returns written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    metric_names = sorted({m for per_alg in result.tables.values() for m in per_alg})
    if not metric_names:
        raise ValueError("no metrics selected")
    written = []
    for metric in metric_names:
        fig, ax = plt.subplots(figsize=(5.4, 3.8))
        for alg, per_metric in result.tables.items():
            table = per_metric.get(metric)
            if table is None:
                continue
            ks = table.ks + 1  # log-x friendly
            line, = ax.plot(ks, table.mean, label=alg, linewidth=1.3)
            ax.fill_between(ks, table.p10, table.p90, alpha=0.2, color=line.get_color(), linewidth=0)
            diverged = any(s == "diverged" for s in result.statuses.get(alg, ()))
            if diverged:
                ax.plot(ks[-1], table.mean[-1], marker="x", color=line.get_color(), markersize=7)
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("iteration $k$")
        ax.set_ylabel(_METRIC_LABELS.get(metric, metric))
        ax.set_title(result.config.label)
        ax.legend(fontsize=8, loc="best")
        ax.grid(True, which="both", alpha=0.25)
        fig.tight_layout()
        path = out_dir / f"{result.config.label}__{metric}.svg"
        fig.savefig(path, format="svg")
        plt.close(fig)
        written.append(path)
    return written
