"""Report emission: one metrics table, per-figure data series, rendered charts.

``metrics.csv`` is the single source of truth; the four ``*_vs_depth.csv``
files repeat the tree-family series in a plot-friendly long form
(family, depth, values), and the PNGs render the same series with
matplotlib's Agg backend so a finished run is inspectable without any
extra tooling.  Floats are written with ``repr`` so re-parsing recovers
every value exactly.
"""

from __future__ import annotations

import csv
from pathlib import Path

from .metrics import MetricsReport

METRICS_COLUMNS = ("label", "kind", "depth_or_params", "mean_reward", "ci95",
                   "nrmse", "acc_pct", "param_count", "n_episodes", "seed")

TREE_FAMILIES = ("hdt", "sdt")


def _fmt(value) -> str:
    return repr(value) if isinstance(value, float) else str(value)


def write_metrics_csv(reports: list[MetricsReport], path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_COLUMNS)
        for r in reports:
            depth_or_params = r.depth if r.depth is not None else r.param_count
            writer.writerow([_fmt(v) for v in (
                r.label, r.kind, depth_or_params, r.mean_reward, r.ci95_half_width,
                r.nrmse, r.acc_pct, r.param_count, r.n_eval_episodes, r.seed,
            )])
    return path


def _family_rows(reports: list[MetricsReport], kind: str) -> list[MetricsReport]:
    rows = [r for r in reports if r.kind == kind and r.depth is not None]
    return sorted(rows, key=lambda r: r.depth)


def _write_series(path: Path, value_columns: tuple[str, ...], rows) -> Path:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("family", "depth", *value_columns))
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


def write_plot_data(reports: list[MetricsReport], out_dir) -> list[Path]:
    """Four long-form CSVs, one per metric figure, two tree families each."""
    out = Path(out_dir)
    by_family = {kind: _family_rows(reports, kind) for kind in TREE_FAMILIES}

    def series(pick):
        return [(kind, r.depth, *pick(r)) for kind in TREE_FAMILIES for r in by_family[kind]]

    return [
        _write_series(out / "nrmse_vs_depth.csv", ("nrmse",),
                      series(lambda r: (r.nrmse,))),
        _write_series(out / "accuracy_vs_depth.csv", ("acc_pct",),
                      series(lambda r: (r.acc_pct,))),
        _write_series(out / "reward_vs_depth.csv", ("mean_reward", "ci95"),
                      series(lambda r: (r.mean_reward, r.ci95_half_width))),
        _write_series(out / "params_vs_depth.csv", ("param_count",),
                      series(lambda r: (r.param_count,))),
    ]


def render_figures(reports: list[MetricsReport], out_dir) -> list[Path]:
    """Render the four metric charts to PNG without needing a display."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = Path(out_dir)
    by_family = {kind: _family_rows(reports, kind) for kind in TREE_FAMILIES}
    expert = next((r for r in reports if r.kind == "mlp"), None)
    written: list[Path] = []

    def figure(name: str, ylabel: str, draw, finish=None) -> None:
        fig, ax = plt.subplots(figsize=(6, 4))
        for kind in TREE_FAMILIES:
            rows = by_family[kind]
            if rows:
                draw(ax, kind, rows)
        if finish is not None:
            finish(ax)
        ax.set_xlabel("tree depth")
        ax.set_ylabel(ylabel)
        if ax.get_legend_handles_labels()[0]:
            ax.legend(loc="best")
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        path = out / name
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)

    figure("nrmse_vs_depth.png", "NRMSE vs expert EVF",
           lambda ax, kind, rows: ax.plot([r.depth for r in rows], [r.nrmse for r in rows],
                                          marker="o", label=kind.upper()))
    figure("accuracy_vs_depth.png", "policy accuracy (%)",
           lambda ax, kind, rows: ax.plot([r.depth for r in rows], [r.acc_pct for r in rows],
                                          marker="o", label=kind.upper()))

    def draw_reward(ax, kind, rows):
        ax.errorbar([r.depth for r in rows], [r.mean_reward for r in rows],
                    yerr=[r.ci95_half_width for r in rows], marker="o",
                    capsize=3, label=kind.upper())
        if expert is not None and kind == TREE_FAMILIES[0]:
            ax.axhline(expert.mean_reward, color="gray", linestyle="--",
                       label=f"expert ({expert.label})")
            ax.axhspan(expert.mean_reward - expert.ci95_half_width,
                       expert.mean_reward + expert.ci95_half_width,
                       color="gray", alpha=0.2)

    figure("reward_vs_depth.png", "mean episode reward (95% CI)", draw_reward)

    def draw_params(ax, kind, rows):
        ax.plot([r.depth for r in rows], [r.param_count for r in rows],
                marker="o", label=kind.upper())

    def scale_params(ax):
        counts = [r.param_count for kind in TREE_FAMILIES for r in by_family[kind]]
        if counts and min(counts) > 0:  # single-leaf trees have zero parameters
            ax.set_yscale("log")

    figure("params_vs_depth.png", "parameter count", draw_params, finish=scale_params)
    return written


def emit_report(reports: list[MetricsReport], out_dir) -> list[Path]:
    """Write metrics.csv, the plot-data CSVs, and the rendered figures."""
    if not reports:
        raise ValueError("cannot emit a report from zero evaluations")
    out = Path(out_dir)
    written = [write_metrics_csv(reports, out / "metrics.csv")]
    written.extend(write_plot_data(reports, out))
    written.extend(render_figures(reports, out))
    return written
