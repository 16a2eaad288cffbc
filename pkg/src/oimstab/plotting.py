"""Figures for experiment outputs, written next to the CSV files."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["pdf.fonttype"] = 42
matplotlib.rcParams["ps.fonttype"] = 42
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

DESIRED_COLOR = "#d62728"
OTHER_COLOR = "#1f77b4"


def prettify(ax):
    ax.spines["right"].set_visible(False)
    ax.spines["top"].set_visible(False)
    ax.tick_params(direction="out", which="both")


def scatter_panel(ax, h, lam, flag, title=None):
    """H vs lambda_N; desired states drawn last so they stay visible."""
    other = ~flag
    ax.scatter(h[other], lam[other], s=1, c=OTHER_COLOR, alpha=0.3, rasterized=True, linewidths=0)
    ax.scatter(h[flag], lam[flag], s=12, c=DESIRED_COLOR, zorder=3, linewidths=0)
    ax.set_xlabel("H(s)")
    ax.set_ylabel(r"$\lambda_N(D(s))$")
    if title:
        ax.set_title(title)
    prettify(ax)


def plot_training_evolution(panels, path):
    """One scatter panel per snapshot; ``panels`` is [(T, h, lam, flag), ...]."""
    fig, axes = plt.subplots(1, len(panels), figsize=(3.2 * len(panels), 3.0), squeeze=False)
    for ax, (t_it, h, lam, flag) in zip(axes[0], panels):
        scatter_panel(ax, h, lam, flag, title=f"T = {t_it}")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_rate_curves(curves, path, xlabel="m (desired patterns)", title=None):
    """``curves`` maps a legend label to (x values, mean R_s, std R_s)."""
    fig, ax = plt.subplots(figsize=(4.2, 3.2))
    for label, (x, mean, std) in curves.items():
        x, mean, std = map(np.asarray, (x, mean, std))
        ax.errorbar(x, mean, yerr=std, marker="o", ms=4, capsize=2, label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(r"$R_s$")
    if title:
        ax.set_title(title)
    ax.legend(frameon=False, fontsize=8)
    prettify(ax)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _curves(summary_rows, by):
    """Group (n, m, alpha, mean, std) tuples into curves keyed by ``by``."""
    curves: dict[str, tuple[list, list, list]] = {}
    for n, m, alpha, mean, std in sorted(summary_rows):
        label = by(n, alpha)
        xs, ms, ss = curves.setdefault(label, ([], [], []))
        xs.append(m)
        ms.append(mean)
        ss.append(std)
    return curves


def render_experiment(spec, rows, scatter, out: Path) -> list[Path]:
    out = Path(out)
    written: list[Path] = []
    if spec.experiment == 1:
        for seed in sorted({s for s, _ in scatter}):
            panels = [(t, *scatter[(seed, t)]) for t in sorted(t for s, t in scatter if s == seed)]
            path = out / f"exp1_evolution_seed{seed}.png"
            plot_training_evolution(panels, path)
            written.append(path)
        return written

    final = {}
    for r in rows:
        # last recorded iteration per (n, m, alpha, seed)
        key = (r[1], r[2], r[3], r[4])
        if key not in final or r[5] > final[key][5]:
            final[key] = r
    cells: dict[tuple, list[float]] = {}
    for (n, m, alpha, _), r in final.items():
        cells.setdefault((n, m, alpha), []).append(float(r[7]))
    summary = [(n, m, a, float(np.mean(v)), float(np.std(v))) for (n, m, a), v in cells.items()]

    if spec.experiment == 2:
        for n in sorted({s[0] for s in summary}):
            curves = _curves([s for s in summary if s[0] == n],
                             by=lambda _n, a: "regularized" if a > 0 else "non-regularized")
            path = out / f"exp2_rate_N{n}.png"
            plot_rate_curves(curves, path, title=f"N = {n}")
            written.append(path)
    else:
        curves = _curves(summary, by=lambda n, _a: f"N = {n}")
        path = out / "exp3_rate.png"
        plot_rate_curves(curves, path, title="sampled spurious rate")
        written.append(path)
    return written
