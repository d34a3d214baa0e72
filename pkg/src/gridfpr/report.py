"""Matplotlib figure rendering for the report path.

Figures are written as PNG files next to the delimited exports. Rendering
is pinned (Agg backend, fixed dpi, fixed metadata) so repeated runs
produce byte-identical images.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_SAVE_KW = {"dpi": 150, "metadata": {"Software": "gridfpr"}}


def _save(fig, path):
    fig.savefig(path, format="png", **_SAVE_KW)
    plt.close(fig)


def save_for_figure(polygon, path, title: str = "") -> None:
    fig, ax = plt.subplots(figsize=(5.0, 4.2))
    xs = [p for p, _q in polygon.vertices] + [polygon.vertices[0][0]]
    ys = [q for _p, q in polygon.vertices] + [polygon.vertices[0][1]]
    ax.fill(xs, ys, color="tab:blue", alpha=0.25)
    ax.plot(xs, ys, color="tab:blue", lw=1.2)
    ax.plot([polygon.base_point[0]], [polygon.base_point[1]], "k+", ms=8)
    ax.set_xlabel("P at PCC [MW]")
    ax.set_ylabel("Q at PCC [Mvar]")
    ax.axhline(0.0, color="0.8", lw=0.6)
    ax.axvline(0.0, color="0.8", lw=0.6)
    if title:
        ax.set_title(title)
    ax.set_aspect("equal", adjustable="datalim")
    fig.tight_layout()
    _save(fig, path)


def save_fpr_figure(fpr, path, title: str = "") -> None:
    fig, ax = plt.subplots(figsize=(5.4, 4.4))
    costs = [e.cost for e in fpr.entries]
    c_max = max(costs) if costs else 1.0
    cmap = plt.get_cmap("viridis")
    for entry in fpr.entries:
        color = cmap(0.15 + 0.7 * (entry.cost / c_max if c_max > 0 else 0.0))
        xs = [p for p, _q in entry.polygon.vertices] + [entry.polygon.vertices[0][0]]
        ys = [q for _p, q in entry.polygon.vertices] + [entry.polygon.vertices[0][1]]
        ax.plot(xs, ys, color=color, lw=1.2, label=f"cost {entry.cost:,.0f}")
    ax.set_xlabel("P at PCC [MW]")
    ax.set_ylabel("Q at PCC [Mvar]")
    ax.axhline(0.0, color="0.8", lw=0.6)
    ax.axvline(0.0, color="0.8", lw=0.6)
    if title:
        ax.set_title(title)
    if len(fpr.entries) <= 8:
        ax.legend(fontsize=7, loc="upper right")
    ax.set_aspect("equal", adjustable="datalim")
    fig.tight_layout()
    _save(fig, path)


def save_linear_fit_figure(fpr, model, path, title: str = "") -> None:
    from .fpr_builder import entry_capacity

    fig, ax = plt.subplots(figsize=(5.0, 3.8))
    rs = [entry_capacity(e.polygon, model.capacity_metric) for e in fpr.entries]
    cs = [e.cost for e in fpr.entries]
    ax.scatter(rs, cs, s=18, color="tab:blue", zorder=3, label="expansion stages")
    if rs:
        grid = np.linspace(min(rs), max(rs), 50)
        ax.plot(
            grid,
            model.capex_per_mw * grid + model.base_cost,
            color="tab:red",
            lw=1.2,
            label=f"fit: {model.capex_per_mw:,.0f}/MW (r2={model.r_squared:.3f})",
        )
    ax.set_xlabel(f"capacity {model.capacity_metric} [MW]")
    ax.set_ylabel("grid cost")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=7)
    fig.tight_layout()
    _save(fig, path)


def save_study_figure(report, path, title: str = "") -> None:
    labels = list(report.objectives.keys())
    techs: list[str] = []
    for row in report.rows:
        if row.technology not in techs:
            techs.append(row.technology)
    provided = {
        (r.scenario, r.technology): r.provided_mwh for r in report.rows
    }
    consumed = {
        (r.scenario, r.technology): r.consumed_mwh for r in report.rows
    }

    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    x = np.arange(len(labels), dtype=float)
    cmap = plt.get_cmap("tab20")
    bottom_pos = np.zeros(len(labels))
    bottom_neg = np.zeros(len(labels))
    for k, tech in enumerate(techs):
        pos = np.array([provided.get((label, tech), 0.0) for label in labels])
        neg = np.array([-consumed.get((label, tech), 0.0) for label in labels])
        color = cmap(k % 20)
        if np.any(pos != 0.0):
            ax.bar(x, pos, 0.6, bottom=bottom_pos, color=color, label=tech)
            bottom_pos += pos
        if np.any(neg != 0.0):
            show_label = not np.any(
                np.array([provided.get((label, tech), 0.0) for label in labels]) != 0.0
            )
            ax.bar(x, neg, 0.6, bottom=bottom_neg, color=color,
                   label=tech if show_label else None)
            bottom_neg += neg
    ax.axhline(0.0, color="k", lw=0.8)
    ax.set_xticks(x)
    ax.set_xticklabels([f"scenario {label}" for label in labels])
    ax.set_ylabel("energy provided (+) / consumed (-) [MWh]")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=7, ncol=2)
    fig.tight_layout()
    _save(fig, path)
