"""Renderers for the four experiment figures.

Each renderer takes the bundle directory holding the producer's CSVs and an
output image path, validates the columns it needs, and fails loudly on
missing or inconsistent data. Rendering never modifies inputs and is
deterministic given them.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


class FigureDataError(ValueError):
    """Missing columns, empty data, or inconsistent component sums."""


BREAKDOWN_IDENTITY_TOL = 1e-9


def read_csv(path):
    """(rows as dicts of strings), skipping '#' provenance comments."""
    path = Path(path)
    if not path.exists():
        raise FigureDataError(f"input CSV missing: {path}")
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    rows = list(reader)
    if not rows:
        raise FigureDataError(f"no data rows in {path}")
    return rows


def require_columns(rows, columns, path):
    missing = [c for c in columns if c not in rows[0]]
    if missing:
        raise FigureDataError(f"{path} lacks column(s) {missing}")


def _save(fig, out_path):
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, bbox_inches="tight")
    plt.close(fig)
    return out_path


def render_convergence(bundle_dir, out_path):
    """Training cost curves, one line per network scale."""
    path = Path(bundle_dir) / "convergence.csv"
    rows = read_csv(path)
    require_columns(rows, ["k", "b", "iteration", "deployment_cost"], path)
    fig, ax = plt.subplots(figsize=(6, 4))
    series = {}
    for r in rows:
        series.setdefault((int(r["k"]), int(r["b"])), []).append(
            (int(r["iteration"]), float(r["deployment_cost"])))
    for (k, b), pts in sorted(series.items()):
        pts.sort()
        ax.plot([p[0] for p in pts], [p[1] for p in pts],
                label=f"K={k}, B={b}", linewidth=1.2)
    ax.set_xlabel("training iteration")
    ax.set_ylabel("deployment cost (normalized)")
    ax.legend()
    ax.grid(alpha=0.3)
    return _save(fig, out_path)


def render_deploy_compare(bundle_dir, out_path):
    """Grouped bars: mean placement objective per method and network size."""
    path = Path(bundle_dir) / "deploy_compare.csv"
    rows = read_csv(path)
    require_columns(rows, ["k", "b", "method", "objective_mean", "objective_ci"], path)
    ks = sorted({int(r["k"]) for r in rows})
    methods = sorted({r["method"] for r in rows})
    fig, ax = plt.subplots(figsize=(6, 4))
    width = 0.8 / len(methods)
    for i, method in enumerate(methods):
        means, cis, xs = [], [], []
        for j, k in enumerate(ks):
            match = [r for r in rows if int(r["k"]) == k and r["method"] == method]
            if not match:
                continue
            xs.append(j + (i - (len(methods) - 1) / 2) * width)
            means.append(float(match[0]["objective_mean"]))
            cis.append(float(match[0]["objective_ci"]))
        ax.bar(xs, means, width=width, yerr=cis, capsize=3, label=method)
    ax.set_xticks(range(len(ks)))
    ax.set_xticklabels([f"K={k}" for k in ks])
    ax.set_ylabel("average interaction latency (s)")
    ax.legend()
    ax.grid(axis="y", alpha=0.3)
    return _save(fig, out_path)


def render_total_cost(bundle_dir, out_path):
    """Total average cost vs. content change probability, one line per policy."""
    path = Path(bundle_dir) / "total_cost.csv"
    rows = read_csv(path)
    require_columns(rows, ["policy", "q", "total_cost_mean", "total_cost_ci"], path)
    fig, ax = plt.subplots(figsize=(6, 4))
    for policy in sorted({r["policy"] for r in rows}):
        pts = sorted((float(r["q"]), float(r["total_cost_mean"]),
                      float(r["total_cost_ci"]))
                     for r in rows if r["policy"] == policy)
        ax.errorbar([p[0] for p in pts], [p[1] for p in pts],
                    yerr=[p[2] for p in pts], marker="o", markersize=3,
                    capsize=2, label=policy)
    ax.set_xlabel("content change probability q")
    ax.set_ylabel("total average cost per slot")
    ax.legend()
    ax.grid(alpha=0.3)
    return _save(fig, out_path)


def render_breakdown(bundle_dir, out_path):
    """Stacked staleness/update-cost components per policy and q.

    Refuses to render when the components do not sum to the total column
    within 1e-9: a broken estimator identity means the inputs are corrupt.
    """
    path = Path(bundle_dir) / "breakdown.csv"
    rows = read_csv(path)
    require_columns(rows, ["policy", "q", "avg_aoci", "avg_update_cost",
                           "total_cost"], path)
    for r in rows:
        gap = abs(float(r["avg_aoci"]) + float(r["avg_update_cost"])
                  - float(r["total_cost"]))
        if gap > BREAKDOWN_IDENTITY_TOL:
            raise FigureDataError(
                f"component sum differs from total by {gap:.3e} "
                f"(policy={r['policy']}, q={r['q']}) in {path}")
    policies = sorted({r["policy"] for r in rows})
    qs = sorted({float(r["q"]) for r in rows})
    fig, axes = plt.subplots(1, len(policies), figsize=(3.2 * len(policies), 4),
                             sharey=True, squeeze=False)
    for ax, policy in zip(axes[0], policies):
        sel = {float(r["q"]): r for r in rows if r["policy"] == policy}
        aoci = [float(sel[q]["avg_aoci"]) for q in qs if q in sel]
        cost = [float(sel[q]["avg_update_cost"]) for q in qs if q in sel]
        present = [q for q in qs if q in sel]
        ax.bar(present, aoci, width=0.06, label="staleness (AoCI)")
        ax.bar(present, cost, width=0.06, bottom=aoci, label="update cost")
        ax.plot(present, [a + c for a, c in zip(aoci, cost)], "k.-",
                markersize=4, linewidth=0.8, label="total")
        ax.set_title(policy)
        ax.set_xlabel("q")
        ax.grid(alpha=0.3)
    axes[0][0].set_ylabel("average cost per slot")
    axes[0][-1].legend(fontsize=8)
    return _save(fig, out_path)


RENDERERS = {
    "fig-convergence": render_convergence,
    "fig-deploy-compare": render_deploy_compare,
    "fig-total-cost": render_total_cost,
    "fig-breakdown": render_breakdown,
}


def render(figure_id, bundle_dir, out_path):
    """Dispatch on figure id; returns the written image path."""
    if figure_id not in RENDERERS:
        raise FigureDataError(
            f"unknown figure id {figure_id!r}; choose from {sorted(RENDERERS)}")
    return RENDERERS[figure_id](bundle_dir, out_path)
