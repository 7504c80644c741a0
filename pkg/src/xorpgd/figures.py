"""Figure rendering for the CLI report paths.

Every figure is written next to its CSV with a deterministic layout; the
Agg backend keeps this headless-safe.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["render_trace", "render_frequencies", "render_savings", "render_objectives"]


def render_trace(records: list[dict], path) -> None:
    """Objective estimate and feasibility residual against iteration."""
    ks = [r["k"] for r in records]
    obj = [r["obj_estimate"] for r in records]
    resid = [r["feasibility_residual"] for r in records]
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(6.4, 6.0), sharex=True)
    ax1.plot(ks, obj, lw=1.2, color="tab:blue")
    ax1.set_ylabel("objective estimate")
    ax1.grid(alpha=0.3)
    ax2.semilogy(ks, [max(r, 1e-16) for r in resid], lw=1.2, color="tab:red")
    ax2.set_ylabel("feasibility residual")
    ax2.set_xlabel("iteration")
    ax2.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_frequencies(rows: list[dict], path) -> None:
    """Exact vs empirical assignment probabilities."""
    n = len(rows)
    idx = np.arange(n)
    width = 0.4
    fig, ax = plt.subplots(figsize=(max(6.4, 0.25 * n), 4.2))
    ax.bar(idx - width / 2, [r["exact_p"] for r in rows], width, label="exact")
    ax.bar(idx + width / 2, [r["empirical_p"] for r in rows], width, label="empirical")
    ax.set_xlabel("assignment index")
    ax.set_ylabel("probability")
    ax.legend()
    if n <= 32:
        ax.set_xticks(idx)
        ax.set_xticklabels([r["assignment"] for r in rows], rotation=90, fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_savings(rows: list[dict], reference: str, path) -> None:
    """Mean objective savings of the reference method against each other."""
    methods = sorted({r["method"] for r in rows} - {reference})
    cells = sorted({(r["size"], r["seed"]) for r in rows})
    ref = {(r["size"], r["seed"]): r["objective"] for r in rows if r["method"] == reference}
    means = []
    for m in methods:
        vals = []
        for cell in cells:
            other = [r["objective"] for r in rows if r["method"] == m
                     and (r["size"], r["seed"]) == cell]
            if other and cell in ref and other[0] != 0.0:
                vals.append(100.0 * (other[0] - ref[cell]) / other[0])
        means.append(np.mean(vals) if vals else 0.0)
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.bar(range(len(methods)), means, color="tab:green")
    ax.axhline(0.0, color="k", lw=0.8)
    ax.set_xticks(range(len(methods)))
    ax.set_xticklabels(methods, rotation=20)
    ax.set_ylabel(f"mean savings of {reference} (%)")
    ax.grid(alpha=0.3, axis="y")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_objectives(rows: list[dict], path) -> None:
    """Exact objective per method across benchmark cells."""
    methods = sorted({r["method"] for r in rows})
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for m in methods:
        pts = sorted(
            (f'{r["size"]}/{r["seed"]}', r["objective"]) for r in rows if r["method"] == m
        )
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", ms=3, lw=1.0, label=m)
    ax.set_xlabel("instance (size/seed)")
    ax.set_ylabel("exact objective")
    ax.tick_params(axis="x", rotation=60, labelsize=7)
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
