"""Figure rendering for the report path; PNG files next to the CSV output."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import matplotlib.tri as mtri
import numpy as np

__all__ = [
    "save_solution_figure",
    "save_checks_figure",
    "save_sweep_figure",
    "save_kernel_figure",
]


def _triangulation(mesh) -> mtri.Triangulation:
    return mtri.Triangulation(mesh.nodes[:, 0], mesh.nodes[:, 1], mesh.triangles)


def save_solution_figure(path, mesh, fields: dict) -> None:
    """Nodal fields as filled triangle plots, one panel per field."""
    tri = _triangulation(mesh)
    names = list(fields)
    fig, axes = plt.subplots(1, len(names), figsize=(4.2 * len(names), 3.6), squeeze=False)
    for ax, name in zip(axes[0], names):
        im = ax.tripcolor(tri, fields[name], shading="gouraud", cmap="viridis")
        ax.set_aspect("equal")
        ax.set_title(name)
        fig.colorbar(im, ax=ax, shrink=0.85)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_checks_figure(path, record) -> None:
    """Slack of every pass/fail check against the unit line."""
    rows = [(c.name, c.slack, bool(c.passed)) for c in record.checks if c.passed is not None]
    if not rows:
        return
    names = [r[0] for r in rows]
    slacks = np.array([r[1] for r in rows])
    ok = [r[2] for r in rows]
    fig, ax = plt.subplots(figsize=(7.0, 0.4 * len(rows) + 1.6))
    colors = ["tab:blue" if flag else "tab:red" for flag in ok]
    ax.barh(np.arange(len(rows)), np.maximum(slacks, 1e-18), color=colors)
    ax.set_yticks(np.arange(len(rows)), names, fontsize=8)
    ax.axvline(1.0, color="k", lw=0.8, ls="--")
    ax.set_xscale("log")
    ax.set_xlabel("slack (value / bound)")
    ax.invert_yaxis()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_sweep_figure(path, rows: list[dict]) -> None:
    """Continuation behavior: successive differences and the vanishing term vs eps."""
    by_ref: dict = {}
    for row in rows:
        by_ref.setdefault(row["refinement"], []).append(row)
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.0, 3.6))
    for ref, rws in sorted(by_ref.items()):
        eps = np.array([r["eps"] for r in rws])
        diffs = np.array([r["diff_prev"] for r in rws])
        vanish = np.array([r["vanish_max_value"] for r in rws])
        have = diffs > 0
        if have.any():
            ax1.loglog(eps[have], diffs[have], "o-", label=f"refinement {ref}")
        ax2.loglog(eps, np.maximum(np.abs(vanish), 1e-300), "s-", label=f"refinement {ref}")
    ax1.set_xlabel("eps")
    ax1.set_ylabel("successive difference norm")
    ax2.set_xlabel("eps")
    ax2.set_ylabel("max |vanishing term|")
    for ax in (ax1, ax2):
        ax.legend(fontsize=8)
        ax.grid(alpha=0.3, which="both")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_kernel_figure(path, table: dict) -> None:
    """The squashing map, its derivative, the change of variable, and the
    square-root primitive over the tabulated grid."""
    s = np.asarray(table["s"])
    pos = s > 0
    fig, axes = plt.subplots(2, 2, figsize=(9.0, 6.4))
    panels = [
        ("squash", "squash", "linear"),
        ("squash_deriv", "squash derivative", "log"),
        ("transform", "change of variable", "log"),
        ("sqrt_primitive", "sqrt primitive", "log"),
    ]
    for ax, (key, title, yscale) in zip(axes.ravel(), panels):
        vals = np.asarray(table[key])
        ax.plot(s[pos], vals[pos])
        ax.set_xscale("log")
        ax.set_yscale(yscale)
        ax.set_title(title)
        ax.grid(alpha=0.3, which="both")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
