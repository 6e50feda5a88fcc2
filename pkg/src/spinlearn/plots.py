"""Figure rendering for the report path.

Each curve-bearing experiment gets one PNG rendered next to its CSV. The CSV
stays canonical; figures are a reading aid, never an input.
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

__all__ = [
    "save_figure",
    "decay_figure",
    "sweep_figure",
    "band_figure",
    "influence_figure",
]

_STYLE = {
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 120,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 10,
}


def _new_axes(title, xlabel, ylabel):
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    return fig, ax


def save_figure(fig, path) -> str:
    fig.savefig(path, bbox_inches="tight")
    plt.close(fig)
    return str(path)


def decay_figure(radii, discrepancies, c_ssm, delta, path) -> str:
    fig, ax = _new_axes("Boundary influence decay", "radius",
                        "worst conditional swing")
    ax.semilogy(radii, [max(d, 1e-16) for d in discrepancies], "o-",
                label="measured")
    if delta is not None:
        fit = [c_ssm * (1.0 - delta) ** (r + 1) for r in radii]
        ax.semilogy(radii, fit, "--", label=f"fit C={c_ssm:.3g}, delta={delta:.3g}")
    ax.legend()
    return save_figure(fig, path)


def sweep_figure(ks, test_errors, oracle_errors, path) -> str:
    fig, ax = _new_axes("Degree sweep", "degree k", "error")
    ax.plot(ks, test_errors, "o-", label="test misclassification")
    if oracle_errors is not None:
        ax.plot(ks, oracle_errors, "s--", label="population optimum")
    ax.set_ylim(bottom=0)
    ax.legend()
    return save_figure(fig, path)


def band_figure(widths, bands, fitted_c, eps_reg, path) -> str:
    fig, ax = _new_axes("Anti-concentration bands", "interval width",
                        "band probability")
    ax.plot(widths, bands, "o-", label="measured band")
    line = [fitted_c * (w + eps_reg) for w in widths]
    ax.plot(widths, line, "--", label=f"C (width + eps), C={fitted_c:.3g}")
    ax.set_ylim(bottom=0)
    ax.legend()
    return save_figure(fig, path)


def influence_figure(values, bound, path) -> str:
    fig, ax = _new_axes("Influence of sampled concepts", "concept #",
                        "total influence")
    ax.bar(range(len(values)), values, label="influence")
    if bound is not None and math.isfinite(bound):
        ax.axhline(bound, color="k", linestyle="--", label=f"bound {bound:.3g}")
    ax.legend()
    return save_figure(fig, path)
