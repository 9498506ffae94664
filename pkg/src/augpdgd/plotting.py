"""Figure rendering for the CLI report paths.

All functions write PNG files next to the delimited outputs; nothing is
shown interactively (the Agg backend is forced so headless runs work).
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_FIGSIZE = (7.0, 4.4)


def _new_axes(title=None, xlabel="t", ylabel=None):
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    if title:
        ax.set_title(title)
    ax.set_xlabel(xlabel)
    if ylabel:
        ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    return fig, ax


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_trajectory_figure(traj, path, title=None, max_components=12):
    """State components over time, plus the distance decay when attached."""
    n, m_i, m_e = traj.dims
    panels = 2 if traj.dist_to_ref is not None else 1
    fig, axes = plt.subplots(panels, 1, figsize=(_FIGSIZE[0], 3.2 * panels),
                             sharex=True, squeeze=False)
    ax = axes[0][0]
    labels = ([f"x_{i + 1}" for i in range(n)]
              + [f"lambda_{i + 1}" for i in range(m_i)]
              + [f"nu_{i + 1}" for i in range(m_e)])
    shown = min(traj.states.shape[1], max_components)
    for j in range(shown):
        ax.plot(traj.times, traj.states[:, j], lw=1.0, label=labels[j])
    if traj.states.shape[1] > shown:
        ax.plot(traj.times, traj.states[:, shown:], lw=0.5, alpha=0.4)
    ax.legend(fontsize=7, ncol=4, loc="upper right")
    ax.set_ylabel("state")
    if title:
        ax.set_title(title)
    if traj.dist_to_ref is not None:
        ax2 = axes[-1][0]
        ax2.semilogy(traj.times, np.maximum(traj.dist_to_ref, 1e-300), lw=1.2)
        ax2.set_ylabel("distance to reference")
    axes[-1][0].set_xlabel("t")
    for row in axes:
        row[0].grid(True, alpha=0.3)
    _save(fig, path)


def save_envelope_figure(traj, cert, path, title=None):
    """Measured distance against the certified exponential envelope."""
    fig, ax = _new_axes(title or "certified envelope", ylabel="distance")
    envelope = cert.M_beta * cert.d0 * np.exp(-cert.beta * traj.times)
    ax.semilogy(traj.times, np.maximum(traj.dist_to_ref, 1e-300),
                lw=1.2, label="trajectory")
    ax.semilogy(traj.times, envelope, "--", lw=1.2,
                label=f"envelope (beta={cert.beta:.3e}, M={cert.M_beta:.4f})")
    ax.legend(fontsize=8)
    _save(fig, path)


def save_counterexample_figure(report, path):
    """Distance integrals against the would-be envelope bound."""
    alphas = [row[0] for row in report.rows]
    integrals = [row[1] for row in report.rows]
    bounds = [row[2] for row in report.rows]
    ratios = [row[3] for row in report.rows]
    fig, axes = plt.subplots(1, 2, figsize=(9.5, 4.0))
    axes[0].loglog(alphas, integrals, "o-", lw=1.2, label="distance integral")
    axes[0].loglog(alphas, bounds, "s--", lw=1.2,
                   label=f"envelope bound (M={report.hypothetical_M:g}, "
                         f"xi={report.hypothetical_xi:g})")
    axes[0].set_xlabel("alpha")
    axes[0].legend(fontsize=8)
    axes[0].grid(True, alpha=0.3)
    axes[1].loglog(alphas, ratios, "o-", lw=1.2)
    axes[1].axhline(1.0, color="k", lw=0.8)
    axes[1].set_xlabel("alpha")
    axes[1].set_ylabel("integral / bound")
    axes[1].grid(True, alpha=0.3)
    if report.crossover_alpha is not None:
        axes[1].axvline(report.crossover_alpha, color="r", lw=0.8, ls=":")
    _save(fig, path)


def save_counterexample_trajectory_figure(traj, reference_states, path, title=None):
    """Numeric trajectory on top of the closed-form solution."""
    fig, ax = _new_axes(title or "flow vs closed form", ylabel="state")
    names = ("x", "lambda", "nu")
    for j in range(3):
        ax.plot(traj.times, traj.states[:, j], lw=1.4, label=f"{names[j]} (numeric)")
        ax.plot(traj.times, reference_states[:, j], "k--", lw=0.7)
    ax.legend(fontsize=8)
    _save(fig, path)


def save_power_figure(result, path):
    """Normalized distance decay for every instance, colored by ratio."""
    fig, ax = _new_axes("curtailment flow: normalized distance",
                        ylabel="|(x, lambda) - (x*, lambda*)| / |(x*, lambda*)|")
    cmap = plt.get_cmap("viridis")
    colors = {r: cmap(k / max(len(result.ratios) - 1, 1))
              for k, r in enumerate(result.ratios)}
    seen = set()
    for run in result.runs:
        label = None
        if run.ratio not in seen:
            label = f"d0 ratio {run.ratio:g}"
            seen.add(run.ratio)
        ax.semilogy(run.times, np.maximum(run.curve, 1e-300),
                    color=colors[run.ratio], lw=0.9, alpha=0.8, label=label)
    ax.legend(fontsize=8)
    _save(fig, path)
