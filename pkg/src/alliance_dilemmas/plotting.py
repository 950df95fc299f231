"""PNG renderings written next to the CSV outputs (headless Agg backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.fontsize": 8,
    "legend.frameon": False,
    "savefig.dpi": 120,
    # fixed metadata keeps repeated renders byte-identical
    "svg.hashsalt": "alliance",
}
PNG_METADATA = {"Software": None}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, metadata=PNG_METADATA)
    plt.close(fig)
    return path


def epsilon_histogram(edges, counts, path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4, 3))
        ax.bar(edges[:-1], counts, width=np.diff(edges), align="edge", color="0.5", edgecolor="k",
               linewidth=0.5)
        ax.set_xlabel("epsilon (range of payoff sums)")
        ax.set_ylabel("games")
        return _save(fig, path)


def dilemma_counts(grid, games_per_gridpoint, gridpoints_per_game, path) -> Path:
    with plt.rc_context(STYLE):
        fig, (a, b) = plt.subplots(1, 2, figsize=(7, 3))
        a.bar(grid, games_per_gridpoint, width=0.8 * (grid[1] - grid[0]), color="0.5")
        a.set_xlabel("stubborn P(action 0)")
        a.set_ylabel("games with a dilemma")
        b.bar(np.arange(len(gridpoints_per_game)), gridpoints_per_game, color="0.5")
        b.set_xlabel("dilemma gridpoints per game")
        b.set_ylabel("games")
        return _save(fig, path)


def dynamics_trajectory(steps, policies, payoffs, path) -> Path:
    with plt.rc_context(STYLE):
        fig, (a, b) = plt.subplots(1, 2, figsize=(7, 3))
        for i in range(policies.shape[1]):
            a.plot(steps, policies[:, i], label=f"player {i}")
            b.plot(steps, payoffs[:, i], label=f"player {i}")
        a.set_xlabel("step")
        a.set_ylabel("P(action 0)")
        b.set_xlabel("step")
        b.set_ylabel("expected payoff")
        a.legend()
        return _save(fig, path)


def training_curves(updates, curves: dict[str, tuple[np.ndarray, np.ndarray]], ylabel, path) -> Path:
    """``curves`` maps a label to (mean, confidence half-width) arrays."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3))
        for label, (mean, half) in curves.items():
            ax.plot(updates, mean, label=label)
            ax.fill_between(updates, mean - half, mean + half, alpha=0.25)
        ax.set_xlabel("update")
        ax.set_ylabel(ylabel)
        ax.legend()
        return _save(fig, path)


def regression_scatter(x, y, slope, intercept, path) -> Path:
    rng = np.random.default_rng(0)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4, 3))
        ax.scatter(np.asarray(x) + rng.uniform(-0.15, 0.15, len(x)), y, s=8, alpha=0.6, color="k")
        xs = np.linspace(min(x), max(x), 2)
        ax.plot(xs, intercept + slope * xs, color="C3")
        ax.set_xlabel("contracts signed")
        ax.set_ylabel("chips accrued")
        return _save(fig, path)
