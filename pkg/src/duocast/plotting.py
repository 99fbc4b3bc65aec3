"""Matplotlib rendering for report figures.

Charts are written as SVG with a fixed hash salt and no embedded timestamp,
so identical inputs produce byte-identical files.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg", force=True)

import matplotlib.pyplot as plt  # noqa: E402

_SVG_KWARGS = {"format": "svg", "metadata": {"Date": None}}


def _configure():
    plt.rcParams["svg.hashsalt"] = "duocast"
    plt.rcParams["figure.autolayout"] = True


def render_forecast(dates, actual, predicted, symbol: str, path) -> None:
    """Line chart of actual vs one-step-ahead predicted close."""
    _configure()
    fig, ax = plt.subplots(figsize=(10, 4.5))
    ax.plot(dates, actual, color="#2c3e50", linewidth=1.4, label="actual close")
    ax.plot(dates, predicted, color="#e74c3c", linewidth=1.2, linestyle="--",
            label="predicted close")
    ax.set_title(f"{symbol}: forecast vs actual close")
    ax.set_xlabel("date")
    ax.set_ylabel("close")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.autofmt_xdate()
    fig.savefig(path, **_SVG_KWARGS)
    plt.close(fig)


def render_rmse_bars(labels, values, path) -> None:
    """Bar chart comparing per-variant RMSE on the test split."""
    _configure()
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.bar(range(len(labels)), values, color="#4a7aa7")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=20, ha="right")
    ax.set_ylabel("RMSE (normalized units)")
    ax.set_title("Test RMSE by model variant")
    ax.grid(True, axis="y", alpha=0.3)
    fig.savefig(path, **_SVG_KWARGS)
    plt.close(fig)
