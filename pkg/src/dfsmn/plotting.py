"""Report figures written next to the CLI's text output."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .topology import TopologySpec  # noqa: E402


def simpleaxis(ax):
    ax.spines["top"].set_visible(False)
    ax.spines["right"].set_visible(False)
    ax.get_xaxis().tick_bottom()
    ax.get_yaxis().tick_left()


def plot_training_trace(trace: list[dict], path) -> Path:
    """Loss and frame accuracy per epoch, side by side."""
    epochs = [r["epoch"] for r in trace]
    fig, (ax_loss, ax_acc) = plt.subplots(1, 2, figsize=(8, 3.2))
    ax_loss.plot(epochs, [r["loss"] for r in trace], marker="o", lw=1.5)
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("cross entropy")
    ax_acc.plot(epochs, [100 * r["accuracy"] for r in trace], marker="o", lw=1.5, color="C1")
    ax_acc.set_xlabel("epoch")
    ax_acc.set_ylabel("frame accuracy (%)")
    for ax in (ax_loss, ax_acc):
        simpleaxis(ax)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_latency(spec: TopologySpec, path, frame_period_ms: float = 10.0) -> Path:
    # cumulative lookahead delay after each memory block, stacking shown as block 0
    contrib = [spec.context_right] + [b.n2 * b.s2 for b in spec.blocks]
    cumulative = [sum(contrib[: k + 1]) for k in range(len(contrib))]
    fig, ax = plt.subplots(figsize=(6, 3.2))
    labels = ["stack"] + [str(i + 1) for i in range(len(spec.blocks))]
    ax.bar(labels, contrib, color="0.6", label="per layer")
    ax.step(range(len(cumulative)), cumulative, where="mid", color="C3", lw=2, label="cumulative")
    ax.set_xlabel("layer")
    ax.set_ylabel("lookahead (frames)")
    secondary = ax.secondary_yaxis("right", functions=(lambda f: f * frame_period_ms, lambda ms: ms / frame_period_ms))
    secondary.set_ylabel("ms")
    ax.legend(frameon=False)
    ax.spines["top"].set_visible(False)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path)
    plt.close(fig)
    return path
