"""Render convergence figures from training traces.

The delimited trace files stay the contract; these helpers draw the same
numbers as PNG files next to them so a benchmark run is inspectable at a
glance. The Agg backend is forced so rendering works headless.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .optimizer import TrainTrace  # noqa: E402

_METRIC_LABELS = {
    "train_loss": "training loss",
    "train_error01": "training zero-one error",
    "eval_loss": "held-out loss",
    "eval_error01": "held-out zero-one error",
}


def render_traces(traces: dict[str, TrainTrace], path, metric: str = "train_loss",
                  logy: bool = True, title: str | None = None) -> None:
    """One curve per named trace; rows missing the metric are skipped."""
    if metric not in _METRIC_LABELS:
        raise ValueError(f"unknown metric {metric!r}")
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for name, trace in traces.items():
        pts = [(c.iteration, getattr(c, metric)) for c in trace.checkpoints
               if getattr(c, metric) is not None]
        if not pts:
            continue
        xs, ys = zip(*pts)
        ax.plot(xs, ys, label=name, linewidth=1.4)
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel("iteration")
    ax.set_ylabel(_METRIC_LABELS[metric])
    if title:
        ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_comparison(traces: dict[str, TrainTrace], outdir, stem: str = "comparison") -> list[str]:
    """Loss and error figures for a set of arms; returns the written paths."""
    written = []
    for metric, suffix, logy in (
        ("train_loss", "loss", True),
        ("train_error01", "error", False),
        ("eval_loss", "eval_loss", True),
    ):
        if not any(getattr(c, metric) is not None
                   for t in traces.values() for c in t.checkpoints):
            continue
        path = f"{outdir}/{stem}_{suffix}.png"
        render_traces(traces, path, metric=metric, logy=logy)
        written.append(path)
    return written
