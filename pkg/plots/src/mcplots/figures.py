"""Figure builders over the experiment CSV schemas.

Three figure kinds plus their log-scale variants:

* ``layer-curves``: per-layer best losses for the trained-subnetwork and
  dropout experiments, mean with a 95% confidence band across model seeds,
  and the reference model loss as a dotted horizontal line.
* ``path-loss``: loss along one or more parameter paths against t.
* ``width-sweep``: max-over-layers best loss against hidden width.

Rendering is a pure function of the CSV contents: fixed style, no clock or
randomness, so re-rendering reproduces the same image.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .csvio import read_path_report, read_summaries

KINDS = ("layer-curves", "path-loss", "width-sweep")

_SERIES_STYLE = {
    "subnet-bound": dict(color="tab:blue", label="optimized subnetworks"),
    "dropout": dict(color="tab:orange", label="dropout + rescale"),
}
_REF_STYLE = dict(color="tab:green", linestyle=":", label="trained model")
_CI_FACTOR = 1.96
_MIN_SEEDS_FOR_BAND = 3


@dataclass
class FigureSpec:
    kind: str
    inputs: list[str]
    out: str
    log_scale: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}")
        if not self.inputs:
            raise ValueError("need at least one input CSV")
        for path in self.inputs:
            if not os.path.exists(path):
                raise FileNotFoundError(path)


def mean_and_band(values) -> tuple[float, float | None]:
    """Mean plus the 95% normal-approximation half-width across seeds;
    the band is omitted below three seeds."""
    arr = np.asarray(list(values), dtype=np.float64)
    mean = float(arr.mean())
    if arr.size < _MIN_SEEDS_FOR_BAND:
        return mean, None
    half = _CI_FACTOR * float(arr.std(ddof=1)) / math.sqrt(arr.size)
    return mean, half


def _group_series(rows, x_key, reduce_key="best_loss"):
    """experiment -> x -> per-seed values (max-reduced within a seed when
    several layers share one x, as in the width sweep)."""
    series: dict[str, dict[int, dict[int, float]]] = {}
    for row in rows:
        exp = series.setdefault(row["experiment"], {})
        per_x = exp.setdefault(row[x_key], {})
        seed = row["seed"]
        per_x[seed] = max(per_x.get(seed, -math.inf), row[reduce_key])
    return series


def _collect_curve(per_x):
    xs = sorted(per_x)
    means, lows, highs = [], [], []
    for x in xs:
        mean, half = mean_and_band(per_x[x].values())
        means.append(mean)
        lows.append(mean - half if half is not None else mean)
        highs.append(mean + half if half is not None else mean)
    return xs, means, lows, highs


def _new_axes(spec: FigureSpec):
    fig, ax = plt.subplots(figsize=(5.0, 3.4), dpi=150)
    if spec.log_scale:
        ax.set_yscale("log")
    return fig, ax


def render(spec: FigureSpec) -> dict:
    """Build the figure, write it to spec.out, and return the plotted
    series (for inspection and tests)."""
    if spec.kind == "path-loss":
        data = _render_path_loss(spec)
    elif spec.kind == "layer-curves":
        data = _render_layer_curves(spec)
    else:
        data = _render_width_sweep(spec)
    return data


def _finish(fig, ax, spec, data):
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    os.makedirs(os.path.dirname(os.path.abspath(spec.out)), exist_ok=True)
    fig.savefig(spec.out, metadata={"Software": "mcplots"})
    plt.close(fig)
    return data


def _render_layer_curves(spec: FigureSpec) -> dict:
    rows = read_summaries(spec.inputs)
    series = _group_series(rows, "layer_l")
    fig, ax = _new_axes(spec)
    data = {"kind": spec.kind, "series": {}}
    for exp, per_x in sorted(series.items()):
        xs, means, lows, highs = _collect_curve(per_x)
        style = _SERIES_STYLE.get(exp, dict(label=exp))
        ax.plot(xs, means, marker="o", markersize=3, **style)
        if any(l != m for l, m in zip(lows, means)):
            ax.fill_between(xs, lows, highs, alpha=0.2,
                            color=style.get("color"))
        data["series"][exp] = {"x": xs, "mean": means, "low": lows, "high": highs}
    ref_values = {}
    for row in rows:
        ref_values.setdefault(row["seed"], row["ref_loss"])
    ref = float(np.mean(list(ref_values.values())))
    ax.axhline(ref, **_REF_STYLE)
    data["reference"] = ref
    ax.set_xlabel("layer")
    ax.set_ylabel("training loss")
    return _finish(fig, ax, spec, data)


def _render_path_loss(spec: FigureSpec) -> dict:
    fig, ax = _new_axes(spec)
    data = {"kind": spec.kind, "series": {}}
    for path in spec.inputs:
        rows = read_path_report(path)
        ts = [r["t"] for r in rows]
        losses = [r["train_loss"] for r in rows]
        label = os.path.splitext(os.path.basename(path))[0]
        ax.plot(ts, losses, label=label)
        data["series"][label] = {"x": ts, "loss": losses}
    ax.set_xlabel("t")
    ax.set_ylabel("training loss")
    return _finish(fig, ax, spec, data)


def _render_width_sweep(spec: FigureSpec) -> dict:
    rows = read_summaries(spec.inputs)
    series = _group_series(rows, "width")
    fig, ax = _new_axes(spec)
    data = {"kind": spec.kind, "series": {}}
    for exp, per_x in sorted(series.items()):
        xs, means, lows, highs = _collect_curve(per_x)
        style = _SERIES_STYLE.get(exp, dict(label=exp))
        ax.plot(xs, means, marker="o", markersize=3, **style)
        if any(l != m for l, m in zip(lows, means)):
            ax.fill_between(xs, lows, highs, alpha=0.2,
                            color=style.get("color"))
        data["series"][exp] = {"x": xs, "mean": means, "low": lows, "high": highs}
    ax.set_xscale("log", base=2)
    ax.set_xlabel("hidden width")
    ax.set_ylabel("max training loss over layers")
    return _finish(fig, ax, spec, data)
