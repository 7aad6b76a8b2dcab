"""The six figure types rendered from run artifacts.

Styling lives in one table so the same run id always draws with the same
color/marker across reports; layout is deterministic for identical inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .schema import RunArtifact, SchemaError, load_runs

FIGURES = ("static_panel", "dynamic_panel", "eta_sweep", "n_sweep", "hg_error", "timing_bar")

# One entry per series slot, cycled in sorted-run order.
SERIES_STYLE = (
    {"color": "#1f77b4", "marker": "o"},
    {"color": "#d62728", "marker": "s"},
    {"color": "#2ca02c", "marker": "^"},
    {"color": "#9467bd", "marker": "D"},
    {"color": "#ff7f0e", "marker": "v"},
    {"color": "#8c564b", "marker": "x"},
)

RC_PARAMS = {
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 120,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 10,
    "svg.hashsalt": "obo-plot",
}


@dataclass(frozen=True)
class PlotSpec:
    input_dir: Path
    figure: str
    out_path: Path
    log_y: bool = False

    def __post_init__(self):
        if self.figure not in FIGURES:
            raise SchemaError(f"unknown figure {self.figure!r}; expected one of {FIGURES}")


def _style(i):
    return SERIES_STYLE[i % len(SERIES_STYLE)]


def _marker_stride(n_points):
    return max(1, n_points // 12)


def _optimizer_label(run: RunArtifact) -> str:
    name = str(run.summary.get("optimizer", run.run_id))
    k = run.summary["config"]["optimizer_cfg"]["k_window"]
    return f"{name.upper()}-{k}"


def _sweep_label(run: RunArtifact, field: str, symbol: str) -> str:
    value = run.summary["config"]["optimizer_cfg"][field]
    return f"{symbol} = {value:g}"


def _regret_panel(ax, runs, label_of, log_y):
    for i, run in enumerate(runs):
        t = run.column("t")
        cum = run.column("blr_cumulative")
        ax.plot(t, cum, label=label_of(run), markevery=_marker_stride(len(t)),
                markersize=4, **_style(i))
    ax.set_xlabel("round")
    ax.set_ylabel("cumulative windowed local regret")
    if log_y:
        ax.set_yscale("log")
    ax.legend()


def render(spec: PlotSpec) -> Path:
    """Render the requested figure; returns the written path.

    Input files are never modified; any schema drift aborts before any
    drawing happens.
    """
    runs = load_runs(spec.input_dir)
    with plt.rc_context(RC_PARAMS):
        fig, ax = plt.subplots()
        if spec.figure in ("static_panel", "dynamic_panel"):
            _regret_panel(ax, runs, _optimizer_label, spec.log_y)
            ax.set_title("static setup" if spec.figure == "static_panel" else "dynamic setup")
        elif spec.figure == "eta_sweep":
            _regret_panel(ax, runs, lambda r: _sweep_label(r, "eta", "η"), spec.log_y)
            ax.set_title("effect of the averaging weight")
        elif spec.figure == "n_sweep":
            _regret_panel(ax, runs, lambda r: _sweep_label(r, "n_inner", "N"), spec.log_y)
            ax.set_title("effect of inner steps per round")
        elif spec.figure == "hg_error":
            for i, run in enumerate(runs):
                t = run.column("t")
                ax.plot(t, run.column("hg_error"), label=_optimizer_label(run),
                        markevery=_marker_stride(len(t)), markersize=4, **_style(i))
            ax.set_xlabel("round")
            ax.set_ylabel("hypergradient estimation error (squared)")
            ax.set_yscale("log")
            ax.legend()
            ax.set_title("hypergradient-error decay")
        elif spec.figure == "timing_bar":
            labels = [_optimizer_label(run) for run in runs]
            seconds = [run.summary["wallclock"]["step_total_ns"] / 1e9 for run in runs]
            bars = ax.bar(labels, seconds, color=[_style(i)["color"] for i in range(len(runs))])
            ax.bar_label(bars, fmt="%.2fs")
            ax.set_ylabel("optimizer wallclock (s)")
            ax.set_title("per-run step time")
        out = Path(spec.out_path)
        out.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(out, metadata=_stable_metadata(out))
        plt.close(fig)
    return out


def _stable_metadata(out: Path):
    # Strip writer-dependent metadata so identical inputs give identical bytes.
    suffix = out.suffix.lower()
    if suffix == ".png":
        return {"Software": "obo-plot"}
    if suffix == ".svg":
        return {"Date": None, "Creator": "obo-plot"}
    return None
