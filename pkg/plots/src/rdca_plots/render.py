"""Figure rendering for simulator CSV artifacts.

Three panel types mirror the evaluation figures: message-size sweep bars,
baseline-vs-cache-pool comparison bars, and metric time series.  Rendering is
deterministic: fixed DPI, the Agg backend, and stripped date metadata make
re-rendering the same inputs byte-identical.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "rdca-plots"
import matplotlib.pyplot as plt

from .schema import PANEL_SCHEMAS

DPI = 120
PNG_METADATA = {"Software": "rdca-plots"}
SVG_METADATA = {"Date": None}


class SchemaError(Exception):
    """Input CSV does not match the published artifact schema."""


@dataclass
class FigureSpec:
    inputs: list[str]
    panel: str                     # SweepBars | TimeSeries | CompareBars
    output: str
    title: str = ""
    xlabel: str = ""
    ylabel: str = ""
    columns: list[str] = field(default_factory=list)   # TimeSeries selection

    def validate(self) -> None:
        if self.panel not in PANEL_SCHEMAS:
            raise SchemaError(f"unknown panel type {self.panel!r}")
        if not self.inputs:
            raise SchemaError("at least one input CSV is required")


def read_csv(path: str, panel: str) -> list[dict]:
    """Load one artifact, refusing header mismatches by naming the missing
    columns."""
    expected = PANEL_SCHEMAS[panel]
    with open(path, "r", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, no header") from None
        missing = [c for c in expected if c not in header]
        if missing:
            raise SchemaError(
                f"{path}: header does not match the {panel} schema; "
                f"missing columns: {', '.join(missing)}")
        rows = [dict(zip(header, line)) for line in reader if line]
    return rows


def _save(fig, output: str) -> None:
    out = Path(output)
    out.parent.mkdir(parents=True, exist_ok=True)
    if out.suffix == ".svg":
        fig.savefig(out, dpi=DPI, metadata=SVG_METADATA)
    else:
        fig.savefig(out, dpi=DPI, metadata=PNG_METADATA)
    plt.close(fig)


def _size_label(nbytes: int) -> str:
    if nbytes % (1024 * 1024) == 0:
        return f"{nbytes // (1024 * 1024)}M"
    if nbytes % 1024 == 0:
        return f"{nbytes // 1024}K"
    return str(nbytes)


def _empty_axes(spec: FigureSpec, note: str):
    warnings.warn(f"{spec.output}: {note}; rendering empty axes")
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.set_title(spec.title or spec.panel)
    ax.text(0.5, 0.5, note, ha="center", va="center",
            transform=ax.transAxes, color="gray")
    return fig


def render_sweep_bars(spec: FigureSpec, rows: list[dict]):
    if not rows:
        return _empty_axes(spec, "no sweep rows")
    rows = sorted(rows, key=lambda r: int(r["msg_size_bytes"]))
    labels = [_size_label(int(r["msg_size_bytes"])) for r in rows]
    goodput = [float(r["goodput_gbps"]) for r in rows]
    miss = [float(r["ddio_miss_rate"]) for r in rows]
    x = range(len(rows))
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar([i - 0.2 for i in x], goodput, width=0.4, label="goodput (Gbps)",
           color="#3b6ea5")
    ax2 = ax.twinx()
    ax2.bar([i + 0.2 for i in x], miss, width=0.4, label="DDIO miss rate",
            color="#c26d4a")
    ax.set_xticks(list(x))
    ax.set_xticklabels(labels)
    ax.set_xlabel(spec.xlabel or "message size")
    ax.set_ylabel(spec.ylabel or "goodput (Gbps)")
    ax2.set_ylabel("DDIO miss rate")
    ax2.set_ylim(0, 1.05)
    ax.set_title(spec.title or "throughput and miss rate vs message size")
    handles1, labels1 = ax.get_legend_handles_labels()
    handles2, labels2 = ax2.get_legend_handles_labels()
    ax.legend(handles1 + handles2, labels1 + labels2, loc="center right",
              fontsize=8)
    fig.tight_layout()
    return fig


def render_compare_bars(spec: FigureSpec, rows: list[dict]):
    if not rows:
        return _empty_axes(spec, "no comparison rows")
    keep = [r for r in rows if r["metric"] in
            ("goodput_gbps", "net_throughput_gbps", "cnp_count",
             "ddio_miss_rate", "pcie_stalls")]
    if not keep:
        keep = rows
    labels = [r["metric"] for r in keep]
    base = [float(r["baseline"]) for r in keep]
    jet = [float(r["jet"]) for r in keep]
    x = range(len(keep))
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.bar([i - 0.2 for i in x], [1.0] * len(keep), width=0.4,
           label="baseline (normalized)", color="#888888")
    norm = [j / b if b else 0.0 for b, j in zip(base, jet)]
    ax.bar([i + 0.2 for i in x], norm, width=0.4, label="cache pool",
           color="#3b6ea5")
    for i, (b, j, n) in enumerate(zip(base, jet, norm)):
        ax.annotate(f"x{n:.2f}" if b else "n/a", (i + 0.2, n),
                    ha="center", va="bottom", fontsize=8)
    ax.set_xticks(list(x))
    ax.set_xticklabels(labels, rotation=20, ha="right", fontsize=8)
    ax.set_ylabel(spec.ylabel or "relative to baseline")
    ax.set_title(spec.title or "baseline vs cache-resident pool")
    ax.legend(fontsize=8)
    fig.tight_layout()
    return fig


DEFAULT_SERIES = ["goodput_gbps", "net_throughput_gbps"]


def render_time_series(spec: FigureSpec, rows: list[dict]):
    if not rows:
        return _empty_axes(spec, "no samples")
    columns = spec.columns or DEFAULT_SERIES
    t = [int(r["time_ns"]) / 1e6 for r in rows]
    fig, ax = plt.subplots(figsize=(7, 4))
    for col in columns:
        ax.plot(t, [float(r[col]) for r in rows], label=col, linewidth=1.2)
    ax.set_xlabel(spec.xlabel or "time (ms)")
    ax.set_ylabel(spec.ylabel or "value")
    ax.set_title(spec.title or "metric time series")
    ax.legend(fontsize=8)
    fig.tight_layout()
    return fig


_RENDERERS = {
    "SweepBars": render_sweep_bars,
    "CompareBars": render_compare_bars,
    "TimeSeries": render_time_series,
}


def render(spec: FigureSpec) -> str:
    """Render the figure described by the spec; returns the output path."""
    spec.validate()
    rows = []
    for path in spec.inputs:
        rows.extend(read_csv(path, spec.panel))
    if spec.panel == "TimeSeries" and spec.columns:
        known = PANEL_SCHEMAS["TimeSeries"]
        unknown = [c for c in spec.columns if c not in known]
        if unknown:
            raise SchemaError(f"unknown metric columns: {', '.join(unknown)}")
    fig = _RENDERERS[spec.panel](spec, rows)
    _save(fig, spec.output)
    return spec.output
