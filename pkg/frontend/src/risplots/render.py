"""Render figures from the simulation harness CSV files.

Input schemas (documented by the simulation package):

- curve CSV: header ``curve,config_hash,snr_db,ber,errors,bits,
  se_descent_ber,se_ascent_ber,seconds``; one row per sweep point, grouped
  by the ``curve`` label.
- samples CSV (decoder characterization): header ``llr,bit``; one decoder
  LLR sample per row with the transmitted bit.

Rendering never recomputes any science; it only draws what the CSVs contain.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

KINDS = ("ber-curve", "se-overlay", "pdf-histogram")

CURVE_FIELDS = ["curve", "config_hash", "snr_db", "ber", "errors", "bits",
                "se_descent_ber", "se_ascent_ber", "seconds"]
SAMPLE_FIELDS = ["llr", "bit"]


class SchemaError(ValueError):
    pass


@dataclass(frozen=True)
class PlotSpec:
    kind: str
    inputs: tuple[str, ...]
    output: str
    x_range: tuple[float, float] | None = None
    y_range: tuple[float, float] | None = None
    title: str = ""
    bins: int = 60

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"unknown figure kind {self.kind!r}")
        if not self.inputs:
            raise SchemaError("at least one input CSV is required")


def load_spec(path: str) -> PlotSpec:
    if path.endswith(".toml"):
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    else:
        with open(path) as fh:
            raw = json.load(fh)
    return PlotSpec(
        kind=raw.get("kind", ""),
        inputs=tuple(raw.get("inputs", ())),
        output=raw["output"],
        x_range=tuple(raw["x_range"]) if "x_range" in raw else None,
        y_range=tuple(raw["y_range"]) if "y_range" in raw else None,
        title=raw.get("title", ""),
        bins=raw.get("bins", 60),
    )


def _read_rows(path: str, fields: list[str]) -> list[dict]:
    with open(path) as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or list(reader.fieldnames) != fields:
            raise SchemaError(
                f"{path}: expected columns {','.join(fields)}, "
                f"got {reader.fieldnames and ','.join(reader.fieldnames)}")
        rows = list(reader)
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    return rows


def _curves(path: str) -> dict[str, dict[str, np.ndarray]]:
    rows = _read_rows(path, CURVE_FIELDS)
    out: dict[str, dict[str, list]] = {}
    for row in rows:
        c = out.setdefault(row["curve"], {"snr_db": [], "ber": [],
                                          "descent": [], "ascent": []})
        c["snr_db"].append(float(row["snr_db"]))
        c["ber"].append(float(row["ber"]))
        c["descent"].append(float(row["se_descent_ber"]))
        c["ascent"].append(float(row["se_ascent_ber"]))
    return {k: {kk: np.asarray(vv) for kk, vv in v.items()}
            for k, v in out.items()}


def _finish(ax, spec: PlotSpec):
    if spec.x_range:
        ax.set_xlim(*spec.x_range)
    if spec.y_range:
        ax.set_ylim(*spec.y_range)
    if spec.title:
        ax.set_title(spec.title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()


def build(spec: PlotSpec):
    """Build the figure for a spec without saving; returns (fig, ax)."""
    return {"ber-curve": _ber_curve,
            "se-overlay": _se_overlay,
            "pdf-histogram": _pdf_histogram}[spec.kind](spec)


def _ber_curve(spec: PlotSpec):
    fig, ax = plt.subplots(figsize=(6, 4.5))
    markers = "osd^vp*"
    i = 0
    for path in spec.inputs:
        for label, c in _curves(path).items():
            keep = np.isfinite(c["ber"]) & (c["ber"] > 0)
            ax.semilogy(c["snr_db"][keep], c["ber"][keep],
                        marker=markers[i % len(markers)], label=label)
            i += 1
    ax.set_xlabel("SNR / transmit power [dB]")
    ax.set_ylabel("BER")
    _finish(ax, spec)
    return fig, ax


def _se_overlay(spec: PlotSpec):
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for path in spec.inputs:
        for label, c in _curves(path).items():
            x = c["snr_db"]
            keep = np.isfinite(c["descent"]) & (c["descent"] > 0)
            ax.semilogy(x[keep], c["descent"][keep], "-",
                        label=f"{label} SE descent")
            keep = np.isfinite(c["ascent"]) & (c["ascent"] > 0)
            ax.semilogy(x[keep], c["ascent"][keep], "--",
                        label=f"{label} SE ascent")
            keep = np.isfinite(c["ber"]) & (c["ber"] > 0)
            if keep.any():
                ax.semilogy(x[keep], c["ber"][keep], "o", linestyle="none",
                            label=f"{label} simulated")
    ax.set_xlabel("SNR / transmit power [dB]")
    ax.set_ylabel("BER")
    _finish(ax, spec)
    return fig, ax


def _pdf_histogram(spec: PlotSpec):
    fig, ax = plt.subplots(figsize=(6, 4.5))
    rows = []
    for path in spec.inputs:
        rows.extend(_read_rows(path, SAMPLE_FIELDS))
    llr = np.array([float(r["llr"]) for r in rows])
    bit = np.array([int(r["bit"]) for r in rows])
    grid = np.linspace(llr.min(), llr.max(), 400)
    for b, color in ((0, "tab:blue"), (1, "tab:orange")):
        vals = llr[bit == b]
        if vals.size == 0:
            raise SchemaError(f"no samples for bit {b}")
        ax.hist(vals, bins=spec.bins, density=True, alpha=0.4, color=color,
                label=f"bit {b} samples")
        mu, sd = float(np.mean(vals)), float(np.std(vals))
        ax.plot(grid, np.exp(-0.5 * ((grid - mu) / sd) ** 2)
                / (sd * math.sqrt(2 * math.pi)), color=color,
                label=f"bit {b} Gaussian fit")
    ax.set_xlabel("decoder LLR")
    ax.set_ylabel("density")
    _finish(ax, spec)
    return fig, ax


def render(spec: PlotSpec) -> str:
    """Render one figure; returns the output path."""
    fig, _ = build(spec)
    fig.savefig(spec.output, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return spec.output
