"""Render mspde CSV artifacts into figures.

Read-only consumers of the CSV schemas written by the ``mspde`` CLI; the
only numerics here are median/min/max aggregation over seeds. Field
heatmaps are rendered full-bleed (data pixels only, no decorations), so a
constant field produces a perfectly uniform image.
"""

import csv
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

KINDS = ("sv-decay", "error-vs-k", "field-heatmap", "mode-gallery")


class SchemaError(ValueError):
    """An input CSV does not carry the columns a plot kind needs."""

    def __init__(self, path, missing, header):
        super().__init__(
            f"{path}: missing column(s) {missing}; header is {header}")
        self.missing = missing


@dataclass
class PlotSpec:
    kind: str
    inputs: list
    output: str
    log_x: bool = False
    log_y: bool = False
    title: str = ""
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown figure kind '{self.kind}'")
        if not self.inputs:
            raise ValueError("at least one input CSV is required")


def read_table(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise SchemaError(path, ["<empty file>"], [])
    header = rows[0]
    return header, rows[1:]


def require_columns(path, header, needed):
    missing = [c for c in needed if c not in header]
    if missing:
        raise SchemaError(path, missing, header)
    return [header.index(c) for c in needed]


def aggregate_over_seeds(groups):
    """Per-group (median, min, max) of the error samples."""
    out = {}
    for key, values in groups.items():
        arr = np.asarray(values, dtype=float)
        out[key] = (float(np.median(arr)), float(arr.min()), float(arr.max()))
    return out


def _load_error_table(path):
    """Accepts both error schemas: eps,k,seed,error and k_m,seed,relative_error."""
    header, rows = read_table(path)
    if "error" in header and "k" in header:
        ik = header.index("k")
        ie = header.index("error")
        ieps = header.index("eps") if "eps" in header else None
    elif "relative_error" in header and "k_m" in header:
        ik = header.index("k_m")
        ie = header.index("relative_error")
        ieps = None
    else:
        raise SchemaError(path, ["error|relative_error", "k|k_m"], header)
    groups = {}
    for row in rows:
        eps = float(row[ieps]) if ieps is not None else None
        key = (eps, float(row[ik]))
        groups.setdefault(key, []).append(float(row[ie]))
    return groups


def _load_field(path):
    header, rows = read_table(path)
    if len(header) != 3:
        raise SchemaError(path, ["<three field columns>"], header)
    data = np.array([[float(v) for v in row] for row in rows])
    ax0 = np.unique(data[:, 0])
    ax1 = np.unique(data[:, 1])
    if ax0.size * ax1.size != data.shape[0]:
        raise SchemaError(path, ["<full tensor grid>"], header)
    values = np.full((ax0.size, ax1.size), np.nan)
    i0 = np.searchsorted(ax0, data[:, 0])
    i1 = np.searchsorted(ax1, data[:, 1])
    values[i0, i1] = data[:, 2]
    return header, ax0, ax1, values


def _render_sv_decay(spec):
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    for path in spec.inputs:
        header, rows = read_table(path)
        iv, ii, isn = require_columns(path, header,
                                      ["variant", "index", "sigma_normalized"])
        series = {}
        for row in rows:
            series.setdefault(row[iv], []).append(
                (float(row[ii]), float(row[isn])))
        stem = Path(path).stem
        for variant, pts in series.items():
            pts.sort()
            idx, vals = zip(*pts)
            label = variant if len(spec.inputs) == 1 else f"{stem}:{variant}"
            ax.plot(idx, vals, marker=".", lw=1.0, label=label)
    ax.set_yscale("log")
    if spec.log_x:
        ax.set_xscale("log")
    ax.set_xlabel("index")
    ax.set_ylabel("normalized singular value")
    ax.legend(fontsize=8)
    return fig


def _render_error_vs_k(spec):
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    for path in spec.inputs:
        groups = _load_error_table(path)
        stats = aggregate_over_seeds(groups)
        by_eps = {}
        for (eps, k), agg in stats.items():
            by_eps.setdefault(eps, []).append((k, agg))
        stem = Path(path).stem
        for eps, pts in sorted(by_eps.items(), key=lambda t: (t[0] is None, t[0])):
            pts.sort()
            ks = [p[0] for p in pts]
            med = [p[1][0] for p in pts]
            lo = [p[1][1] for p in pts]
            hi = [p[1][2] for p in pts]
            label = stem if eps is None else f"eps={eps:g}"
            line, = ax.plot(ks, med, marker="o", label=label)
            ax.fill_between(ks, lo, hi, alpha=0.25, color=line.get_color())
    ax.set_yscale("log")
    if spec.log_x:
        ax.set_xscale("log")
    ax.set_xlabel("random modes per patch")
    ax.set_ylabel("relative error (median, min-max band)")
    ax.legend(fontsize=8)
    return fig


def _render_field_heatmap(spec):
    _, _, _, values = _load_field(spec.inputs[0])
    fig = plt.figure(figsize=(4.0, 4.0 * values.shape[1] / values.shape[0]))
    ax = fig.add_axes([0.0, 0.0, 1.0, 1.0])
    ax.set_axis_off()
    ax.imshow(values.T, origin="lower", aspect="auto", cmap="viridis",
              interpolation="nearest")
    return fig


def _render_mode_gallery(spec):
    n = len(spec.inputs)
    fig, axes = plt.subplots(1, n, figsize=(3.0 * n, 3.2))
    if n == 1:
        axes = [axes]
    for ax, path in zip(axes, spec.inputs):
        _, _, _, values = _load_field(path)
        ax.imshow(values.T, origin="lower", aspect="auto", cmap="viridis",
                  interpolation="nearest")
        ax.set_title(Path(path).stem, fontsize=8)
        ax.set_xticks([])
        ax.set_yticks([])
    return fig


_RENDERERS = {
    "sv-decay": _render_sv_decay,
    "error-vs-k": _render_error_vs_k,
    "field-heatmap": _render_field_heatmap,
    "mode-gallery": _render_mode_gallery,
}


def render(spec):
    """Render one figure to spec.output and return the written path."""
    fig = _RENDERERS[spec.kind](spec)
    if spec.title:
        fig.suptitle(spec.title)
    out = Path(spec.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, dpi=110)
    plt.close(fig)
    return out
