"""Deterministic CSV-to-image rendering.

The same CSV bytes and spec always produce the same pixels: fixed Agg
backend, fixed geometry and rc settings, fixed PNG metadata.
"""

from __future__ import annotations

import json
import logging

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .spec import PlotSpec

logger = logging.getLogger(__name__)

RC = {
    "figure.figsize": (6.4, 4.4),
    "figure.dpi": 120,
    "savefig.dpi": 120,
    "font.family": "DejaVu Sans",
    "axes.grid": True,
    "grid.alpha": 0.3,
    "svg.hashsalt": "figplots",
}


class RenderError(ValueError):
    """CSV does not satisfy the figure's schema or data requirements."""


def load_table(csv_path: str):
    """Parse a fluctlab-style CSV: '#'-metadata preamble, header, rows."""
    metadata = {}
    columns = None
    rows = []
    with open(csv_path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("# "):
                key, _, val = line[2:].partition("=")
                metadata[key] = val
            elif columns is None:
                columns = line.split(",")
            elif line:
                rows.append(line.split(","))
    if columns is None:
        raise RenderError(f"{csv_path}: no header row found")
    table = {}
    for j, col in enumerate(columns):
        raw = [r[j] if j < len(r) else "" for r in rows]
        try:
            table[col] = np.array([float(v) if v else np.nan for v in raw])
        except ValueError:
            table[col] = np.array(raw, dtype=object)
    return metadata, columns, table, len(rows)


def _check_schema(spec: PlotSpec, columns, metadata) -> None:
    version = metadata.get("fluctlab schema_version")
    if version is not None and version.strip() != "1":
        raise RenderError(f"unsupported schema_version {version!r}")
    missing = [c for c in spec.columns_used() if c not in columns]
    if missing:
        raise RenderError(
            f"CSV is missing column(s) {', '.join(missing)} required by figure "
            f"{spec.figure_id!r}"
        )


def _series_label(group: str, value) -> str:
    if isinstance(value, float) and value == int(value):
        return f"{group}={int(value)}"
    return f"{group}={value}"


def make_figure(csv_path: str, spec: PlotSpec):
    """Build the matplotlib figure for a CSV; raises RenderError on bad input."""
    metadata, columns, table, n_rows = load_table(csv_path)
    _check_schema(spec, columns, metadata)
    if n_rows == 0:
        raise RenderError(f"{csv_path}: no data rows")

    keep = np.ones(n_rows, dtype=bool)
    if spec.row_filter:
        col, allowed = spec.row_filter
        keep &= np.isin(table[col], np.array(allowed, dtype=table[col].dtype))
    xs = table[spec.x]
    ys = table[spec.y]
    if xs.dtype == object or ys.dtype == object:
        raise RenderError(f"columns {spec.x!r}/{spec.y!r} must be numeric")
    finite = np.isfinite(xs) & np.isfinite(ys)
    if spec.drop_nan:
        dropped_nan = int(keep.sum() - (keep & finite).sum())
        if dropped_nan:
            logger.info("%s: dropping %d non-finite rows", spec.figure_id, dropped_nan)
        keep &= finite
    elif not np.all(finite[keep]):
        raise RenderError(f"non-finite values in {spec.x!r}/{spec.y!r}")

    for axis_name, scale, vals in ((spec.x, spec.xscale, xs), (spec.y, spec.yscale, ys)):
        bad = int((vals[keep] <= 0).sum()) if scale == "log" else 0
        if bad:
            if not spec.drop_nonpositive:
                raise RenderError(
                    f"column {axis_name!r} has {bad} nonpositive value(s) on a log axis; "
                    "set drop_nonpositive to exclude them explicitly"
                )
            logger.info("%s: dropping %d nonpositive rows for log axis %s",
                        spec.figure_id, bad, axis_name)
            keep &= vals > 0

    if not keep.any():
        raise RenderError(f"{csv_path}: no plottable rows left for {spec.figure_id!r}")

    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        if spec.group:
            groups = table[spec.group]
            for gval in sorted(set(np.asarray(groups[keep]).tolist())):
                sel = keep & (groups == gval)
                order = np.argsort(xs[sel], kind="stable")
                ax.plot(xs[sel][order], ys[sel][order], marker=".",
                        label=_series_label(spec.group, gval))
            ax.legend()
        else:
            order = np.argsort(xs[keep], kind="stable")
            ax.plot(xs[keep][order], ys[keep][order], marker=".")
        ax.set_xscale(spec.xscale)
        ax.set_yscale(spec.yscale)
        ax.set_xlabel(spec.xlabel or spec.x)
        ax.set_ylabel(spec.ylabel or spec.y)
        title = spec.title or spec.figure_id
        exp_id = metadata.get("experiment_id", "")
        ax.set_title(f"{title}" + (f"  [{exp_id}]" if exp_id else ""))
    return fig


def render(csv_path: str, spec: PlotSpec, out_path: str) -> str:
    """Render the figure to `out_path` (PNG); returns the path."""
    fig = make_figure(csv_path, spec)
    try:
        fig.savefig(out_path, format="png", metadata={"Software": "figplots"})
    finally:
        plt.close(fig)
    return out_path
