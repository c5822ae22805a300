"""Static SVG line plots of monitor time series (one file per group)."""

from __future__ import annotations

import io
import json
from pathlib import Path

import numpy as np

from ..analytics import flatten_row

GROUPS = {
    "extremes": ("hatL", "hatU", "mL", "mU"),
    "partial_sums": ("hatL_k", "hatU_k", "mL_k", "mU_k"),
    "energy": ("phi_norm_sq", "theta_norm_sq", "grad_energy"),
    "hym": ("hym",),
    "drift": ("det_drift", "trF_drift"),
    "distance": ("hn_distance", "limit_distance", "eig_variance"),
    "pair": ("pair_theta_L2", "pair_eig_L2", "pair_cond", "pair_trace_gap"),
}
LOG_GROUPS = ("energy", "drift", "distance", "pair")

_RC = {"svg.hashsalt": "hymflow", "svg.fonttype": "path", "path.simplify": False}


def _columns(flat_rows, prefixes):
    cols = []
    for c in flat_rows[0]:
        head = c.split(".", 1)[0]
        if head in prefixes:
            cols.append(c)
    return cols


def render_trace(rows: list, title: str = "") -> dict:
    """Map group name -> SVG text. Groups without data are skipped."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if not rows:
        return {}
    flat = [flatten_row(r) for r in rows]
    t = np.array([r["t"] for r in flat])
    out = {}
    with matplotlib.rc_context(_RC):
        for group, prefixes in GROUPS.items():
            cols = _columns(flat, prefixes)
            if not cols:
                continue
            fig, ax = plt.subplots(figsize=(6.4, 4.0))
            positive = False
            for c in cols:
                y = np.array([np.nan if r.get(c) is None else r[c] for r in flat], dtype=float)
                if group in LOG_GROUPS:
                    y = np.where(y > 0, y, np.nan)
                    positive = positive or bool(np.any(np.isfinite(y)))
                ax.plot(t, y, label=c, lw=1.2)
            if positive:
                ax.set_yscale("log")
            ax.set_xlabel("t")
            ax.set_title(f"{title} {group}".strip())
            ax.legend(fontsize=7, ncol=2)
            ax.grid(alpha=0.3)
            fig.tight_layout()
            buf = io.StringIO()
            fig.savefig(buf, format="svg", metadata={"Date": None})
            plt.close(fig)
            out[group] = buf.getvalue()
    return out


def read_trace(path) -> list:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def plot_file(trace_path, out_dir=None) -> list:
    """Render the SVGs for a JSON-lines trace next to it (or into out_dir)."""
    from .runner import atomic_write

    trace_path = Path(trace_path)
    out = Path(out_dir) if out_dir is not None else trace_path.parent
    stem = trace_path.name[: -len(".jsonl")] if trace_path.name.endswith(".jsonl") else trace_path.stem
    paths = []
    for group, svg in render_trace(read_trace(trace_path), title=stem).items():
        p = out / f"{stem}.{group}.svg"
        atomic_write(p, svg)
        paths.append(p)
    return paths
