"""Sweep reporting: delimited output plus a rendered figure.

The CSV schema is fixed: header ``t0,distortion_mean,distortion_stderr,w2,
w2_stderr,n_trials`` and one row per swept t0, floats printed with 17
significant digits so a parse round-trip reproduces the values exactly.

The figure plots the swept points in (W2, RMSE) axes with the ideal
frontier sqrt(D(P)) overlaid, rendered to SVG via matplotlib.  Each swept
point carries the SVG gid ``dp-point-<i>`` and the frontier carries
``ideal-curve`` so the structure is machine-checkable.
"""

from __future__ import annotations

import json
import xml.etree.ElementTree as ET

import numpy as np

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from ..metrics import DpCurvePoint
from .sweep import SweepResult

CSV_HEADER = "t0,distortion_mean,distortion_stderr,w2,w2_stderr,n_trials"


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def emit_csv(result: SweepResult, path: str) -> None:
    if not result.points:
        raise ValueError("empty sweep result")
    lines = [CSV_HEADER]
    for p in result.points:
        lines.append(
            f"{p.t0},{_fmt(p.distortion_mean)},{_fmt(p.distortion_stderr)},"
            f"{_fmt(p.w2)},{_fmt(p.w2_stderr)},{p.n_trials}"
        )
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"failed writing CSV to {path}: {exc}") from exc


def parse_csv(path: str) -> tuple[DpCurvePoint, ...]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
    except OSError as exc:
        raise OSError(f"failed reading CSV from {path}: {exc}") from exc
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError(f"unexpected CSV header in {path}")
    points = []
    for ln in lines[1:]:
        t0, dm, ds, w2, ws, n = ln.split(",")
        points.append(DpCurvePoint(
            t0=int(t0), distortion_mean=float(dm), distortion_stderr=float(ds),
            w2=float(w2), w2_stderr=float(ws), n_trials=int(n)))
    return tuple(points)


def emit_svg(result: SweepResult, path: str) -> None:
    """Render the (W2, RMSE) scatter with the ideal frontier overlay."""
    if not result.points:
        raise ValueError("empty sweep result")
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    if result.ideal_points:
        ps = [p for p, _ in result.ideal_points]
        ds = [np.sqrt(d) for _, d in result.ideal_points]
        (curve,) = ax.plot(ps, ds, color="0.35", lw=1.2, label="ideal frontier")
        curve.set_gid("ideal-curve")
    for i, pt in enumerate(result.points):
        (marker,) = ax.plot(pt.w2, np.sqrt(pt.distortion_mean), "o", ms=5,
                            color="tab:blue")
        marker.set_gid(f"dp-point-{i}")
        ax.annotate(str(pt.t0), (pt.w2, np.sqrt(pt.distortion_mean)),
                    textcoords="offset points", xytext=(4, 4), fontsize=7)
    ax.set_xlabel("W2 (perception)")
    ax.set_ylabel("RMSE (distortion)")
    ax.set_title("distortion-perception traversal")
    if result.ideal_points:
        ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    try:
        fig.savefig(path, format="svg")
    except OSError as exc:
        raise OSError(f"failed writing SVG to {path}: {exc}") from exc
    finally:
        plt.close(fig)


def svg_structure(path: str) -> dict:
    """Counts of the tagged elements in an emitted SVG (structural check)."""
    tree = ET.parse(path)
    ids = [el.get("id") for el in tree.iter() if el.get("id")]
    return {
        "points": sum(1 for i in ids if i.startswith("dp-point-")),
        "curves": sum(1 for i in ids if i == "ideal-curve"),
    }


def emit_provenance(result: SweepResult, path: str) -> None:
    record = dict(result.provenance)
    if result.endpoints is not None:
        record["d_star"] = result.endpoints.d_star
        record["p_star"] = result.endpoints.p_star
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(record, fh, indent=2, sort_keys=True)
        fh.write("\n")
