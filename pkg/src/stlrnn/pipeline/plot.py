"""Plot data for a run: structured JSON and a plain SVG of the 2-D workspace."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..safety import AVOID_DISK
from .runs import RunResult
from .scenario import Scenario

_COLORS = {"Init": "#9ecae1", "Obs": "#636363"}
_REGION_COLOR = "#a1d99b"
_SIZE = 480
_PAD = 20


def plot_data(result: RunResult, sc: Scenario) -> dict:
    return {
        "scenario": sc.name,
        "workspace": sc.workspace.tolist(),
        "boxes": {name: box[:2].tolist() for name, box in sc.boxes.items()},
        "disks": {name: {"center": c[:2].tolist(), "radius": r} for name, (c, r) in sc.disks.items()},
        "barriers": [b.to_dict() for b in result.barriers],
        "trajectory": np.asarray(result.trajectory).tolist(),
        "applied_controls": np.asarray(result.applied_controls).tolist(),
        "reference_controls": np.asarray(result.reference_controls).tolist(),
        "robustness": result.robustness,
        "satisfied": result.satisfied,
        "safe": result.safe,
        "status": result.status,
        "seed": result.seed,
    }


def render_svg(data: dict) -> str:
    (x0, x1), (y0, y1) = data["workspace"]
    s = (_SIZE - 2 * _PAD) / max(x1 - x0, y1 - y0)

    def px(x, y):
        return _PAD + (x - x0) * s, _SIZE - _PAD - (y - y0) * s

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_SIZE}" height="{_SIZE}" '
             f'viewBox="0 0 {_SIZE} {_SIZE}">',
             f'<rect x="0" y="0" width="{_SIZE}" height="{_SIZE}" fill="white"/>']
    ax, ay = px(x0, y1)
    parts.append(f'<rect x="{ax:.2f}" y="{ay:.2f}" width="{(x1 - x0) * s:.2f}" '
                 f'height="{(y1 - y0) * s:.2f}" fill="none" stroke="black"/>')
    for name, ((bx0, bx1), (by0, by1)) in data["boxes"].items():
        rx, ry = px(bx0, by1)
        color = _COLORS.get(name, _REGION_COLOR)
        parts.append(f'<rect x="{rx:.2f}" y="{ry:.2f}" width="{(bx1 - bx0) * s:.2f}" '
                     f'height="{(by1 - by0) * s:.2f}" fill="{color}" fill-opacity="0.6" stroke="black"/>')
        parts.append(f'<text x="{rx + 3:.2f}" y="{ry + 14:.2f}" font-size="12">{name}</text>')
    for name, d in data["disks"].items():
        cx, cy = px(*d["center"])
        parts.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="{d["radius"] * s:.2f}" '
                     f'fill="{_REGION_COLOR}" fill-opacity="0.6" stroke="black"/>')
    for b in data["barriers"]:
        cx, cy = px(*b["center"])
        if b["kind"] == AVOID_DISK:
            style = 'fill="#de2d26" fill-opacity="0.5" stroke="#a50f15"'
        else:
            style = 'fill="none" stroke="#3182bd" stroke-dasharray="6 4"'
        parts.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="{b["radius"] * s:.2f}" {style}/>')
    traj = data["trajectory"]
    if traj:
        pts = " ".join("{:.2f},{:.2f}".format(*px(q[0], q[1])) for q in traj)
        parts.append(f'<polyline points="{pts}" fill="none" stroke="#08519c" stroke-width="2"/>')
        for q in traj:
            cx, cy = px(q[0], q[1])
            parts.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="2.5" fill="#08519c"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_plot_data(result: RunResult, sc: Scenario, out, svg: bool = True):
    """Write ``out`` as JSON, or as SVG plus a sibling ``.json`` when ``out`` ends in ``.svg``.

    Returns the list of files written.
    """
    out = Path(out)
    data = plot_data(result, sc)
    written = []
    if out.suffix.lower() == ".svg":
        json_path = out.with_suffix(".json")
        out.write_text(render_svg(data))
        written.append(out)
    else:
        json_path = out
        if svg:
            out.with_suffix(".svg").write_text(render_svg(data))
            written.append(out.with_suffix(".svg"))
    json_path.write_text(json.dumps(data, indent=1) + "\n")
    written.insert(0, json_path)
    return written
