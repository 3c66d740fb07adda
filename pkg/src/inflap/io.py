"""CSV, JSON and SVG output.

Every JSON document carries ``schema_version`` and ``kind`` and is checked
against the matching file in ``inflap/schemas`` before it is written.
"""
from __future__ import annotations

import csv
import json
import math
from html import escape
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .geometry import DomainGrid

SCHEMAS = ("eigenpair", "sweep", "verdict", "transport")


def load_schema(name: str) -> dict:
    if name not in SCHEMAS:
        raise ValueError(f"unknown schema {name!r}")
    text = resources.files("inflap").joinpath("schemas", f"{name}.schema.json").read_text()
    return json.loads(text)


def plain(obj):
    """Recursively convert numpy scalars/arrays to Python and non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def validate(doc: dict, schema: str) -> dict:
    doc = plain(doc)
    jsonschema.validate(doc, load_schema(schema))
    return doc


def write_json(path, doc: dict, schema: str | None = None) -> Path:
    doc = validate(doc, schema) if schema else plain(doc)
    path = Path(path)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def write_csv(path, header, columns) -> Path:
    """Columns of equal length under ``header``; floats written with repr precision."""
    path = Path(path)
    cols = [np.asarray(c) for c in columns]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in zip(*cols):
            w.writerow(["" if v is None else repr(float(v)) if isinstance(v, (float, np.floating))
                        else v for v in row])
    return path


def read_weighted_points(path) -> tuple[np.ndarray, np.ndarray]:
    """Read ``x,y,weight`` rows (header required) into points and weights."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: no rows")
    try:
        pts = np.array([[float(r["x"]), float(r["y"])] for r in rows])
        w = np.array([float(r["weight"]) for r in rows])
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"{path}: expected columns x,y,weight ({exc})") from exc
    return pts, w


def write_field_csv(path, grid: DomainGrid, values, name: str) -> Path:
    x, y = grid.nodes.T
    return write_csv(path, ["x", "y", name], [x, y, np.asarray(values, dtype=float)])


def write_measure_csv(path, measure) -> Path:
    x, y = measure.points.T
    return write_csv(path, ["x", "y", "weight"], [x, y, measure.weights])


def write_vector_csv(path, vm) -> Path:
    x, y = vm.points.T
    return write_csv(path, ["x", "y", "vx", "vy"], [x, y, vm.vectors[:, 0], vm.vectors[:, 1]])


def write_plan_csv(path, plan) -> Path:
    xs = plan.source_marginal.points[plan.sources]
    xt = plan.target_points[plan.targets]
    return write_csv(path, ["xs", "ys", "xt", "yt", "mass"],
                     [xs[:, 0], xs[:, 1], xt[:, 0], xt[:, 1], plan.masses])


def write_sweep_csv(path, sweep) -> Path:
    from .asymptotics import ROW_FIELDS

    header = [f for f in ROW_FIELDS if f != "error"]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in sweep.records:
            w.writerow(["" if r[k] is None else r[k] for k in header])
    return Path(path)


# -- SVG ------------------------------------------------------------------

def _gray(t: float) -> str:
    g = int(round(255 * (1 - t)))
    return f"#{g:02x}{g:02x}{g:02x}"


def _heatmap_body(grid: DomainGrid, values, rays, x0, y0, px, title) -> list[str]:
    v = np.asarray(values, dtype=float)
    lo, hi = float(v.min()), float(v.max())
    t = (v - lo) / (hi - lo) if hi > lo else np.zeros_like(v)
    origin = grid.origin
    span = grid.h * (np.array(grid.interior_mask.shape) - 1)
    scale = px / float(span.max())
    cell = grid.h * scale

    def to_px(pts):
        q = (np.atleast_2d(pts) - origin) * scale
        return x0 + q[:, 0], y0 + px - q[:, 1]

    out = []
    if title:
        out.append(f'<text x="{x0:.1f}" y="{y0 - 6:.1f}" font-size="12" '
                   f'font-family="sans-serif">{escape(title)}</text>')
    cx, cy = to_px(grid.nodes)
    for a, b, tt in zip(cx, cy, t):
        out.append(f'<rect x="{a - cell / 2:.2f}" y="{b - cell / 2:.2f}" width="{cell:.2f}" '
                   f'height="{cell:.2f}" fill="{_gray(tt)}"/>')
    for loop in np.unique(grid.boundary_loop):
        bx, by = to_px(grid.boundary_points[grid.boundary_loop == loop])
        pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(bx, by))
        out.append(f'<polygon points="{pts}" fill="none" stroke="#000" stroke-width="1"/>')
    if rays is not None:
        for ray in rays.rays:
            (ax,), (ay,) = to_px(grid.nodes[ray.source])
            (bx,), (by,) = to_px(grid.boundary_points[ray.target])
            out.append(f'<line x1="{ax:.2f}" y1="{ay:.2f}" x2="{bx:.2f}" y2="{by:.2f}" '
                       'stroke="#c00" stroke-width="0.5" stroke-opacity="0.6"/>')
    return out


def svg_heatmap(grid: DomainGrid, values, rays=None, title: str | None = None,
                size: int = 400) -> str:
    """Grayscale node heatmap (dark = large) with the boundary and optional rays."""
    return svg_panel([(title, values, rays)], grid, size)


def svg_panel(panels, grid: DomainGrid, size: int = 300) -> str:
    """Side-by-side heatmaps; ``panels`` holds ``(title, values, rays)`` triples."""
    pad = 24
    width = len(panels) * (size + pad) + pad
    height = size + 2 * pad
    body = []
    for k, (title, values, rays) in enumerate(panels):
        body += _heatmap_body(grid, values, rays, pad + k * (size + pad), pad, size, title)
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">\n<rect width="100%" height="100%" fill="#fff"/>\n'
            + "\n".join(body) + "\n</svg>\n")


def write_text(path, text: str) -> Path:
    path = Path(path)
    path.write_text(text)
    return path
