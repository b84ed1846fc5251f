"""2D projections of segment trees and their SVG / CSV renderings."""

from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from matplotlib import colormaps
from matplotlib.colors import to_hex

from .errors import ProjectionError
from .graph import SegmentTree
from .morphometry import assign_generations, strahler_orders

log = logging.getLogger(__name__)

PLANES = {"xy": (0, 1), "xz": (0, 2), "yz": (1, 2)}
CENTER_NUDGE_MM = 1e-9


@dataclass(eq=False)
class Polyline2D:
    segment_id: int
    points: np.ndarray  # (k, 2)
    generation: int | None = None
    strahler: int | None = None


def _styled(tree: SegmentTree, coords: dict[int, np.ndarray]) -> list[Polyline2D]:
    gens = assign_generations(tree)
    orders = strahler_orders(tree)
    return [
        Polyline2D(sid, coords[sid], gens[sid], orders[sid])
        for sid in sorted(tree.segments)
    ]


def lateral_projection(tree: SegmentTree, plane: str = "xy") -> list[Polyline2D]:
    """Orthographic projection onto a coordinate plane."""
    if plane not in PLANES:
        raise ProjectionError(f"unknown plane {plane!r}; expected one of {', '.join(PLANES)}")
    axes = list(PLANES[plane])
    coords = {sid: tree.nodes.xyz(seg.nodes)[:, axes] for sid, seg in tree.segments.items()}
    return _styled(tree, coords)


def _frame(pole) -> np.ndarray:
    e3 = np.asarray(pole, dtype=float)
    norm = np.linalg.norm(e3)
    if norm == 0:
        raise ProjectionError("pole axis must be non-zero")
    e3 = e3 / norm
    ref = np.array([1.0, 0.0, 0.0]) if abs(e3[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = ref - ref.dot(e3) * e3
    e1 /= np.linalg.norm(e1)
    return np.vstack([e1, np.cross(e3, e1), e3])


def mercator_coordinates(
    tree: SegmentTree,
    center: Sequence[float] | None = None,
    lat_clamp_deg: float = 85.0,
    pole: Sequence[float] = (0.0, 0.0, 1.0),
) -> tuple[dict[int, tuple[float, float]], tuple[int, ...]]:
    """Raw (longitude, Mercator ordinate) for every node of *tree*.

    Returns the per-node coordinates and the ids of nodes that sat exactly
    on the center and had to be nudged toward a segment neighbour.
    """
    ids = sorted(tree.node_ids())
    xyz = tree.nodes.xyz(ids)
    c = xyz.mean(axis=0) if center is None else np.asarray(center, dtype=float)
    rot = _frame(pole)
    d = (xyz - c) @ rot.T
    norms = np.linalg.norm(d, axis=1)
    if np.all(norms == 0):
        raise ProjectionError("every node coincides with the projection center")

    nudged = []
    if np.any(norms == 0):
        for k in np.nonzero(norms == 0)[0]:
            node = ids[k]
            nb = _segment_neighbour(tree, node)
            step = (np.asarray(tree.nodes.position[nb]) - np.asarray(tree.nodes.position[node])) @ rot.T
            if not np.any(step):
                raise ProjectionError(f"node {node} and its neighbour {nb} both sit on the center")
            d[k] = CENTER_NUDGE_MM * step / np.linalg.norm(step)
            nudged.append(node)
        norms = np.linalg.norm(d, axis=1)
        log.warning("nudged %d nodes off the projection center", len(nudged))

    lam = np.arctan2(d[:, 1], d[:, 0])
    phi = np.arcsin(np.clip(d[:, 2] / norms, -1.0, 1.0))
    lim = math.radians(lat_clamp_deg)
    phi = np.clip(phi, -lim, lim)
    v = np.log(np.tan(math.pi / 4 + phi / 2))
    return {n: (float(lam[k]), float(v[k])) for k, n in enumerate(ids)}, tuple(nudged)


def _segment_neighbour(tree: SegmentTree, node: int) -> int:
    for sid in tree.bfs():
        nodes = tree.segments[sid].nodes
        if node in nodes:
            k = nodes.index(node)
            return nodes[k + 1] if k + 1 < len(nodes) else nodes[k - 1]
    raise ProjectionError(f"node {node} is not in the tree")


def mercator_projection(
    tree: SegmentTree,
    center: Sequence[float] | None = None,
    lat_clamp_deg: float = 85.0,
    pole: Sequence[float] = (0.0, 0.0, 1.0),
) -> list[Polyline2D]:
    """Mercator projection about *center* (node centroid by default).

    Longitude is unwrapped along every polyline, starting each child at its
    parent's final longitude, so branches never jump by a full turn and
    parent/child polylines meet at the same point.
    """
    raw, _ = mercator_coordinates(tree, center, lat_clamp_deg, pole)
    coords: dict[int, np.ndarray] = {}
    for sid in tree.bfs():
        seg = tree.segments[sid]
        pts = np.array([raw[n] for n in seg.nodes], dtype=float)
        parent = tree.parent[sid]
        if parent is not None:
            pts[0, 0] = coords[parent][-1, 0]
        pts[:, 0] = np.unwrap(pts[:, 0])
        coords[sid] = pts
    return _styled(tree, coords)


def _num(x: float) -> str:
    s = f"{x + 0.0:.6f}"
    return "0.000000" if s == "-0.000000" else s


def style_table(polylines: Sequence[Polyline2D], style: str) -> dict[int | None, tuple[str, float]]:
    """Map each style level to (stroke colour, relative width)."""
    if style not in ("generation", "strahler"):
        raise ProjectionError(f"unknown style {style!r}")
    levels = sorted({getattr(p, style) for p in polylines if getattr(p, style) is not None})
    # thick strokes for proximal generations and for high Strahler orders
    ranked = levels[::-1] if style == "generation" else levels
    cmap = colormaps["viridis" if style == "generation" else "plasma"]
    table: dict[int | None, tuple[str, float]] = {None: ("#000000", 1.0)}
    span = max(len(ranked) - 1, 1)
    for r, level in enumerate(ranked):
        table[level] = (to_hex(cmap(0.85 * (1 - r / span))), 1.0 + 2.0 * r / span)
    return table


def render(polylines: Sequence[Polyline2D], sink: str = "svg", style: str = "generation") -> bytes:
    """Serialize polylines as SVG 1.1 or as ``segment_id,point_index,u,v`` CSV."""
    if not polylines:
        raise ProjectionError("nothing to render")
    polylines = sorted(polylines, key=lambda p: p.segment_id)
    if sink == "csv":
        buf = io.StringIO()
        buf.write("segment_id,point_index,u,v\n")
        for p in polylines:
            for k, (u, v) in enumerate(p.points):
                buf.write(f"{p.segment_id},{k},{float(u)!r},{float(v)!r}\n")
        return buf.getvalue().encode("utf-8")
    if sink != "svg":
        raise ProjectionError(f"unknown sink {sink!r}")

    allpts = np.vstack([p.points for p in polylines])
    umin, vmin = allpts.min(axis=0)
    umax, vmax = allpts.max(axis=0)
    w = (umax - umin) or 1.0
    h = (vmax - vmin) or 1.0
    mx, my = 0.05 * w, 0.05 * h
    # SVG y grows downward, so the ordinate is negated
    view = (umin - mx, -vmax - my, w + 2 * mx, h + 2 * my)
    base = 0.002 * math.hypot(w, h)
    table = style_table(polylines, style)

    out = io.StringIO()
    out.write('<?xml version="1.0" encoding="UTF-8" standalone="no"?>\n')
    out.write(
        '<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'viewBox="{" ".join(_num(x) for x in view)}" width="800" height="{_num(800 * view[3] / view[2])}">\n'
    )
    out.write('<g fill="none" stroke-linecap="round" stroke-linejoin="round">\n')
    for p in polylines:
        colour, rel = table[getattr(p, style)]
        d = " ".join(
            f"{'M' if k == 0 else 'L'}{_num(u)},{_num(-v)}" for k, (u, v) in enumerate(p.points)
        )
        out.write(f'<path id="seg-{p.segment_id}" stroke="{colour}" stroke-width="{_num(base * rel)}" d="{d}"/>\n')
    out.write("</g>\n</svg>\n")
    return out.getvalue().encode("utf-8")


def parse_polyline_csv(data: bytes | str) -> list[Polyline2D]:
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    rows: dict[int, list[tuple[int, float, float]]] = {}
    for line in text.strip().splitlines()[1:]:
        sid, k, u, v = line.split(",")
        rows.setdefault(int(sid), []).append((int(k), float(u), float(v)))
    return [
        Polyline2D(sid, np.array([(u, v) for _, u, v in sorted(pts)], dtype=float))
        for sid, pts in sorted(rows.items())
    ]
