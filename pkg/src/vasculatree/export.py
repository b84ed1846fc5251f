"""Tree files, solver-ready vessel tables and atomic file output."""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

from . import _jsonpos
from .errors import GraphError, ParseError, SchemaError
from .graph import NodeTable, Segment, SegmentTree
from .morphometry import segment_metrics

SOLVER_FORMAT = "vasculatree-solver/1"


def write_atomic(path: str | Path, data: bytes) -> None:
    """Write via a temporary sibling file and rename over *path*."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dumps(doc) -> bytes:
    return (json.dumps(doc, indent=1, sort_keys=False) + "\n").encode("utf-8")


def tree_to_json(tree: SegmentTree) -> bytes:
    """Serialize *tree*; node ids are included so junctions stay shared."""
    segs = []
    for sid in sorted(tree.segments):
        seg = tree.segments[sid]
        segs.append({
            "id": sid,
            "nodes": [
                {"id": n, "pos": list(tree.nodes.position[n]), "radius": tree.nodes.radius[n]}
                for n in seg.nodes
            ],
            "children": list(tree.children[sid]),
        })
    return _dumps({"root": tree.root, "segments": segs})


def tree_from_json(data: bytes | str) -> SegmentTree:
    """Inverse of :func:`tree_to_json`.

    Node ``id`` keys are optional; without them a child's first node is
    identified with its parent's last node and every other node gets a
    fresh id.
    """
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    try:
        doc = _jsonpos.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno) from None
    if not isinstance(doc, dict) or "root" not in doc or not isinstance(doc.get("segments"), list):
        raise ParseError('tree file needs "root" and a "segments" list', _jsonpos.line_of(doc, 1))
    if not doc["segments"]:
        raise SchemaError("tree file has no segments")

    raw = {}
    for item in doc["segments"]:
        line = _jsonpos.line_of(item)
        try:
            sid = item["id"]
            nodes = item["nodes"]
            children = [int(c) for c in item.get("children", [])]
        except (KeyError, TypeError, ValueError):
            raise ParseError("segment entries need id, nodes and children", line) from None
        if not isinstance(nodes, list) or len(nodes) < 2:
            raise ParseError(f"segment {sid} needs at least two nodes", line)
        if sid in raw:
            raise SchemaError(f"duplicate segment id {sid}")
        raw[sid] = (nodes, children, line)

    root = doc["root"]
    if root not in raw:
        raise SchemaError(f"root segment {root} is not listed")
    parent = {}
    for sid, (_, kids, _) in raw.items():
        for c in kids:
            if c not in raw:
                raise SchemaError(f"segment {sid} lists unknown child {c}")
            parent[c] = sid

    explicit = all("id" in n for nodes, _, _ in raw.values() for n in nodes)
    position: dict[int, tuple[float, float, float]] = {}
    radius: dict[int, float] = {}
    paths: dict[int, tuple[int, ...]] = {}
    fresh = iter(range(10**12))

    def register(n, node_id, line):
        try:
            pos = tuple(float(c) for c in n["pos"])
            r = float(n["radius"])
        except (KeyError, TypeError, ValueError):
            raise ParseError("node entries need pos and radius", line) from None
        if len(pos) != 3:
            raise ParseError("pos must have three coordinates", line)
        if node_id in position and (position[node_id], radius[node_id]) != (pos, r):
            raise SchemaError(f"node {node_id} has conflicting geometry")
        position[node_id], radius[node_id] = pos, r
        return node_id

    order = [root]
    k = 0
    while k < len(order):
        order.extend(raw[order[k]][1])
        k += 1
    if len(order) != len(raw) or len(set(order)) != len(order):
        raise SchemaError("segments do not form a single rooted tree")
    for sid in order:
        nodes, _, line = raw[sid]
        ids = []
        for j, n in enumerate(nodes):
            if explicit:
                ids.append(register(n, int(n["id"]), line))
            elif j == 0 and sid in parent:
                ids.append(paths[parent[sid]][-1])
            else:
                ids.append(register(n, next(fresh), line))
        paths[sid] = tuple(ids)

    tree = SegmentTree(
        {s: Segment(s, paths[s]) for s in sorted(raw)},
        {s: tuple(sorted(raw[s][1])) for s in sorted(raw)},
        root,
        NodeTable(dict(sorted(position.items())), dict(sorted(radius.items()))),
    )
    try:
        tree.check_invariants()
    except GraphError as exc:
        raise SchemaError(str(exc)) from None
    return tree


@dataclass(frozen=True)
class SolverVessel:
    id: int
    length_mm: float
    inlet_radius_mm: float
    outlet_radius_mm: float
    parent: int | None
    children: tuple[int, ...]


def solver_vessels(tree: SegmentTree) -> list[SolverVessel]:
    """One vessel per segment; inlet/outlet radius are the end-node radii."""
    out = []
    for sid in sorted(tree.segments):
        seg = tree.segments[sid]
        m = segment_metrics(seg, tree.nodes)
        if m.length <= 0:
            raise SchemaError(f"segment {sid} has zero length and cannot be exported")
        out.append(SolverVessel(
            sid,
            m.length,
            tree.nodes.radius[seg.first],
            tree.nodes.radius[seg.last],
            tree.parent[sid],
            tuple(tree.children[sid]),
        ))
    return out


def solver_export(tree: SegmentTree) -> bytes:
    vessels = [
        {
            "id": v.id,
            "length_mm": v.length_mm,
            "inlet_radius_mm": v.inlet_radius_mm,
            "outlet_radius_mm": v.outlet_radius_mm,
            "parent": v.parent,
            "children": list(v.children),
        }
        for v in solver_vessels(tree)
    ]
    return _dumps({"format": SOLVER_FORMAT, "root": tree.root, "vessels": vessels})


def read_solver_export(data: bytes | str) -> list[SolverVessel]:
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno) from None
    if doc.get("format") != SOLVER_FORMAT:
        raise SchemaError(f"not a {SOLVER_FORMAT} file")
    vessels = [
        SolverVessel(
            int(v["id"]),
            float(v["length_mm"]),
            float(v["inlet_radius_mm"]),
            float(v["outlet_radius_mm"]),
            None if v["parent"] is None else int(v["parent"]),
            tuple(int(c) for c in v["children"]),
        )
        for v in doc["vessels"]
    ]
    ids = {v.id for v in vessels}
    roots = [v for v in vessels if v.parent is None]
    if len(roots) != 1 or any(c not in ids for v in vessels for c in v.children):
        raise SchemaError("vessel table does not form a rooted tree")
    return vessels
