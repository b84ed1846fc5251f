"""Reading, writing and sanity-checking raw point clouds.

A point cloud is the unvalidated node list produced by an upstream
centerline extraction: every record has an id, a 3D position, a radius
and the ids of its neighbours.  Adjacency may be listed on one side only;
:func:`parse_point_cloud` symmetrizes it and counts the repairs.

All lengths are held in millimetres.  Inputs declared in micrometres are
converted on read.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Union

import numpy as np

from . import _jsonpos
from .errors import ParseError, SchemaError

log = logging.getLogger(__name__)

CSV_HEADER = ("id", "x", "y", "z", "radius", "neighbors")

#: Scale factor from a declared unit to millimetres.
UNIT_SCALE = {"mm": 1.0, "um": 1e-3, "µm": 1e-3}

Source = Union[bytes, str, IO[bytes], IO[str]]


@dataclass(frozen=True)
class NodeRecord:
    id: int
    position: tuple[float, float, float]
    radius: float
    neighbors: tuple[int, ...]


@dataclass(frozen=True)
class PointCloud:
    """Nodes sorted by id, with sorted symmetric neighbour lists.

    ``unit`` is the unit the data was declared in; stored values are always
    millimetres.  ``repairs`` counts one-sided adjacency entries that were
    mirrored during parsing.  Neither takes part in equality.
    """

    nodes: tuple[NodeRecord, ...]
    unit: str = field(default="mm", compare=False)
    repairs: int = field(default=0, compare=False)

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def ids(self) -> list[int]:
        return [n.id for n in self.nodes]

    def by_id(self) -> dict[int, NodeRecord]:
        return {n.id: n for n in self.nodes}

    def edges(self) -> list[tuple[int, int]]:
        """Undirected edges as ``(a, b)`` with ``a < b``, sorted."""
        return sorted({(min(n.id, m), max(n.id, m)) for n in self.nodes for m in n.neighbors})

    def without(self, ids: Iterable[int]) -> "PointCloud":
        """Drop nodes and every reference to them.  May leave degree-0 nodes."""
        drop = set(ids)
        kept = tuple(
            NodeRecord(n.id, n.position, n.radius, tuple(m for m in n.neighbors if m not in drop))
            for n in self.nodes
            if n.id not in drop
        )
        return PointCloud(kept, unit=self.unit)


def _normalize(records: list[NodeRecord], lines: dict[int, int], unit: str) -> PointCloud:
    ids: dict[int, NodeRecord] = {}
    for rec in records:
        if rec.id in ids:
            raise SchemaError(f"duplicate node id {rec.id} (line {lines[rec.id]})")
        ids[rec.id] = rec

    adj: dict[int, set[int]] = {i: set(r.neighbors) for i, r in ids.items()}
    repairs = 0
    for rec in records:
        for m in rec.neighbors:
            if m not in ids:
                raise SchemaError(f"node {rec.id} lists neighbour {m}, which does not exist")
            if rec.id not in ids[m].neighbors:
                adj[m].add(rec.id)
                repairs += 1

    nodes = []
    for i in sorted(ids):
        if not adj[i]:
            raise SchemaError(f"node {i} has no neighbours (line {lines[i]})")
        rec = ids[i]
        nodes.append(NodeRecord(i, rec.position, rec.radius, tuple(sorted(adj[i]))))
    if repairs:
        log.info("symmetrized %d one-sided adjacency entries", repairs)
    return PointCloud(tuple(nodes), unit=unit, repairs=repairs)


def _check_record(node_id, position, radius, neighbors, line: int | None) -> NodeRecord:
    if isinstance(node_id, bool) or not isinstance(node_id, int) or node_id < 0:
        raise ParseError(f"node id must be a non-negative integer, got {node_id!r}", line)
    if not (math.isfinite(radius) and radius > 0):
        raise ParseError(f"nonpositive radius {radius!r} for node {node_id}", line)
    if not all(math.isfinite(c) for c in position):
        raise ParseError(f"non-finite coordinate for node {node_id}", line)
    if node_id in neighbors:
        raise ParseError(f"node {node_id} lists itself as a neighbour", line)
    if len(set(neighbors)) != len(neighbors):
        raise ParseError(f"node {node_id} lists a neighbour twice", line)
    return NodeRecord(node_id, tuple(position), radius, tuple(neighbors))


def _to_text(source: Source) -> str:
    if hasattr(source, "read"):
        source = source.read()
    if isinstance(source, bytes):
        try:
            return source.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"input is not valid UTF-8: {exc}") from exc
    return source


def _parse_int(text: str, what: str, line: int) -> int:
    try:
        return int(text)
    except ValueError:
        raise ParseError(f"malformed {what} {text!r}", line) from None


def _parse_float(text: str, what: str, line: int) -> float:
    try:
        return float(text)
    except ValueError:
        raise ParseError(f"malformed {what} {text!r}", line) from None


def _parse_csv(text: str, unit: str | None) -> PointCloud:
    declared = "mm"
    header_seen = False
    records: list[NodeRecord] = []
    lines: dict[int, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            # optional "# unit=um" directive before the header
            key, _, value = stripped.lstrip("#").partition("=")
            if key.strip() == "unit" and not header_seen:
                declared = value.strip()
            continue
        row = next(csv.reader([raw]))
        if not header_seen:
            if tuple(c.strip() for c in row) != CSV_HEADER:
                raise ParseError(f"expected header {','.join(CSV_HEADER)}", lineno)
            header_seen = True
            continue
        if len(row) != len(CSV_HEADER):
            raise ParseError(f"expected {len(CSV_HEADER)} fields, got {len(row)}", lineno)
        node_id = _parse_int(row[0], "id", lineno)
        pos = [_parse_float(v, "coordinate", lineno) for v in row[1:4]]
        radius = _parse_float(row[4], "radius", lineno)
        nb_field = row[5].strip()
        nbs = [_parse_int(v, "neighbour id", lineno) for v in nb_field.split(";")] if nb_field else []
        records.append(_check_record(node_id, pos, radius, nbs, lineno))
        lines.setdefault(node_id, lineno)
    if not header_seen:
        raise ParseError("missing header row", 1)
    return _finish(records, lines, unit or declared)


def _parse_json(text: str, unit: str | None) -> PointCloud:
    try:
        doc = _jsonpos.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno) from None
    if not isinstance(doc, dict) or not isinstance(doc.get("nodes"), list):
        raise ParseError('top level must be an object with a "nodes" list', _jsonpos.line_of(doc, 1))
    declared = doc.get("unit", "mm")
    records: list[NodeRecord] = []
    lines: dict[int, int] = {}
    for item in doc["nodes"]:
        line = _jsonpos.line_of(item)
        if not isinstance(item, dict):
            raise ParseError("node entries must be objects", line)
        missing = {"id", "pos", "radius", "neighbors"} - item.keys()
        if missing:
            raise ParseError(f"node is missing {sorted(missing)}", line)
        pos, radius, nbs = item["pos"], item["radius"], item["neighbors"]
        if not (isinstance(pos, list) and len(pos) == 3 and all(_is_number(c) for c in pos)):
            raise ParseError("pos must be a list of three numbers", line)
        if not _is_number(radius):
            raise ParseError(f"malformed radius {radius!r}", line)
        if not (isinstance(nbs, list) and all(isinstance(m, int) and not isinstance(m, bool) for m in nbs)):
            raise ParseError("neighbors must be a list of integer ids", line)
        rec = _check_record(item["id"], [float(c) for c in pos], float(radius), nbs, line)
        records.append(rec)
        lines.setdefault(rec.id, line)
    return _finish(records, lines, unit or declared)


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _finish(records: list[NodeRecord], lines: dict[int, int], unit: str) -> PointCloud:
    if unit not in UNIT_SCALE:
        raise ParseError(f"unknown unit {unit!r}; expected one of {sorted(UNIT_SCALE)}")
    scale = UNIT_SCALE[unit]
    if scale != 1.0:
        records = [
            NodeRecord(r.id, tuple(c * scale for c in r.position), r.radius * scale, r.neighbors)
            for r in records
        ]
    return _normalize(records, lines, "um" if unit == "µm" else unit)


def parse_point_cloud(source: Source, format: str = "csv", *, unit: str | None = None) -> PointCloud:
    """Parse a CSV or JSON point cloud.

    ``unit`` overrides whatever unit the file declares.  Raises
    :class:`ParseError` (with a line number) for malformed content and
    :class:`SchemaError` for duplicate or dangling ids.
    """
    text = _to_text(source)
    if format == "csv":
        return _parse_csv(text, unit)
    if format == "json":
        return _parse_json(text, unit)
    raise ParseError(f"unknown point-cloud format {format!r}")


def read_point_cloud(path: str | Path, format: str | None = None, *, unit: str | None = None) -> PointCloud:
    path = Path(path)
    fmt = format or guess_format(path)
    return parse_point_cloud(path.read_bytes(), fmt, unit=unit)


def guess_format(path: str | Path) -> str:
    suffix = Path(path).suffix.lower()
    if suffix == ".json":
        return "json"
    if suffix in (".csv", ".txt"):
        return "csv"
    raise ParseError(f"cannot infer point-cloud format from {str(path)!r}; pass a format")


def serialize_point_cloud(cloud: PointCloud, format: str = "csv") -> bytes:
    """Inverse of :func:`parse_point_cloud`; values are written in millimetres."""
    if format == "csv":
        buf = io.StringIO()
        buf.write(",".join(CSV_HEADER) + "\n")
        for n in cloud.nodes:
            x, y, z = (repr(float(c)) for c in n.position)
            nbs = ";".join(str(m) for m in n.neighbors)
            buf.write(f"{n.id},{x},{y},{z},{float(n.radius)!r},{nbs}\n")
        return buf.getvalue().encode("utf-8")
    if format == "json":
        doc = {
            "unit": "mm",
            "nodes": [
                {"id": n.id, "pos": [float(c) for c in n.position], "radius": float(n.radius),
                 "neighbors": list(n.neighbors)}
                for n in cloud.nodes
            ],
        }
        return (json.dumps(doc, indent=1) + "\n").encode("utf-8")
    raise ParseError(f"unknown point-cloud format {format!r}")


@dataclass(frozen=True)
class ValidationReport:
    degree_zero: tuple[int, ...] = ()
    radius_outliers: tuple[int, ...] = ()
    duplicate_positions: tuple[tuple[int, ...], ...] = ()
    median_radius: float = float("nan")

    @property
    def issues(self) -> list[str]:
        out = [f"node {i} has no neighbours" for i in self.degree_zero]
        out += [f"node {i} radius exceeds outlier bound" for i in self.radius_outliers]
        out += [f"nodes {', '.join(map(str, g))} share a position" for g in self.duplicate_positions]
        return out

    def as_dict(self) -> dict:
        return {
            "degree_zero": list(self.degree_zero),
            "radius_outliers": list(self.radius_outliers),
            "duplicate_positions": [list(g) for g in self.duplicate_positions],
            "median_radius": self.median_radius,
        }


def validate(cloud: PointCloud, outlier_multiple: float = 10.0) -> ValidationReport:
    """Report suspicious records without touching the cloud.

    A radius is an outlier when it is strictly greater than
    ``outlier_multiple`` times the median radius of the cloud.
    """
    if not cloud.nodes:
        return ValidationReport()
    radii = np.array([n.radius for n in cloud.nodes])
    median = float(np.median(radii))
    bound = outlier_multiple * median
    groups: dict[tuple[float, float, float], list[int]] = defaultdict(list)
    for n in cloud.nodes:
        groups[tuple(n.position)].append(n.id)
    return ValidationReport(
        degree_zero=tuple(n.id for n in cloud.nodes if not n.neighbors),
        radius_outliers=tuple(n.id for n in cloud.nodes if n.radius > bound),
        duplicate_positions=tuple(sorted(tuple(g) for g in groups.values() if len(g) > 1)),
        median_radius=median,
    )
