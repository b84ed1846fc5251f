"""Filters and structural rewrites on segment trees.

Every rewrite is a pure function returning a new tree together with a
:class:`PruneReport` that accounts for each segment that left the tree.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .errors import PruneError
from .graph import Segment, SegmentTree
from .morphometry import SegmentMetrics, assign_generations, segment_metrics, tree_metrics

log = logging.getLogger(__name__)

FILTER_KINDS = ("mean_radius", "proportional", "single_node", "max_generation")


@dataclass(frozen=True)
class FilterSpec:
    kind: str
    radius_threshold: float | None = None
    proportion: float | None = None
    max_generation: int | None = None

    def __post_init__(self):
        if self.kind not in FILTER_KINDS:
            raise PruneError(f"unknown filter kind {self.kind!r}; expected one of {', '.join(FILTER_KINDS)}")
        if self.kind == "max_generation":
            if self.max_generation is None or self.max_generation < 0:
                raise PruneError("max_generation filter needs a non-negative max_generation")
            return
        if self.radius_threshold is None or self.radius_threshold < 0:
            raise PruneError(f"{self.kind} filter needs a non-negative radius_threshold")
        if self.kind == "proportional":
            if self.proportion is None or not (0.0 < self.proportion <= 1.0):
                raise PruneError("proportion must lie in (0, 1]")


@dataclass(frozen=True)
class PruneReport:
    """Audit record of one operation.

    ``before - len(removed) - len(discarded) - len(joined) == after`` always
    holds.  ``joined`` holds ``(kept, absorbed)`` segment id pairs.
    """

    operation: str
    before: int
    after: int
    removed: tuple[int, ...] = ()
    joined: tuple[tuple[int, int], ...] = ()
    discarded: tuple[int, ...] = ()
    nodes_removed: tuple[int, ...] = ()
    warnings: tuple[str, ...] = ()
    notes: Mapping[str, object] = field(default_factory=dict)

    @property
    def changed(self) -> bool:
        return bool(self.removed or self.joined or self.discarded)

    def balanced(self) -> bool:
        return self.before - len(self.removed) - len(self.discarded) - len(self.joined) == self.after

    def as_dict(self) -> dict:
        return {
            "operation": self.operation,
            "segments_before": self.before,
            "segments_after": self.after,
            "removed": list(self.removed),
            "joined": [list(p) for p in self.joined],
            "discarded": list(self.discarded),
            "nodes_removed": list(self.nodes_removed),
            "warnings": list(self.warnings),
            "notes": dict(self.notes),
        }


def _node_diff(old: SegmentTree, new: SegmentTree) -> tuple[int, ...]:
    return tuple(sorted(old.node_ids() - new.node_ids()))


def _warn(msg: str) -> str:
    log.warning(msg)
    return msg


def filter_segments(
    tree: SegmentTree,
    spec: FilterSpec,
    metrics: Mapping[int, SegmentMetrics] | None = None,
    generations: Mapping[int, int] | None = None,
) -> frozenset[int]:
    """Segments passing *spec*.  The result need not be connected.

    Radius conditions are strict (a radius must exceed the threshold); the
    proportional condition accepts a fraction equal to ``spec.proportion``.
    """
    if spec.kind == "max_generation":
        generations = assign_generations(tree) if generations is None else generations
        return frozenset(s for s in tree.segments if generations[s] <= spec.max_generation)
    metrics = tree_metrics(tree) if metrics is None else metrics
    thr = spec.radius_threshold
    if spec.kind == "mean_radius":
        return frozenset(s for s in tree.segments if metrics[s].mean_radius > thr)
    if spec.kind == "single_node":
        return frozenset(s for s in tree.segments if metrics[s].max_radius > thr)
    keep = set()
    for sid, seg in tree.segments.items():
        r = tree.nodes.radii(seg.nodes)
        if np.count_nonzero(r > thr) >= spec.proportion * len(r):
            keep.add(sid)
    return frozenset(keep)


def connected_subtree(tree: SegmentTree, eligible: Iterable[int]) -> tuple[SegmentTree, frozenset[int]]:
    """Keep eligible segments whose whole ancestry is eligible.

    Walks generations top-down from the root.  Returns the connected tree
    and the eligible segments that were cut off from it.
    """
    eligible = frozenset(eligible)
    if tree.root not in eligible:
        raise PruneError("tree has no inlet: the root segment is not eligible")
    kept = {tree.root}
    frontier = [tree.root]
    while frontier:
        nxt = []
        for sid in frontier:
            for c in tree.children[sid]:
                if c in eligible:
                    kept.add(c)
                    nxt.append(c)
        frontier = nxt
    out = tree.rebuild(
        {s: tree.segments[s] for s in kept},
        {s: [c for c in tree.children[s] if c in kept] for s in kept},
    )
    return out, frozenset(eligible & set(tree.segments)) - kept


def connected_report(tree: SegmentTree, eligible: Iterable[int]) -> tuple[SegmentTree, PruneReport]:
    eligible = frozenset(eligible) & set(tree.segments)
    out, discarded = connected_subtree(tree, eligible)
    report = PruneReport(
        "connected_subtree",
        before=len(eligible),
        after=len(out),
        discarded=tuple(sorted(discarded)),
        nodes_removed=_node_diff(tree, out),
    )
    return out, report


def filter_report(tree: SegmentTree, current: Iterable[int], spec: FilterSpec, passed: Iterable[int]) -> PruneReport:
    current = frozenset(current)
    survivors = current & frozenset(passed)
    return PruneReport(
        f"filter:{spec.kind}",
        before=len(current),
        after=len(survivors),
        removed=tuple(sorted(current - survivors)),
    )


def remove_pseudo_trifurcations(tree: SegmentTree, short_node_count: int = 2) -> tuple[SegmentTree, PruneReport]:
    """Collapse short internal segments by moving their branch point up.

    A non-root segment with at most ``short_node_count`` nodes that has
    children is removed; its children are re-parented to its parent and
    re-headed at its proximal node.  Chains of short segments collapse to
    the nearest surviving ancestor.  Short leaves are left alone.
    """
    if short_node_count < 2:
        raise PruneError("short_node_count must be at least 2")
    segs = tree.segments
    warnings = []
    root_seg = segs[tree.root]
    if len(root_seg) <= short_node_count and tree.children[tree.root]:
        warnings.append(_warn(f"root segment {tree.root} is short but cannot be removed"))

    short = {
        s for s, seg in segs.items()
        if s != tree.root and len(seg) <= short_node_count and tree.children[s]
    }

    # geometric sanity check only; removal is by node count
    fat = 0
    for s in short:
        m = segment_metrics(segs[s], tree.nodes)
        r = tree.nodes.radii(segs[s].nodes)
        if np.all(r > m.length):
            fat += 1

    new_segs: dict[int, Segment] = {}
    new_kids: dict[int, list[int]] = {}
    for sid in tree.bfs():
        if sid in short:
            continue
        seg = segs[sid]
        new_kids[sid] = []
        if sid != tree.root:
            p = tree.parent[sid]
            moved = p in short
            while p in short:
                p = tree.parent[p]
            if moved:
                seg = Segment(sid, (segs[p].last,) + seg.nodes[1:])
            new_kids[p].append(sid)
        new_segs[sid] = seg

    out = tree.rebuild(new_segs, new_kids)
    report = PruneReport(
        "remove_pseudo_trifurcations",
        before=len(tree),
        after=len(out),
        removed=tuple(sorted(short)),
        nodes_removed=_node_diff(tree, out),
        warnings=tuple(warnings),
        notes={"short_node_count": short_node_count, "radii_exceed_length": fat},
    )
    return out, report


def series_join(tree: SegmentTree) -> tuple[SegmentTree, PruneReport]:
    """Merge every segment with its only child until no such pair remains.

    The merged segment keeps the parent's id.
    """
    segs = dict(tree.segments)
    kids = {k: list(v) for k, v in tree.children.items()}
    joined = []
    queue = deque([tree.root])
    while queue:
        sid = queue.popleft()
        while len(kids[sid]) == 1:
            c = kids[sid][0]
            segs[sid] = Segment(sid, segs[sid].nodes + segs[c].nodes[1:])
            kids[sid] = kids.pop(c)
            del segs[c]
            joined.append((sid, c))
        queue.extend(kids[sid])
    out = tree.rebuild(segs, kids)
    return out, PruneReport("series_join", before=len(tree), after=len(out), joined=tuple(joined))


def remove_short_terminals(tree: SegmentTree, min_nodes: int = 5) -> tuple[SegmentTree, PruneReport]:
    """Drop leaf segments with fewer than *min_nodes* nodes in a single pass.

    Parents left childless by the pass are not revisited; see
    :func:`simplify_fixpoint` for the repeated version.  The root segment is
    never removed.
    """
    warnings = []
    drop = set()
    for s in tree.leaves():
        if len(tree.segments[s]) >= min_nodes:
            continue
        if s == tree.root:
            warnings.append(_warn(f"root segment {s} is a short leaf but cannot be removed"))
            continue
        drop.add(s)
    out = tree.rebuild(
        {s: seg for s, seg in tree.segments.items() if s not in drop},
        {s: [c for c in kids if c not in drop] for s, kids in tree.children.items() if s not in drop},
    )
    report = PruneReport(
        "remove_short_terminals",
        before=len(tree),
        after=len(out),
        removed=tuple(sorted(drop)),
        nodes_removed=_node_diff(tree, out),
        warnings=tuple(warnings),
        notes={"min_nodes": min_nodes},
    )
    return out, report


def simplify_fixpoint(tree: SegmentTree, min_nodes: int = 5) -> tuple[SegmentTree, PruneReport]:
    """Alternate short-terminal removal and series joins until stable."""
    current = tree
    removed: list[int] = []
    joined: list[tuple[int, int]] = []
    warnings: list[str] = []
    rounds = 0
    while True:
        current, r1 = remove_short_terminals(current, min_nodes)
        current, r2 = series_join(current)
        removed += r1.removed
        joined += r2.joined
        warnings += [w for w in r1.warnings if w not in warnings]
        rounds += 1
        if not (r1.changed or r2.changed):
            break
    report = PruneReport(
        "simplify_fixpoint",
        before=len(tree),
        after=len(current),
        removed=tuple(removed),
        joined=tuple(joined),
        nodes_removed=_node_diff(tree, current),
        warnings=tuple(warnings),
        notes={"min_nodes": min_nodes, "rounds": rounds},
    )
    return current, report
