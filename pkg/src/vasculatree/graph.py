"""Vessel graphs and their decomposition into rooted segment trees."""

from __future__ import annotations

import heapq
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator, Mapping

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import GraphError
from .ingest import PointCloud

log = logging.getLogger(__name__)


class NodeKind(str, Enum):
    TERMINAL = "terminal"
    BODY = "body"
    JUNCTION = "junction"


@dataclass(frozen=True)
class NodeTable:
    """Geometry of every node a graph or tree may refer to."""

    position: Mapping[int, tuple[float, float, float]]
    radius: Mapping[int, float]

    def xyz(self, ids: Iterable[int]) -> np.ndarray:
        return np.array([self.position[i] for i in ids], dtype=float).reshape(-1, 3)

    def radii(self, ids: Iterable[int]) -> np.ndarray:
        return np.array([self.radius[i] for i in ids], dtype=float)

    def restrict(self, ids: Iterable[int]) -> "NodeTable":
        ids = sorted(set(ids))
        return NodeTable({i: self.position[i] for i in ids}, {i: self.radius[i] for i in ids})


@dataclass(frozen=True, eq=False)
class VesselGraph:
    """Undirected simple graph over point-cloud nodes.

    ``adjacency`` maps each node id to its sorted neighbour ids.  ``root``
    stays ``None`` until :func:`select_root` has been applied through
    :meth:`with_root`.
    """

    nodes: NodeTable
    adjacency: Mapping[int, tuple[int, ...]]
    root: int | None = None

    def __len__(self) -> int:
        return len(self.adjacency)

    def degree(self, node: int) -> int:
        return len(self.adjacency[node])

    @property
    def kind(self) -> dict[int, NodeKind]:
        return classify_nodes(self)

    def edge_count(self) -> int:
        return sum(len(v) for v in self.adjacency.values()) // 2

    def edges(self) -> Iterator[tuple[int, int]]:
        for a in sorted(self.adjacency):
            for b in self.adjacency[a]:
                if a < b:
                    yield a, b

    def with_root(self, root: int) -> "VesselGraph":
        if root not in self.adjacency:
            raise GraphError(f"root {root} is not a node of the graph")
        return VesselGraph(self.nodes, self.adjacency, root)


def graph_from_cloud(cloud: PointCloud) -> VesselGraph:
    """Wrap a point cloud as a graph without any connectivity check."""
    table = NodeTable(
        {n.id: tuple(float(c) for c in n.position) for n in cloud.nodes},
        {n.id: float(n.radius) for n in cloud.nodes},
    )
    return VesselGraph(table, {n.id: tuple(n.neighbors) for n in cloud.nodes})


def largest_component(cloud: PointCloud) -> tuple[VesselGraph, int]:
    """Keep the largest connected component of *cloud*.

    Ties on size go to the component holding the smallest node id.
    Returns the component graph and the number of nodes discarded.
    """
    if len(cloud) == 0:
        raise GraphError("point cloud is empty")
    ids = cloud.ids
    index = {i: k for k, i in enumerate(ids)}
    rows, cols = [], []
    for n in cloud.nodes:
        for m in n.neighbors:
            rows.append(index[n.id])
            cols.append(index[m])
    mat = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(ids), len(ids)))
    _, labels = connected_components(mat, directed=False)
    sizes = np.bincount(labels)
    # ids are sorted, so the first index of each label is its smallest id
    first = {}
    for k, lab in enumerate(labels):
        first.setdefault(int(lab), k)
    best = min(first, key=lambda lab: (-sizes[lab], first[lab]))
    keep = [ids[k] for k in range(len(ids)) if labels[k] == best]
    removed = len(ids) - len(keep)
    if removed:
        log.info("discarded %d nodes outside the largest component", removed)
    graph = graph_from_cloud(cloud)
    keep_set = set(keep)
    return (
        VesselGraph(
            graph.nodes.restrict(keep),
            {i: graph.adjacency[i] for i in keep if i in keep_set},
        ),
        removed,
    )


def classify_nodes(graph: VesselGraph) -> dict[int, NodeKind]:
    kinds = {}
    for node, nbs in graph.adjacency.items():
        d = len(nbs)
        if d == 0:
            raise GraphError(f"node {node} is isolated; run largest_component first")
        kinds[node] = NodeKind.TERMINAL if d == 1 else NodeKind.BODY if d == 2 else NodeKind.JUNCTION
    return kinds


_AXES = {"x": 0, "y": 1, "z": 2}


@dataclass(frozen=True)
class RootPolicy:
    """How to choose the inlet.

    ``kind="axis_max"`` picks the terminal with the largest coordinate along
    ``axis`` (``"+z"``, ``"-x"``, ...); ``kind="explicit"`` uses ``node_id``.
    """

    kind: str = "axis_max"
    axis: str = "+z"
    node_id: int | None = None

    @classmethod
    def explicit(cls, node_id: int) -> "RootPolicy":
        return cls(kind="explicit", node_id=node_id)

    def axis_vector(self) -> tuple[int, float]:
        text = self.axis.strip().lower()
        sign = -1.0 if text.startswith("-") else 1.0
        name = text.lstrip("+-")
        if name not in _AXES:
            raise GraphError(f"unknown axis {self.axis!r}")
        return _AXES[name], sign


def select_root(graph: VesselGraph, policy: RootPolicy = RootPolicy()) -> int:
    kinds = classify_nodes(graph)
    terminals = sorted(n for n, k in kinds.items() if k is NodeKind.TERMINAL)
    if policy.kind == "explicit":
        if policy.node_id not in kinds:
            raise GraphError(f"root {policy.node_id} is not a node of the graph")
        if kinds[policy.node_id] is not NodeKind.TERMINAL:
            raise GraphError(
                f"root {policy.node_id} is a {kinds[policy.node_id].value} node; the root must be terminal"
            )
        return policy.node_id
    if policy.kind != "axis_max":
        raise GraphError(f"unknown root policy {policy.kind!r}")
    if not terminals:
        raise GraphError("graph has no terminal node to use as root")
    axis, sign = policy.axis_vector()
    # lowest id wins ties because terminals are sorted and max() keeps the first
    return max(terminals, key=lambda n: sign * graph.nodes.position[n][axis])


@dataclass(frozen=True)
class Segment:
    """Oriented node path; ``nodes[0]`` is proximal, ``nodes[-1]`` distal."""

    id: int
    nodes: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def first(self) -> int:
        return self.nodes[0]

    @property
    def last(self) -> int:
        return self.nodes[-1]


@dataclass(frozen=True, eq=False)
class SegmentTree:
    """Rooted tree of segments.

    ``children`` lists child segment ids in ascending order for every
    segment (empty tuple for leaves).  Equality compares topology and node
    paths only; the node table is carried along but not compared.
    """

    segments: Mapping[int, Segment]
    children: Mapping[int, tuple[int, ...]]
    root: int
    nodes: NodeTable
    dropped_edges: tuple[tuple[int, int], ...] = field(default=(), compare=False)
    parent: Mapping[int, int | None] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.root not in self.segments:
            raise GraphError(f"root segment {self.root} missing")
        parent: dict[int, int | None] = {self.root: None}
        for sid, kids in self.children.items():
            for c in kids:
                if c in parent:
                    raise GraphError(f"segment {c} has more than one parent")
                parent[c] = sid
        if set(parent) != set(self.segments) or set(self.children) != set(self.segments):
            raise GraphError("children map does not cover exactly the tree's segments")
        object.__setattr__(self, "parent", parent)
        # reachability: every segment must hang below the root
        if len(list(self.bfs())) != len(self.segments):
            raise GraphError("segment topology is not a single rooted tree")

    def __len__(self) -> int:
        return len(self.segments)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SegmentTree):
            return NotImplemented
        return (
            self.root == other.root
            and dict(self.segments) == dict(other.segments)
            and {k: tuple(v) for k, v in self.children.items()}
            == {k: tuple(v) for k, v in other.children.items()}
        )

    __hash__ = None

    def bfs(self) -> Iterator[int]:
        """Segment ids top-down, children in ascending id order."""
        queue = deque([self.root])
        while queue:
            sid = queue.popleft()
            yield sid
            queue.extend(self.children[sid])

    def leaves(self) -> list[int]:
        return sorted(s for s, kids in self.children.items() if not kids)

    def node_ids(self) -> set[int]:
        return {n for seg in self.segments.values() for n in seg.nodes}

    def rebuild(self, segments: Mapping[int, Segment], children: Mapping[int, Iterable[int]]) -> "SegmentTree":
        """New tree over the same node table."""
        return SegmentTree(
            dict(sorted(segments.items())),
            {k: tuple(sorted(children.get(k, ()))) for k in sorted(segments)},
            self.root,
            self.nodes,
        )

    def check_invariants(self) -> None:
        """Raise :class:`GraphError` if junction sharing or disjointness fails."""
        for sid, seg in self.segments.items():
            if len(seg.nodes) < 2:
                raise GraphError(f"segment {sid} has fewer than two nodes")
            for c in self.children[sid]:
                if self.segments[c].first != seg.last:
                    raise GraphError(f"segment {c} does not start where its parent {sid} ends")
        owner: dict[int, int] = {}
        for sid in self.bfs():
            seg = self.segments[sid]
            tail = seg.nodes if sid == self.root else seg.nodes[1:]
            for n in tail:
                if n in owner:
                    raise GraphError(f"node {n} appears in segments {owner[n]} and {sid}")
                owner[n] = sid


def shortest_path_tree(graph: VesselGraph, root: int) -> tuple[dict[int, int | None], dict[int, float]]:
    """Dijkstra with Euclidean edge weights.

    Equal-length alternatives resolve to the smaller predecessor id, so the
    result depends only on the graph.
    """
    pos = graph.nodes.position
    dist: dict[int, float] = {root: 0.0}
    pred: dict[int, int | None] = {root: None}
    done: set[int] = set()
    heap = [(0.0, root)]
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        pu = pos[u]
        for v in graph.adjacency[u]:
            if v in done:
                continue
            nd = d + math.dist(pu, pos[v])
            old = dist.get(v)
            if old is None or nd < old:
                dist[v] = nd
                pred[v] = u
                heapq.heappush(heap, (nd, v))
            elif nd == old and u < pred[v]:
                pred[v] = u
    return pred, dist


def extract_segments(graph: VesselGraph, root: int | None = None) -> SegmentTree:
    """Split the shortest-path tree from *root* into segments.

    Segments break wherever the shortest-path tree branches or ends.  Graph
    edges used by no shortest path (cycle chords) are dropped and listed in
    ``SegmentTree.dropped_edges``.  Segment ids are assigned breadth-first,
    siblings ordered by the id of their second node.
    """
    root = graph.root if root is None else root
    if root is None:
        raise GraphError("no root selected")
    if graph.degree(root) != 1:
        raise GraphError(f"root {root} must be a terminal node")
    pred, _ = shortest_path_tree(graph, root)
    if len(pred) != len(graph):
        raise GraphError("graph is not connected")

    tree_kids: dict[int, list[int]] = {n: [] for n in graph.adjacency}
    for v, u in pred.items():
        if u is not None:
            tree_kids[u].append(v)
    for kids in tree_kids.values():
        kids.sort()

    dropped = tuple((a, b) for a, b in graph.edges() if pred.get(b) != a and pred.get(a) != b)
    if dropped:
        log.warning("dropped %d edges not on any shortest path from the root", len(dropped))

    segments: dict[int, Segment] = {}
    children: dict[int, list[int]] = {}
    queue = deque([(root, tree_kids[root][0], None)])
    while queue:
        start, nxt, parent = queue.popleft()
        path = [start, nxt]
        while len(tree_kids[path[-1]]) == 1:
            path.append(tree_kids[path[-1]][0])
        sid = len(segments)
        segments[sid] = Segment(sid, tuple(path))
        children[sid] = []
        if parent is not None:
            children[parent].append(sid)
        for k in tree_kids[path[-1]]:
            queue.append((path[-1], k, sid))

    return SegmentTree(
        segments,
        {k: tuple(v) for k, v in children.items()},
        0,
        graph.nodes,
        dropped_edges=dropped,
    )


def build_tree(cloud: PointCloud, policy: RootPolicy = RootPolicy()) -> tuple[VesselGraph, SegmentTree, int]:
    """Largest component, root selection and segment extraction in one call."""
    graph, removed = largest_component(cloud)
    graph = graph.with_root(select_root(graph, policy))
    return graph, extract_segments(graph), removed
