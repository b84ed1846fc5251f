"""Per-segment measurements, generations, Strahler orders and the
information-density profile used to cap tree depth."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import VasculatreeError
from .graph import NodeTable, Segment, SegmentTree

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SegmentMetrics:
    length: float
    volume: float
    mean_radius: float
    median_radius: float
    min_radius: float
    max_radius: float
    node_count: int


def segment_metrics(segment: Segment, nodes: NodeTable) -> SegmentMetrics:
    """Polyline length, frustum-sum volume and radius statistics.

    Each consecutive node pair contributes a truncated cone
    ``pi/3 * L * (ra**2 + ra*rb + rb**2)``.  Radius statistics include both
    endpoints.
    """
    xyz = nodes.xyz(segment.nodes)
    r = nodes.radii(segment.nodes)
    steps = np.linalg.norm(np.diff(xyz, axis=0), axis=1)
    ra, rb = r[:-1], r[1:]
    frusta = math.pi / 3.0 * steps * (ra * ra + ra * rb + rb * rb)
    return SegmentMetrics(
        length=float(steps.sum()),
        volume=float(frusta.sum()),
        mean_radius=float(r.mean()),
        median_radius=float(np.median(r)),
        min_radius=float(r.min()),
        max_radius=float(r.max()),
        node_count=len(segment.nodes),
    )


def tree_metrics(tree: SegmentTree, threads: int = 1) -> dict[int, SegmentMetrics]:
    """Metrics for every segment, keyed by segment id in ascending order."""
    ids = sorted(tree.segments)
    segs = [tree.segments[i] for i in ids]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            values = list(pool.map(lambda s: segment_metrics(s, tree.nodes), segs))
    else:
        values = [segment_metrics(s, tree.nodes) for s in segs]
    return dict(zip(ids, values))


def assign_generations(tree: SegmentTree) -> dict[int, int]:
    """Topological depth of each segment; the root segment is generation 0."""
    gen = {tree.root: 0}
    for sid in tree.bfs():
        for c in tree.children[sid]:
            gen[c] = gen[sid] + 1
    return dict(sorted(gen.items()))


def strahler_orders(tree: SegmentTree) -> dict[int, int]:
    """Bottom-up Strahler ordering of segments.

    Leaves get 1.  A parent takes the largest child order, plus one when
    that maximum is shared by two or more children.
    """
    order: dict[int, int] = {}
    for sid in reversed(list(tree.bfs())):
        kids = [order[c] for c in tree.children[sid]]
        if not kids:
            order[sid] = 1
            continue
        top = max(kids)
        order[sid] = top + 1 if kids.count(top) >= 2 else top
    return dict(sorted(order.items()))


@dataclass(frozen=True)
class GenerationProfile:
    """Segment count, total volume and their ratio for each generation."""

    count: np.ndarray  # n(i)
    volume: np.ndarray  # v(i), mm^3
    density: np.ndarray  # I(i) = v(i) / n(i)

    def __len__(self) -> int:
        return len(self.count)

    @classmethod
    def from_arrays(cls, count, volume) -> "GenerationProfile":
        count = np.asarray(count, dtype=int)
        volume = np.asarray(volume, dtype=float)
        if count.shape != volume.shape or count.ndim != 1:
            raise VasculatreeError("count and volume must be 1-D arrays of equal length")
        if np.any(count < 1):
            raise VasculatreeError("every generation must hold at least one segment")
        return cls(count, volume, volume / count)

    def rows(self) -> list[tuple[int, int, float, float]]:
        return [
            (i, int(n), float(v), float(d))
            for i, (n, v, d) in enumerate(zip(self.count, self.volume, self.density))
        ]

    def to_csv(self) -> str:
        lines = ["generation,n,volume_mm3,info_density"]
        lines += [f"{i},{n},{v!r},{d!r}" for i, n, v, d in self.rows()]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "GenerationProfile":
        rows = [line.split(",") for line in text.strip().splitlines()[1:]]
        return cls.from_arrays([int(r[1]) for r in rows], [float(r[2]) for r in rows])


def generation_profile(
    tree: SegmentTree,
    metrics: Mapping[int, SegmentMetrics] | None = None,
    generations: Mapping[int, int] | None = None,
) -> GenerationProfile:
    """Aggregate n and v per generation.

    Volumes are summed in ascending segment-id order so the totals do not
    depend on traversal order.
    """
    metrics = tree_metrics(tree) if metrics is None else metrics
    generations = assign_generations(tree) if generations is None else generations
    depth = max(generations.values()) + 1
    count = np.zeros(depth, dtype=int)
    volume = np.zeros(depth, dtype=float)
    for sid in sorted(tree.segments):
        g = generations[sid]
        count[g] += 1
        volume[g] += metrics[sid].volume
    return GenerationProfile.from_arrays(count, volume)


def information_delta(profile: GenerationProfile) -> np.ndarray:
    """First difference of information density: ``I(i+1) - I(i)``."""
    if len(profile) < 2:
        raise VasculatreeError("information delta needs at least two generations")
    return np.diff(profile.density)


def generation_cutoff(delta, divisor: float = 100.0, mode: str = "magnitude") -> int:
    """Index of the first generation step whose gain falls below peak/divisor.

    ``mode="magnitude"`` takes the peak as ``max |delta|``; ``mode="signed"``
    uses ``max delta``.  When no step qualifies the last generation index
    ``len(delta)`` is returned, meaning no cap.
    """
    delta = np.asarray(delta, dtype=float)
    if delta.size == 0:
        raise VasculatreeError("information delta is empty")
    if divisor <= 0:
        raise VasculatreeError("divisor must be positive")
    if mode == "magnitude":
        peak = float(np.max(np.abs(delta)))
    elif mode == "signed":
        peak = float(np.max(delta))
    else:
        raise VasculatreeError(f"unknown peak mode {mode!r}")
    if not np.any(delta):
        log.warning("information delta is identically zero; no generation cutoff applied")
        return int(delta.size)
    below = np.nonzero(np.abs(delta) < peak / divisor)[0]
    return int(below[0]) if below.size else int(delta.size)


def tree_summary(tree: SegmentTree, metrics: Mapping[int, SegmentMetrics] | None = None) -> dict:
    """Counts and ranges reported by the ``stats`` command."""
    metrics = tree_metrics(tree) if metrics is None else metrics
    gens = assign_generations(tree)
    orders = strahler_orders(tree)
    radii = tree.nodes.radii(sorted(tree.node_ids()))
    return {
        "segments": len(tree),
        "generations": max(gens.values()) + 1,
        "strahler_order": orders[tree.root],
        "radius_min_mm": float(radii.min()),
        "radius_max_mm": float(radii.max()),
        "total_length_mm": float(sum(metrics[s].length for s in sorted(metrics))),
        "total_volume_mm3": float(sum(metrics[s].volume for s in sorted(metrics))),
        "strahler_counts": {
            str(k): sum(1 for v in orders.values() if v == k) for k in sorted(set(orders.values()))
        },
    }
