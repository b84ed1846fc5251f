"""Random vascular-like point clouds for testing and demos.

The generator grows a downward branching tree from a single inlet at the
top (largest z), so the default root policy always finds it.  Radii shrink
along every path with multiplicative noise.  A configurable share of
internal segments is only two nodes long, mimicking the pseudo-trifurcation
artifacts seen in real reconstructions.
"""

from __future__ import annotations

from collections import deque

import numpy as np

from .ingest import NodeRecord, PointCloud


def _perturb(rng: np.random.Generator, direction: np.ndarray, spread: float) -> np.ndarray:
    d = direction + rng.normal(0.0, spread, 3)
    d[2] = -abs(d[2]) - 0.2  # always descend so the inlet stays highest
    return d / np.linalg.norm(d)


def synthetic_cloud(
    n_nodes: int = 5000,
    seed: int = 0,
    *,
    max_segments: int | None = None,
    short_fraction: float = 0.15,
    trifurcation_fraction: float = 0.1,
    body_nodes: tuple[int, int] = (1, 12),
    inlet_radius: float = 1.7,
    step_mm: float = 0.4,
    radius_noise: float = 0.02,
    stray_pairs: int = 0,
) -> PointCloud:
    """Grow a random tree cloud of roughly *n_nodes* nodes.

    ``max_segments`` bounds the number of grown segments.  ``stray_pairs``
    appends that many isolated two-node fragments away from the tree.
    """
    rng = np.random.default_rng(seed)
    pos: list[np.ndarray] = [np.zeros(3)]
    rad: list[float] = [inlet_radius]
    nbrs: list[set[int]] = [set()]

    def add(p, r, prev):
        pos.append(p)
        rad.append(r)
        nbrs.append({prev})
        nbrs[prev].add(len(pos) - 1)
        return len(pos) - 1

    # tip: (start node, heading, radius, is_first)
    tips = deque([(0, np.array([0.0, 0.0, -1.0]), inlet_radius, True)])
    segments = 0
    while tips and len(pos) < n_nodes:
        if max_segments is not None and segments >= max_segments:
            break
        start, heading, r, first = tips.popleft()
        segments += 1
        short = (not first) and rng.random() < short_fraction
        n_body = 0 if short else int(rng.integers(body_nodes[0], body_nodes[1] + 1))
        node = start
        for _ in range(n_body + 1):
            heading = _perturb(rng, heading, 0.15)
            step = step_mm * (0.5 if short else 1.0) * rng.uniform(0.7, 1.3)
            r = max(r * float(np.exp(rng.normal(-0.01, radius_noise))), 0.02)
            node = add(pos[node] + step * heading, r, node)
        if r < 0.05:
            continue
        k = 3 if rng.random() < trifurcation_fraction else 2
        for _ in range(k):
            tips.append((node, _perturb(rng, heading, 0.8), r * rng.uniform(0.6, 0.9), False))

    for j in range(stray_pairs):
        base = np.array([50.0 + 5 * j, 50.0, -10.0])
        a = len(pos)
        pos += [base, base + np.array([0.5, 0.0, 0.0])]
        rad += [0.1, 0.1]
        nbrs += [{a + 1}, {a}]

    nodes = tuple(
        NodeRecord(i, tuple(float(c) for c in p), float(r), tuple(sorted(nb)))
        for i, (p, r, nb) in enumerate(zip(pos, rad, nbrs))
    )
    return PointCloud(nodes)
