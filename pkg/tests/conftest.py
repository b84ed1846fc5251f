from __future__ import annotations

import os

import numpy as np
import pytest

from vasculatree.graph import NodeTable, RootPolicy, Segment, SegmentTree, build_tree
from vasculatree.ingest import parse_point_cloud

# F1: 7 nodes, edges 0-1, 1-2, 2-3, 2-4, 4-5, 4-6; node 0 is the highest terminal.
F1_NODES = {
    0: ((0.0, 0.0, 10.0), 1.0, [1]),
    1: ((0.0, 0.0, 8.0), 0.9, [0, 2]),
    2: ((0.0, 0.0, 6.0), 0.8, [1, 3, 4]),
    3: ((-1.0, 0.0, 5.0), 0.5, [2]),
    4: ((1.0, 0.0, 5.0), 0.7, [2, 5, 6]),
    5: ((0.5, 0.0, 3.5), 0.4, [4]),
    6: ((2.0, 0.0, 4.0), 0.45, [4]),
}


def cloud_csv(nodes: dict, extra_lines: str = "") -> str:
    rows = ["id,x,y,z,radius,neighbors"]
    for i, (pos, r, nbs) in sorted(nodes.items()):
        rows.append(f"{i},{pos[0]!r},{pos[1]!r},{pos[2]!r},{r!r},{';'.join(map(str, nbs))}")
    return "\n".join(rows) + "\n" + extra_lines


@pytest.fixture
def f1_csv() -> str:
    return cloud_csv(F1_NODES)


@pytest.fixture
def f1_cloud(f1_csv):
    return parse_point_cloud(f1_csv.encode(), "csv")


@pytest.fixture
def f1(f1_cloud):
    """(graph, tree) for F1 rooted at node 0."""
    graph, tree, _ = build_tree(f1_cloud, RootPolicy())
    return graph, tree


def make_tree(paths: dict[int, tuple[int, ...]], children: dict[int, tuple[int, ...]], root: int = 0,
              positions: dict | None = None, radii: dict | None = None) -> SegmentTree:
    """Hand-built tree; nodes default to distinct points along x with radius 1."""
    ids = sorted({n for p in paths.values() for n in p})
    positions = positions or {i: (float(i), 0.0, 0.0) for i in ids}
    radii = radii or {i: 1.0 for i in ids}
    return SegmentTree(
        {s: Segment(s, tuple(p)) for s, p in paths.items()},
        {s: tuple(children.get(s, ())) for s in paths},
        root,
        NodeTable(positions, radii),
    )


def random_tree(rng: np.random.Generator, n_segments: int, max_nodes: int = 8) -> SegmentTree:
    """Random rooted tree with arbitrary topology (single children allowed).

    Node positions are i.i.d. Gaussian and radii uniform, so geometry is
    unstructured; only topology and node counts matter to the rewrites.
    """
    paths: dict[int, tuple[int, ...]] = {}
    children: dict[int, list[int]] = {}
    next_node = 0

    def fresh(k):
        nonlocal next_node
        out = tuple(range(next_node, next_node + k))
        next_node += k
        return out

    paths[0] = fresh(int(rng.integers(2, max_nodes + 1)))
    children[0] = []
    for s in range(1, n_segments):
        p = int(rng.integers(0, s))
        paths[s] = (paths[p][-1],) + fresh(int(rng.integers(1, max_nodes)))
        children[s] = []
        children[p].append(s)
    ids = range(next_node)
    pos = {i: tuple(float(c) for c in rng.normal(0.0, 5.0, 3)) for i in ids}
    rad = {i: float(rng.uniform(0.05, 2.0)) for i in ids}
    return SegmentTree(
        {s: Segment(s, p) for s, p in paths.items()},
        {s: tuple(sorted(c)) for s, c in children.items()},
        0,
        NodeTable(pos, rad),
    )


@pytest.fixture(scope="session")
def reference_data_path():
    path = os.environ.get("VASCULATREE_REFERENCE_DATA")
    if not path:
        pytest.skip("set VASCULATREE_REFERENCE_DATA to the 17945-node reference cloud")
    return path


# acceptance criteria: one summary line per criterion
_ACCEPTANCE: dict[int, dict] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or rep.when != "call" and not rep.failed:
        return
    number, title = mark.args
    entry = _ACCEPTANCE.setdefault(number, {"title": title, "ok": True, "seconds": 0.0, "notes": []})
    entry["ok"] &= rep.passed or (rep.skipped and hasattr(rep, "wasxfail"))
    if rep.when == "call":
        entry["seconds"] += rep.duration
    entry["notes"].extend(getattr(item, "acceptance_notes", ()))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        e = _ACCEPTANCE[number]
        status = "PASS" if e["ok"] else "FAIL"
        line = f"criterion {number}: {status}  {e['title']}  ({e['seconds']:.2f} s)"
        for note in e["notes"]:
            line += f"  [{note}]"
        terminalreporter.write_line(line)
