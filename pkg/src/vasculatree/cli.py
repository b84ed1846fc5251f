"""Command-line entry point: ``vasculatree {stats,prune,render,export,synth}``.

Exit codes: 0 success, 1 usage or config error, 2 data error, 3 the
pipeline produced no usable tree.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .errors import ConfigError, EmptyResultError, VasculatreeError
from .export import solver_export, tree_from_json, write_atomic
from .graph import RootPolicy, build_tree
from .ingest import read_point_cloud, serialize_point_cloud, validate
from .morphometry import (
    generation_cutoff,
    generation_profile,
    information_delta,
    tree_metrics,
    tree_summary,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_EMPTY = 0, 1, 2, 3

log = logging.getLogger("vasculatree")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _setup_logging(level: str | None) -> None:
    level = (level or os.environ.get("VASCULATREE_LOG") or "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def _root_policy(args) -> RootPolicy:
    if args.root_id is not None:
        return RootPolicy.explicit(args.root_id)
    return RootPolicy(axis=args.root_axis)


def cmd_stats(args) -> int:
    cloud = read_point_cloud(args.input, args.format, unit=args.unit)
    issues = validate(cloud, args.outlier_multiple)
    graph, tree, removed = build_tree(cloud, _root_policy(args))
    kinds = [k.value for k in graph.kind.values()]
    metrics = tree_metrics(tree, args.threads)
    summary = tree_summary(tree, metrics)
    profile = generation_profile(tree, metrics)
    cutoff = generation_cutoff(information_delta(profile)) if len(profile) > 1 else 0
    doc = {
        "nodes": len(cloud),
        "disconnected_nodes_removed": removed,
        "symmetrization_repairs": cloud.repairs,
        "dropped_cycle_edges": len(tree.dropped_edges),
        "root_node": graph.root,
        "terminal": kinds.count("terminal"),
        "body": kinds.count("body"),
        "junction": kinds.count("junction"),
        **summary,
        "generation_cutoff": cutoff,
        "validation": issues.as_dict(),
        "profile": [
            {"generation": i, "n": n, "volume_mm3": v, "info_density": d}
            for i, n, v, d in profile.rows()
        ],
    }

    if args.report_dir:
        out = Path(args.report_dir)
        write_atomic(out / "stats.json", (json.dumps(doc, indent=1) + "\n").encode())
        write_atomic(out / "profile.csv", profile.to_csv().encode())
        from .figures import plot_generation_profile, plot_strahler_counts

        plot_generation_profile(profile, out / "profile.png", cutoff)
        plot_strahler_counts(summary["strahler_counts"], out / "strahler.png")

    if args.json:
        print(json.dumps(doc, indent=1))
        return EXIT_OK
    print(f"nodes              {doc['nodes']} ({removed} disconnected removed)")
    print(f"terminal/body/junc {doc['terminal']} / {doc['body']} / {doc['junction']}")
    print(f"root node          {graph.root}")
    print(f"segments           {summary['segments']}")
    print(f"generations        {summary['generations']}")
    print(f"strahler order     {summary['strahler_order']}")
    print(f"radius range (mm)  {summary['radius_min_mm']:.4g} - {summary['radius_max_mm']:.4g}")
    print(f"generation cutoff  {cutoff}")
    for issue in issues.issues[:20]:
        print(f"warning: {issue}")
    print()
    print(f"{'gen':>4} {'n':>6} {'volume_mm3':>14} {'info_density':>14}")
    for i, n, v, d in profile.rows():
        print(f"{i:>4} {n:>6} {v:>14.6g} {d:>14.6g}")
    return EXIT_OK


def cmd_prune(args) -> int:
    from .pipeline import load_config, run_pipeline

    config = load_config(args.config)
    result = run_pipeline(config, threads=args.threads)
    for k, r in enumerate(result.reports):
        print(f"[{k}] {r.operation}: {r.before} -> {r.after}")
    if not result.ok:
        print(f"error: {result.error}", file=sys.stderr)
        return EXIT_EMPTY
    print(f"final tree: {len(result.tree)} segments")
    return EXIT_OK


def _load_tree(path):
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise VasculatreeError(f"cannot read {path}: {exc.strerror}") from None
    return tree_from_json(data)


def cmd_render(args) -> int:
    from .project import lateral_projection, mercator_projection, render

    tree = _load_tree(args.tree)
    if args.projection == "mercator":
        center = [float(c) for c in args.center.split(",")] if args.center else None
        lines = mercator_projection(tree, center=center, lat_clamp_deg=args.lat_clamp)
    else:
        lines = lateral_projection(tree, args.plane)
    stem = Path(args.output) if args.output else Path(args.tree).with_suffix("")
    svg = stem.with_suffix(".svg")
    write_atomic(svg, render(lines, "svg", args.style))
    written = [svg]
    if args.csv:
        csv_path = stem.with_suffix(".csv")
        write_atomic(csv_path, render(lines, "csv", args.style))
        written.append(csv_path)
    if args.figure:
        from .figures import plot_polylines

        written.append(plot_polylines(lines, stem.with_suffix(".png"), args.style, args.projection))
    for p in written:
        print(p)
    return EXIT_OK


def cmd_export(args) -> int:
    tree = _load_tree(args.tree)
    data = solver_export(tree)
    if args.output:
        write_atomic(args.output, data)
    else:
        sys.stdout.write(data.decode())
    return EXIT_OK


def cmd_synth(args) -> int:
    from .synthetic import synthetic_cloud

    cloud = synthetic_cloud(args.nodes, args.seed, stray_pairs=args.stray_pairs)
    fmt = "json" if args.output.endswith(".json") else "csv"
    write_atomic(args.output, serialize_point_cloud(cloud, fmt))
    print(f"{args.output}: {len(cloud)} nodes")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="vasculatree", description=__doc__.splitlines()[0])
    p.add_argument("--threads", type=int, default=1, help="worker threads for per-segment metrics")
    p.add_argument("--log-level", default=None, help="overrides VASCULATREE_LOG")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("stats", help="summarize a point cloud")
    s.add_argument("input")
    s.add_argument("--format", choices=("csv", "json"))
    s.add_argument("--unit", choices=("mm", "um"))
    s.add_argument("--root-axis", default="+z")
    s.add_argument("--root-id", type=int)
    s.add_argument("--outlier-multiple", type=float, default=10.0)
    s.add_argument("--json", action="store_true", help="print the report as JSON")
    s.add_argument("--report-dir", help="write stats.json, profile.csv and figures here")
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("prune", help="run a JSON-configured prune pipeline")
    s.add_argument("--config", required=True)
    s.set_defaults(func=cmd_prune)

    s = sub.add_parser("render", help="project a tree file to SVG (and CSV/PNG)")
    s.add_argument("tree")
    s.add_argument("--projection", choices=("lateral", "mercator"), default="mercator")
    s.add_argument("--style", choices=("generation", "strahler"), default="generation")
    s.add_argument("--plane", choices=("xy", "xz", "yz"), default="xy")
    s.add_argument("--center", help="x,y,z of the Mercator center (default: node centroid)")
    s.add_argument("--lat-clamp", type=float, default=85.0)
    s.add_argument("--output", "-o", help="output path stem")
    s.add_argument("--csv", action="store_true", help="also write segment_id,point_index,u,v CSV")
    s.add_argument("--figure", action="store_true", help="also write a matplotlib PNG")
    s.set_defaults(func=cmd_render)

    s = sub.add_parser("export", help="write a solver vessel table")
    s.add_argument("tree")
    s.add_argument("--format", choices=("solver",), default="solver")
    s.add_argument("--output", "-o")
    s.set_defaults(func=cmd_export)

    s = sub.add_parser("synth", help="generate a synthetic point cloud")
    s.add_argument("--nodes", type=int, default=5000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--stray-pairs", type=int, default=0)
    s.add_argument("--output", "-o", required=True)
    s.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _setup_logging(args.log_level)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except EmptyResultError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EMPTY
    except (VasculatreeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
