"""JSON-configured prune pipelines.

A pipeline holds a current tree plus a set of segments still eligible
after filtering.  Filter steps (including ``generation_cap``) only narrow
that set; ``connected_subtree`` turns it back into a tree.  Every other
rewrite requires an open filter run to be closed first, which is checked
when the config is loaded.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from . import _jsonpos
from .errors import ConfigError, EmptyResultError, PruneError
from .export import solver_export, tree_from_json, tree_to_json, write_atomic
from .graph import RootPolicy, SegmentTree, build_tree
from .ingest import read_point_cloud, validate
from .morphometry import (
    assign_generations,
    generation_cutoff,
    generation_profile,
    information_delta,
    tree_metrics,
    tree_summary,
)
from .prune import (
    FilterSpec,
    PruneReport,
    connected_report,
    filter_report,
    filter_segments,
    remove_pseudo_trifurcations,
    remove_short_terminals,
    series_join,
    simplify_fixpoint,
)

log = logging.getLogger(__name__)

# op name -> allowed parameters with their types and defaults
STEP_PARAMS: dict[str, dict[str, tuple[type | tuple[type, ...], Any]]] = {
    "filter": {
        "kind": (str, None),
        "radius_threshold": ((int, float), None),
        "proportion": ((int, float), None),
        "max_generation": (int, None),
    },
    "generation_cap": {"divisor": ((int, float), 100.0), "mode": (str, "magnitude")},
    "connected_subtree": {},
    "remove_pseudo_trifurcations": {"short_node_count": (int, 2)},
    "series_join": {},
    "remove_short_terminals": {"min_nodes": (int, 5)},
    "simplify_fixpoint": {"min_nodes": (int, 5)},
}
FILTER_OPS = {"filter", "generation_cap"}
OUTPUT_KEYS = ("tree", "solver", "report", "svg", "csv", "figure")
INPUT_FORMATS = ("csv", "json", "tree")


@dataclass(frozen=True)
class Step:
    op: str
    params: dict[str, Any]
    line: int | None = None

    def describe(self) -> dict:
        return {"op": self.op, **self.params}


@dataclass(frozen=True)
class PipelineConfig:
    input_path: Path
    input_format: str
    steps: tuple[Step, ...]
    root: RootPolicy = RootPolicy()
    unit: str | None = None
    outputs: dict[str, Path] = field(default_factory=dict)
    projection: str = "mercator"
    style: str = "generation"
    plane: str = "xy"


def _err(msg: str, obj=None) -> ConfigError:
    line = _jsonpos.line_of(obj)
    return ConfigError(f"config line {line}: {msg}" if line else f"config: {msg}")


def _check_keys(obj: dict, allowed: set[str], where: str) -> None:
    extra = sorted(set(obj) - allowed)
    if extra:
        raise _err(f"{where}: unknown key(s) {', '.join(extra)}", obj)


def _parse_step(k: int, raw) -> Step:
    if not isinstance(raw, dict) or "op" not in raw:
        raise _err(f"steps[{k}] must be an object with an \"op\"", raw)
    op = raw["op"]
    if op not in STEP_PARAMS:
        raise _err(f"steps[{k}]: unknown op {op!r}; expected one of {', '.join(STEP_PARAMS)}", raw)
    spec = STEP_PARAMS[op]
    _check_keys(raw, set(spec) | {"op"}, f"steps[{k}] ({op})")
    params = {}
    for name, (typ, default) in spec.items():
        value = raw.get(name, default)
        if value is not None and (isinstance(value, bool) or not isinstance(value, typ)):
            raise _err(f"steps[{k}].{name} has the wrong type", raw)
        if value is not None:
            params[name] = value
    if op == "filter":
        try:
            FilterSpec(**params)
        except TypeError as exc:
            raise _err(f"steps[{k}]: {exc}", raw) from None
        except PruneError as exc:
            raise _err(f"steps[{k}]: {exc}", raw) from None
    if op == "generation_cap" and params["mode"] not in ("magnitude", "signed"):
        raise _err(f"steps[{k}].mode must be 'magnitude' or 'signed'", raw)
    return Step(op, params, _jsonpos.line_of(raw))


def parse_config(text: str, base_dir: str | Path = ".") -> PipelineConfig:
    """Validate a JSON pipeline config.  Relative paths resolve against *base_dir*."""
    base = Path(base_dir)
    try:
        doc = _jsonpos.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config line {exc.lineno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config line 1: top level must be an object")
    _check_keys(doc, {"input", "root", "steps", "outputs", "render"}, "top level")

    inp = doc.get("input")
    if not isinstance(inp, dict) or not isinstance(inp.get("path"), str):
        raise _err('"input" must be an object with a "path"', inp if isinstance(inp, dict) else doc)
    _check_keys(inp, {"path", "format", "unit"}, "input")
    path = base / inp["path"]
    fmt = inp.get("format") or ("tree" if path.name.endswith(".tree.json") else
                               "json" if path.suffix == ".json" else "csv")
    if fmt not in INPUT_FORMATS:
        raise _err(f"input.format must be one of {', '.join(INPUT_FORMATS)}", inp)

    root_doc = doc.get("root", {})
    if not isinstance(root_doc, dict):
        raise _err('"root" must be an object', doc)
    _check_keys(root_doc, {"policy", "axis", "id"}, "root")
    policy = root_doc.get("policy", "axis_max")
    if policy == "explicit":
        if not isinstance(root_doc.get("id"), int):
            raise _err("explicit root policy needs an integer id", root_doc)
        root = RootPolicy.explicit(root_doc["id"])
    elif policy == "axis_max":
        root = RootPolicy(axis=str(root_doc.get("axis", "+z")))
    else:
        raise _err(f"unknown root policy {policy!r}", root_doc)

    raw_steps = doc.get("steps")
    if not isinstance(raw_steps, list) or not raw_steps:
        raise _err('"steps" must be a non-empty list', doc)
    steps = tuple(_parse_step(k, s) for k, s in enumerate(raw_steps))
    open_filter = None
    for k, s in enumerate(steps):
        if s.op in FILTER_OPS:
            open_filter = k if open_filter is None else open_filter
        elif s.op == "connected_subtree":
            open_filter = None
        elif open_filter is not None:
            raise ConfigError(
                f"config line {s.line}: steps[{k}] ({s.op}) follows the filter at steps[{open_filter}]; "
                "insert a connected_subtree step first"
            )

    outs_doc = doc.get("outputs", {})
    if not isinstance(outs_doc, dict):
        raise _err('"outputs" must be an object', doc)
    _check_keys(outs_doc, set(OUTPUT_KEYS), "outputs")
    outputs = {k: base / v for k, v in outs_doc.items()}
    resolved = [p.resolve() for p in outputs.values()] + [path.resolve()]
    if len(set(resolved)) != len(resolved):
        raise _err("input and output paths must all be distinct", outs_doc or doc)

    render = doc.get("render", {})
    _check_keys(render, {"projection", "style", "plane"}, "render")
    projection = render.get("projection", "mercator")
    style = render.get("style", "generation")
    if projection not in ("mercator", "lateral") or style not in ("generation", "strahler"):
        raise _err("render.projection must be mercator|lateral and render.style generation|strahler", render)

    return PipelineConfig(
        input_path=path,
        input_format=fmt,
        steps=steps,
        root=root,
        unit=inp.get("unit"),
        outputs=outputs,
        projection=projection,
        style=style,
        plane=render.get("plane", "xy"),
    )


def load_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, path.parent)


@dataclass
class PipelineResult:
    tree: SegmentTree | None
    reports: list[PruneReport]
    ingest: dict
    error: Exception | None = None

    @property
    def ok(self) -> bool:
        return self.error is None and self.tree is not None

    def report_dict(self) -> dict:
        doc = {
            "ingest": self.ingest,
            "steps": [{"index": k, **r.as_dict()} for k, r in enumerate(self.reports)],
            "status": "ok" if self.ok else "failed",
        }
        if self.error is not None:
            doc["error"] = str(self.error)
        if self.tree is not None:
            doc["final"] = tree_summary(self.tree)
        return doc


def load_input(config: PipelineConfig) -> tuple[SegmentTree, dict]:
    if config.input_format == "tree":
        tree = tree_from_json(config.input_path.read_bytes())
        return tree, {"format": "tree", "segments": len(tree)}
    cloud = read_point_cloud(config.input_path, config.input_format, unit=config.unit)
    issues = validate(cloud)
    graph, tree, removed = build_tree(cloud, config.root)
    kinds = graph.kind
    info = {
        "format": config.input_format,
        "unit": cloud.unit,
        "nodes": len(cloud),
        "symmetrization_repairs": cloud.repairs,
        "disconnected_nodes_removed": removed,
        "dropped_cycle_edges": [list(e) for e in tree.dropped_edges],
        "root_node": graph.root,
        "terminal": sum(1 for k in kinds.values() if k.value == "terminal"),
        "body": sum(1 for k in kinds.values() if k.value == "body"),
        "junction": sum(1 for k in kinds.values() if k.value == "junction"),
        "segments": len(tree),
        "validation": issues.as_dict(),
    }
    return tree, info


def run_steps(tree: SegmentTree, steps, threads: int = 1) -> tuple[SegmentTree, list[PruneReport]]:
    """Apply *steps* in order.

    Raises :class:`EmptyResultError` carrying the failing step index; the
    reports of the steps that did run are attached as ``exc.partial``.
    """
    reports: list[PruneReport] = []
    try:
        return _run_steps(tree, steps, threads, reports)
    except EmptyResultError as exc:
        exc.partial = list(reports)
        raise


def _run_steps(tree, steps, threads, reports):
    eligible = frozenset(tree.segments)
    tree_metrics_cache: dict | None = None
    for k, step in enumerate(steps):
        try:
            if step.op in FILTER_OPS:
                if tree_metrics_cache is None:
                    tree_metrics_cache = tree_metrics(tree, threads)
                spec = _filter_spec(tree, step, tree_metrics_cache)
                passed = filter_segments(tree, spec, tree_metrics_cache)
                report = filter_report(tree, eligible, spec, passed)
                if step.op == "generation_cap":
                    report = PruneReport(
                        "generation_cap", report.before, report.after, removed=report.removed,
                        notes={"max_generation": spec.max_generation},
                    )
                eligible = eligible & passed
                reports.append(report)
                if not eligible:
                    raise EmptyResultError("no segment passes the filter", k)
                continue
            if step.op == "connected_subtree":
                tree, report = connected_report(tree, eligible)
            elif step.op == "remove_pseudo_trifurcations":
                tree, report = remove_pseudo_trifurcations(tree, step.params["short_node_count"])
            elif step.op == "series_join":
                tree, report = series_join(tree)
            elif step.op == "remove_short_terminals":
                tree, report = remove_short_terminals(tree, step.params["min_nodes"])
            elif step.op == "simplify_fixpoint":
                tree, report = simplify_fixpoint(tree, step.params["min_nodes"])
            else:  # rejected by parse_config
                raise ConfigError(f"unknown op {step.op!r}")
        except PruneError as exc:
            raise EmptyResultError(str(exc), k) from exc
        reports.append(report)
        eligible = frozenset(tree.segments)
        tree_metrics_cache = None
        log.info("step %d %s: %d -> %d segments", k, step.op, report.before, report.after)
    if eligible != frozenset(tree.segments):
        # trailing filter run: only acceptable if it left the tree intact
        out, report = connected_report(tree, eligible)
        if report.discarded or len(out) != len(eligible):
            raise EmptyResultError("pipeline ends with a filter that leaves a disconnected tree", len(steps) - 1)
        tree = out
    return tree, reports


def _filter_spec(tree: SegmentTree, step: Step, metrics) -> FilterSpec:
    if step.op == "filter":
        return FilterSpec(**step.params)
    gens = assign_generations(tree)
    if max(gens.values()) == 0:
        return FilterSpec("max_generation", max_generation=0)
    profile = generation_profile(tree, metrics, gens)
    cap = generation_cutoff(information_delta(profile), step.params["divisor"], step.params["mode"])
    return FilterSpec("max_generation", max_generation=cap)


def run_pipeline(config: PipelineConfig, threads: int = 1) -> PipelineResult:
    """Load the input, run the steps and write every configured output.

    Reports are written even when a step fails; tree outputs only on success.
    """
    tree, info = load_input(config)
    result = PipelineResult(None, [], info)
    try:
        final, reports = run_steps(tree, config.steps, threads)
        result.tree = final
        result.reports = reports
    except EmptyResultError as exc:
        result.error = exc
        result.reports = getattr(exc, "partial", [])
    if result.ok:
        write_outputs(result.tree, config)
    if "report" in config.outputs:
        write_atomic(config.outputs["report"], _json_bytes(result.report_dict()))
    return result


def _json_bytes(doc) -> bytes:
    return (json.dumps(doc, indent=1) + "\n").encode("utf-8")


def write_outputs(tree: SegmentTree, config: PipelineConfig) -> None:
    from .project import lateral_projection, mercator_projection, render

    outs = config.outputs
    if "tree" in outs:
        write_atomic(outs["tree"], tree_to_json(tree))
    if "solver" in outs:
        write_atomic(outs["solver"], solver_export(tree))
    if {"svg", "csv", "figure"} & outs.keys():
        lines = (
            mercator_projection(tree) if config.projection == "mercator"
            else lateral_projection(tree, config.plane)
        )
        if "svg" in outs:
            write_atomic(outs["svg"], render(lines, "svg", config.style))
        if "csv" in outs:
            write_atomic(outs["csv"], render(lines, "csv", config.style))
        if "figure" in outs:
            from .figures import plot_polylines

            plot_polylines(lines, outs["figure"], style=config.style, projection=config.projection)
