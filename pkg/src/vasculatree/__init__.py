"""Rooted segment trees from vascular point clouds: ingest, decomposition,
morphometry, filtering/pruning rewrites and 2D projections."""

from .errors import (
    ConfigError,
    EmptyResultError,
    GraphError,
    ParseError,
    ProjectionError,
    PruneError,
    SchemaError,
    VasculatreeError,
)
from .graph import (
    NodeKind,
    NodeTable,
    RootPolicy,
    Segment,
    SegmentTree,
    VesselGraph,
    build_tree,
    classify_nodes,
    extract_segments,
    largest_component,
    select_root,
)
from .ingest import NodeRecord, PointCloud, parse_point_cloud, read_point_cloud, serialize_point_cloud, validate
from .morphometry import (
    GenerationProfile,
    SegmentMetrics,
    assign_generations,
    generation_cutoff,
    generation_profile,
    information_delta,
    segment_metrics,
    strahler_orders,
    tree_metrics,
)
from .prune import (
    FilterSpec,
    PruneReport,
    connected_subtree,
    filter_segments,
    remove_pseudo_trifurcations,
    remove_short_terminals,
    series_join,
    simplify_fixpoint,
)

__version__ = "0.1.0"
