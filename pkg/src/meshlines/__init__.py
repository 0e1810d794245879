"""meshlines: line drawings from 3D triangle meshes.

The pipeline loads a mesh, computes per-vertex curvature quantities,
extracts candidate feature lines (contours, creases, boundaries,
suggestive contours, ridges, valleys, apparent ridges), rasterizes them
into thresholdable image maps, and picks per-model thresholds at run
time by maximizing a drawing-quality score.
"""

from meshlines.mesh_core import (
    MeshError,
    NormalField,
    TriangleMesh,
    load_mesh,
    normalize_size,
    smooth_normals,
)
from meshlines.camera import Camera, orbit_camera
from meshlines.curvature import (
    CurvatureField,
    ViewDependentField,
    curvature_derivative,
    normalize_percentile,
    principal_curvatures,
    radial_curvature,
    view_dependent_curvature,
)
from meshlines.line_extract import (
    LineKind,
    LineSegment3D,
    SegmentSet,
    apparent_ridges,
    boundaries_and_creases,
    occluding_contours,
    ridges_valleys,
    suggestive_contours,
)
from meshlines.raster import (
    Drawing,
    MapStack,
    VisibilityBuffer,
    build_map_stack,
    canny_lines,
    rasterize_lines,
    rasterize_visibility,
    render_depth,
    render_shaded_stack,
)
from meshlines.diff_filter import (
    FilterGradient,
    ThresholdSet,
    compose,
    grad_thresholds,
    merge_external,
    render_drawing,
)
from meshlines.ranker import (
    MiniScorer,
    MiniScorerParams,
    PreferencePair,
    ReferenceScorer,
    ScorerInput,
    hinge_rank_loss,
    load_checkpoint,
    pixel_cross_entropy,
    save_checkpoint,
    train_mini_scorer,
)
from meshlines.optimize import (
    OptimizeConfig,
    OptimizeResult,
    boundary_check,
    final_drawing,
    grid_search_baseline,
    optimize_thresholds,
)
from meshlines.evaluate import (
    BinaryDrawing,
    EvalReport,
    binarize,
    chamfer,
    evaluate_pair,
    iou,
    most_consistent,
    precision_recall,
    remove_silhouettes,
)
from meshlines.dataset_gen import (
    CandidateRecord,
    CandidateSet,
    generate_candidates,
    place_cameras,
    select_distinct,
)

__version__ = "0.1.0"

__all__ = [
    "MeshError",
    "NormalField",
    "TriangleMesh",
    "load_mesh",
    "normalize_size",
    "smooth_normals",
    "Camera",
    "orbit_camera",
    "CurvatureField",
    "ViewDependentField",
    "principal_curvatures",
    "curvature_derivative",
    "radial_curvature",
    "view_dependent_curvature",
    "normalize_percentile",
    "LineKind",
    "LineSegment3D",
    "SegmentSet",
    "occluding_contours",
    "suggestive_contours",
    "boundaries_and_creases",
    "ridges_valleys",
    "apparent_ridges",
    "Drawing",
    "MapStack",
    "VisibilityBuffer",
    "rasterize_visibility",
    "rasterize_lines",
    "render_depth",
    "render_shaded_stack",
    "canny_lines",
    "build_map_stack",
    "ThresholdSet",
    "FilterGradient",
    "compose",
    "merge_external",
    "render_drawing",
    "grad_thresholds",
    "ScorerInput",
    "ReferenceScorer",
    "MiniScorer",
    "MiniScorerParams",
    "PreferencePair",
    "hinge_rank_loss",
    "pixel_cross_entropy",
    "train_mini_scorer",
    "save_checkpoint",
    "load_checkpoint",
    "OptimizeConfig",
    "OptimizeResult",
    "optimize_thresholds",
    "boundary_check",
    "final_drawing",
    "grid_search_baseline",
    "BinaryDrawing",
    "EvalReport",
    "binarize",
    "precision_recall",
    "iou",
    "chamfer",
    "remove_silhouettes",
    "most_consistent",
    "evaluate_pair",
    "CandidateRecord",
    "CandidateSet",
    "place_cameras",
    "generate_candidates",
    "select_distinct",
    "__version__",
]
