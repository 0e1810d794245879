"""Candidate-drawing generation for building preference datasets.

For each shape two cameras are placed at 30 degrees above the ground
plane with randomized azimuths.  Per view, a threshold ladder over the
three parametric line families crossed with crease and border toggles
yields 256 drawings, and two Canny parameterizations at four thresholds
add 8 more.  k-medoids over pairwise Chamfer distances then keeps the
most distinct candidates.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from itertools import combinations, product
from pathlib import Path

import numpy as np
from scipy.ndimage import distance_transform_edt

from .camera import Camera, orbit_camera
from .curvature import (
    curvature_derivative,
    normalize_percentile,
    principal_curvatures,
    view_dependent_curvature,
)
from .diff_filter import ThresholdSet, compose
from .evaluate import binarize
from .line_extract import (
    LineKind,
    apparent_ridges,
    boundaries_and_creases,
    occluding_contours,
    ridges_valleys,
    suggestive_contours,
)
from .raster import Drawing, MapStack, build_map_stack, canny_lines, rasterize_visibility

ELEVATION_DEGREES = 30.0
DISTANCE_FACTOR = 2.5
MIN_AZIMUTH_GAP = 5.0
DEFAULT_LADDER = (0.001, 0.01, 0.1, np.inf)
DEFAULT_EDGE_THRESHOLDS = (0.1, 0.2, 0.3, 0.4)
EDGE_SIGMAS = (1.0, 2.0)


@dataclass(frozen=True)
class CandidateRecord:
    """Provenance of one candidate drawing."""

    method: str                      # "lines" or "edges"
    sc_index: int = -1
    rv_index: int = -1
    ar_index: int = -1
    creases: bool = False
    borders: bool = False
    sigma: float = 0.0
    edge_index: int = -1

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in (
            "method", "sc_index", "rv_index", "ar_index",
            "creases", "borders", "sigma", "edge_index",
        )}


@dataclass(frozen=True)
class CandidateSet:
    """Drawings, their provenance, and their positions in the original
    generation order (selection keeps the source indices)."""

    drawings: tuple
    records: tuple
    indices: tuple = ()
    flags: tuple = ()

    def __post_init__(self):
        if len(self.drawings) != len(self.records):
            raise ValueError("drawings and records must pair up")
        if not self.indices:
            object.__setattr__(self, "indices", tuple(range(len(self.drawings))))
        elif len(self.indices) != len(self.drawings):
            raise ValueError("indices must pair with drawings")

    def __len__(self):
        return len(self.drawings)


def place_cameras(mesh, seed: int, width: int = 768, height: int = 768,
                  fov_degrees: float = 40.0):
    """Two cameras at 30 degrees elevation, seeded random azimuths at
    least 5 degrees apart, looking at the centroid from 2.5 bounding
    radii away."""
    up = mesh.ground_up_axis
    if up is None:
        warnings.warn("mesh has no ground up axis; assuming +Y")
        up = (0.0, 1.0, 0.0)
    rng = np.random.default_rng(seed)
    distance = DISTANCE_FACTOR * mesh.bounding_radius()
    target = tuple(mesh.centroid())
    az1 = float(rng.uniform(0.0, 360.0))
    az2 = float(rng.uniform(0.0, 360.0))
    while min(abs(az2 - az1), 360.0 - abs(az2 - az1)) < MIN_AZIMUTH_GAP:
        az2 = float(rng.uniform(0.0, 360.0))
    make = lambda az: orbit_camera(
        target, distance, az, ELEVATION_DEGREES, up=up,
        fov_degrees=fov_degrees, width=width, height=height,
    )
    return make(az1), make(az2)


def _line_stacks(mesh, camera: Camera, line_width: float = 1.0):
    """Map stacks with and without creases folded into the contour
    channel, sharing one visibility pass."""
    field = principal_curvatures(mesh)
    field = curvature_derivative(mesh, field)
    view = view_dependent_curvature(field, mesh, camera)
    field, view = normalize_percentile(field, view)

    contours = occluding_contours(mesh, camera)
    sc = suggestive_contours(mesh, camera, field)
    ridges, valleys = ridges_valleys(mesh, field)
    ar = apparent_ridges(mesh, camera, field, view)
    borders, creases = boundaries_and_creases(mesh)

    vis = rasterize_visibility(mesh, camera)
    base = {
        LineKind.CONTOUR: contours, LineKind.SUGGESTIVE: sc,
        LineKind.RIDGE: ridges, LineKind.VALLEY: valleys,
        LineKind.APPARENT: ar, LineKind.BOUNDARY: borders,
    }
    with_creases = dict(base)
    with_creases[LineKind.CREASE] = creases
    stack_creased = build_map_stack(mesh, camera, with_creases,
                                    line_width=line_width, vis=vis)
    stack_plain = build_map_stack(mesh, camera, base,
                                  line_width=line_width, vis=vis)
    return stack_creased, stack_plain


def _line_candidate(stacks, record: CandidateRecord, ladders) -> Drawing:
    sc_ladder, rv_ladder, ar_ladder = ladders
    stack = stacks[0] if record.creases else stacks[1]
    ts = ThresholdSet(
        t_S=sc_ladder[record.sc_index],
        t_R=rv_ladder[record.rv_index],
        t_V=rv_ladder[record.rv_index],
        t_A=ar_ladder[record.ar_index],
        include_boundaries=record.borders,
    )
    return Drawing(image=compose(stack, ts))


def _edge_candidate(stack: MapStack, record: CandidateRecord,
                    edge_thresholds) -> Drawing:
    high = edge_thresholds[record.edge_index]
    return canny_lines(stack.O[0], low=high / 2.0, high=high,
                       sigma=record.sigma)


def generate_candidates(
    mesh,
    camera: Camera,
    ladders=(DEFAULT_LADDER, DEFAULT_LADDER, DEFAULT_LADDER),
    edge_thresholds=DEFAULT_EDGE_THRESHOLDS,
    line_width: float = 1.0,
) -> CandidateSet:
    """All 256 threshold-combination drawings plus 8 Canny drawings.

    Occluding contours are always on; the ladder index picks each
    family's threshold (infinite = family off); creases and borders each
    toggle on/off.  Records carry enough provenance to re-render any
    single candidate.
    """
    ladders = tuple(tuple(float(v) for v in lad) for lad in ladders)
    if len(ladders) != 3 or any(len(lad) != 4 for lad in ladders):
        raise ValueError("ladders must be 3 lists of 4 thresholds")
    if len(edge_thresholds) != 4:
        raise ValueError("edge_thresholds must hold 4 values")
    stacks = _line_stacks(mesh, camera, line_width=line_width)
    drawings, records = [], []
    for i_sc, i_rv, i_ar, creases, borders in product(
        range(4), range(4), range(4), (False, True), (False, True)
    ):
        rec = CandidateRecord(
            method="lines", sc_index=i_sc, rv_index=i_rv, ar_index=i_ar,
            creases=creases, borders=borders,
        )
        records.append(rec)
        drawings.append(_line_candidate(stacks, rec, ladders))
    for sigma, i_edge in product(EDGE_SIGMAS, range(4)):
        rec = CandidateRecord(method="edges", sigma=sigma, edge_index=i_edge)
        records.append(rec)
        drawings.append(_edge_candidate(stacks[0], rec, edge_thresholds))
    return CandidateSet(drawings=tuple(drawings), records=tuple(records))


def render_record(
    mesh,
    camera: Camera,
    record: CandidateRecord,
    ladders=(DEFAULT_LADDER, DEFAULT_LADDER, DEFAULT_LADDER),
    edge_thresholds=DEFAULT_EDGE_THRESHOLDS,
    line_width: float = 1.0,
) -> Drawing:
    """Reproduce a single candidate from its provenance record."""
    ladders = tuple(tuple(float(v) for v in lad) for lad in ladders)
    stacks = _line_stacks(mesh, camera, line_width=line_width)
    if record.method == "lines":
        return _line_candidate(stacks, record, ladders)
    if record.method == "edges":
        return _edge_candidate(stacks[0], record, edge_thresholds)
    raise ValueError(f"unknown candidate method {record.method!r}")


def _pairwise_chamfer(binaries) -> np.ndarray:
    """Symmetric Chamfer matrix with one distance transform per drawing."""
    n = len(binaries)
    dists = [distance_transform_edt(~b.pixels) for b in binaries]
    means = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j:
                means[i, j] = dists[j][binaries[i].pixels].mean()
    return 0.5 * (means + means.T)


def _pam_cost(table: np.ndarray, medoids) -> float:
    return float(table[:, list(medoids)].min(axis=1).sum())


def _pam(table: np.ndarray, k: int):
    """Greedy build then best-improvement swaps; fully deterministic."""
    n = table.shape[0]
    medoids = [int(np.argmin(table.sum(axis=0)))]
    while len(medoids) < k:
        current = table[:, medoids].min(axis=1)
        best_j, best_cost = None, None
        for j in range(n):
            if j in medoids:
                continue
            cost = float(np.minimum(current, table[:, j]).sum())
            if best_cost is None or cost < best_cost:
                best_j, best_cost = j, cost
        medoids.append(best_j)
    build_cost = _pam_cost(table, medoids)
    cost = build_cost
    improved = True
    while improved:
        improved = False
        best = None
        for mi, m in enumerate(medoids):
            for h in range(n):
                if h in medoids:
                    continue
                trial = medoids[:mi] + [h] + medoids[mi + 1:]
                c = _pam_cost(table, trial)
                if c < cost - 1e-15 and (best is None or c < best[0]):
                    best = (c, mi, h)
        if best is not None:
            cost, mi, h = best
            medoids[mi] = h
            improved = True
    return sorted(medoids), cost, build_cost


def select_distinct(candidates: CandidateSet, k: int = 8,
                    binarize_threshold: float = 0.5) -> CandidateSet:
    """The k most distinct candidates under pairwise Chamfer k-medoids.

    Empty drawings are dropped (with a flag) before clustering since the
    Chamfer distance is undefined on them.
    """
    binaries, keep = [], []
    for i, d in enumerate(candidates.drawings):
        b = binarize(d, threshold=binarize_threshold)
        if b.count > 0:
            binaries.append(b)
            keep.append(i)
    flags = list(candidates.flags)
    dropped = len(candidates) - len(keep)
    if dropped:
        flags.append(f"dropped {dropped} empty candidates")
    if len(keep) < k:
        raise ValueError(f"only {len(keep)} nonempty candidates for k={k}")
    if len(keep) == k:
        chosen = list(range(len(keep)))
    else:
        table = _pairwise_chamfer(binaries)
        chosen, cost, build_cost = _pam(table, k)
        if cost > build_cost + 1e-12:
            raise AssertionError("swap phase increased the clustering cost")
    picked = [keep[i] for i in chosen]
    return CandidateSet(
        drawings=tuple(candidates.drawings[i] for i in picked),
        records=tuple(candidates.records[i] for i in picked),
        indices=tuple(candidates.indices[i] for i in picked),
        flags=tuple(flags),
    )


def exhaustive_medoids(table: np.ndarray, k: int):
    """Brute-force optimal k-medoids; only viable for small instances."""
    n = table.shape[0]
    best, best_cost = None, None
    for combo in combinations(range(n), k):
        c = _pam_cost(table, combo)
        if best_cost is None or c < best_cost:
            best, best_cost = list(combo), c
    return best, best_cost


def write_candidates(out_dir, shape: str, view: str,
                     candidates: CandidateSet, selected: CandidateSet,
                     ladders, edge_thresholds, seed: int) -> Path:
    """PNG per candidate plus a manifest with provenance and selection."""
    root = Path(out_dir) / shape / view
    root.mkdir(parents=True, exist_ok=True)
    for i, d in enumerate(candidates.drawings):
        d.to_png(root / f"candidate_{i:03d}.png")
    manifest = {
        "shape": shape,
        "view": view,
        "seed": seed,
        "ladders": [[v if np.isfinite(v) else "off" for v in lad]
                    for lad in ladders],
        "edge_thresholds": list(edge_thresholds),
        "candidates": [r.as_dict() for r in candidates.records],
        "selected": list(selected.indices),
        "flags": list(selected.flags),
    }
    with open(root / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
    return root
