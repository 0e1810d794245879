"""Feature-line generators on triangle meshes.

Every extractor walks the faces of the mesh and interpolates zero
crossings of a per-vertex scalar field along edges, emitting 3D segments
tagged with a per-endpoint filter scalar (the quantity later compared
against a threshold).  Occluding contours and suggestive contours use
globally well-defined fields; ridges, valleys, and apparent ridges are
driven by direction-dependent derivatives whose sign is only defined up
to the orientation of the direction field, so those align signs locally
before interpolating.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .camera import Camera
from .curvature import CurvatureField, ViewDependentField, radial_curvature, _dot
from .mesh_core import TriangleMesh

MIN_SEGMENT_LENGTH = 1e-6  # object units; shorter segments are numerical noise
DEFAULT_CREASE_ANGLE = 60.0


class LineKind(IntEnum):
    """Line categories; the order fixes the composition precedence."""

    SUGGESTIVE = 0
    RIDGE = 1
    VALLEY = 2
    APPARENT = 3
    CONTOUR = 4
    BOUNDARY = 5
    CREASE = 6


@dataclass(frozen=True)
class LineSegment3D:
    """One extracted segment with endpoint filter scalars."""

    kind: LineKind
    a: tuple
    b: tuple
    scalar_a: float = 1.0
    scalar_b: float = 1.0


@dataclass(frozen=True)
class SegmentSet:
    """All segments of one kind, as packed arrays.

    ``a``/``b`` are (n, 3) endpoints, ``scalar_a``/``scalar_b`` the
    filter scalar at each endpoint (1 for parameter-free kinds).
    """

    kind: LineKind
    a: np.ndarray
    b: np.ndarray
    scalar_a: np.ndarray
    scalar_b: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "a", np.asarray(self.a, dtype=np.float64).reshape(-1, 3))
        object.__setattr__(self, "b", np.asarray(self.b, dtype=np.float64).reshape(-1, 3))
        object.__setattr__(self, "scalar_a", np.asarray(self.scalar_a, dtype=np.float64).reshape(-1))
        object.__setattr__(self, "scalar_b", np.asarray(self.scalar_b, dtype=np.float64).reshape(-1))

    def __len__(self) -> int:
        return self.a.shape[0]

    def segments(self):
        for i in range(len(self)):
            yield LineSegment3D(
                kind=self.kind,
                a=tuple(self.a[i]),
                b=tuple(self.b[i]),
                scalar_a=float(self.scalar_a[i]),
                scalar_b=float(self.scalar_b[i]),
            )

    @staticmethod
    def empty(kind: LineKind) -> "SegmentSet":
        z = np.zeros((0, 3))
        return SegmentSet(kind=kind, a=z, b=z, scalar_a=np.zeros(0), scalar_b=np.zeros(0))


def _drop_short(kind, a, b, sa, sb) -> SegmentSet:
    if len(a) == 0:
        return SegmentSet.empty(kind)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    keep = np.linalg.norm(b - a, axis=1) >= MIN_SEGMENT_LENGTH
    return SegmentSet(
        kind=kind,
        a=a[keep],
        b=b[keep],
        scalar_a=np.asarray(sa, dtype=np.float64)[keep],
        scalar_b=np.asarray(sb, dtype=np.float64)[keep],
    )


def _edge_crossings(mesh: TriangleMesh, g: np.ndarray):
    """Zero crossings of a global per-vertex field, computed once per
    undirected edge so both adjacent faces share bit-identical points.

    Returns (per-face crossing-edge ids (nf, 3) into the unique edge list,
    per-face crossing flags, crossing points, crossing parameter t, and
    the unique edge vertex pairs).  Edge j of a face is (corner j,
    corner j+1).
    """
    faces = mesh.faces
    pairs = np.stack(
        [faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]], axis=1
    )  # (nf, 3, 2)
    lo = pairs.min(axis=2)
    hi = pairs.max(axis=2)
    keys = np.stack([lo, hi], axis=2).reshape(-1, 2)
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    edge_ids = inverse.reshape(-1, 3)

    ga = g[uniq[:, 0]]
    gb = g[uniq[:, 1]]
    crossing = (ga >= 0.0) != (gb >= 0.0)
    t = np.zeros(uniq.shape[0])
    denom = ga - gb
    t[crossing] = ga[crossing] / denom[crossing]
    pts = mesh.vertices[uniq[:, 0]] + t[:, None] * (
        mesh.vertices[uniq[:, 1]] - mesh.vertices[uniq[:, 0]]
    )
    face_cross = crossing[edge_ids]
    return edge_ids, face_cross, pts, t, uniq


def _interp_on_edges(values: np.ndarray, uniq: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Linear interpolation of a per-vertex quantity at each unique-edge
    crossing parameter."""
    va = values[uniq[:, 0]]
    vb = values[uniq[:, 1]]
    return va + t * (vb - va)


def _two_crossing_segments(edge_ids, face_cross, pts, scalars):
    """Per-face segments for fields with a consistent scalar per face:
    every crossed face has exactly two crossing edges."""
    count = face_cross.sum(axis=1)
    rows = np.nonzero(count == 2)[0]
    if rows.size == 0:
        return None
    picked = np.argsort(~face_cross[rows], axis=1, kind="stable")[:, :2]
    e_first = edge_ids[rows, picked[:, 0]]
    e_second = edge_ids[rows, picked[:, 1]]
    return (
        pts[e_first], pts[e_second],
        scalars[e_first], scalars[e_second],
    )


def occluding_contours(mesh: TriangleMesh, camera: Camera) -> SegmentSet:
    """Zero set of n(v) . (eye - v) interpolated along edges.

    On a closed manifold the result chains into closed loops: crossing
    points are computed once per edge, so segments from the two adjacent
    faces share their endpoint exactly.
    """
    eye = np.array(camera.position)
    g = _dot(mesh.vertex_normals, eye - mesh.vertices)
    edge_ids, face_cross, pts, t, uniq = _edge_crossings(mesh, g)
    ones = np.ones(uniq.shape[0])
    out = _two_crossing_segments(edge_ids, face_cross, pts, ones)
    if out is None:
        return SegmentSet.empty(LineKind.CONTOUR)
    return _drop_short(LineKind.CONTOUR, out[0], out[1], out[2], out[3])


def suggestive_contours(
    mesh: TriangleMesh, camera: Camera, field: CurvatureField
) -> SegmentSet:
    """Zero crossings of the radial curvature where its derivative along
    the radial direction is strictly positive at both endpoints."""
    view = camera.view_ray(mesh.vertices)
    kr, dkr, _ = radial_curvature(field, view)
    edge_ids, face_cross, pts, t, uniq = _edge_crossings(mesh, kr)
    dkr_at = _interp_on_edges(dkr, uniq, t)
    out = _two_crossing_segments(edge_ids, face_cross, pts, dkr_at)
    if out is None:
        return SegmentSet.empty(LineKind.SUGGESTIVE)
    a, b, sa, sb = out
    keep = (sa > 0.0) & (sb > 0.0)
    return _drop_short(LineKind.SUGGESTIVE, a[keep], b[keep], sa[keep], sb[keep])


def boundaries_and_creases(
    mesh: TriangleMesh, crease_angle: float = DEFAULT_CREASE_ANGLE
):
    """Boundary edges (one incident face) and crease edges (interior edges
    whose face normals disagree by more than ``crease_angle`` degrees).

    Returns (boundaries, creases) as two SegmentSets with scalar 1.
    """
    faces = mesh.faces
    pairs = np.concatenate(
        [faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]], axis=0
    )
    face_of = np.tile(np.arange(faces.shape[0]), 3)
    lo = pairs.min(axis=1)
    hi = pairs.max(axis=1)
    order = np.lexsort((hi, lo))
    lo, hi, face_of = lo[order], hi[order], face_of[order]
    uniq, start, count = np.unique(
        np.stack([lo, hi], axis=1), axis=0, return_index=True, return_counts=True
    )

    boundary_edges = uniq[count == 1]

    interior = count == 2
    f1 = face_of[start[interior]]
    f2 = face_of[start[interior] + 1]
    p0 = mesh.vertices[faces[:, 0]]
    fn = np.cross(
        mesh.vertices[faces[:, 1]] - p0, mesh.vertices[faces[:, 2]] - p0
    )
    norms = np.linalg.norm(fn, axis=1, keepdims=True)
    fn = fn / np.where(norms > 0, norms, 1.0)
    cos_thr = np.cos(np.radians(crease_angle))
    sharp = _dot(fn[f1], fn[f2]) < cos_thr
    crease_edges = uniq[interior][sharp]

    def to_set(kind, edges):
        if edges.shape[0] == 0:
            return SegmentSet.empty(kind)
        a = mesh.vertices[edges[:, 0]]
        b = mesh.vertices[edges[:, 1]]
        ones = np.ones(edges.shape[0])
        return _drop_short(kind, a, b, ones, ones)

    return to_set(LineKind.BOUNDARY, boundary_edges), to_set(LineKind.CREASE, crease_edges)


def _aligned_face_crossings(mesh, direction, deriv, prefilter, want_max, scalar):
    """Shared ridge/valley machinery: zero crossings of a direction-odd
    derivative field, aligned per face to the corner with the lowest
    vertex index, with an extremum test per crossing.

    ``want_max`` selects maxima (derivative decreasing along the aligned
    direction); minima otherwise.  Returns packed segment arrays.
    """
    faces = mesh.faces
    ok = prefilter[faces].all(axis=1)
    rows = np.nonzero(ok)[0]
    if rows.size == 0:
        return None
    f = faces[rows]
    ref_corner = np.argmin(f, axis=1)
    ridx = f[np.arange(f.shape[0]), ref_corner]
    ref_dir = direction[ridx]

    sign = np.where(_dot(direction[f], ref_dir[:, None, :]) >= 0.0, 1.0, -1.0)
    d = sign * deriv[f]  # (m, 3) aligned derivative values

    verts = mesh.vertices
    edge_corners = ((0, 1), (1, 2), (2, 0))
    pos = d >= 0.0
    cross = np.stack(
        [pos[:, i] != pos[:, j] for i, j in edge_corners], axis=1
    )
    two = cross.sum(axis=1) == 2
    rows2 = np.nonzero(two)[0]
    if rows2.size == 0:
        return None

    pts = np.zeros((rows2.size, 2, 3))
    svals = np.zeros((rows2.size, 2))
    good = np.ones(rows2.size, dtype=bool)
    slot = np.zeros(rows2.size, dtype=np.int64)
    for e, (i, j) in enumerate(edge_corners):
        sel = np.nonzero(cross[rows2, e])[0]
        if sel.size == 0:
            continue
        rsel = rows2[sel]
        vi, vj = f[rsel, i], f[rsel, j]
        di, dj = d[rsel, i], d[rsel, j]
        t = di / (di - dj)
        p = verts[vi] + t[:, None] * (verts[vj] - verts[vi])
        s = scalar[vi] + t * (scalar[vj] - scalar[vi])
        # Extremum test: derivative slope along the aligned direction.
        delta = _dot(verts[vj] - verts[vi], ref_dir[rsel])
        tau = delta * (dj - di)
        passes = tau < 0.0 if want_max else tau > 0.0
        good[sel] &= passes
        pts[sel, slot[sel]] = p
        svals[sel, slot[sel]] = s
        slot[sel] += 1
    keep = good & (slot == 2)
    if not keep.any():
        return None
    return pts[keep, 0], pts[keep, 1], svals[keep, 0], svals[keep, 1]


def ridges_valleys(mesh: TriangleMesh, field: CurvatureField):
    """Curvature-extremum lines, independent of the camera.

    Ridges: maxima of k1 along e1 where k1 dominates (k1 > |k2|), filter
    scalar k1.  Valleys: minima of k2 along e2 where k2 dominates
    (k2 < -|k1|), filter scalar |k2|.  Returns (ridges, valleys).
    """
    if field.C is None:
        raise ValueError("field.C not populated; call curvature_derivative first")
    ridge_out = _aligned_face_crossings(
        mesh,
        direction=field.e1,
        deriv=field.C[:, 0],
        prefilter=field.k1 > np.abs(field.k2),
        want_max=True,
        scalar=field.k1,
    )
    valley_out = _aligned_face_crossings(
        mesh,
        direction=field.e2,
        deriv=field.C[:, 3],
        prefilter=field.k2 < -np.abs(field.k1),
        want_max=False,
        scalar=np.abs(field.k2),
    )
    ridges = (
        SegmentSet.empty(LineKind.RIDGE)
        if ridge_out is None
        else _drop_short(LineKind.RIDGE, *ridge_out)
    )
    valleys = (
        SegmentSet.empty(LineKind.VALLEY)
        if valley_out is None
        else _drop_short(LineKind.VALLEY, *valley_out)
    )
    return ridges, valleys


def _directional_derivative_fd(mesh: TriangleMesh, values, directions):
    """Per-vertex derivative of ``values`` along tangent ``directions`` by
    finite differences against the one-ring: intersect the vertex's
    direction line with each incident face's opposite edge and difference
    the interpolated values on each side."""
    verts, faces = mesh.vertices, mesh.faces
    nv = verts.shape[0]

    vid = faces.reshape(-1)  # corner vertex
    opp_a = faces[:, [1, 2, 0]].reshape(-1)
    opp_b = faces[:, [2, 0, 1]].reshape(-1)

    p0 = verts[vid]
    pa = verts[opp_a]
    pb = verts[opp_b]
    fn = np.cross(pa - p0, pb - p0)
    fn_len = np.linalg.norm(fn, axis=1, keepdims=True)
    fn = fn / np.where(fn_len > 0, fn_len, 1.0)

    w = directions[vid]
    w = w - _dot(w, fn)[:, None] * fn  # project into the face plane
    wlen = np.linalg.norm(w, axis=1)
    valid = wlen > 1e-12
    w = w / np.where(wlen[:, None] > 0, wlen[:, None], 1.0)

    # Face-plane 2x2 solve: s*w - r*(pb - pa) = pa - p0
    x_axis = pa - p0
    xl = np.linalg.norm(x_axis, axis=1, keepdims=True)
    x_axis = x_axis / np.where(xl > 0, xl, 1.0)
    y_axis = np.cross(fn, x_axis)
    e = pb - pa
    u = pa - p0
    a11, a12 = _dot(w, x_axis), -_dot(e, x_axis)
    a21, a22 = _dot(w, y_axis), -_dot(e, y_axis)
    b1, b2 = _dot(u, x_axis), _dot(u, y_axis)
    det = a11 * a22 - a12 * a21
    valid &= np.abs(det) > 1e-14
    det_safe = np.where(valid, det, 1.0)
    s = (b1 * a22 - b2 * a12) / det_safe
    r = (a11 * b2 - a21 * b1) / det_safe
    valid &= (r >= 0.0) & (r <= 1.0)
    q = values[opp_a] + r * (values[opp_b] - values[opp_a])

    fwd = valid & (s > 1e-12)
    bwd = valid & (s < -1e-12)

    def closest(mask, prefer_small: bool):
        """Per vertex, the crossing with the smallest |s| on one side."""
        idx = np.nonzero(mask)[0]
        if idx.size == 0:
            empty = np.full(nv, np.nan)
            return empty, empty
        key = s[idx] if prefer_small else -s[idx]
        order = np.lexsort((key, vid[idx]))
        idx = idx[order]
        first_of = np.unique(vid[idx], return_index=True)
        s_out = np.full(nv, np.nan)
        q_out = np.full(nv, np.nan)
        s_out[first_of[0]] = s[idx[first_of[1]]]
        q_out[first_of[0]] = q[idx[first_of[1]]]
        return s_out, q_out

    s_f, q_f = closest(fwd, prefer_small=True)
    s_b, q_b = closest(bwd, prefer_small=False)

    out = np.zeros(nv)
    both = ~np.isnan(s_f) & ~np.isnan(s_b)
    out[both] = (q_f[both] - q_b[both]) / (s_f[both] - s_b[both])
    only_f = ~np.isnan(s_f) & np.isnan(s_b)
    out[only_f] = (q_f[only_f] - values[only_f]) / s_f[only_f]
    only_b = np.isnan(s_f) & ~np.isnan(s_b)
    out[only_b] = (q_b[only_b] - values[only_b]) / s_b[only_b]
    return out


def apparent_ridges(
    mesh: TriangleMesh,
    camera: Camera,
    field: CurvatureField,
    viewdep: ViewDependentField,
) -> SegmentSet:
    """Crests of the view-projected curvature q1.

    The maximizing direction t1 is only defined up to sign, so derivative
    values are re-aligned per edge pair before testing for a crossing; a
    face whose three edges all cross (a direction-field singularity)
    connects its crossings through their mean point.  Filter scalar = q1.
    """
    q1 = viewdep.q1
    t1 = viewdep.direction_world
    d = _directional_derivative_fd(mesh, q1, t1)

    verts, faces = mesh.vertices, mesh.faces
    edge_corners = ((0, 1), (1, 2), (2, 0))
    seg_a, seg_b, seg_sa, seg_sb = [], [], [], []

    f_pts = [None, None, None]
    f_scal = [None, None, None]
    f_ok = [None, None, None]
    for e, (i, j) in enumerate(edge_corners):
        vi, vj = faces[:, i], faces[:, j]
        sigma = np.where(_dot(t1[vi], t1[vj]) >= 0.0, 1.0, -1.0)
        di = d[vi]
        dj = sigma * d[vj]
        crossing = (di >= 0.0) != (dj >= 0.0)
        t = np.zeros(faces.shape[0])
        t[crossing] = di[crossing] / (di[crossing] - dj[crossing])
        pts = verts[vi] + t[:, None] * (verts[vj] - verts[vi])
        scal = q1[vi] + t * (q1[vj] - q1[vi])
        delta = _dot(verts[vj] - verts[vi], t1[vi])
        tau = delta * (dj - di)
        f_pts[e] = pts
        f_scal[e] = scal
        f_ok[e] = crossing & (tau < 0.0)

    ok = np.stack(f_ok, axis=1)
    count = ok.sum(axis=1)

    two = np.nonzero(count == 2)[0]
    if two.size:
        picked = np.argsort(~ok[two], axis=1, kind="stable")[:, :2]
        for row, (ea, eb) in zip(two, picked):
            seg_a.append(f_pts[ea][row])
            seg_b.append(f_pts[eb][row])
            seg_sa.append(f_scal[ea][row])
            seg_sb.append(f_scal[eb][row])

    three = np.nonzero(count == 3)[0]
    for row in three:
        hub = (f_pts[0][row] + f_pts[1][row] + f_pts[2][row]) / 3.0
        hub_s = (f_scal[0][row] + f_scal[1][row] + f_scal[2][row]) / 3.0
        for e in range(3):
            seg_a.append(f_pts[e][row])
            seg_b.append(hub)
            seg_sa.append(f_scal[e][row])
            seg_sb.append(hub_s)

    if not seg_a:
        return SegmentSet.empty(LineKind.APPARENT)
    return _drop_short(
        LineKind.APPARENT,
        np.array(seg_a), np.array(seg_b), np.array(seg_sa), np.array(seg_sb),
    )


def dump_segments(path, *sets: SegmentSet) -> None:
    """Write segments as text, one per line:
    ``kind x1 y1 z1 s1 x2 y2 z2 s2``."""
    with open(path, "w") as fh:
        for ss in sets:
            name = ss.kind.name
            for i in range(len(ss)):
                a, b = ss.a[i], ss.b[i]
                fh.write(
                    f"{name} {a[0]:.9g} {a[1]:.9g} {a[2]:.9g} {ss.scalar_a[i]:.9g} "
                    f"{b[0]:.9g} {b[1]:.9g} {b[2]:.9g} {ss.scalar_b[i]:.9g}\n"
                )
