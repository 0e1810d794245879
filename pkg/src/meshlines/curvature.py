"""Per-vertex differential geometry for line drawing.

Principal curvatures and directions come from a per-face least-squares
fit of the second fundamental form to vertex-normal differences along
edges, accumulated into vertices with Voronoi-style corner-area weights
and diagonalized.  The derivative-of-curvature tensor extends the same
scheme one order up.  On top of those sit the view-dependent quantities:
radial curvature (with its directional derivative) and the maximum
view-projected curvature with its direction.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field as dc_field

import numpy as np

from .camera import Camera
from .mesh_core import TriangleMesh, _freeze


def _dot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.einsum("...i,...i->...", a, b)


def _normalize_rows(a: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(a, axis=-1, keepdims=True)
    return a / np.where(n > 0, n, 1.0)


def _any_perpendicular(n: np.ndarray) -> np.ndarray:
    """A unit vector perpendicular to each row of n."""
    helper = np.zeros_like(n)
    smallest = np.argmin(np.abs(n), axis=-1)
    helper[np.arange(n.shape[0]), smallest] = 1.0
    return _normalize_rows(np.cross(n, helper))


@dataclass(frozen=True)
class CurvatureField:
    """Per-vertex curvature data tied to one mesh.

    Parameters
    ----------
    k1, k2 : (n,) float arrays
        Principal curvatures, signed, k1 >= k2.
    e1, e2 : (n, 3) float arrays
        Principal directions; (e1, e2, normal) is right-handed orthonormal.
    normals : (n, 3) float array
        The normals the fit was made against.
    C : (n, 4) float array or None
        Derivative-of-curvature tensor, unique components of the symmetric
        cubic form in the (e1, e2) frame.  None until populated.
    percentile_scale : dict or None
        Divisors applied by percentile normalization, keyed by quantity.
    isolated : (n,) bool array
        Vertices with no incident face (zero curvature, arbitrary frame).
    """

    k1: np.ndarray
    k2: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    normals: np.ndarray
    C: np.ndarray | None = None
    percentile_scale: dict | None = None
    isolated: np.ndarray | None = None
    notes: tuple = dc_field(default=(), compare=False)

    def __post_init__(self):
        for name in ("k1", "k2", "e1", "e2", "normals"):
            object.__setattr__(self, name, _freeze(np.asarray(getattr(self, name), dtype=np.float64)))
        if self.C is not None:
            object.__setattr__(self, "C", _freeze(np.asarray(self.C, dtype=np.float64)))
        iso = self.isolated
        if iso is None:
            iso = np.zeros(self.k1.shape[0], dtype=bool)
        object.__setattr__(self, "isolated", _freeze(np.asarray(iso, dtype=bool)))

    @property
    def num_vertices(self) -> int:
        return self.k1.shape[0]


@dataclass(frozen=True)
class ViewDependentField:
    """Maximum view-projected curvature q1 and its direction.

    ``direction_frame`` holds the maximizing tangent direction as unit
    (e1, e2) components; ``direction_world`` is the same vector in 3D.
    """

    q1: np.ndarray
    direction_frame: np.ndarray
    direction_world: np.ndarray

    def __post_init__(self):
        for name in ("q1", "direction_frame", "direction_world"):
            object.__setattr__(self, name, _freeze(np.asarray(getattr(self, name), dtype=np.float64)))


def _corner_areas(verts: np.ndarray, faces: np.ndarray):
    """Voronoi corner areas with the standard obtuse-triangle clamp.

    Returns (per-vertex areas, per-face-corner areas).
    """
    nf = faces.shape[0]
    p0, p1, p2 = verts[faces[:, 0]], verts[faces[:, 1]], verts[faces[:, 2]]
    e0, e1, e2 = p2 - p1, p0 - p2, p1 - p0  # edge j is opposite corner j
    area = 0.5 * np.linalg.norm(np.cross(e0, e1), axis=1)
    l2 = np.stack([_dot(e0, e0), _dot(e1, e1), _dot(e2, e2)], axis=1)
    bcw = np.stack(
        [
            l2[:, 0] * (l2[:, 1] + l2[:, 2] - l2[:, 0]),
            l2[:, 1] * (l2[:, 2] + l2[:, 0] - l2[:, 1]),
            l2[:, 2] * (l2[:, 0] + l2[:, 1] - l2[:, 2]),
        ],
        axis=1,
    )
    corner = np.empty((nf, 3))
    edges = (e0, e1, e2)
    ok = np.all(bcw > 0, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(ok, 0.5 * area / np.where(ok, bcw.sum(axis=1), 1.0), 0.0)
        for j in range(3):
            corner[:, j] = scale * (bcw[:, (j + 1) % 3] + bcw[:, (j + 2) % 3])
        # Obtuse at corner j: circumcenter outside, split along the edge.
        for j in range(3):
            bad = ~ok & (bcw[:, j] <= 0)
            if not bad.any():
                continue
            jn, jp = (j + 1) % 3, (j + 2) % 3
            ej, en, ep = edges[j], edges[jn], edges[jp]
            cn = -0.25 * l2[bad, jp] * area[bad] / _dot(ej[bad], ep[bad])
            cp = -0.25 * l2[bad, jn] * area[bad] / _dot(ej[bad], en[bad])
            corner[bad, jn] = cn
            corner[bad, jp] = cp
            corner[bad, j] = area[bad] - cn - cp
    point = np.zeros(verts.shape[0])
    for j in range(3):
        np.add.at(point, faces[:, j], corner[:, j])
    return point, corner


def _rotate_frame_to(old_u: np.ndarray, old_v: np.ndarray, new_norm: np.ndarray):
    """Rotate frames (old_u, old_v) about (old_n x new_norm) so their normal
    becomes new_norm.  Minimal rotation; antipodal normals just flip."""
    old_norm = np.cross(old_u, old_v)
    ndot = _dot(old_norm, new_norm)
    flip = ndot <= -1.0 + 1e-12
    safe = np.where(flip, 1.0, 1.0 + ndot)
    perp = new_norm - ndot[..., None] * old_norm
    dperp = (old_norm + new_norm) / safe[..., None]
    new_u = old_u - dperp * _dot(old_u, perp)[..., None]
    new_v = old_v - dperp * _dot(old_v, perp)[..., None]
    new_u[flip] = -old_u[flip]
    new_v[flip] = -old_v[flip]
    return new_u, new_v


def _transport_curv(old_u, old_v, ku, kuv, kv, new_u, new_v):
    """Re-express a second fundamental form given in frame (old_u, old_v)
    in the (rotated) frame (new_u, new_v)."""
    r_u, r_v = _rotate_frame_to(new_u, new_v, np.cross(old_u, old_v))
    u1, v1 = _dot(r_u, old_u), _dot(r_u, old_v)
    u2, v2 = _dot(r_v, old_u), _dot(r_v, old_v)
    nku = ku * u1 * u1 + kuv * (2.0 * u1 * v1) + kv * v1 * v1
    nkuv = ku * u1 * u2 + kuv * (u1 * v2 + u2 * v1) + kv * v1 * v2
    nkv = ku * u2 * u2 + kuv * (2.0 * u2 * v2) + kv * v2 * v2
    return nku, nkuv, nkv


def _transport_dcurv(old_u, old_v, d, new_u, new_v):
    """Re-express the cubic derivative-of-curvature form (4 components)
    in a rotated frame."""
    r_u, r_v = _rotate_frame_to(new_u, new_v, np.cross(old_u, old_v))
    u1, v1 = _dot(r_u, old_u), _dot(r_u, old_v)
    u2, v2 = _dot(r_v, old_u), _dot(r_v, old_v)
    d0, d1, d2, d3 = d[..., 0], d[..., 1], d[..., 2], d[..., 3]
    n0 = d0 * u1**3 + 3.0 * d1 * u1**2 * v1 + 3.0 * d2 * u1 * v1**2 + d3 * v1**3
    n1 = (
        d0 * u1**2 * u2
        + d1 * (u1**2 * v2 + 2.0 * u1 * u2 * v1)
        + d2 * (u2 * v1**2 + 2.0 * u1 * v1 * v2)
        + d3 * v1**2 * v2
    )
    n2 = (
        d0 * u1 * u2**2
        + d1 * (u2**2 * v1 + 2.0 * u1 * u2 * v2)
        + d2 * (u1 * v2**2 + 2.0 * u2 * v1 * v2)
        + d3 * v1 * v2**2
    )
    n3 = d0 * u2**3 + 3.0 * d1 * u2**2 * v2 + 3.0 * d2 * u2 * v2**2 + d3 * v2**3
    return np.stack([n0, n1, n2, n3], axis=-1)


def _solve_batch(W: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Solve a batch of small SPD-ish systems with a pinv fallback for the
    occasional singular face."""
    try:
        return np.linalg.solve(W, m[..., None])[..., 0]
    except np.linalg.LinAlgError:
        out = np.empty_like(m)
        for i in range(W.shape[0]):
            try:
                out[i] = np.linalg.solve(W[i], m[i])
            except np.linalg.LinAlgError:
                out[i] = np.linalg.pinv(W[i]) @ m[i]
        return out


def _face_frames(verts: np.ndarray, faces: np.ndarray):
    p0, p1, p2 = verts[faces[:, 0]], verts[faces[:, 1]], verts[faces[:, 2]]
    e = (p2 - p1, p0 - p2, p1 - p0)
    t = _normalize_rows(e[0])
    fn = np.cross(e[0], e[1])
    b = _normalize_rows(np.cross(fn, t))
    return e, t, b


def principal_curvatures(mesh: TriangleMesh, normals: np.ndarray | None = None) -> CurvatureField:
    """Estimate per-vertex principal curvatures and directions.

    Fits the second fundamental form per face in least squares from the
    differences of vertex normals along the three edges, transports each
    face's form into per-vertex tangent frames with corner-area weights,
    then diagonalizes.  Returned field has k1 >= k2 (signed) and an
    orthonormal (e1, e2, normal) frame per vertex.
    """
    verts, faces = mesh.vertices, mesh.faces
    nv = verts.shape[0]
    if normals is None:
        normals = mesh.vertex_normals
    normals = np.asarray(normals, dtype=np.float64)

    point_area, corner_area = _corner_areas(verts, faces)
    isolated = point_area <= 0.0

    # Initial per-vertex frame: any incident edge projected to the tangent plane.
    pdir1 = np.zeros((nv, 3))
    for j in range(3):
        pdir1[faces[:, j]] = verts[faces[:, (j + 1) % 3]] - verts[faces[:, j]]
    pdir1 = np.cross(normals, np.cross(pdir1, normals))
    bad = np.linalg.norm(pdir1, axis=1) < 1e-12
    if bad.any():
        pdir1[bad] = _any_perpendicular(normals[bad])
    pdir1 = _normalize_rows(pdir1)
    pdir2 = np.cross(normals, pdir1)

    e, t, b = _face_frames(verts, faces)
    w00 = np.zeros(faces.shape[0])
    w01 = np.zeros_like(w00)
    w22 = np.zeros_like(w00)
    m = np.zeros((faces.shape[0], 3))
    for j in range(3):
        u = _dot(e[j], t)
        v = _dot(e[j], b)
        w00 += u * u
        w01 += u * v
        w22 += v * v
        dn = normals[faces[:, (j + 2) % 3]] - normals[faces[:, (j + 1) % 3]]
        dnu, dnv = _dot(dn, t), _dot(dn, b)
        m[:, 0] += dnu * u
        m[:, 1] += dnu * v + dnv * u
        m[:, 2] += dnv * v
    zeros = np.zeros_like(w00)
    W = np.stack(
        [
            np.stack([w00, w01, zeros], axis=1),
            np.stack([w01, w00 + w22, w01], axis=1),
            np.stack([zeros, w01, w22], axis=1),
        ],
        axis=1,
    )
    fit = _solve_batch(W, m)  # per-face (ku, kuv, kv) in the (t, b) frame

    acc_ku = np.zeros(nv)
    acc_kuv = np.zeros(nv)
    acc_kv = np.zeros(nv)
    safe_area = np.where(point_area > 0, point_area, 1.0)
    for j in range(3):
        vidx = faces[:, j]
        cku, ckuv, ckv = _transport_curv(
            t, b, fit[:, 0], fit[:, 1], fit[:, 2], pdir1[vidx], pdir2[vidx]
        )
        wt = corner_area[:, j] / safe_area[vidx]
        np.add.at(acc_ku, vidx, wt * cku)
        np.add.at(acc_kuv, vidx, wt * ckuv)
        np.add.at(acc_kv, vidx, wt * ckv)

    # Diagonalize in the plane perpendicular to the vertex normal.
    r_u, r_v = _rotate_frame_to(pdir1, pdir2, normals)
    ku, kuv, kv = acc_ku, acc_kuv, acc_kv
    tt = np.zeros(nv)
    nz = kuv != 0.0
    h = np.zeros(nv)
    h[nz] = 0.5 * (kv[nz] - ku[nz]) / kuv[nz]
    root = np.sqrt(1.0 + h * h)
    denom = h + np.copysign(root, h)  # |denom| >= 1, stable for huge h
    tt[nz] = 1.0 / denom[nz]
    c = 1.0 / np.sqrt(1.0 + tt * tt)
    s = tt * c
    k1 = ku - tt * kuv
    k2 = kv + tt * kuv
    first_larger = k1 >= k2
    e1_dir = np.where(
        first_larger[:, None],
        c[:, None] * r_u - s[:, None] * r_v,
        s[:, None] * r_u + c[:, None] * r_v,
    )
    k1_out = np.where(first_larger, k1, k2)
    k2_out = np.where(first_larger, k2, k1)
    e1_dir = _normalize_rows(e1_dir)
    e2_dir = np.cross(normals, e1_dir)

    if isolated.any():
        k1_out = np.where(isolated, 0.0, k1_out)
        k2_out = np.where(isolated, 0.0, k2_out)
        e1_dir[isolated] = _any_perpendicular(normals[isolated])
        e2_dir[isolated] = np.cross(normals[isolated], e1_dir[isolated])
    notes = (f"{int(isolated.sum())} isolated vertices",) if isolated.any() else ()
    return CurvatureField(
        k1=k1_out, k2=k2_out, e1=e1_dir, e2=e2_dir, normals=normals,
        isolated=isolated, notes=notes,
    )


def curvature_derivative(mesh: TriangleMesh, field: CurvatureField) -> CurvatureField:
    """Populate the derivative-of-curvature tensor C on an existing field.

    Per face, fits the four unique components of the symmetric cubic form
    to the differences of the (transported) vertex curvature tensors along
    edges, then transports back into vertex frames with the same weights
    as the curvature fit.
    """
    verts, faces = mesh.vertices, mesh.faces
    nv = verts.shape[0]
    point_area, corner_area = _corner_areas(verts, faces)
    safe_area = np.where(point_area > 0, point_area, 1.0)
    e, t, b = _face_frames(verts, faces)

    # Vertex curvature tensors expressed in each face frame.
    fcurv = []
    for j in range(3):
        vidx = faces[:, j]
        zeros = np.zeros(faces.shape[0])
        fcurv.append(
            np.stack(
                _transport_curv(
                    field.e1[vidx], field.e2[vidx],
                    field.k1[vidx], zeros, field.k2[vidx],
                    t, b,
                ),
                axis=1,
            )
        )

    w00 = np.zeros(faces.shape[0])
    w01 = np.zeros_like(w00)
    w33 = np.zeros_like(w00)
    m = np.zeros((faces.shape[0], 4))
    for j in range(3):
        u = _dot(e[j], t)
        v = _dot(e[j], b)
        df = fcurv[(j + 2) % 3] - fcurv[(j + 1) % 3]
        w00 += u * u
        w01 += u * v
        w33 += v * v
        m[:, 0] += u * df[:, 0]
        m[:, 1] += v * df[:, 0] + 2.0 * u * df[:, 1]
        m[:, 2] += 2.0 * v * df[:, 1] + u * df[:, 2]
        m[:, 3] += v * df[:, 2]
    zeros = np.zeros_like(w00)
    W = np.stack(
        [
            np.stack([w00, w01, zeros, zeros], axis=1),
            np.stack([w01, 2.0 * w00 + w33, 2.0 * w01, zeros], axis=1),
            np.stack([zeros, 2.0 * w01, w00 + 2.0 * w33, w01], axis=1),
            np.stack([zeros, zeros, w01, w33], axis=1),
        ],
        axis=1,
    )
    face_d = _solve_batch(W, m)

    acc = np.zeros((nv, 4))
    for j in range(3):
        vidx = faces[:, j]
        vd = _transport_dcurv(t, b, face_d, field.e1[vidx], field.e2[vidx])
        wt = (corner_area[:, j] / safe_area[vidx])[:, None]
        np.add.at(acc, vidx, wt * vd)
    acc[field.isolated] = 0.0
    return CurvatureField(
        k1=field.k1, k2=field.k2, e1=field.e1, e2=field.e2,
        normals=field.normals, C=acc,
        percentile_scale=field.percentile_scale,
        isolated=field.isolated, notes=field.notes,
    )


def contract_dcurv(C: np.ndarray, x: np.ndarray, y: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Contract the symmetric cubic form with three tangent vectors given
    as (u, v) components in the principal frame."""
    xu, xv = x[..., 0], x[..., 1]
    yu, yv = y[..., 0], y[..., 1]
    zu, zv = z[..., 0], z[..., 1]
    return (
        C[..., 0] * xu * yu * zu
        + C[..., 1] * (xu * yu * zv + xu * yv * zu + xv * yu * zu)
        + C[..., 2] * (xu * yv * zv + xv * yu * zv + xv * yv * zu)
        + C[..., 3] * xv * yv * zv
    )


def radial_curvature(field: CurvatureField, view_dirs: np.ndarray):
    """Curvature toward the viewer and its derivative along that direction.

    ``view_dirs`` are unit vectors from each vertex toward the eye.
    Returns (kr, dkr, degenerate) where ``degenerate`` marks vertices whose
    view direction is parallel to the normal; there the radial direction
    falls back to e1 by convention.
    """
    if field.C is None:
        raise ValueError("field.C not populated; call curvature_derivative first")
    v = np.asarray(view_dirs, dtype=np.float64)
    ndotv = _dot(v, field.normals)
    u = _dot(v, field.e1)
    w = _dot(v, field.e2)
    u2, w2 = u * u, w * w
    sin2 = u2 + w2
    degenerate = sin2 < 1e-12
    sin2_safe = np.where(degenerate, 1.0, sin2)

    kr = (field.k1 * u2 + field.k2 * w2) / sin2_safe
    C = field.C
    # Cubic form on the unit radial direction, plus the rotation of the
    # radial direction itself as the point moves (a cot-theta term).
    num = u2 * (u * C[:, 0] + 3.0 * w * C[:, 1]) + w2 * (3.0 * u * C[:, 2] + w * C[:, 3])
    tr = (field.k2 - field.k1) * u * w / sin2_safe
    sin_theta = np.sqrt(sin2_safe)
    dkr = num / sin2_safe**1.5 - 2.0 * (ndotv / sin_theta) * tr * tr

    if degenerate.any():
        kr = np.where(degenerate, field.k1, kr)
        dkr = np.where(degenerate, C[:, 0], dkr)
    return kr, dkr, degenerate


def view_dependent_curvature(
    field: CurvatureField, mesh: TriangleMesh, camera: Camera
) -> ViewDependentField:
    """Largest apparent curvature after projection toward the viewer.

    The shape operator is composed with the inverse of the projection of
    the tangent plane onto the screen plane, so curvature is amplified by
    foreshortening and diverges toward the contour generator (clamped).
    Returns the per-vertex maximum q1 >= 0 and its maximizing direction.
    """
    v = camera.view_ray(mesh.vertices)
    ndotv = _dot(v, field.normals)
    u = _dot(v, field.e1)
    w = _dot(v, field.e2)
    cos2 = np.maximum(ndotv * ndotv, 1e-10)
    a2, b2 = field.k1**2, field.k2**2

    # M = B^-1 A with A = diag(k1^2, k2^2), B = I - ww^T (screen metric)
    m00 = a2 * (1.0 - w * w) / cos2
    m01 = b2 * u * w / cos2
    m10 = a2 * u * w / cos2
    m11 = b2 * (1.0 - u * u) / cos2
    trace = m00 + m11
    det = m00 * m11 - m01 * m10
    disc = np.sqrt(np.maximum(trace * trace - 4.0 * det, 0.0))
    lam = 0.5 * (trace + disc)
    q1 = np.sqrt(np.maximum(lam, 0.0))

    # Generalized eigenvector of (A - lam B) x = 0, from the larger row.
    g00 = a2 - lam * (1.0 - u * u)
    g01 = lam * u * w
    g11 = b2 - lam * (1.0 - w * w)
    row0 = np.stack([g00, g01], axis=1)
    row1 = np.stack([g01, g11], axis=1)
    n0 = np.linalg.norm(row0, axis=1)
    n1 = np.linalg.norm(row1, axis=1)
    # Null direction is perpendicular to the stronger row.
    use0 = n0 >= n1
    dir_frame = np.where(
        use0[:, None],
        np.stack([-row0[:, 1], row0[:, 0]], axis=1),
        np.stack([-row1[:, 1], row1[:, 0]], axis=1),
    )
    tiny = np.linalg.norm(dir_frame, axis=1) < 1e-14
    dir_frame[tiny] = (1.0, 0.0)
    dir_frame = dir_frame / np.linalg.norm(dir_frame, axis=1, keepdims=True)
    dir_world = dir_frame[:, :1] * field.e1 + dir_frame[:, 1:] * field.e2
    return ViewDependentField(q1=q1, direction_frame=dir_frame, direction_world=dir_world)


def _nearest_rank_percentile(values: np.ndarray, q: float) -> float:
    """Nearest-rank percentile: smallest value with at least q of the mass
    at or below it."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    if v.size == 0:
        return 0.0
    rank = int(np.ceil(q * v.size)) - 1
    return float(v[max(rank, 0)])


def normalize_percentile(
    field: CurvatureField,
    view: ViewDependentField | None = None,
    joint_view_scale: bool = False,
):
    """Scale curvature quantities by 90th-percentile magnitudes.

    k1 and k2 share one divisor (the 90th percentile of |k1|) so that
    comparisons between them survive normalization; C is divided by the
    90th percentile of its per-vertex max component magnitude.  A view
    field, when given, is divided by its own 90th percentile, or by the
    curvature divisor when ``joint_view_scale`` is set.  All-zero
    quantities are left unchanged with divisor 1.
    """
    notes = list(field.notes)
    s_k = _nearest_rank_percentile(np.abs(field.k1), 0.9)
    if s_k <= 0:
        s_k = 1.0
        notes.append("curvature all zero; percentile scale 1")
    scale = dict(field.percentile_scale or {})
    scale["curvature"] = s_k

    C = field.C
    if C is not None:
        s_c = _nearest_rank_percentile(np.max(np.abs(C), axis=1), 0.9)
        if s_c <= 0:
            s_c = 1.0
            notes.append("curvature derivative all zero; percentile scale 1")
        C = C / s_c
        scale["curvature_derivative"] = s_c

    out = CurvatureField(
        k1=field.k1 / s_k, k2=field.k2 / s_k,
        e1=field.e1, e2=field.e2, normals=field.normals,
        C=C, percentile_scale=scale,
        isolated=field.isolated, notes=tuple(notes),
    )
    if view is None:
        return out
    if joint_view_scale:
        s_v = s_k
    else:
        s_v = _nearest_rank_percentile(np.abs(view.q1), 0.9)
        if s_v <= 0:
            s_v = 1.0
    out_view = ViewDependentField(
        q1=view.q1 / s_v,
        direction_frame=view.direction_frame,
        direction_world=view.direction_world,
    )
    return out, out_view


def dump_vertex_fields(path, *channels: np.ndarray) -> None:
    """Debug dump: little-endian float32 channels with a small header
    (magic, vertex count, channel count)."""
    arrays = [np.asarray(c, dtype="<f4").reshape(len(c), -1) for c in channels]
    nv = arrays[0].shape[0]
    ncols = sum(a.shape[1] for a in arrays)
    with open(path, "wb") as fh:
        fh.write(b"MLVF")
        fh.write(struct.pack("<II", nv, ncols))
        fh.write(np.concatenate(arrays, axis=1).astype("<f4").tobytes())
