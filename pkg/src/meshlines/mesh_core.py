"""Triangle mesh loading, repair, and normal-field smoothing.

Meshes are Wavefront OBJ files (``v``/``vn``/``f`` records, quads are
fan-triangulated).  Loading welds coincident vertices, drops degenerate
faces, and reorients polygons so that connected closed components have
outward-facing normals.  All returned objects are immutable and safe to
share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

WELD_TOLERANCE_FACTOR = 1e-6  # times the bounding-box diagonal


class MeshError(ValueError):
    """Raised for unusable mesh input (parse failures, empty geometry)."""


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class TriangleMesh:
    """Indexed triangle surface with per-vertex unit normals.

    Parameters
    ----------
    vertices : (n, 3) float array
        Vertex positions in object units.
    faces : (m, 3) int array
        Vertex indices, counter-clockwise when viewed from the front.
    vertex_normals : (n, 3) float array
        Unit normals.  Computed as area-weighted face-normal averages
        when not supplied.
    ground_up_axis : (3,) float array, optional
        Unit vector pointing away from the ground plane (used for
        camera placement).
    diagnostics : tuple of str
        Events recorded while building the mesh (welds, drops, flips).
        Not part of the geometric identity of the mesh.
    """

    vertices: np.ndarray
    faces: np.ndarray
    vertex_normals: np.ndarray | None = None
    ground_up_axis: np.ndarray | None = None
    diagnostics: tuple = field(default=(), compare=False)

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        f = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if v.shape[0] == 0:
            raise MeshError("mesh has no vertices")
        if f.size and (f.min() < 0 or f.max() >= v.shape[0]):
            raise MeshError("face index out of range")
        if self.vertex_normals is None:
            n = vertex_normals_from_faces(v, f)
        else:
            n = np.asarray(self.vertex_normals, dtype=np.float64).reshape(-1, 3)
            if n.shape[0] != v.shape[0]:
                raise MeshError("normal count does not match vertex count")
            n = _unitize(n)
        up = self.ground_up_axis
        if up is not None:
            up = _freeze(np.asarray(up, dtype=np.float64).reshape(3) / np.linalg.norm(up))
        object.__setattr__(self, "vertices", _freeze(v))
        object.__setattr__(self, "faces", _freeze(f))
        object.__setattr__(self, "vertex_normals", _freeze(n))
        object.__setattr__(self, "ground_up_axis", up)

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_faces(self) -> int:
        return self.faces.shape[0]

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def centroid(self) -> np.ndarray:
        return self.vertices.mean(axis=0)

    def bounding_radius(self) -> float:
        """Largest vertex distance from the centroid."""
        return float(np.linalg.norm(self.vertices - self.centroid(), axis=1).max())


@dataclass(frozen=True)
class NormalField:
    """Per-vertex unit normals after diffusion smoothing.

    ``smoothing_sigma == 0`` means the raw mesh normals.
    """

    normals: np.ndarray
    smoothing_sigma: float = 0.0

    def __post_init__(self):
        if self.smoothing_sigma < 0:
            raise ValueError("smoothing sigma must be non-negative")
        object.__setattr__(self, "normals", _freeze(np.asarray(self.normals, dtype=np.float64)))


def _unitize(vectors: np.ndarray) -> np.ndarray:
    lengths = np.linalg.norm(vectors, axis=-1, keepdims=True)
    safe = np.where(lengths > 0, lengths, 1.0)
    out = vectors / safe
    # Zero-length rows get an arbitrary but valid unit vector.
    out[lengths[..., 0] == 0] = (0.0, 0.0, 1.0)
    return out


def face_normals(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Unnormalized face normals (length = twice the triangle area)."""
    p0, p1, p2 = (vertices[faces[:, k]] for k in range(3))
    return np.cross(p1 - p0, p2 - p0)


def vertex_normals_from_faces(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Area-weighted average of adjacent face normals, normalized."""
    n = np.zeros_like(vertices)
    if faces.size:
        fn = face_normals(vertices, faces)
        for k in range(3):
            np.add.at(n, faces[:, k], fn)
    return _unitize(n)


def _parse_obj(text: str):
    positions = []
    normals = []
    face_pos = []
    face_norm = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        tag = parts[0]
        if tag == "v":
            if len(parts) < 4:
                raise MeshError(f"line {lineno}: vertex needs 3 coordinates")
            positions.append([float(x) for x in parts[1:4]])
        elif tag == "vn":
            normals.append([float(x) for x in parts[1:4]])
        elif tag == "f":
            if len(parts) < 4:
                raise MeshError(f"line {lineno}: face needs at least 3 vertices")
            corner_pos = []
            corner_norm = []
            for token in parts[1:]:
                fields = token.split("/")
                vi = int(fields[0])
                corner_pos.append(vi - 1 if vi > 0 else len(positions) + vi)
                ni = None
                if len(fields) >= 3 and fields[2]:
                    raw_ni = int(fields[2])
                    ni = raw_ni - 1 if raw_ni > 0 else len(normals) + raw_ni
                corner_norm.append(ni)
            # Fan-triangulate quads and larger polygons.
            for k in range(1, len(corner_pos) - 1):
                face_pos.append([corner_pos[0], corner_pos[k], corner_pos[k + 1]])
                face_norm.append([corner_norm[0], corner_norm[k], corner_norm[k + 1]])
        # Other records (vt, s, o, g, usemtl, ...) are ignored.
    return positions, normals, face_pos, face_norm


def _weld_vertices(vertices: np.ndarray, faces: np.ndarray, tolerance: float):
    """Merge vertices whose positions agree within ``tolerance``.

    Quantizes positions onto a grid of spacing ``tolerance`` and keeps the
    first occurrence of each cell, so welding an already-welded mesh is the
    identity.
    """
    if tolerance <= 0:
        return vertices, faces, 0
    keys = np.round(vertices / tolerance).astype(np.int64)
    _, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    if first.shape[0] == vertices.shape[0]:
        return vertices, faces, 0
    # Remap in a way that preserves the original vertex order.
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(order.shape[0])
    new_vertices = vertices[first[order]]
    new_faces = rank[inverse][faces] if faces.size else faces
    return new_vertices, new_faces, vertices.shape[0] - first.shape[0]


def _drop_degenerate_faces(vertices: np.ndarray, faces: np.ndarray):
    if not faces.size:
        return faces, 0
    repeated = (
        (faces[:, 0] == faces[:, 1])
        | (faces[:, 1] == faces[:, 2])
        | (faces[:, 2] == faces[:, 0])
    )
    areas = 0.5 * np.linalg.norm(face_normals(vertices, faces), axis=1)
    bad = repeated | (areas == 0.0)
    return faces[~bad], int(bad.sum())


def _edge_face_table(faces: np.ndarray) -> dict:
    """Undirected edge -> list of incident face indices."""
    table: dict[tuple[int, int], list[int]] = {}
    for fi, (a, b, c) in enumerate(faces):
        for u, v in ((a, b), (b, c), (c, a)):
            key = (u, v) if u < v else (v, u)
            table.setdefault(key, []).append(fi)
    return table


def _ray_triangle_hits(origin, direction, vertices, faces, skip_face):
    """Number of triangles hit by the ray (Moller-Trumbore, vectorized)."""
    p0 = vertices[faces[:, 0]]
    e1 = vertices[faces[:, 1]] - p0
    e2 = vertices[faces[:, 2]] - p0
    h = np.cross(direction, e2)
    det = np.einsum("ij,ij->i", e1, h)
    ok = np.abs(det) > 1e-14
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    s = origin - p0
    u = np.einsum("ij,ij->i", s, h) * inv
    q = np.cross(s, e1)
    v = np.einsum("j,ij->i", direction, q) * inv
    t = np.einsum("ij,ij->i", e2, q) * inv
    hit = ok & (u >= 0) & (v >= 0) & (u + v <= 1) & (t > 1e-9)
    hit[skip_face] = False
    return int(hit.sum())


def _orient_faces(vertices: np.ndarray, faces: np.ndarray, diagnostics: list):
    """Consistently orient each connected component; flip closed components
    whose normals point inward (majority vote of outward ray tests).

    Open or ambiguous components keep the orientation propagated from their
    lowest-index face as it appeared in the file.
    """
    if not faces.size:
        return faces
    faces = faces.copy()
    table = _edge_face_table(faces)
    nf = faces.shape[0]
    visited = np.zeros(nf, dtype=bool)
    flipped = np.zeros(nf, dtype=bool)
    total_flipped = 0

    for seed in range(nf):
        if visited[seed]:
            continue
        component = []
        stack = [seed]
        visited[seed] = True
        while stack:
            fi = stack.pop()
            component.append(fi)
            a, b, c = faces[fi]
            for u, v in ((a, b), (b, c), (c, a)):
                key = (u, v) if u < v else (v, u)
                incident = table[key]
                if len(incident) != 2:
                    continue  # boundary or non-manifold: do not propagate
                other = incident[0] if incident[1] == fi else incident[1]
                if visited[other]:
                    continue
                # Consistent orientation: the shared edge must appear in
                # opposite directions in the two faces.
                oa, ob, oc = faces[other]
                other_dirs = ((oa, ob), (ob, oc), (oc, oa))
                if (u, v) in other_dirs:
                    faces[other] = faces[other, ::-1]
                    flipped[other] = True
                visited[other] = True
                stack.append(other)

        comp = np.array(component)
        n_flipped = int(flipped[comp].sum())
        if n_flipped:
            total_flipped += n_flipped

        # Closed component: every edge of the component has two faces.
        closed = True
        for fi in component:
            a, b, c = faces[fi]
            for u, v in ((a, b), (b, c), (c, a)):
                key = (u, v) if u < v else (v, u)
                if len(table[key]) != 2:
                    closed = False
                    break
            if not closed:
                break
        if not closed:
            continue

        comp_faces = faces[comp]
        fn = face_normals(vertices, comp_faces)
        areas = np.linalg.norm(fn, axis=1)
        sample = comp[np.argsort(areas)[::-1][: min(16, comp.shape[0])]]
        votes_out = 0
        for fi in sample:
            tri = faces[fi]
            centroid = vertices[tri].mean(axis=0)
            normal = np.cross(
                vertices[tri[1]] - vertices[tri[0]], vertices[tri[2]] - vertices[tri[0]]
            )
            norm_len = np.linalg.norm(normal)
            if norm_len == 0:
                continue
            normal = normal / norm_len
            local = np.nonzero(comp == fi)[0][0]
            hits = _ray_triangle_hits(centroid + 1e-9 * normal, normal, vertices, comp_faces, local)
            if hits % 2 == 0:
                votes_out += 1
        if votes_out * 2 < sample.shape[0]:
            faces[comp] = faces[comp][:, ::-1]
            total_flipped += comp.shape[0]
            diagnostics.append(f"flipped inward-facing component of {comp.shape[0]} faces")

    if total_flipped:
        diagnostics.append(f"reoriented {total_flipped} faces for consistency")
    return faces


def load_mesh(path, ground_up_axis=(0.0, 1.0, 0.0)) -> TriangleMesh:
    """Load a Wavefront OBJ file.

    Coincident vertices are welded (tolerance 1e-6 times the bounding-box
    diagonal), degenerate faces dropped, and polygon orientation fixed per
    connected component.  Non-manifold input is accepted and flagged in the
    mesh diagnostics.

    Raises
    ------
    MeshError
        If the file cannot be parsed or contains no faces.
    """
    path = Path(path)
    if not path.exists():
        raise MeshError(f"mesh not found: {path}")
    try:
        positions, normals, face_pos, face_norm = _parse_obj(path.read_text())
    except MeshError:
        raise
    except Exception as exc:
        raise MeshError(f"cannot parse {path}: {exc}") from exc
    if not positions:
        raise MeshError(f"{path}: no vertices")
    if not face_pos:
        raise MeshError(f"{path}: no faces")

    vertices = np.asarray(positions, dtype=np.float64)
    faces = np.asarray(face_pos, dtype=np.int64)
    if faces.min() < 0 or faces.max() >= vertices.shape[0]:
        raise MeshError(f"{path}: face index out of range")

    diagnostics: list[str] = []
    diag = np.linalg.norm(vertices.max(axis=0) - vertices.min(axis=0))
    vertices, faces, welded = _weld_vertices(vertices, faces, WELD_TOLERANCE_FACTOR * diag)
    if welded:
        diagnostics.append(f"welded {welded} coincident vertices")
    faces, dropped = _drop_degenerate_faces(vertices, faces)
    if dropped:
        diagnostics.append(f"dropped {dropped} degenerate faces")
    if not faces.size:
        raise MeshError(f"{path}: no faces left after repair")

    table = _edge_face_table(faces)
    over_shared = sum(1 for incident in table.values() if len(incident) > 2)
    if over_shared:
        diagnostics.append(f"non-manifold: {over_shared} edges with more than 2 faces")

    faces = _orient_faces(vertices, faces, diagnostics)
    diagnostics.append(f"{vertices.shape[0]} vertices, {faces.shape[0]} faces")
    return TriangleMesh(
        vertices=vertices,
        faces=faces,
        vertex_normals=None,
        ground_up_axis=ground_up_axis,
        diagnostics=tuple(diagnostics),
    )


def diagnostics_report(mesh: TriangleMesh) -> str:
    """Structured text report: load events plus current topology counts."""
    table = _edge_face_table(mesh.faces)
    boundary = sum(1 for incident in table.values() if len(incident) == 1)
    nonmanifold = sum(1 for incident in table.values() if len(incident) > 2)
    lines = [
        "mesh diagnostics",
        f"  vertices: {mesh.num_vertices}",
        f"  faces: {mesh.num_faces}",
        f"  boundary-edges: {boundary}",
        f"  nonmanifold-edges: {nonmanifold}",
    ]
    for event in mesh.diagnostics:
        lines.append(f"  event: {event}")
    return "\n".join(lines)


def normalize_size(mesh: TriangleMesh) -> TriangleMesh:
    """Center the mesh at its bounding-box center and scale uniformly so the
    longest axis-aligned extent equals 1."""
    lo, hi = mesh.bounds()
    extent = float((hi - lo).max())
    if extent <= 0:
        raise MeshError("cannot normalize a zero-extent mesh")
    center = (lo + hi) / 2.0
    vertices = (mesh.vertices - center) / extent
    return replace(mesh, vertices=vertices, vertex_normals=mesh.vertex_normals)


def _one_ring(mesh: TriangleMesh):
    """Per-vertex neighbor index lists from face connectivity."""
    neighbors = [set() for _ in range(mesh.num_vertices)]
    for a, b, c in mesh.faces:
        neighbors[a].update((b, c))
        neighbors[b].update((a, c))
        neighbors[c].update((a, b))
    return [np.fromiter(sorted(s), dtype=np.int64) for s in neighbors]


def smooth_normals(mesh: TriangleMesh, sigma: float) -> NormalField:
    """Diffuse the vertex normal field over one-ring neighborhoods.

    Each normal becomes the renormalized weighted average of itself
    (weight 1) and its one-ring neighbors, weighted by a Gaussian
    ``exp(-d^2 / (2 sigma^2))`` on vertex distances.  ``sigma == 0``
    returns the raw normals unchanged.
    """
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0:
        return NormalField(normals=mesh.vertex_normals, smoothing_sigma=0.0)
    out = np.array(mesh.vertex_normals)
    inv_two_sigma2 = 1.0 / (2.0 * sigma * sigma)
    for vi, ring in enumerate(_one_ring(mesh)):
        if ring.size == 0:
            continue  # isolated vertex keeps its own normal
        d2 = np.sum((mesh.vertices[ring] - mesh.vertices[vi]) ** 2, axis=1)
        weights = np.exp(-d2 * inv_two_sigma2)
        accum = mesh.vertex_normals[vi] + weights @ mesh.vertex_normals[ring]
        length = np.linalg.norm(accum)
        if length > 0:
            out[vi] = accum / length
    return NormalField(normals=out, smoothing_sigma=float(sigma))
