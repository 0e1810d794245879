"""Procedural triangle meshes with known analytic geometry.

These generators exist for testing and demos: spheres, tori, cylinders,
boxes, and planar grids have closed-form curvatures, so they serve as
ground truth for the differential-geometry code.  All meshes come back
as consistently oriented TriangleMesh objects with outward normals.
"""

from __future__ import annotations

import numpy as np

from .mesh_core import TriangleMesh


def icosphere(subdivisions: int = 3, radius: float = 1.0) -> TriangleMesh:
    """Icosahedron subdivided ``subdivisions`` times, vertices on the sphere.

    Vertex normals are set to the exact sphere normals rather than the
    face-averaged estimate.
    """
    t = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
            (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
            (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
        ],
        dtype=np.float64,
    )
    faces = np.array(
        [
            (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
            (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
            (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
            (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
        ],
        dtype=np.int64,
    )
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    for _ in range(subdivisions):
        edge_mid: dict[tuple[int, int], int] = {}
        verts_list = list(verts)

        def midpoint(a: int, b: int) -> int:
            key = (a, b) if a < b else (b, a)
            if key not in edge_mid:
                m = verts_list[a] + verts_list[b]
                verts_list.append(m / np.linalg.norm(m))
                edge_mid[key] = len(verts_list) - 1
            return edge_mid[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        verts = np.array(verts_list)
        faces = np.array(new_faces, dtype=np.int64)
    return TriangleMesh(vertices=verts * radius, faces=faces, vertex_normals=verts)


def torus(
    major_radius: float = 1.0,
    minor_radius: float = 0.35,
    major_segments: int = 64,
    minor_segments: int = 32,
) -> TriangleMesh:
    """Torus around the z axis; tube center circle has the major radius.

    Exact normals: at angles (u = around the main ring, v = around the
    tube) the outward normal is (cos u cos v, sin u cos v, sin v).
    """
    u = np.arange(major_segments) * (2 * np.pi / major_segments)
    v = np.arange(minor_segments) * (2 * np.pi / minor_segments)
    uu, vv = np.meshgrid(u, v, indexing="ij")
    ring = major_radius + minor_radius * np.cos(vv)
    verts = np.stack(
        [ring * np.cos(uu), ring * np.sin(uu), minor_radius * np.sin(vv)], axis=-1
    ).reshape(-1, 3)
    normals = np.stack(
        [np.cos(uu) * np.cos(vv), np.sin(uu) * np.cos(vv), np.sin(vv)], axis=-1
    ).reshape(-1, 3)

    return TriangleMesh(
        vertices=verts,
        faces=_grid_torus_faces(major_segments, minor_segments),
        vertex_normals=normals,
    )


def _grid_torus_faces(major_segments: int, minor_segments: int) -> np.ndarray:
    """Quad-grid triangulation of a (u, v)-periodic vertex lattice,
    grouped by major segment."""
    faces = []
    for i in range(major_segments):
        i2 = (i + 1) % major_segments
        for j in range(minor_segments):
            j2 = (j + 1) % minor_segments
            a = i * minor_segments + j
            b = i2 * minor_segments + j
            c = i2 * minor_segments + j2
            d = i * minor_segments + j2
            faces += [(a, b, c), (a, c, d)]
    return np.array(faces, dtype=np.int64)


def cut_torus(
    major_radius: float = 1.0,
    minor_radius: float = 0.35,
    major_segments: int = 64,
    minor_segments: int = 32,
    cut_segments: int = 4,
) -> TriangleMesh:
    """Torus with a wedge of ``cut_segments`` main-ring segments removed,
    leaving two open boundary loops.  Unused vertices are kept."""
    full = torus(major_radius, minor_radius, major_segments, minor_segments)
    keep = []
    faces_per_seg = 2 * minor_segments
    for i in range(major_segments):
        if i >= major_segments - cut_segments:
            continue
        start = i * faces_per_seg
        keep.extend(range(start, start + faces_per_seg))
    return TriangleMesh(
        vertices=full.vertices,
        faces=full.faces[keep],
        vertex_normals=full.vertex_normals,
    )


def bumpy_cut_torus(
    major_radius: float = 0.7,
    minor_radius: float = 0.3,
    amplitude: float = 0.12,
    major_segments: int = 96,
    minor_segments: int = 48,
    cut_segments: int = 8,
) -> TriangleMesh:
    """Cut torus with a rippled tube radius.

    The ripple breaks the rotational symmetry that otherwise makes
    principal-curvature extrema vanish identically, so every line family
    has somewhere to fire; the wedge cut leaves two boundary loops.
    Normals are recomputed from the perturbed faces.
    """
    u = np.arange(major_segments) * (2 * np.pi / major_segments)
    v = np.arange(minor_segments) * (2 * np.pi / minor_segments)
    uu, vv = np.meshgrid(u, v, indexing="ij")
    rho = minor_radius * (
        1.0
        + amplitude * np.sin(3.0 * uu) * np.sin(2.0 * vv)
        + 0.5 * amplitude * np.cos(2.0 * uu) * np.cos(3.0 * vv)
    )
    ring = major_radius + rho * np.cos(vv)
    verts = np.stack(
        [ring * np.cos(uu), ring * np.sin(uu), rho * np.sin(vv)], axis=-1
    ).reshape(-1, 3)
    faces = _grid_torus_faces(major_segments, minor_segments)
    keep_faces = faces[: 2 * minor_segments * (major_segments - cut_segments)]
    return TriangleMesh(vertices=verts, faces=keep_faces)


def cylinder(
    radius: float = 0.5,
    height: float = 2.0,
    radial_segments: int = 48,
    height_segments: int = 8,
    capped: bool = False,
) -> TriangleMesh:
    """Open or capped cylinder around the z axis, centered at the origin.

    Side-vertex normals are the exact radial directions; cap interiors
    (if capped) use the axis directions.
    """
    theta = np.arange(radial_segments) * (2 * np.pi / radial_segments)
    z = np.linspace(-height / 2, height / 2, height_segments + 1)
    verts = []
    normals = []
    for zi in z:
        for th in theta:
            verts.append((radius * np.cos(th), radius * np.sin(th), zi))
            normals.append((np.cos(th), np.sin(th), 0.0))
    faces = []
    for i in range(height_segments):
        for j in range(radial_segments):
            j2 = (j + 1) % radial_segments
            a = i * radial_segments + j
            b = i * radial_segments + j2
            c = (i + 1) * radial_segments + j2
            d = (i + 1) * radial_segments + j
            faces += [(a, b, c), (a, c, d)]
    if capped:
        bottom = len(verts)
        verts.append((0.0, 0.0, -height / 2))
        normals.append((0.0, 0.0, -1.0))
        top = len(verts)
        verts.append((0.0, 0.0, height / 2))
        normals.append((0.0, 0.0, 1.0))
        for j in range(radial_segments):
            j2 = (j + 1) % radial_segments
            faces.append((bottom, j2, j))
            base = height_segments * radial_segments
            faces.append((top, base + j, base + j2))
    return TriangleMesh(
        vertices=np.array(verts),
        faces=np.array(faces, dtype=np.int64),
        vertex_normals=np.array(normals),
    )


def plane_grid(size: float = 1.0, segments: int = 10) -> TriangleMesh:
    """Flat square grid in the z=0 plane with +z normals."""
    coords = np.linspace(-size / 2, size / 2, segments + 1)
    xx, yy = np.meshgrid(coords, coords, indexing="ij")
    verts = np.stack([xx, yy, np.zeros_like(xx)], axis=-1).reshape(-1, 3)
    n = segments + 1
    faces = []
    for i in range(segments):
        for j in range(segments):
            a = i * n + j
            b = (i + 1) * n + j
            c = (i + 1) * n + j + 1
            d = i * n + j + 1
            faces += [(a, b, c), (a, c, d)]
    normals = np.tile((0.0, 0.0, 1.0), (verts.shape[0], 1))
    return TriangleMesh(
        vertices=verts, faces=np.array(faces, dtype=np.int64), vertex_normals=normals
    )


def wavy_grid(size: float = 2.0, segments: int = 40, amplitude: float = 0.25) -> TriangleMesh:
    """Height-field grid z = A sin(pi x) cos(pi y) with exact analytic normals.

    A smooth open surface whose curvature varies over the patch; handy for
    finite-difference checks away from any symmetry.
    """
    coords = np.linspace(-size / 2, size / 2, segments + 1)
    xx, yy = np.meshgrid(coords, coords, indexing="ij")
    zz = amplitude * np.sin(np.pi * xx) * np.cos(np.pi * yy)
    dzdx = amplitude * np.pi * np.cos(np.pi * xx) * np.cos(np.pi * yy)
    dzdy = -amplitude * np.pi * np.sin(np.pi * xx) * np.sin(np.pi * yy)
    verts = np.stack([xx, yy, zz], axis=-1).reshape(-1, 3)
    normals = np.stack([-dzdx, -dzdy, np.ones_like(zz)], axis=-1).reshape(-1, 3)
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    n = segments + 1
    faces = []
    for i in range(segments):
        for j in range(segments):
            a = i * n + j
            b = (i + 1) * n + j
            c = (i + 1) * n + j + 1
            d = i * n + j + 1
            faces += [(a, b, c), (a, c, d)]
    return TriangleMesh(
        vertices=verts, faces=np.array(faces, dtype=np.int64), vertex_normals=normals
    )


def box(size=(1.0, 1.0, 1.0), segments: int = 4) -> TriangleMesh:
    """Axis-aligned box with ``segments``-subdivided faces and sharp edges.

    Vertices along edges are shared, so face-averaged normals blend at
    the creases; useful for dihedral-angle line tests.
    """
    sx, sy, sz = size
    half = np.array([sx, sy, sz]) / 2.0
    verts_list: list[tuple] = []
    vert_index: dict[tuple, int] = {}
    faces = []

    def add_vertex(p) -> int:
        key = tuple(np.round(p, 12))
        if key not in vert_index:
            vert_index[key] = len(verts_list)
            verts_list.append(key)
        return vert_index[key]

    # axis = fixed coordinate, sign = which side; (u_axis, v_axis) span the face
    for axis in range(3):
        u_axis, v_axis = (axis + 1) % 3, (axis + 2) % 3
        for sign in (-1.0, 1.0):
            grid = np.linspace(-1.0, 1.0, segments + 1)
            idgrid = np.empty((segments + 1, segments + 1), dtype=np.int64)
            for i, u in enumerate(grid):
                for j, v in enumerate(grid):
                    p = np.zeros(3)
                    p[axis] = sign * half[axis]
                    p[u_axis] = u * half[u_axis]
                    p[v_axis] = v * half[v_axis]
                    idgrid[i, j] = add_vertex(p)
            for i in range(segments):
                for j in range(segments):
                    a, b = idgrid[i, j], idgrid[i + 1, j]
                    c, d = idgrid[i + 1, j + 1], idgrid[i, j + 1]
                    if sign > 0:
                        faces += [(a, b, c), (a, c, d)]
                    else:
                        faces += [(a, c, b), (a, d, c)]
    return TriangleMesh(
        vertices=np.array(verts_list, dtype=np.float64),
        faces=np.array(faces, dtype=np.int64),
    )


def rounded_cube(subdivisions: int = 4, exponent: float = 4.0) -> TriangleMesh:
    """Smooth cube-like solid |x|^p + |y|^p + |z|^p = 1 with analytic normals.

    The bevel regions along the 12 edges are curvature crests, which makes
    this the canonical ridge-detector test shape.
    """
    base = icosphere(subdivisions)
    d = base.vertices
    p = exponent
    rho = (np.abs(d) ** p).sum(axis=1) ** (-1.0 / p)
    verts = rho[:, None] * d
    grad = p * np.sign(verts) * np.abs(verts) ** (p - 1.0)
    normals = grad / np.linalg.norm(grad, axis=1, keepdims=True)
    return TriangleMesh(vertices=verts, faces=base.faces, vertex_normals=normals)


def groove_plate(
    size: float = 2.0,
    segments: int = 60,
    depth: float = 0.3,
    width: float = 0.25,
) -> TriangleMesh:
    """Plate with a smooth Gaussian groove along the y axis.

    z = -depth * exp(-x^2 / (2 width^2)); the groove floor at x = 0 is a
    curvature-valley line with analytic normals.
    """
    coords = np.linspace(-size / 2, size / 2, segments + 1)
    xx, yy = np.meshgrid(coords, coords, indexing="ij")
    zz = -depth * np.exp(-(xx**2) / (2.0 * width**2))
    dzdx = depth * xx / width**2 * np.exp(-(xx**2) / (2.0 * width**2))
    verts = np.stack([xx, yy, zz], axis=-1).reshape(-1, 3)
    normals = np.stack([-dzdx, np.zeros_like(zz), np.ones_like(zz)], axis=-1).reshape(-1, 3)
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    n = segments + 1
    faces = []
    for i in range(segments):
        for j in range(segments):
            a = i * n + j
            b = (i + 1) * n + j
            c = (i + 1) * n + j + 1
            d = i * n + j + 1
            faces += [(a, b, c), (a, c, d)]
    return TriangleMesh(
        vertices=verts, faces=np.array(faces, dtype=np.int64), vertex_normals=normals
    )


def bumpy_sphere(
    subdivisions: int = 4,
    amplitude: float = 0.18,
    cut_cap: bool = False,
) -> TriangleMesh:
    """Icosphere with a smooth low-frequency radial perturbation.

    Bumps and dents activate every curvature-driven line kind at once;
    ``cut_cap`` removes the faces in a cone around +z, leaving a boundary
    loop.  Normals are the area-weighted mesh estimate (the displaced
    surface has no simple closed form).
    """
    base = icosphere(subdivisions)
    d = base.vertices
    bumps = (
        np.sin(3.1 * d[:, 0] + 0.4)
        * np.sin(2.7 * d[:, 1] - 0.2)
        * np.sin(2.3 * d[:, 2] + 0.7)
    )
    verts = d * (1.0 + amplitude * bumps)[:, None]
    faces = base.faces
    if cut_cap:
        centers = (verts[faces[:, 0]] + verts[faces[:, 1]] + verts[faces[:, 2]]) / 3.0
        keep = centers[:, 2] < 0.72 * np.linalg.norm(centers, axis=1)
        faces = faces[keep]
    return TriangleMesh(vertices=verts, faces=faces)


def to_obj(mesh: TriangleMesh, path) -> None:
    """Write the mesh as a minimal OBJ file (positions and faces only)."""
    lines = []
    for x, y, z in mesh.vertices:
        lines.append(f"v {x:.9g} {y:.9g} {z:.9g}")
    for a, b, c in mesh.faces:
        lines.append(f"f {a + 1} {b + 1} {c + 1}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
