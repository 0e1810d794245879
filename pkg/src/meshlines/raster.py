"""Software rasterization of meshes and line segments into image maps.

One visibility pass per camera produces a face-id buffer with
perspective-correct barycentrics and a depth buffer; every image-space
map (depth image, shaded stack, line masks with hidden-line removal,
per-line filter-scalar maps) is then a cheap deterministic attribute
pass over that buffer.  No GPU, no external renderer: results are
bit-identical across runs and thread counts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image
from skimage import feature as _skfeature

from .camera import Camera
from .line_extract import LineKind, SegmentSet
from .mesh_core import TriangleMesh, _freeze, smooth_normals

DEPTH_BIAS = 1e-3          # hidden-line tolerance, in normalized depth units
DEPTH_FLOOR = 0.05         # farthest foreground value in the depth image
LINE_RADIUS_FACTOR = 0.75  # stamped radius = factor * line_width, pixels
SCALAR_FLOOR = 1e-9        # smallest stored scalar on an active mask pixel
SHADED_SIGMAS = (0.0, 1.0, 2.0, 3.0, 4.0, 5.0)
_NEAR = 1e-6


@dataclass(frozen=True)
class Drawing:
    """Grayscale line drawing: 0 = blank, 1 = full ink."""

    image: np.ndarray

    def __post_init__(self):
        img = np.asarray(self.image, dtype=np.float64)
        if img.ndim != 2:
            raise ValueError("drawing must be a 2D image")
        if img.size and (img.min() < 0.0 or img.max() > 1.0):
            raise ValueError("drawing values must lie in [0, 1]")
        object.__setattr__(self, "image", _freeze(img))

    def to_png(self, path) -> None:
        """Export with the ink-on-white convention (ink = black)."""
        gray = np.round(255.0 * (1.0 - self.image)).astype(np.uint8)
        Image.fromarray(gray, mode="L").save(path)

    @staticmethod
    def from_png(path) -> "Drawing":
        gray = np.asarray(Image.open(path).convert("L"), dtype=np.float64)
        return Drawing(image=1.0 - gray / 255.0)


@dataclass(frozen=True)
class MapStack:
    """All image-space inputs of the thresholding layer for one view.

    Binary masks S, R, V, A, C, B; scalar maps (dk for suggestive
    contours, k1 for ridges, k2 magnitude for valleys, kt for apparent
    ridges) that are positive exactly where the matching mask is on;
    depth image E in [0, 1] with background exactly 0; shaded stack O
    of six images under increasingly smoothed normals.
    """

    S: np.ndarray
    R: np.ndarray
    V: np.ndarray
    A: np.ndarray
    C: np.ndarray
    B: np.ndarray
    dk: np.ndarray
    k1: np.ndarray
    k2: np.ndarray
    kt: np.ndarray
    E: np.ndarray
    O: np.ndarray

    def __post_init__(self):
        for name in ("S", "R", "V", "A", "C", "B", "dk", "k1", "k2", "kt", "E", "O"):
            object.__setattr__(self, name, _freeze(np.asarray(getattr(self, name), dtype=np.float64)))
        shape = self.S.shape
        for name in ("R", "V", "A", "C", "B", "dk", "k1", "k2", "kt", "E"):
            if getattr(self, name).shape != shape:
                raise ValueError(f"map {name} has mismatched shape")
        if self.O.shape != (len(SHADED_SIGMAS),) + shape:
            raise ValueError("shaded stack O has mismatched shape")

    @property
    def height(self) -> int:
        return self.S.shape[0]

    @property
    def width(self) -> int:
        return self.S.shape[1]


@dataclass(frozen=True)
class VisibilityBuffer:
    """Face-id buffer with perspective-correct barycentrics and view depth."""

    face_id: np.ndarray   # (h, w) int, -1 = background
    bary: np.ndarray      # (h, w, 3)
    depth: np.ndarray     # (h, w) view-space distance, +inf background

    @property
    def foreground(self) -> np.ndarray:
        return self.face_id >= 0


def rasterize_visibility(mesh: TriangleMesh, camera: Camera) -> VisibilityBuffer:
    """One z-buffered pass over all faces.

    Deterministic: faces are painted in index order with a strict depth
    test, and pixels whose center lies exactly on a shared edge are
    assigned to exactly one face by a fixed edge-direction rule.
    """
    h, w = camera.height, camera.width
    face_id = np.full((h, w), -1, dtype=np.int64)
    zbuf = np.full((h, w), np.inf)
    bary = np.zeros((h, w, 3))
    faces = mesh.faces
    if faces.size == 0:
        return VisibilityBuffer(face_id=face_id, bary=bary, depth=zbuf)

    xy, depth = camera.project(mesh.vertices)
    vz = depth[faces]                      # (nf, 3)
    pts = xy[faces]                        # (nf, 3, 2)
    ok = (vz > _NEAR).all(axis=1) & np.isfinite(pts).all(axis=(1, 2))

    xmin = np.ceil(pts[:, :, 0].min(axis=1) - 0.5).astype(np.int64)
    xmax = np.floor(pts[:, :, 0].max(axis=1) - 0.5).astype(np.int64)
    ymin = np.ceil(pts[:, :, 1].min(axis=1) - 0.5).astype(np.int64)
    ymax = np.floor(pts[:, :, 1].max(axis=1) - 0.5).astype(np.int64)
    np.clip(xmin, 0, None, out=xmin)
    np.clip(ymin, 0, None, out=ymin)
    np.clip(xmax, None, w - 1, out=xmax)
    np.clip(ymax, None, h - 1, out=ymax)
    ok &= (xmin <= xmax) & (ymin <= ymax)

    for fi in np.nonzero(ok)[0]:
        p = pts[fi]
        area = (p[1, 0] - p[0, 0]) * (p[2, 1] - p[0, 1]) - (p[1, 1] - p[0, 1]) * (
            p[2, 0] - p[0, 0]
        )
        if area == 0.0:
            continue
        sign = 1.0 if area > 0 else -1.0
        area_abs = sign * area

        xs = np.arange(xmin[fi], xmax[fi] + 1)
        ys = np.arange(ymin[fi], ymax[fi] + 1)
        px = xs[None, :] + 0.5
        py = ys[:, None] + 0.5

        inside = None
        wts = []
        # Edge k runs opposite corner k: (1,2), (2,0), (0,1).
        for a, b in ((1, 2), (2, 0), (0, 1)):
            dx = p[b, 0] - p[a, 0]
            dy = p[b, 1] - p[a, 1]
            e = sign * (dx * (py - p[a, 1]) - dy * (px - p[a, 0]))
            # A center exactly on an edge belongs to only one of the two
            # adjacent faces: accept zero only for one direction class.
            sdx, sdy = sign * dx, sign * dy
            boundary_ok = (sdy < 0.0) or (sdy == 0.0 and sdx < 0.0)
            cond = (e > 0.0) | ((e == 0.0) & boundary_ok)
            inside = cond if inside is None else (inside & cond)
            wts.append(e / area_abs)
        if not inside.any():
            continue

        inv_z = (wts[0] / vz[fi, 0] + wts[1] / vz[fi, 1] + wts[2] / vz[fi, 2])
        z = 1.0 / np.where(inv_z > 0, inv_z, 1.0)
        sub = (slice(ymin[fi], ymax[fi] + 1), slice(xmin[fi], xmax[fi] + 1))
        win = inside & (inv_z > 0) & (z < zbuf[sub])
        if not win.any():
            continue
        zbuf[sub][win] = z[win]
        face_id[sub][win] = fi
        for k in range(3):
            bary[sub + (k,)][win] = (wts[k][win] / vz[fi, k]) * z[win]
    return VisibilityBuffer(face_id=face_id, bary=bary, depth=zbuf)


def interpolate_vertex_attribute(
    mesh: TriangleMesh, vis: VisibilityBuffer, values: np.ndarray
) -> np.ndarray:
    """Perspective-correct interpolation of a per-vertex scalar over the
    visibility buffer; background pixels get 0."""
    out = np.zeros(vis.face_id.shape)
    fg = vis.foreground
    fids = vis.face_id[fg]
    tri = mesh.faces[fids]
    vals = values[tri]  # (m, 3)
    out[fg] = (vis.bary[fg] * vals).sum(axis=1)
    return out


def render_depth(mesh: TriangleMesh, camera: Camera, vis: VisibilityBuffer | None = None) -> np.ndarray:
    """Depth image: nearer surfaces brighter, foreground in (0, 1] with a
    positive floor, background exactly 0."""
    if vis is None:
        vis = rasterize_visibility(mesh, camera)
    E = np.zeros(vis.depth.shape)
    fg = vis.foreground
    if not fg.any():
        return E
    z = vis.depth[fg]
    z_near, z_far = z.min(), z.max()
    if z_far - z_near < 1e-12:
        E[fg] = 1.0
    else:
        E[fg] = DEPTH_FLOOR + (1.0 - DEPTH_FLOOR) * (z_far - z) / (z_far - z_near)
    return E


def render_shaded(
    mesh: TriangleMesh,
    camera: Camera,
    normals: np.ndarray,
    vis: VisibilityBuffer | None = None,
) -> np.ndarray:
    """Lambertian shading with the light at the camera, interpolated from
    per-vertex intensities."""
    if vis is None:
        vis = rasterize_visibility(mesh, camera)
    light = camera.view_ray(mesh.vertices)
    intensity = np.maximum((np.asarray(normals) * light).sum(axis=1), 0.0)
    return interpolate_vertex_attribute(mesh, vis, intensity)


def render_shaded_stack(
    mesh: TriangleMesh, camera: Camera, vis: VisibilityBuffer | None = None
) -> np.ndarray:
    """Six shaded images under progressively smoothed normal fields."""
    if vis is None:
        vis = rasterize_visibility(mesh, camera)
    layers = []
    for sigma in SHADED_SIGMAS:
        nf = smooth_normals(mesh, sigma)
        layers.append(render_shaded(mesh, camera, nf.normals, vis))
    return np.stack(layers, axis=0)


def rasterize_lines(
    segments: SegmentSet,
    mesh: TriangleMesh,
    camera: Camera,
    line_width: float = 1.0,
    vis: VisibilityBuffer | None = None,
    depth_bias: float = DEPTH_BIAS,
):
    """Project segments and stamp visible portions into a binary mask.

    Hidden-line removal tests the segment's interpolated view depth
    against the surface depth buffer with a small bias.  The returned
    scalar map holds the (perspective-correct) interpolated filter scalar
    at each covered pixel, max over overlapping segments, and is positive
    exactly where the mask is on.
    """
    if vis is None:
        vis = rasterize_visibility(mesh, camera)
    h, w = camera.height, camera.width
    mask = np.zeros((h, w), dtype=np.float64)
    scalar = np.zeros((h, w), dtype=np.float64)
    if len(segments) == 0:
        return mask, scalar

    fg = vis.foreground
    if fg.any():
        z_vals = vis.depth[fg]
        span = max(float(z_vals.max() - z_vals.min()), 1e-6)
    else:
        span = 1.0
    bias = depth_bias * span

    endpoints = np.concatenate([segments.a, segments.b], axis=0)
    xy, depth = camera.project(endpoints)
    n = len(segments)
    axy, bxy = xy[:n], xy[n:]
    az, bz = depth[:n], depth[n:]
    radius = LINE_RADIUS_FACTOR * line_width

    usable = (az > _NEAR) & (bz > _NEAR)
    usable &= np.isfinite(axy).all(axis=1) & np.isfinite(bxy).all(axis=1)

    for i in np.nonzero(usable)[0]:
        ax, ay = axy[i]
        bx, by = bxy[i]
        x0 = max(int(np.floor(min(ax, bx) - radius)), 0)
        x1 = min(int(np.ceil(max(ax, bx) + radius)), w - 1)
        y0 = max(int(np.floor(min(ay, by) - radius)), 0)
        y1 = min(int(np.ceil(max(ay, by) + radius)), h - 1)
        if x0 > x1 or y0 > y1:
            continue
        px = np.arange(x0, x1 + 1)[None, :] + 0.5
        py = np.arange(y0, y1 + 1)[:, None] + 0.5
        dx, dy = bx - ax, by - ay
        len2 = dx * dx + dy * dy
        if len2 > 0:
            t = ((px - ax) * dx + (py - ay) * dy) / len2
            t = np.clip(t, 0.0, 1.0)
        else:
            t = np.zeros((py.shape[0], px.shape[1]))
        cx = ax + t * dx
        cy = ay + t * dy
        dist2 = (px - cx) ** 2 + (py - cy) ** 2
        covered = dist2 <= radius * radius
        if not covered.any():
            continue
        # Depth and scalar along the projected segment: 1/z and s/z are
        # affine in the screen parameter.
        inv_z = (1.0 - t) / az[i] + t / bz[i]
        seg_z = 1.0 / inv_z
        seg_s = seg_z * ((1.0 - t) * segments.scalar_a[i] / az[i] + t * segments.scalar_b[i] / bz[i])
        sub = (slice(y0, y1 + 1), slice(x0, x1 + 1))
        visible = covered & (seg_z <= vis.depth[sub] + bias)
        if not visible.any():
            continue
        mask[sub][visible] = 1.0
        scalar[sub][visible] = np.maximum(scalar[sub][visible], seg_s[visible])
    on = mask > 0
    scalar[on] = np.maximum(scalar[on], SCALAR_FLOOR)
    scalar[~on] = 0.0
    return mask, scalar


def canny_lines(shaded: np.ndarray, low: float, high: float, sigma: float = 1.0) -> Drawing:
    """Edge drawing from a shaded rendering: Gaussian blur, gradient,
    non-maximum suppression, hysteresis thresholding."""
    if high < low or low < 0:
        raise ValueError("need high >= low >= 0")
    img = np.asarray(shaded, dtype=np.float64)
    if not (np.isfinite(low) and np.isfinite(high)):
        return Drawing(image=np.zeros_like(img))
    edges = _skfeature.canny(img, sigma=sigma, low_threshold=low, high_threshold=high)
    return Drawing(image=edges.astype(np.float64))


def build_map_stack(
    mesh: TriangleMesh,
    camera: Camera,
    segment_sets: dict,
    line_width: float = 1.0,
    vis: VisibilityBuffer | None = None,
    depth_bias: float = DEPTH_BIAS,
) -> MapStack:
    """Assemble the full thresholding-layer input for one view.

    ``segment_sets`` maps LineKind to SegmentSet; missing kinds are
    treated as empty.  Contours and creases share the C channel.
    """
    if vis is None:
        vis = rasterize_visibility(mesh, camera)

    def lines_of(kind: LineKind):
        ss = segment_sets.get(kind)
        if ss is None or len(ss) == 0:
            h, w = camera.height, camera.width
            return np.zeros((h, w)), np.zeros((h, w))
        return rasterize_lines(ss, mesh, camera, line_width, vis, depth_bias)

    S, dk = lines_of(LineKind.SUGGESTIVE)
    R, k1 = lines_of(LineKind.RIDGE)
    V, k2 = lines_of(LineKind.VALLEY)
    A, kt = lines_of(LineKind.APPARENT)
    C1, _ = lines_of(LineKind.CONTOUR)
    C2, _ = lines_of(LineKind.CREASE)
    B, _ = lines_of(LineKind.BOUNDARY)
    return MapStack(
        S=S, R=R, V=V, A=A, C=np.maximum(C1, C2), B=B,
        dk=dk, k1=k1, k2=k2, kt=kt,
        E=render_depth(mesh, camera, vis),
        O=render_shaded_stack(mesh, camera, vis),
    )


def save_float_map(path, image: np.ndarray) -> None:
    """Raw float export in the same flat binary layout as the per-vertex
    field dump (magic, row count, column count, little-endian f32)."""
    from .curvature import dump_vertex_fields

    dump_vertex_fields(path, np.asarray(image))
