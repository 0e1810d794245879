"""Perspective camera model and world-to-pixel projection.

Conventions: right-handed view space with the camera at the origin
looking down -z; pixels have x to the right and y down, with the
center of pixel (row, col) at (col + 0.5, row + 0.5).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Camera:
    """Pinhole perspective camera.

    Parameters
    ----------
    position, target : 3D points
        Eye location and look-at point; must differ.
    up : 3-vector
        Approximate up direction, re-orthogonalized internally.
    fov_degrees : float
        Vertical field of view.
    width, height : int
        Image size in pixels.
    """

    position: tuple
    target: tuple
    up: tuple = (0.0, 1.0, 0.0)
    fov_degrees: float = 40.0
    width: int = 768
    height: int = 768

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=np.float64).reshape(3)
        tgt = np.asarray(self.target, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(pos)) or not np.all(np.isfinite(tgt)):
            raise ValueError("camera position/target must be finite")
        if np.allclose(pos, tgt):
            raise ValueError("camera position must differ from target")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image size must be positive")
        if not 0 < self.fov_degrees < 180:
            raise ValueError("field of view must be in (0, 180) degrees")
        object.__setattr__(self, "position", tuple(float(x) for x in pos))
        object.__setattr__(self, "target", tuple(float(x) for x in tgt))
        object.__setattr__(self, "up", tuple(float(x) for x in np.asarray(self.up, dtype=np.float64).reshape(3)))

    def basis(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Orthonormal (right, up, forward) world-space axes."""
        pos = np.array(self.position)
        forward = np.array(self.target) - pos
        forward /= np.linalg.norm(forward)
        up_hint = np.array(self.up, dtype=np.float64)
        right = np.cross(forward, up_hint)
        if np.linalg.norm(right) < 1e-12:
            # up hint parallel to view direction; pick any perpendicular
            up_hint = np.array((1.0, 0.0, 0.0)) if abs(forward[0]) < 0.9 else np.array((0.0, 1.0, 0.0))
            right = np.cross(forward, up_hint)
        right /= np.linalg.norm(right)
        true_up = np.cross(right, forward)
        return right, true_up, forward

    def to_view(self, points: np.ndarray) -> np.ndarray:
        """World points -> view coordinates (camera at origin, -z forward)."""
        right, true_up, forward = self.basis()
        rel = np.atleast_2d(points) - np.array(self.position)
        return np.stack([rel @ right, rel @ true_up, -(rel @ forward)], axis=-1)

    def focal_lengths(self) -> tuple[float, float]:
        """Pixel-space focal lengths (fx, fy) for this image size."""
        f = 1.0 / np.tan(np.radians(self.fov_degrees) / 2.0)
        fy = f * self.height / 2.0
        fx = f * self.height / 2.0  # square pixels: fx = fy
        return fx, fy

    def project(self, points: np.ndarray):
        """Project world points to pixel coordinates.

        Returns ``(xy, depth)`` where ``xy`` is (n, 2) pixel positions and
        ``depth`` is the positive distance along the view axis.  Points at
        or behind the eye plane get depth <= 0 and non-finite coordinates.
        """
        view = self.to_view(points)
        depth = -view[..., 2]
        fx, fy = self.focal_lengths()
        with np.errstate(divide="ignore", invalid="ignore"):
            x = self.width / 2.0 + fx * view[..., 0] / depth
            y = self.height / 2.0 - fy * view[..., 1] / depth
        xy = np.stack([x, y], axis=-1)
        xy[depth <= 0] = np.nan
        return xy, depth

    def view_ray(self, points: np.ndarray) -> np.ndarray:
        """Unit vectors from surface points toward the camera position."""
        d = np.array(self.position) - np.atleast_2d(points)
        return d / np.linalg.norm(d, axis=-1, keepdims=True)


def orbit_camera(
    target,
    distance: float,
    azimuth_degrees: float,
    elevation_degrees: float,
    up=(0.0, 1.0, 0.0),
    fov_degrees: float = 40.0,
    width: int = 768,
    height: int = 768,
) -> Camera:
    """Camera on a sphere around ``target``.

    Azimuth is measured in the ground plane (the plane perpendicular to
    ``up``), elevation is the angle above that plane.
    """
    up = np.asarray(up, dtype=np.float64)
    up = up / np.linalg.norm(up)
    # Ground-plane basis: two unit vectors perpendicular to up.
    seed = np.array((1.0, 0.0, 0.0)) if abs(up[0]) < 0.9 else np.array((0.0, 0.0, 1.0))
    g1 = np.cross(up, seed)
    g1 /= np.linalg.norm(g1)
    g2 = np.cross(up, g1)
    az = np.radians(azimuth_degrees)
    el = np.radians(elevation_degrees)
    direction = np.cos(el) * (np.cos(az) * g1 + np.sin(az) * g2) + np.sin(el) * up
    position = np.asarray(target, dtype=np.float64) + distance * direction
    return Camera(
        position=tuple(position),
        target=tuple(np.asarray(target, dtype=np.float64)),
        up=tuple(up),
        fov_degrees=fov_degrees,
        width=width,
        height=height,
    )
