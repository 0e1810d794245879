"""Differentiable thresholding of line maps into a drawing.

Each parametric line kind keeps a pixel only to the degree its filter
scalar clears the kind's threshold: intensity = mask * max(1 - t/d, 0).
The drawing is the per-pixel maximum of the filtered maps plus the
always-on contour mask and the optional boundary mask, optionally merged
with an externally supplied line image.  Because intensity is piecewise
smooth in the thresholds, the layer exposes exact (sub)gradients for
threshold optimization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .raster import Drawing, MapStack

# Composition order; ties in the per-pixel max resolve to the earliest.
KIND_ORDER = ("S", "R", "V", "A", "C", "B")


@dataclass(frozen=True)
class ThresholdSet:
    """Thresholds for the four parametric line kinds.

    ``np.inf`` switches a kind off entirely; ``include_boundaries``
    toggles the boundary mask in the composition.
    """

    t_S: float = 0.0
    t_R: float = 0.0
    t_V: float = 0.0
    t_A: float = 0.0
    include_boundaries: bool = True

    def __post_init__(self):
        for name in ("t_S", "t_R", "t_V", "t_A"):
            v = getattr(self, name)
            if np.isnan(v) or v < 0:
                raise ValueError(f"{name} must be >= 0")
            object.__setattr__(self, name, float(v))

    def as_array(self) -> np.ndarray:
        return np.array([self.t_S, self.t_R, self.t_V, self.t_A])

    def with_values(self, values) -> "ThresholdSet":
        t = np.asarray(values, dtype=np.float64).reshape(4)
        return ThresholdSet(
            t_S=t[0], t_R=t[1], t_V=t[2], t_A=t[3],
            include_boundaries=self.include_boundaries,
        )


@dataclass(frozen=True)
class FilterGradient:
    """Gradient of a scalar objective with respect to the thresholds."""

    t_S: float
    t_R: float
    t_V: float
    t_A: float

    def __post_init__(self):
        for name in ("t_S", "t_R", "t_V", "t_A"):
            v = float(getattr(self, name))
            if not np.isfinite(v):
                raise ValueError(f"gradient {name} is not finite")
            object.__setattr__(self, name, v)

    def as_array(self) -> np.ndarray:
        return np.array([self.t_S, self.t_R, self.t_V, self.t_A])


def _filtered(mask: np.ndarray, scalar: np.ndarray, t: float) -> np.ndarray:
    """mask * max(1 - t/scalar, 0), with zero-scalar pixels forced to 0."""
    out = np.zeros_like(scalar)
    active = (mask > 0) & (scalar > 0)
    if t == 0.0:
        out[active] = mask[active]
    else:
        out[active] = mask[active] * np.maximum(1.0 - t / scalar[active], 0.0)
    return out


def filter_sc(maps: MapStack, t_S: float) -> np.ndarray:
    """Suggestive-contour intensity after thresholding the derivative map."""
    return _filtered(maps.S, maps.dk, t_S)


def filter_rv(maps: MapStack, t_R: float, t_V: float):
    """(ridge, valley) intensities after thresholding their curvature maps."""
    return _filtered(maps.R, maps.k1, t_R), _filtered(maps.V, maps.k2, t_V)


def filter_ar(maps: MapStack, t_A: float) -> np.ndarray:
    """Apparent-ridge intensity after thresholding the view curvature map."""
    return _filtered(maps.A, maps.kt, t_A)


def _component_stack(maps: MapStack, thresholds: ThresholdSet) -> np.ndarray:
    i_r, i_v = filter_rv(maps, thresholds.t_R, thresholds.t_V)
    i_b = maps.B if thresholds.include_boundaries else np.zeros_like(maps.B)
    return np.stack(
        [
            filter_sc(maps, thresholds.t_S),
            i_r,
            i_v,
            filter_ar(maps, thresholds.t_A),
            maps.C,
            i_b,
        ],
        axis=0,
    )


def compose(maps: MapStack, thresholds: ThresholdSet) -> np.ndarray:
    """Per-pixel maximum of the filtered maps; contours always included,
    boundaries only when enabled."""
    return _component_stack(maps, thresholds).max(axis=0)


def merge_external(i_g: np.ndarray, external: np.ndarray | None = None) -> Drawing:
    """Merge the geometric drawing with an optional external line image by
    per-pixel maximum."""
    i_g = np.asarray(i_g, dtype=np.float64)
    if external is None:
        return Drawing(image=i_g)
    ext = np.asarray(external, dtype=np.float64)
    if ext.shape != i_g.shape:
        raise ValueError("external image dimensions do not match")
    return Drawing(image=np.maximum(i_g, ext))


def render_drawing(
    maps: MapStack, thresholds: ThresholdSet, external: np.ndarray | None = None
) -> Drawing:
    """compose + merge_external in one call."""
    return merge_external(compose(maps, thresholds), external)


def grad_thresholds(
    maps: MapStack,
    thresholds: ThresholdSet,
    upstream: np.ndarray,
    external: np.ndarray | None = None,
) -> FilterGradient:
    """Backpropagate a pixel gradient image onto the four thresholds.

    A pixel contributes to t_X only when kind X strictly attains the
    composed maximum there (ties resolve to the earliest kind in
    S, R, V, A, C, B order), the pixel sits strictly inside the filter
    ramp (0 < 1 - t/d < 1), and, when an external image is merged, the
    geometric branch wins the final maximum (ties go to geometry).
    """
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != maps.S.shape:
        raise ValueError("upstream image dimensions do not match")
    stack = _component_stack(maps, thresholds)
    i_g = stack.max(axis=0)
    winner = stack.argmax(axis=0)

    passthrough = np.ones_like(i_g, dtype=bool)
    if external is not None:
        ext = np.asarray(external, dtype=np.float64)
        if ext.shape != i_g.shape:
            raise ValueError("external image dimensions do not match")
        passthrough = i_g >= ext

    grads = {}
    parametric = (
        ("t_S", 0, maps.S, maps.dk, thresholds.t_S),
        ("t_R", 1, maps.R, maps.k1, thresholds.t_R),
        ("t_V", 2, maps.V, maps.k2, thresholds.t_V),
        ("t_A", 3, maps.A, maps.kt, thresholds.t_A),
    )
    for name, idx, mask, scalar, t in parametric:
        if not np.isfinite(t) or t <= 0.0:
            grads[name] = 0.0
            continue
        active = (mask > 0) & (scalar > 0) & (winner == idx) & passthrough
        if active.any():
            ramp = 1.0 - t / scalar[active]
            strict = (ramp > 0.0) & (ramp < 1.0)
            sel = np.zeros_like(active)
            sel[active] = strict
            g = -(upstream[sel] / scalar[sel]).sum()
        else:
            g = 0.0
        grads[name] = float(g)
    return FilterGradient(**grads)
