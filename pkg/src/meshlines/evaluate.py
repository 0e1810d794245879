"""Line-drawing comparison metrics.

Drawings are binarized by thresholding plus morphological thinning, then
compared with nearness-based precision/recall/F1, a soft IoU, and the
symmetric Chamfer distance.  Silhouette pixels can be removed before
scoring, and a set of drawings can be reduced to its most mutually
consistent member.  All distances are exact Euclidean via distance
transforms; all functions are pure.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import convolve, distance_transform_edt
from skimage.morphology import skeletonize

DEFAULT_BINARIZE_THRESHOLD = 0.5
# nearness radius as a fraction of image height when not given explicitly
NEARNESS_HEIGHT_FRACTION = 0.01

PROTOCOL_NOTE = "both drawings thinned before matching"


def _thin(pixels: np.ndarray) -> np.ndarray:
    """Zhang-Suen thinning to 1-px-wide strokes."""
    return skeletonize(np.array(pixels, dtype=bool), method="zhang")


@dataclass(frozen=True)
class BinaryDrawing:
    """A thinned drawn-pixel set with its nearness radius."""

    pixels: np.ndarray
    nearness_radius: float = 0.0

    def __post_init__(self):
        px = np.ascontiguousarray(np.asarray(self.pixels, dtype=bool))
        if px.ndim != 2:
            raise ValueError("pixels must be a 2D image")
        full = np.ones((3, 3), dtype=int)
        if px.any():
            neighborhood = convolve(px.astype(int), full, mode="constant")
            if ((neighborhood == 9) & px).any():
                raise ValueError("drawing is not thinned: solid 3x3 block present")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)
        radius = float(self.nearness_radius)
        if radius <= 0.0:
            radius = NEARNESS_HEIGHT_FRACTION * px.shape[0]
        if radius <= 0.0:
            raise ValueError("nearness radius must be positive")
        object.__setattr__(self, "nearness_radius", radius)

    @property
    def count(self) -> int:
        return int(self.pixels.sum())


@dataclass(frozen=True)
class EvalReport:
    precision: float
    recall: float
    f1: float
    iou: float
    chamfer: float
    count_synthetic: int
    count_human: int
    flags: tuple = ()

    def __post_init__(self):
        for name in ("precision", "recall", "f1", "iou"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1]")
        if not np.isfinite(self.chamfer) or self.chamfer < 0:
            raise ValueError("chamfer must be finite and non-negative")


def binarize(drawing, threshold: float = DEFAULT_BINARIZE_THRESHOLD,
             nearness_radius: float = 0.0) -> BinaryDrawing:
    """Threshold a drawing and thin the result to 1-px strokes."""
    if not (0.0 < threshold < 1.0):
        raise ValueError("threshold must lie in (0, 1)")
    image = drawing.image if hasattr(drawing, "image") else np.asarray(drawing)
    return BinaryDrawing(
        pixels=_thin(image >= threshold), nearness_radius=nearness_radius
    )


def _dist_to(drawing: BinaryDrawing) -> np.ndarray:
    """Per-pixel Euclidean distance to the nearest drawn pixel."""
    if not drawing.pixels.any():
        return np.full(drawing.pixels.shape, np.inf)
    return distance_transform_edt(~drawing.pixels)


def _radius(a: BinaryDrawing, b: BinaryDrawing, radius) -> float:
    if radius is not None:
        if radius <= 0:
            raise ValueError("radius must be positive")
        return float(radius)
    return a.nearness_radius


def _check_dims(a: BinaryDrawing, b: BinaryDrawing):
    if a.pixels.shape != b.pixels.shape:
        raise ValueError("drawings must share dimensions")


def precision_recall(synthetic: BinaryDrawing, human: BinaryDrawing,
                     radius: float | None = None):
    """Fraction of each side's drawn pixels lying within the nearness
    radius of the other side.  An empty side scores 0."""
    _check_dims(synthetic, human)
    r = _radius(synthetic, human, radius)
    p = 0.0
    if synthetic.count:
        p = float((_dist_to(human)[synthetic.pixels] <= r).mean())
    rec = 0.0
    if human.count:
        rec = float((_dist_to(synthetic)[human.pixels] <= r).mean())
    return p, rec


def iou(synthetic: BinaryDrawing, human: BinaryDrawing,
        radius: float | None = None) -> float:
    """Nearness-matched intersection over union.

    matched_s / matched_h count each side's pixels within the radius of
    the other; intersection = (matched_s + matched_h) / 2 and
    union = count_s + count_h - min(matched_s, matched_h).
    """
    _check_dims(synthetic, human)
    if synthetic.count == 0 and human.count == 0:
        return 1.0
    if synthetic.count == 0 or human.count == 0:
        return 0.0
    r = _radius(synthetic, human, radius)
    matched_s = int((_dist_to(human)[synthetic.pixels] <= r).sum())
    matched_h = int((_dist_to(synthetic)[human.pixels] <= r).sum())
    union = synthetic.count + human.count - min(matched_s, matched_h)
    return 0.5 * (matched_s + matched_h) / union


def chamfer(synthetic: BinaryDrawing, human: BinaryDrawing) -> float:
    """Symmetric mean nearest-pixel distance, in pixels."""
    _check_dims(synthetic, human)
    if synthetic.count == 0 or human.count == 0:
        raise ValueError("undefined Chamfer: a drawing is empty")
    d_sh = _dist_to(human)[synthetic.pixels].mean()
    d_hs = _dist_to(synthetic)[human.pixels].mean()
    return 0.5 * float(d_sh + d_hs)


def remove_silhouettes(drawing: BinaryDrawing, contour_mask: np.ndarray,
                       radius: float | None = None) -> BinaryDrawing:
    """Drop drawn pixels within the radius of any contour-mask pixel."""
    mask = np.asarray(contour_mask) > 0
    if mask.shape != drawing.pixels.shape:
        raise ValueError("contour mask dimensions do not match")
    r = radius if radius is not None else drawing.nearness_radius
    if not mask.any():
        return drawing
    dist = distance_transform_edt(~mask)
    return BinaryDrawing(
        pixels=drawing.pixels & (dist > r),
        nearness_radius=drawing.nearness_radius,
    )


def most_consistent(drawings) -> int:
    """Index of the drawing with the least mean Chamfer distance to the
    rest; ties go to the lowest index."""
    drawings = list(drawings)
    if len(drawings) < 2:
        raise ValueError("need at least two drawings")
    n = len(drawings)
    table = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            table[i, j] = table[j, i] = chamfer(drawings[i], drawings[j])
    means = table.sum(axis=1) / (n - 1)
    return int(np.argmin(means))


def evaluate_pair(synthetic: BinaryDrawing, human: BinaryDrawing,
                  radius: float | None = None) -> EvalReport:
    """Full metric report for one drawing pair.

    Undefined quantities (empty sides) come back as 0 for P/R and
    Chamfer, 1 for both-empty IoU, with a flag naming the condition.
    """
    _check_dims(synthetic, human)
    flags = []
    if synthetic.count == 0:
        flags.append("empty synthetic")
    if human.count == 0:
        flags.append("empty human")
    p, r = precision_recall(synthetic, human, radius)
    f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
    j = iou(synthetic, human, radius)
    if synthetic.count and human.count:
        cd = chamfer(synthetic, human)
    else:
        cd = 0.0
        flags.append("undefined chamfer")
    return EvalReport(
        precision=p, recall=r, f1=f1, iou=j, chamfer=cd,
        count_synthetic=synthetic.count, count_human=human.count,
        flags=tuple(flags),
    )


def write_csv(rows, path) -> None:
    """rows: iterable of (label, EvalReport).  IoU/F1/P/R in percent,
    Chamfer in pixels; a trailing mean row when more than one."""
    rows = list(rows)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# {PROTOCOL_NOTE}\n")
        writer = csv.writer(fh)
        writer.writerow(["label", "IoU", "CD", "F1", "P", "R", "flags"])
        acc = np.zeros(5)
        for label, rep in rows:
            vals = [rep.iou * 100, rep.chamfer, rep.f1 * 100,
                    rep.precision * 100, rep.recall * 100]
            acc += vals
            writer.writerow([label] + [f"{v:.2f}" for v in vals]
                            + [";".join(rep.flags)])
        if len(rows) > 1:
            writer.writerow(["mean"] + [f"{v:.2f}" for v in acc / len(rows)] + [""])
