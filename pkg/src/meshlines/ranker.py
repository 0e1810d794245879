"""Drawing-quality scoring.

Two scorers share one interface: a reference-matching scorer (negative
mean squared distance to a target drawing, handy for planted-optimum
tests) and a small trainable convolutional scorer over the 8-channel
input (drawing, depth, six shaded images).  Both report the gradient of
the score with respect to the drawing so threshold optimization can
chain through the filter layer.  Training uses a pairwise hinge ranking
loss under Adam.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .raster import Drawing

PARAM_FIELDS = ("w1", "b1", "w2", "b2", "w3", "b3", "w_out", "b_out")
CONV_CHANNELS = (8, 16, 32, 64)
CHECKPOINT_MAGIC = "meshlines-scorer-v1"


@dataclass(frozen=True)
class ScorerInput:
    """One scoring instance: drawing + depth + shaded stack, 8 channels."""

    drawing: Drawing
    depth: np.ndarray
    shaded: np.ndarray

    def __post_init__(self):
        h, w = self.drawing.image.shape
        if self.depth.shape != (h, w):
            raise ValueError("depth image dimensions do not match drawing")
        if self.shaded.shape != (6, h, w):
            raise ValueError("shaded stack must hold 6 images matching drawing")

    def channels(self) -> np.ndarray:
        return np.concatenate(
            [self.drawing.image[None], self.depth[None], self.shaded], axis=0
        )


class ReferenceScorer:
    """Negative mean squared pixel distance to a fixed target drawing.

    Maximal (zero) exactly when the drawing equals the target; the
    gradient is -2 (I - T) / N.
    """

    def __init__(self, target: Drawing):
        self.target = target

    def score(self, inp: ScorerInput) -> float:
        diff = inp.drawing.image - self.target.image
        if diff.shape != self.target.image.shape:
            raise ValueError("drawing dimensions do not match target")
        return float(-np.mean(diff * diff))

    def grad_drawing(self, inp: ScorerInput) -> np.ndarray:
        diff = inp.drawing.image - self.target.image
        return -2.0 * diff / diff.size


@dataclass(frozen=True)
class MiniScorerParams:
    """Weights of the fixed-topology convolutional scorer.

    8 input channels, three 3x3 stride-2 conv blocks (16, 32, 64
    channels, ReLU), global average pool, then a linear head to a single
    scalar.  Inputs are area-downsampled by `downsample_factor` before
    the first conv.
    """

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray
    w_out: np.ndarray
    b_out: np.ndarray
    downsample_factor: int = 4
    seed: int = 0
    epochs_trained: int = 0

    def __post_init__(self):
        shapes = {
            "w1": (16, 8, 3, 3), "b1": (16,),
            "w2": (32, 16, 3, 3), "b2": (32,),
            "w3": (64, 32, 3, 3), "b3": (64,),
            "w_out": (64,), "b_out": (),
        }
        for name, want in shapes.items():
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.ndim > 0:
                arr = np.ascontiguousarray(arr)
            if arr.shape != want:
                raise ValueError(f"{name} must have shape {want}, got {arr.shape}")
            if not np.isfinite(arr).all():
                raise ValueError(f"{name} contains non-finite values")
            object.__setattr__(self, name, arr)
        if self.downsample_factor < 1:
            raise ValueError("downsample_factor must be >= 1")

    def arrays(self) -> dict:
        return {name: getattr(self, name) for name in PARAM_FIELDS}


def init_mini_params(seed: int = 0, downsample_factor: int = 4) -> MiniScorerParams:
    """He-initialized weights, zero biases; fully determined by the seed."""
    rng = np.random.default_rng(seed)

    def conv(cout, cin):
        std = np.sqrt(2.0 / (cin * 9))
        return rng.normal(0.0, std, (cout, cin, 3, 3))

    return MiniScorerParams(
        w1=conv(16, 8), b1=np.zeros(16),
        w2=conv(32, 16), b2=np.zeros(32),
        w3=conv(64, 32), b3=np.zeros(64),
        w_out=rng.normal(0.0, np.sqrt(1.0 / 64), 64), b_out=np.zeros(()),
        downsample_factor=downsample_factor, seed=seed,
    )


def _downsample_area(x: np.ndarray, factor: int) -> np.ndarray:
    if factor == 1:
        return x
    c, h, w = x.shape
    h2, w2 = h - h % factor, w - w % factor
    x = x[:, :h2, :w2]
    return x.reshape(c, h2 // factor, factor, w2 // factor, factor).mean(axis=(2, 4))


def _conv_cols(x: np.ndarray):
    """3x3 stride-2 pad-1 patches of x as a (Cin, 3, 3, oh, ow) tensor."""
    c, h, w = x.shape
    oh, ow = (h + 1) // 2, (w + 1) // 2
    padded = np.zeros((c, h + 2, w + 2))
    padded[:, 1:-1, 1:-1] = x
    cols = np.empty((c, 3, 3, oh, ow))
    for di in range(3):
        for dj in range(3):
            cols[:, di, dj] = padded[:, di:di + 2 * oh:2, dj:dj + 2 * ow:2]
    return cols, (h, w)


def _conv_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    cols, in_shape = _conv_cols(x)
    cout = w.shape[0]
    cin9 = w.shape[1] * 9
    oh, ow = cols.shape[3], cols.shape[4]
    out = w.reshape(cout, cin9) @ cols.reshape(cin9, oh * ow)
    out = out.reshape(cout, oh, ow) + b[:, None, None]
    return out, (cols, in_shape)


def _conv_backward(dout: np.ndarray, w: np.ndarray, cache):
    cols, (h, wd) = cache
    cin, _, _, oh, ow = cols.shape
    cout = w.shape[0]
    dflat = dout.reshape(cout, oh * ow)
    dw = (dflat @ cols.reshape(cin * 9, oh * ow).T).reshape(w.shape)
    db = dout.sum(axis=(1, 2))
    dcols = (w.reshape(cout, cin * 9).T @ dflat).reshape(cin, 3, 3, oh, ow)
    dpad = np.zeros((cin, h + 2, wd + 2))
    for di in range(3):
        for dj in range(3):
            dpad[:, di:di + 2 * oh:2, dj:dj + 2 * ow:2] += dcols[:, di, dj]
    return dpad[:, 1:-1, 1:-1], dw, db


class MiniScorer:
    """Trainable convolutional scorer with reverse-mode gradients."""

    def __init__(self, params: MiniScorerParams):
        self.params = params

    def _forward(self, channels: np.ndarray):
        p = self.params
        x0 = _downsample_area(channels, p.downsample_factor)
        z1, c1 = _conv_forward(x0, p.w1, p.b1)
        a1 = np.maximum(z1, 0.0)
        z2, c2 = _conv_forward(a1, p.w2, p.b2)
        a2 = np.maximum(z2, 0.0)
        z3, c3 = _conv_forward(a2, p.w3, p.b3)
        a3 = np.maximum(z3, 0.0)
        gap = a3.mean(axis=(1, 2))
        score = float(p.w_out @ gap + p.b_out)
        return score, (x0, z1, c1, z2, c2, z3, c3, a3, gap, channels.shape)

    def _backward(self, cache, upstream: float = 1.0):
        """Gradients of upstream * score with respect to params and the
        drawing channel."""
        p = self.params
        x0, z1, c1, z2, c2, z3, c3, a3, gap, in_shape = cache
        grads = {}
        grads["b_out"] = np.asarray(float(upstream))
        grads["w_out"] = upstream * gap
        da3 = np.broadcast_to(
            (upstream * p.w_out / (a3.shape[1] * a3.shape[2]))[:, None, None],
            a3.shape,
        )
        dz3 = np.where(z3 > 0, da3, 0.0)
        da2, grads["w3"], grads["b3"] = _conv_backward(dz3, p.w3, c3)
        dz2 = np.where(z2 > 0, da2, 0.0)
        da1, grads["w2"], grads["b2"] = _conv_backward(dz2, p.w2, c2)
        dz1 = np.where(z1 > 0, da1, 0.0)
        dx0, grads["w1"], grads["b1"] = _conv_backward(dz1, p.w1, c1)
        # undo the area average: each input pixel carries 1/f^2 of its cell
        f = p.downsample_factor
        c, h, w = in_shape
        dfull = np.zeros(in_shape)
        if f == 1:
            dfull = dx0
        else:
            up = np.repeat(np.repeat(dx0 / (f * f), f, axis=1), f, axis=2)
            dfull[:, :up.shape[1], :up.shape[2]] = up
        return grads, dfull[0]

    def score(self, inp: ScorerInput) -> float:
        return self._forward(inp.channels())[0]

    def grad_drawing(self, inp: ScorerInput) -> np.ndarray:
        _, cache = self._forward(inp.channels())
        return self._backward(cache)[1]


def score(scorer, inp: ScorerInput) -> float:
    return scorer.score(inp)


def score_grad_wrt_drawing(scorer, inp: ScorerInput) -> np.ndarray:
    return scorer.grad_drawing(inp)


@dataclass(frozen=True)
class PreferencePair:
    """A human preference: `best` should outscore `other`."""

    best: ScorerInput
    other: ScorerInput

    def __post_init__(self):
        if self.best.drawing.image.shape != self.other.drawing.image.shape:
            raise ValueError("pair members must share dimensions")


def _zero_like_params(params: MiniScorerParams) -> dict:
    return {k: np.zeros_like(v) for k, v in params.arrays().items()}


def hinge_rank_loss(scorer, pairs, margin: float = 1.0):
    """Sum of max(margin - f(best) + f(other), 0) over pairs.

    Returns (loss, parameter gradients); gradients flow only through
    pairs that violate the margin.  Scorers without parameters get an
    empty gradient dict.
    """
    if margin <= 0:
        raise ValueError("margin must be positive")
    pairs = list(pairs)
    if not pairs:
        raise ValueError("at least one preference pair is required")
    trainable = isinstance(scorer, MiniScorer)
    grads = _zero_like_params(scorer.params) if trainable else {}
    loss = 0.0
    for pair in pairs:
        if trainable:
            fb, cache_b = scorer._forward(pair.best.channels())
            fo, cache_o = scorer._forward(pair.other.channels())
        else:
            fb, fo = scorer.score(pair.best), scorer.score(pair.other)
        term = margin - fb + fo
        if term > 0:
            loss += term
            if trainable:
                gb, _ = scorer._backward(cache_b, upstream=-1.0)
                go, _ = scorer._backward(cache_o, upstream=1.0)
                for k in grads:
                    grads[k] = grads[k] + gb[k] + go[k]
    return loss, grads


def pixel_cross_entropy(predicted: Drawing, target: Drawing):
    """Binary cross entropy summed over pixels, with the prediction
    clamped away from {0, 1} by 1e-7."""
    p = predicted.image
    t = target.image
    if p.shape != t.shape:
        raise ValueError("drawing dimensions do not match")
    p = np.clip(p, 1e-7, 1.0 - 1e-7)
    loss = float(-np.sum(t * np.log(p) + (1.0 - t) * np.log(1.0 - p)))
    grad = (p - t) / (p * (1.0 - p))
    return loss, grad


def train_mini_scorer(
    pairs,
    epochs: int,
    lr: float = 2e-5,
    batch: int = 32,
    seed: int = 0,
    margin: float = 1.0,
    init: MiniScorerParams | None = None,
):
    """Adam on the hinge ranking loss.

    Batches are taken sequentially in dataset order (no shuffling), so
    runs are reproducible and concatenating a dataset with itself walks
    the same parameter trajectory as doubling the epoch count.  Returns
    (params, per-epoch loss trace).
    """
    pairs = list(pairs)
    if not pairs:
        raise ValueError("at least one preference pair is required")
    if batch < 1:
        raise ValueError("batch must be >= 1")
    params = init if init is not None else init_mini_params(seed=seed)
    if epochs == 0:
        return params, []

    m = _zero_like_params(params)
    v = _zero_like_params(params)
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0
    trace = []
    for _ in range(epochs):
        epoch_loss = 0.0
        scorer = MiniScorer(params)
        for start in range(0, len(pairs), batch):
            chunk = pairs[start:start + batch]
            scorer.params = params
            loss, grads = hinge_rank_loss(scorer, chunk, margin=margin)
            epoch_loss += loss
            step += 1
            new = {}
            for k, g in grads.items():
                m[k] = beta1 * m[k] + (1 - beta1) * g
                v[k] = beta2 * v[k] + (1 - beta2) * g * g
                mhat = m[k] / (1 - beta1 ** step)
                vhat = v[k] / (1 - beta2 ** step)
                new[k] = params.arrays()[k] - lr * mhat / (np.sqrt(vhat) + eps)
            params = replace(params, **new)
        trace.append(epoch_loss)
    params = replace(params, epochs_trained=params.epochs_trained + epochs)
    return params, trace


def save_checkpoint(params: MiniScorerParams, path) -> None:
    """JSON header line + little-endian float32 flat parameter payload."""
    header = {
        "format": CHECKPOINT_MAGIC,
        "fields": list(PARAM_FIELDS),
        "shapes": {k: list(v.shape) for k, v in params.arrays().items()},
        "downsample_factor": params.downsample_factor,
        "seed": params.seed,
        "epochs_trained": params.epochs_trained,
    }
    flat = np.concatenate([params.arrays()[k].ravel() for k in PARAM_FIELDS])
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8") + b"\n")
        fh.write(struct.pack("<I", flat.size))
        fh.write(flat.astype("<f4").tobytes())


def load_checkpoint(path) -> MiniScorerParams:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        if header.get("format") != CHECKPOINT_MAGIC:
            raise ValueError("not a scorer checkpoint")
        (count,) = struct.unpack("<I", fh.read(4))
        flat = np.frombuffer(fh.read(count * 4), dtype="<f4").astype(np.float64)
    arrays = {}
    offset = 0
    for name in header["fields"]:
        shape = tuple(header["shapes"][name])
        size = int(np.prod(shape)) if shape else 1
        arrays[name] = flat[offset:offset + size].reshape(shape)
        offset += size
    return MiniScorerParams(
        downsample_factor=header["downsample_factor"],
        seed=header["seed"],
        epochs_trained=header["epochs_trained"],
        **arrays,
    )
