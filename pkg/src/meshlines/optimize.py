"""Threshold selection by multi-start projected L-BFGS.

The four filter thresholds are chosen per model and view by maximizing a
scorer over the composed drawing.  Each start from a small init grid
runs limited-memory BFGS on the negated score with every iterate
projected back onto t >= 0; the best start wins.  A separate binary
check decides whether boundary lines join the final drawing.
"""

from __future__ import annotations

import json
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from itertools import product

import numpy as np
from scipy.optimize import line_search

from .diff_filter import ThresholdSet, grad_thresholds, render_drawing
from .raster import Drawing, MapStack
from .ranker import ScorerInput

DEFAULT_INIT_AXIS = (0.0, 0.05, 0.2, 0.5)
FAST_INIT_AXIS = (0.0, 0.2)


@dataclass(frozen=True)
class OptimizeConfig:
    init_axis: tuple = DEFAULT_INIT_AXIS
    max_iterations: int = 50
    memory: int = 10
    grad_tol: float = 1e-6
    threads: int | None = None
    include_boundaries: bool = True

    @staticmethod
    def fast(**overrides) -> "OptimizeConfig":
        return OptimizeConfig(init_axis=FAST_INIT_AXIS, **overrides)

    def starts(self):
        return [np.array(t) for t in product(self.init_axis, repeat=4)]


@dataclass(frozen=True)
class StartTrace:
    initial: tuple
    final: tuple
    final_score: float
    iterations: int


@dataclass(frozen=True)
class OptimizeResult:
    best: ThresholdSet
    best_score: float
    starts: tuple
    wall_time: float
    flags: tuple = ()

    def __post_init__(self):
        if self.starts and self.best_score != max(s.final_score for s in self.starts):
            raise ValueError("best score must be the maximum over starts")


def _project(t: np.ndarray) -> np.ndarray:
    return np.maximum(t, 0.0)


def _objective(maps: MapStack, scorer, external, base: ThresholdSet):
    """Score and its threshold gradient as minimization callables."""

    def drawing_at(t: np.ndarray) -> Drawing:
        return render_drawing(maps, base.with_values(_project(t)), external)

    def f(t: np.ndarray) -> float:
        inp = ScorerInput(drawing_at(t), maps.E, maps.O)
        return -scorer.score(inp)

    def g(t: np.ndarray) -> np.ndarray:
        ts = base.with_values(_project(t))
        inp = ScorerInput(render_drawing(maps, ts, external), maps.E, maps.O)
        upstream = scorer.grad_drawing(inp)
        return -grad_thresholds(maps, ts, upstream, external).as_array()

    return f, g


def _two_loop(grad, s_hist, y_hist):
    q = grad.copy()
    alphas = []
    rhos = [1.0 / float(y @ s) for s, y in zip(s_hist, y_hist)]
    for s, y, rho in zip(reversed(s_hist), reversed(y_hist), reversed(rhos)):
        a = rho * float(s @ q)
        alphas.append(a)
        q -= a * y
    if s_hist:
        s, y = s_hist[-1], y_hist[-1]
        q *= float(s @ y) / float(y @ y)
    for (s, y, rho), a in zip(zip(s_hist, y_hist, rhos), reversed(alphas)):
        b = rho * float(y @ q)
        q += (a - b) * s
    return q


def _projected_grad_norm(t: np.ndarray, grad: np.ndarray) -> float:
    pg = np.where(t > 0.0, grad, np.minimum(grad, 0.0))
    return float(np.abs(pg).max())


def _run_start(f, g, t0: np.ndarray, config: OptimizeConfig) -> StartTrace:
    t = _project(t0.astype(np.float64))
    fval = f(t)
    grad = g(t)
    s_hist, y_hist = [], []
    iterations = 0
    for _ in range(config.max_iterations):
        if _projected_grad_norm(t, grad) <= config.grad_tol:
            break
        d = -_two_loop(grad, s_hist, y_hist)
        if float(grad @ d) >= 0.0:
            s_hist, y_hist = [], []
            d = -grad
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            alpha = line_search(
                lambda x: f(_project(x)), lambda x: g(_project(x)),
                t, d, gfk=grad, old_fval=fval,
            )[0]
        if alpha is None:
            alpha = 1.0
        # enforce monotone decrease on the projected path
        t_new = _project(t + alpha * d)
        f_new = f(t_new)
        shrink = 0
        while f_new > fval - 1e-12 * max(1.0, abs(fval)) and shrink < 30:
            alpha *= 0.5
            t_new = _project(t + alpha * d)
            f_new = f(t_new)
            shrink += 1
        if f_new > fval - 1e-15:
            break
        g_new = g(t_new)
        s, y = t_new - t, g_new - grad
        if float(s @ y) > 1e-10 * np.linalg.norm(s) * np.linalg.norm(y):
            s_hist.append(s)
            y_hist.append(y)
            if len(s_hist) > config.memory:
                s_hist.pop(0)
                y_hist.pop(0)
        t, fval, grad = t_new, f_new, g_new
        iterations += 1
    return StartTrace(
        initial=tuple(_project(t0)), final=tuple(t),
        final_score=-fval, iterations=iterations,
    )


def optimize_thresholds(
    maps: MapStack,
    scorer,
    external: np.ndarray | None = None,
    config: OptimizeConfig | None = None,
) -> OptimizeResult:
    """Maximize the scorer over the four thresholds from every grid start.

    All-empty line masks short-circuit to t = 0 with a flag.  A scorer
    with no usable gradient anywhere leaves every start at its initial
    point and the result is flagged as a flat objective.
    """
    config = config or OptimizeConfig()
    began = time.perf_counter()
    base = ThresholdSet(include_boundaries=config.include_boundaries)
    f, g = _objective(maps, scorer, external, base)

    masks_empty = not any(
        m.any() for m in (maps.S, maps.R, maps.V, maps.A, maps.C, maps.B)
    )
    if masks_empty:
        zero = np.zeros(4)
        trace = StartTrace(tuple(zero), tuple(zero), -f(zero), 0)
        return OptimizeResult(
            best=base.with_values(zero), best_score=trace.final_score,
            starts=(trace,), wall_time=time.perf_counter() - began,
            flags=("empty maps",),
        )

    starts = config.starts()
    workers = config.threads or 1
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            traces = list(pool.map(lambda t0: _run_start(f, g, t0, config), starts))
    else:
        traces = [_run_start(f, g, t0, config) for t0 in starts]

    best_idx = 0
    for i, tr in enumerate(traces):
        if tr.final_score > traces[best_idx].final_score:
            best_idx = i
    flags = []
    if all(tr.iterations == 0 for tr in traces) and len(
        {tr.final_score for tr in traces}
    ) == 1:
        flags.append("flat objective")
    best = traces[best_idx]
    return OptimizeResult(
        best=base.with_values(np.array(best.final)),
        best_score=best.final_score,
        starts=tuple(traces),
        wall_time=time.perf_counter() - began,
        flags=tuple(flags),
    )


def boundary_check(
    maps: MapStack, scorer, external, t_opt: ThresholdSet
) -> bool:
    """True iff the score is strictly higher with boundary lines on."""

    def score_with(flag: bool) -> float:
        ts = replace(t_opt, include_boundaries=flag)
        return scorer.score(ScorerInput(render_drawing(maps, ts, external), maps.E, maps.O))

    return score_with(True) > score_with(False)


def final_drawing(
    maps: MapStack,
    t_opt: ThresholdSet,
    include_boundaries: bool,
    external: np.ndarray | None = None,
) -> Drawing:
    ts = replace(t_opt, include_boundaries=include_boundaries)
    return render_drawing(maps, ts, external)


def grid_search_baseline(
    maps: MapStack,
    objective,
    grid,
    external: np.ndarray | None = None,
) -> ThresholdSet:
    """Exhaustive argmin of objective(drawing) over explicit ThresholdSets.

    Ties prefer the lexicographically smallest threshold vector.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("grid must be nonempty")
    best_ts = None
    best_val = None
    best_key = None
    for ts in grid:
        val = float(objective(render_drawing(maps, ts, external)))
        key = (ts.t_S, ts.t_R, ts.t_V, ts.t_A)
        if best_val is None or val < best_val or (val == best_val and key < best_key):
            best_ts, best_val, best_key = ts, val, key
    return best_ts


def threshold_grid(axis, include_boundaries: bool = True):
    """Lexicographic product grid of one axis over all four thresholds."""
    return [
        ThresholdSet(*combo, include_boundaries=include_boundaries)
        for combo in product(axis, repeat=4)
    ]


def export_trace(result: OptimizeResult, path) -> None:
    """One JSON record per start, plus a summary line."""
    with open(path, "w", encoding="utf-8") as fh:
        for i, tr in enumerate(result.starts):
            fh.write(json.dumps({
                "start": i,
                "initial": list(tr.initial),
                "final": list(tr.final),
                "score": tr.final_score,
                "iterations": tr.iterations,
            }) + "\n")
        fh.write(json.dumps({
            "best": list(result.best.as_array()),
            "best_score": result.best_score,
            "wall_time": result.wall_time,
            "flags": list(result.flags),
        }) + "\n")
