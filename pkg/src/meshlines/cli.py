"""Command-line entry point.

Subcommands cover fixed-threshold rendering, per-model threshold
optimization, drawing-pair evaluation, candidate-set generation, and
scorer training.  Options layer as defaults < TOML config file < flags,
all randomness flows from one seed, and outputs are deterministic for a
given configuration regardless of thread count.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from . import dataset_gen, evaluate, optimize, ranker
from .camera import orbit_camera
from .curvature import (
    curvature_derivative,
    normalize_percentile,
    principal_curvatures,
    view_dependent_curvature,
)
from .diff_filter import ThresholdSet
from .line_extract import (
    LineKind,
    apparent_ridges,
    boundaries_and_creases,
    occluding_contours,
    ridges_valleys,
    suggestive_contours,
)
from .mesh_core import MeshError, load_mesh, normalize_size
from .raster import Drawing, build_map_stack, save_float_map

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_BAD_INPUT = 2

CONFIG_KEYS = {
    "mesh": str, "out": str, "seed": int, "width": int, "height": int,
    "camera": str, "thresholds": list, "boundaries": bool,
    "line_width": float, "profile": str, "target": str, "checkpoint": str,
    "near_radius_px": float, "threads": int, "crease_angle": float,
    "epochs": int, "lr": float, "batch": int, "shape_name": str,
    "view_name": str, "dump_maps": bool,
}


class InputError(ValueError):
    """Bad user input; maps to exit code 2."""


def _load_config(path) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise InputError(f"config not found: {p}")
    with open(p, "rb") as fh:
        data = tomllib.load(fh)
    unknown = set(data) - set(CONFIG_KEYS)
    if unknown:
        raise InputError(f"unknown config keys: {', '.join(sorted(unknown))}")
    return data


def _merged(args: argparse.Namespace, defaults: dict) -> dict:
    """defaults < config file < explicit flags."""
    cfg = dict(defaults)
    cfg.update(_load_config(getattr(args, "config", None)))
    for key in defaults:
        flag = getattr(args, key, None)
        if flag is not None:
            cfg[key] = flag
    return cfg


def _require_mesh(cfg: dict):
    path = cfg.get("mesh")
    if not path:
        raise InputError("mesh path is required")
    if not Path(path).is_file():
        raise InputError(f"mesh not found: {path}")
    mesh = load_mesh(path)
    return normalize_size(mesh)


def _camera_for(cfg: dict, mesh):
    """Explicit az,el[,dist] orbit spec, or seeded auto placement."""
    spec = cfg.get("camera")
    w, h = int(cfg["width"]), int(cfg["height"])
    if spec:
        try:
            parts = [float(x) for x in str(spec).split(",")]
        except ValueError:
            raise InputError(f"bad camera spec: {spec}")
        if len(parts) not in (2, 3):
            raise InputError("camera spec must be az,el or az,el,dist")
        az, el = parts[0], parts[1]
        dist = parts[2] if len(parts) == 3 else 2.5 * mesh.bounding_radius()
        up = mesh.ground_up_axis
        if up is None:
            up = (0.0, 1.0, 0.0)
        return orbit_camera(tuple(mesh.centroid()), dist, az, el, up=up,
                            width=w, height=h)
    cam, _ = dataset_gen.place_cameras(mesh, int(cfg["seed"]), width=w, height=h)
    return cam


def _map_stack_for(mesh, camera, cfg: dict):
    field = principal_curvatures(mesh)
    field = curvature_derivative(mesh, field)
    view = view_dependent_curvature(field, mesh, camera)
    field, view = normalize_percentile(field, view)
    segments = {
        LineKind.CONTOUR: occluding_contours(mesh, camera),
        LineKind.SUGGESTIVE: suggestive_contours(mesh, camera, field),
        LineKind.APPARENT: apparent_ridges(mesh, camera, field, view),
    }
    ridges, valleys = ridges_valleys(mesh, field)
    segments[LineKind.RIDGE] = ridges
    segments[LineKind.VALLEY] = valleys
    borders, creases = boundaries_and_creases(
        mesh, crease_angle=float(cfg["crease_angle"])
    )
    segments[LineKind.BOUNDARY] = borders
    segments[LineKind.CREASE] = creases
    return build_map_stack(mesh, camera, segments,
                           line_width=float(cfg["line_width"]))


def _out_dir(cfg: dict) -> Path:
    out = Path(cfg.get("out") or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _scorer_for(cfg: dict):
    target, checkpoint = cfg.get("target"), cfg.get("checkpoint")
    if bool(target) == bool(checkpoint):
        raise InputError("exactly one of target/checkpoint is required")
    if target:
        if not Path(target).is_file():
            raise InputError(f"target not found: {target}")
        return ranker.ReferenceScorer(Drawing.from_png(target))
    if not Path(checkpoint).is_file():
        raise InputError(f"checkpoint not found: {checkpoint}")
    return ranker.MiniScorer(ranker.load_checkpoint(checkpoint))


def cmd_render(args) -> int:
    cfg = _merged(args, {
        "mesh": None, "out": None, "seed": 0, "width": 768, "height": 768,
        "camera": None, "thresholds": [0.0, 0.0, 0.0, 0.0],
        "boundaries": True, "line_width": 1.0, "crease_angle": 60.0,
        "dump_maps": False,
    })
    mesh = _require_mesh(cfg)
    camera = _camera_for(cfg, mesh)
    t = cfg["thresholds"]
    if len(t) != 4 or any(v < 0 for v in t):
        raise InputError("thresholds must be 4 non-negative values")
    maps = _map_stack_for(mesh, camera, cfg)
    ts = ThresholdSet(*[float(v) for v in t],
                      include_boundaries=bool(cfg["boundaries"]))
    drawing = optimize.final_drawing(maps, ts, ts.include_boundaries)
    out = _out_dir(cfg)
    drawing.to_png(out / "drawing.png")
    if cfg["dump_maps"]:
        for name in ("S", "R", "V", "A", "C", "B", "dk", "k1", "k2", "kt", "E"):
            save_float_map(out / f"map_{name}.bin", getattr(maps, name))
    print(out / "drawing.png")
    return EXIT_OK


def cmd_optimize(args) -> int:
    cfg = _merged(args, {
        "mesh": None, "out": None, "seed": 0, "width": 768, "height": 768,
        "camera": None, "line_width": 1.0, "crease_angle": 60.0,
        "profile": "full", "target": None, "checkpoint": None, "threads": 0,
    })
    mesh = _require_mesh(cfg)
    camera = _camera_for(cfg, mesh)
    scorer = _scorer_for(cfg)
    if cfg["profile"] not in ("full", "fast"):
        raise InputError(f"unknown profile: {cfg['profile']}")
    threads = int(cfg["threads"]) or (os.cpu_count() or 1)
    oc = (optimize.OptimizeConfig.fast(threads=threads)
          if cfg["profile"] == "fast"
          else optimize.OptimizeConfig(threads=threads))
    maps = _map_stack_for(mesh, camera, cfg)
    result = optimize.optimize_thresholds(maps, scorer, config=oc)
    with_b = optimize.boundary_check(maps, scorer, None, result.best)
    drawing = optimize.final_drawing(maps, result.best, with_b)
    out = _out_dir(cfg)
    drawing.to_png(out / "drawing.png")
    optimize.export_trace(result, out / "trace.jsonl")
    with open(out / "thresholds.json", "w", encoding="utf-8") as fh:
        json.dump({
            "thresholds": list(result.best.as_array()),
            "include_boundaries": with_b,
            "score": result.best_score,
            "flags": list(result.flags),
        }, fh, indent=2)
    for flag in result.flags:
        print(f"flag: {flag}")
    print(out / "drawing.png")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _merged(args, {
        "out": None, "near_radius_px": 0.0,
    })
    syn_dir, ref_dir = Path(args.synthetic), Path(args.reference)
    for d in (syn_dir, ref_dir):
        if not d.is_dir():
            raise InputError(f"directory not found: {d}")
    mask_dir = Path(args.masks) if args.masks else None
    radius = float(cfg["near_radius_px"]) or None
    syn_files = {p.name: p for p in sorted(syn_dir.glob("*.png"))}
    ref_files = {p.name: p for p in sorted(ref_dir.glob("*.png"))}
    for name in sorted(set(syn_files) ^ set(ref_files)):
        print(f"warning: unpaired file skipped: {name}", file=sys.stderr)
    rows = []
    for name in sorted(set(syn_files) & set(ref_files)):
        syn = evaluate.binarize(Drawing.from_png(syn_files[name]))
        ref = evaluate.binarize(Drawing.from_png(ref_files[name]))
        if mask_dir is not None:
            mpath = mask_dir / name
            if mpath.is_file():
                mask = Drawing.from_png(mpath).image > 0.5
                syn = evaluate.remove_silhouettes(syn, mask, radius)
                ref = evaluate.remove_silhouettes(ref, mask, radius)
        rows.append((name, evaluate.evaluate_pair(syn, ref, radius)))
    out = _out_dir(cfg)
    csv_path = out / "report.csv"
    evaluate.write_csv(rows, csv_path)
    if not rows:
        print("warning: no paired drawings found", file=sys.stderr)
    print(csv_path)
    return EXIT_OK


def cmd_gen_candidates(args) -> int:
    cfg = _merged(args, {
        "mesh": None, "out": None, "seed": 0, "width": 768, "height": 768,
        "line_width": 1.0, "shape_name": None,
    })
    mesh = _require_mesh(cfg)
    shape = cfg["shape_name"] or Path(cfg["mesh"]).stem
    cams = dataset_gen.place_cameras(
        mesh, int(cfg["seed"]), width=int(cfg["width"]), height=int(cfg["height"])
    )
    out = _out_dir(cfg)
    for vi, cam in enumerate(cams):
        cands = dataset_gen.generate_candidates(
            mesh, cam, line_width=float(cfg["line_width"])
        )
        selected = dataset_gen.select_distinct(cands, k=8)
        root = dataset_gen.write_candidates(
            out, shape, f"view{vi}", cands, selected,
            (dataset_gen.DEFAULT_LADDER,) * 3,
            dataset_gen.DEFAULT_EDGE_THRESHOLDS, int(cfg["seed"]),
        )
        print(root / "manifest.json")
    return EXIT_OK


def _load_pairs(pairs_path: Path):
    """Preference pairs from a JSON manifest of drawing paths."""
    if not pairs_path.is_file():
        raise InputError(f"pairs manifest not found: {pairs_path}")
    with open(pairs_path, encoding="utf-8") as fh:
        spec = json.load(fh)
    root = pairs_path.parent

    def load_input(entry) -> ranker.ScorerInput:
        drawing = Drawing.from_png(root / entry["drawing"])
        h, w = drawing.image.shape
        depth = (Drawing.from_png(root / entry["depth"]).image
                 if "depth" in entry else np.zeros((h, w)))
        if "shaded" in entry:
            shaded = np.stack([
                Drawing.from_png(root / p).image for p in entry["shaded"]
            ])
        else:
            shaded = np.zeros((6, h, w))
        return ranker.ScorerInput(drawing=drawing, depth=depth, shaded=shaded)

    pairs = []
    for rec in spec.get("pairs", []):
        pairs.append(ranker.PreferencePair(
            best=load_input(rec["best"]), other=load_input(rec["other"]),
        ))
    if not pairs:
        raise InputError("pairs manifest holds no pairs")
    return pairs


def cmd_train_ranker(args) -> int:
    cfg = _merged(args, {
        "out": None, "seed": 0, "epochs": 10, "lr": 2e-5, "batch": 32,
    })
    pairs = _load_pairs(Path(args.pairs))
    params, trace = ranker.train_mini_scorer(
        pairs, epochs=int(cfg["epochs"]), lr=float(cfg["lr"]),
        batch=int(cfg["batch"]), seed=int(cfg["seed"]),
    )
    out = _out_dir(cfg)
    ck = out / "scorer.ckpt"
    ranker.save_checkpoint(params, ck)
    with open(out / "loss_trace.json", "w", encoding="utf-8") as fh:
        json.dump({"epoch_loss": trace}, fh)
    print(ck)
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="meshlines",
        description="Line drawings from triangle meshes with per-model "
                    "threshold selection.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="TOML config file")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int)

    p = sub.add_parser("render", help="render at fixed thresholds")
    common(p)
    p.add_argument("--mesh")
    p.add_argument("--camera", help="az,el[,dist]")
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--thresholds", type=float, nargs=4,
                   metavar=("T_S", "T_R", "T_V", "T_A"))
    p.add_argument("--no-boundaries", dest="boundaries", action="store_false",
                   default=None)
    p.add_argument("--line-width", dest="line_width", type=float)
    p.add_argument("--crease-angle", dest="crease_angle", type=float)
    p.add_argument("--dump-maps", dest="dump_maps", action="store_true",
                   default=None)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("optimize", help="pick thresholds by scorer ascent")
    common(p)
    p.add_argument("--mesh")
    p.add_argument("--camera")
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--line-width", dest="line_width", type=float)
    p.add_argument("--crease-angle", dest="crease_angle", type=float)
    p.add_argument("--target", help="reference drawing PNG")
    p.add_argument("--checkpoint", help="trained scorer checkpoint")
    p.add_argument("--fast", dest="profile", action="store_const",
                   const="fast", default=None)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("eval", help="score synthetic against reference drawings")
    common(p)
    p.add_argument("--synthetic", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--masks", help="contour masks for silhouette removal")
    p.add_argument("--near-radius-px", dest="near_radius_px", type=float)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gen-candidates", help="build the candidate drawing set")
    common(p)
    p.add_argument("--mesh")
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--line-width", dest="line_width", type=float)
    p.add_argument("--shape-name", dest="shape_name")
    p.set_defaults(func=cmd_gen_candidates)

    p = sub.add_parser("train-ranker", help="train the scorer on preference pairs")
    common(p)
    p.add_argument("--pairs", required=True, help="pairs manifest JSON")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch", type=int)
    p.set_defaults(func=cmd_train_ranker)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except (MeshError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
