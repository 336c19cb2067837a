"""Command-line entry point: ``rehab3d <subcommand> ...``.

Exit codes: 0 success, 1 usage (bad arguments or config), 2 data or format
error, 3 runtime error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, DataError, Rehab3DError

log = logging.getLogger("rehab3d")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _global_flags(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--config", default=d(None), help="pipeline config JSON")
    p.add_argument("--seed", type=int, default=d(None))
    p.add_argument("--single-thread", action="store_true", default=d(False))
    p.add_argument("--log-level", default=d("WARNING"),
                   choices=["DEBUG", "INFO", "WARNING", "ERROR"])


def _config_dict(args) -> dict:
    if not args.config:
        return {}
    try:
        with open(args.config) as f:
            return json.load(f)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{args.config}: invalid JSON ({exc.msg})") from None


def _pick(value, cfg: dict, key: str, default):
    """CLI value, else config value, else default."""
    if value is not None:
        return value
    return cfg.get(key, default)


# ---------------------------------------------------------------------------
# subcommands

def cmd_synth(args) -> int:
    from .scene_io import write_scene
    from .synth import NoiseConfig, make_scene

    seed = args.seed if args.seed is not None else 0
    noise = NoiseConfig(args.pixel_sigma, args.heatmap_sigma, args.occlusion)
    scene = make_scene(args.cameras, args.seconds, args.fps, args.kind, seed, noise,
                       args.radius, args.focal)
    path = write_scene(scene, args.out, args.inputs, (args.heatmap_size, args.heatmap_size),
                       label=args.kind)
    print(path)
    return 0


def cmd_track(args) -> int:
    from .records import parse_records, read_patches, write_jsonl
    from .tracker import SubjectTracker

    cfg = _config_dict(args)
    tracker = SubjectTracker(_pick(args.iou_gate, cfg, "iou_gate", 0.2),
                             _pick(args.tie_margin, cfg, "tie_margin", 0.3))
    base = Path(args.detections).parent
    out = []
    for rec in parse_records(args.detections, "detection"):
        patches = read_patches(base / rec.patches) if rec.patches else None
        box = tracker.update(rec.boxes, patches)
        idx = next(i for i, b in enumerate(rec.boxes) if b is box)
        out.append({"frame": rec.frame, "cam": rec.cam, "index": idx, "box": box.to_json(),
                    "decision": tracker.decisions[-1].value})
    write_jsonl(args.out, out)
    return 0


def cmd_triangulate(args) -> int:
    from .pipeline import PipelineConfig, run_pipeline

    kp = {}
    for item in args.keypoints:
        cam, _, path = item.partition("=")
        if not path:
            raise UsageError(f"--keypoints expects CAM=PATH, got {item!r}")
        kp[cam] = str(Path(path).resolve())
    cfg = PipelineConfig(str(Path(args.cameras).resolve()), keypoints=kp,
                         single_thread=bool(args.single_thread))
    out = run_pipeline(cfg, write=False)
    from .records import write_jsonl
    write_jsonl(args.out, out.poses)
    return 0


def _read_poses(path):
    from .records import parse_records
    return [r.to_pose() for r in parse_records(path, "pose")]


def cmd_smooth_train(args) -> int:
    from .refiner import RefinerHyperparams, train
    from .synth import motion_array

    cfg = _config_dict(args)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    rng = np.random.default_rng(seed)
    if args.noisy and len(args.noisy) != len(args.clean):
        raise UsageError("--noisy needs one file per --clean file")
    trajs = []
    for i, path in enumerate(args.clean):
        clean = motion_array(_read_poses(path))
        if args.noisy:
            noisy = motion_array(_read_poses(args.noisy[i]))
        else:
            noisy = clean + rng.normal(0.0, args.noise_sigma, clean.shape)
        trajs.append((clean, noisy))
    hp = RefinerHyperparams(alpha_loss=_pick(args.alpha_loss, cfg, "alpha_loss", 0.5),
                            learning_rate=args.lr, epochs=args.epochs, batch_size=args.batch_size,
                            velocity_form=args.velocity_form, seed=seed)
    res = train(trajs, hp)
    res.weights.save(args.weights)
    if args.curve:
        res.write_curve(args.curve)
    print(f"final loss {res.loss_curve[-1]:.6g} (initial {res.loss_curve[0]:.6g})")
    return 0


def cmd_smooth(args) -> int:
    from .records import PoseRecord, write_jsonl
    from .refiner import RefinerWeights, StreamingRefiner

    s = StreamingRefiner(RefinerWeights.load(args.weights))
    out = []
    for pose in _read_poses(args.poses):
        for p, kind in zip(s.push(pose), ("intermediate", "refined")):
            out.append(PoseRecord.from_pose(p, None, timestamp=p.timestamp, kind=kind))
    write_jsonl(args.out, out)
    return 0


def cmd_ik(args) -> int:
    from .fabrik import Rig, RigSolver
    from .records import write_jsonl

    cfg = _config_dict(args)
    solver = RigSolver(Rig.load(args.rig) if args.rig else None,
                       _pick(args.tol, cfg, "tol", 0.01), args.max_iter)
    out = []
    for pose in _read_poses(args.poses):
        joints, sols = solver.solve(pose.joints)
        out.append({"frame": pose.frame_index, "joints": joints.tolist(),
                    "chains": [{"status": s.status.value, "iterations": s.iterations,
                                "error": s.error} for s in sols]})
    write_jsonl(args.out, out)
    return 0


def cmd_muscle(args) -> int:
    from .muscle import FRAME_TIME, INTENSE_THRESHOLD, SLOW_THRESHOLD, MuscleMap, MuscleStream
    from .records import write_jsonl

    cfg = _config_dict(args)
    th = tuple(cfg.get("thresholds", (SLOW_THRESHOLD, INTENSE_THRESHOLD)))
    th = (args.slow if args.slow is not None else th[0],
          args.intense if args.intense is not None else th[1])
    stream = MuscleStream(MuscleMap.load(args.map) if args.map else None,
                          _pick(args.dt, cfg, "frame_time", FRAME_TIME), th)
    out = []
    for pose in _read_poses(args.poses):
        mf = stream.push(pose)
        if mf is not None:
            out.append(mf.to_json())
    write_jsonl(args.out, out)
    return 0


def cmd_eval(args) -> int:
    from .metrics import evaluate
    from .records import parse_records

    pred = {}
    for r in parse_records(args.pred, "pose"):
        if r.extra.get("kind", "refined") == "refined":
            pred[r.frame] = r.joints
    gt, labels = {}, {}
    for r in parse_records(args.gt, "pose"):
        gt[r.frame] = r.joints
        labels[r.frame] = str(r.extra.get("action", "all"))
    rep = evaluate(pred, gt, labels)
    if args.json:
        with open(args.json, "w") as f:
            json.dump(rep.to_json(), f, indent=2)
    table = rep.table_csv()
    if args.csv:
        Path(args.csv).write_text(table)
    print(table, end="")
    return 0


def _pipeline_config(args):
    from .pipeline import PipelineConfig

    if not args.config:
        raise UsageError("--config is required")
    cfg = PipelineConfig.load(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.single_thread:
        cfg.single_thread = True
    for name in ("refiner", "ik", "muscle"):
        if getattr(args, name, None):
            setattr(cfg, name, True)
    if getattr(args, "refiner_weights", None):
        cfg.refiner_weights = str(Path(args.refiner_weights).resolve())
    if getattr(args, "out_dir", None):
        cfg.out_dir = str(Path(args.out_dir).resolve())
    return cfg


def cmd_pipeline(args) -> int:
    from .pipeline import run_pipeline

    cfg = _pipeline_config(args)
    out = run_pipeline(cfg)
    print(f"{out.frames_in} frames in, {len(out.poses)} pose records out, "
          f"{len(out.dropped)} frames dropped -> {cfg.path(cfg.out_dir)}")
    return 0


def cmd_bench(args) -> int:
    from .pipeline import bench

    cfg = _pipeline_config(args)
    rep = bench(cfg, args.repetitions, args.mode)
    if args.json:
        with open(args.json, "w") as f:
            json.dump(rep.to_json(), f, indent=2)
    print(rep.table_csv(), end="")
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rehab3d", description="Multi-view 3D pose pipeline tools")
    p.add_argument("--version", action="version", version=__version__)
    _global_flags(p, suppress=False)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_)
        _global_flags(sp, suppress=True)
        sp.set_defaults(func=fn)
        return sp

    sp = add("synth", cmd_synth, "write a synthetic multi-camera scene")
    sp.add_argument("--out", required=True)
    sp.add_argument("--cameras", type=int, default=4)
    sp.add_argument("--seconds", type=float, default=2.0)
    sp.add_argument("--fps", type=float, default=50.0)
    sp.add_argument("--kind", default="walk", choices=["walk", "squat", "arm_raise", "leg_fold"])
    sp.add_argument("--radius", type=float, default=3.0)
    sp.add_argument("--focal", type=float, default=1000.0)
    sp.add_argument("--pixel-sigma", type=float, default=0.0)
    sp.add_argument("--heatmap-sigma", type=float, default=1.5)
    sp.add_argument("--heatmap-size", type=int, default=32)
    sp.add_argument("--occlusion", type=float, default=0.0)
    sp.add_argument("--inputs", default="keypoints", choices=["keypoints", "heatmaps"])

    sp = add("track", cmd_track, "select the subject box per frame from detections")
    sp.add_argument("--detections", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--iou-gate", type=float)
    sp.add_argument("--tie-margin", type=float)

    sp = add("triangulate", cmd_triangulate, "triangulate keypoint files into 3D poses")
    sp.add_argument("--cameras", required=True)
    sp.add_argument("--keypoints", nargs="+", required=True, metavar="CAM=PATH")
    sp.add_argument("--out", required=True)

    sp = add("smooth-train", cmd_smooth_train, "train the temporal refiner")
    sp.add_argument("--clean", nargs="+", required=True)
    sp.add_argument("--noisy", nargs="+")
    sp.add_argument("--noise-sigma", type=float, default=0.02)
    sp.add_argument("--weights", required=True)
    sp.add_argument("--curve")
    sp.add_argument("--epochs", type=int, default=200)
    sp.add_argument("--lr", type=float, default=1e-3)
    sp.add_argument("--batch-size", type=int, default=64)
    sp.add_argument("--alpha-loss", type=float)
    sp.add_argument("--velocity-form", default="difference", choices=["difference", "product"])

    sp = add("smooth", cmd_smooth, "refine a pose sequence with trained weights")
    sp.add_argument("--weights", required=True)
    sp.add_argument("--poses", required=True)
    sp.add_argument("--out", required=True)

    sp = add("ik", cmd_ik, "solve rig chains for pose targets")
    sp.add_argument("--poses", required=True)
    sp.add_argument("--rig")
    sp.add_argument("--tol", type=float)
    sp.add_argument("--max-iter", type=int, default=20)
    sp.add_argument("--out", required=True)

    sp = add("muscle", cmd_muscle, "classify muscle intensity per frame")
    sp.add_argument("--poses", required=True)
    sp.add_argument("--map")
    sp.add_argument("--dt", type=float)
    sp.add_argument("--slow", type=float)
    sp.add_argument("--intense", type=float)
    sp.add_argument("--out", required=True)

    sp = add("eval", cmd_eval, "MPJPE / P-MPJPE report against ground truth")
    sp.add_argument("--pred", required=True)
    sp.add_argument("--gt", required=True)
    sp.add_argument("--json")
    sp.add_argument("--csv")

    for name, fn, help_ in (("pipeline", cmd_pipeline, "run the full pipeline"),
                            ("bench", cmd_bench, "per-stage latency benchmark")):
        sp = add(name, fn, help_)
        sp.add_argument("--out-dir")
        sp.add_argument("--refiner", action="store_true")
        sp.add_argument("--refiner-weights")
        sp.add_argument("--ik", action="store_true")
        sp.add_argument("--muscle", action="store_true")
        if name == "bench":
            sp.add_argument("--repetitions", type=int, default=3)
            sp.add_argument("--mode", default="file-replay", choices=["file-replay", "paced-replay"])
            sp.add_argument("--json")
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"rehab3d: error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"rehab3d: error: {exc}", file=sys.stderr)
        return 1
    except (DataError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"rehab3d: data error: {exc}", file=sys.stderr)
        return 2
    except Rehab3DError as exc:
        print(f"rehab3d: error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
