"""End-to-end pose pipeline and stage-latency benchmark.

Dataflow per frame index::

    per camera:  ingest -> [detections -> track] -> [heatmap decode -> uncrop] -> Pose2D
    barrier:     all cameras of one frame index
    downstream:  triangulate -> [refine x2] -> engine frame -> [IK] -> [muscle levels]

Per-camera work can run on a thread pool (staged mode) or inline
(single-thread mode); both produce the same records.
"""
from __future__ import annotations

import json
import logging
import threading
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .camera import CameraView, EngineFrameConfig, load_cameras, to_engine_frame
from .errors import BenchError, ConfigError, FormatError, Rehab3DError
from .fabrik import Rig, RigSolver
from .heatmap import DEFAULT_ALPHA, iter_heatmaps, keypoints_from_heatmaps, uncrop
from .muscle import FRAME_TIME, INTENSE_THRESHOLD, SLOW_THRESHOLD, MuscleMap, MuscleStream
from .records import (DetectionRecord, KeypointRecord, PoseRecord, read_jsonl, read_patches,
                      write_jsonl)
from .refiner import RefinerWeights, StreamingRefiner
from .skeleton import Pose2D
from .tracker import SubjectTracker
from .triangulation import triangulate_pose

log = logging.getLogger(__name__)

STAGES = ("ingest_prep", "detection_ingest", "track", "keypoint_prep", "decode_2d",
          "triangulate_3d", "refine")


@dataclass
class PipelineConfig:
    cameras: str
    keypoints: dict[str, str] = field(default_factory=dict)
    heatmaps: dict[str, str] = field(default_factory=dict)
    detections: dict[str, str] = field(default_factory=dict)
    input_mode: str = "files"            # files | stream
    refiner: bool = False
    refiner_weights: str | None = None
    ik: bool = False
    rig: str | None = None
    muscle: bool = False
    muscle_map: str | None = None
    engine: dict = field(default_factory=dict)
    alpha: float = DEFAULT_ALPHA
    alpha_loss: float = 0.5
    thresholds: tuple[float, float] = (SLOW_THRESHOLD, INTENSE_THRESHOLD)
    tol: float = 0.01
    iou_gate: float = 0.2
    tie_margin: float = 0.3
    frame_time: float = FRAME_TIME
    wait_window: int = 0
    queue_size: int = 64
    out_dir: str = "out"
    seed: int = 0
    single_thread: bool = False
    base_dir: str = "."

    @classmethod
    def from_json(cls, obj: dict, base_dir: str | Path = ".") -> "PipelineConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown config field(s): {sorted(unknown)}")
        cfg = cls(**obj)
        if "base_dir" not in obj:
            cfg.base_dir = str(base_dir)
        cfg.thresholds = tuple(cfg.thresholds)
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        path = Path(path)
        with open(path) as f:
            return cls.from_json(json.load(f), path.parent)

    def to_json(self) -> dict:
        d = asdict(self)
        d["thresholds"] = list(self.thresholds)
        return d

    def path(self, p: str | None) -> Path | None:
        if p is None:
            return None
        p = Path(p)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def validate(self) -> None:
        if self.input_mode not in ("files", "stream"):
            raise ConfigError(f"input_mode must be files or stream, got {self.input_mode!r}")
        if not self.keypoints and not self.heatmaps:
            raise ConfigError("config needs keypoint or heatmap inputs")
        if self.heatmaps and set(self.heatmaps) != set(self.detections):
            raise ConfigError("heatmap inputs need a detection file per camera")
        refs = [self.cameras, *self.keypoints.values(), *self.heatmaps.values(),
                *self.detections.values()]
        if self.refiner:
            if not self.refiner_weights:
                raise ConfigError("refiner enabled but no refiner_weights given")
            refs.append(self.refiner_weights)
        refs += [p for p in (self.rig, self.muscle_map) if p]
        for r in refs:
            if not self.path(r).exists():
                raise ConfigError(f"referenced file does not exist: {r}")
        if len(self.camera_ids()) < 2:
            raise ConfigError("triangulation needs at least two cameras")

    def camera_ids(self) -> list[str]:
        return sorted(self.keypoints or self.heatmaps)


# ---------------------------------------------------------------------------
# per-camera input streams

@dataclass
class CameraItem:
    """One camera's raw input for one frame."""

    cam: str
    frame: int
    keypoints: KeypointRecord | None = None
    heatmap: np.ndarray | None = None
    detection: DetectionRecord | None = None
    patches: list[np.ndarray] | None = None
    ingest_ms: float = 0.0
    detection_ms: float = 0.0


def _timed(it: Iterator) -> Iterator[tuple[float, object]]:
    while True:
        t0 = time.perf_counter()
        try:
            x = next(it)
        except StopIteration:
            return
        yield (time.perf_counter() - t0) * 1e3, x


def _until_bad(cam: str, it: Iterator) -> Iterator:
    """Stop a camera stream at the first unreadable record instead of failing the run."""
    try:
        yield from it
    except FormatError as exc:
        log.warning("camera %s: input ends early (%s); remaining frames from it are lost", cam, exc)


def _keypoint_items(cam: str, path: Path) -> Iterator[CameraItem]:
    for ms, (lineno, obj) in _timed(read_jsonl(path)):
        t0 = time.perf_counter()
        rec = KeypointRecord.from_json(obj, lineno)
        ms += (time.perf_counter() - t0) * 1e3
        yield CameraItem(cam, rec.frame, keypoints=rec, ingest_ms=ms)


def keypoint_stream(cam: str, path: Path) -> Iterator[CameraItem]:
    return _until_bad(cam, _keypoint_items(cam, path))


def heatmap_stream(cam: str, hm_path: Path, det_path: Path) -> Iterator[CameraItem]:
    return _until_bad(cam, _heatmap_items(cam, hm_path, det_path))


def _heatmap_items(cam: str, hm_path: Path, det_path: Path) -> Iterator[CameraItem]:
    dets = {}
    det_ms = {}
    records = _until_bad(cam, _timed(read_jsonl(det_path)))
    for ms, (lineno, obj) in records:
        t0 = time.perf_counter()
        rec = DetectionRecord.from_json(obj, lineno)
        dets[rec.frame] = rec
        det_ms[rec.frame] = ms + (time.perf_counter() - t0) * 1e3
    with open(hm_path, "rb") as f:
        for ms, (frame, planes) in _timed(iter_heatmaps(f)):
            rec = dets.get(frame)
            if rec is None:
                log.warning("camera %s frame %d: heatmap without detections, skipped", cam, frame)
                continue
            patches = None
            d_ms = det_ms[frame]
            if rec.patches:
                t0 = time.perf_counter()
                patches = read_patches(det_path.parent / rec.patches)
                d_ms += (time.perf_counter() - t0) * 1e3
            yield CameraItem(cam, frame, heatmap=planes, detection=rec, patches=patches,
                             ingest_ms=ms, detection_ms=d_ms)


def open_streams(cfg: PipelineConfig) -> dict[str, Iterator[CameraItem]]:
    if cfg.keypoints:
        return {c: keypoint_stream(c, cfg.path(p)) for c, p in sorted(cfg.keypoints.items())}
    return {c: heatmap_stream(c, cfg.path(cfg.heatmaps[c]), cfg.path(cfg.detections[c]))
            for c in sorted(cfg.heatmaps)}


class FrameSynchronizer:
    """Joins per-camera items on frame index.

    A frame still missing a camera once every missing camera has moved more
    than ``wait_window`` frames past it (or has ended) is dropped and logged.
    """

    def __init__(self, cams: list[str], wait_window: int = 0):
        self.cams = cams
        self.wait = wait_window
        self.pending: dict[int, dict[str, CameraItem]] = {}
        self.latest = {c: -1 for c in cams}
        self.dropped: list[int] = []

    def add(self, item: CameraItem) -> None:
        self.pending.setdefault(item.frame, {})[item.cam] = item
        self.latest[item.cam] = max(self.latest[item.cam], item.frame)

    def pop_ready(self, final: bool = False) -> list[dict[str, CameraItem]]:
        out = []
        for f in sorted(self.pending):
            items = self.pending[f]
            if len(items) == len(self.cams):
                out.append(self.pending.pop(f))
                continue
            missing = [c for c in self.cams if c not in items]
            if final or all(self.latest[c] > f + self.wait for c in missing):
                self.pending.pop(f)
                self.dropped.append(f)
                log.warning("frame %d dropped: no data from camera(s) %s", f, missing)
            else:
                break
        return out


def synchronized(streams: dict[str, Iterator[CameraItem]],
                 sync: FrameSynchronizer) -> Iterator[dict[str, CameraItem]]:
    """Round-robin over camera streams, yielding complete frame bundles in order."""
    live = dict(streams)
    while live:
        for cam in sorted(live):
            try:
                item = next(live[cam])
            except StopIteration:
                del live[cam]
                sync.latest[cam] = 1 << 62
                continue
            sync.add(item)
        yield from sync.pop_ready()
    yield from sync.pop_ready(final=True)


# ---------------------------------------------------------------------------
# stages

class CameraStage:
    """Per-camera processing: tracking, heatmap decoding, un-cropping."""

    def __init__(self, cam: str, cfg: PipelineConfig):
        self.cam = cam
        self.alpha = cfg.alpha
        self.tracker = SubjectTracker(cfg.iou_gate, cfg.tie_margin)
        self.normalized = False

    def __call__(self, item: CameraItem) -> tuple[Pose2D, dict[str, float]]:
        times = {"ingest_prep": item.ingest_ms, "detection_ingest": item.detection_ms}
        if item.keypoints is not None:
            t0 = time.perf_counter()
            pose = item.keypoints.to_pose()
            times["keypoint_prep"] = (time.perf_counter() - t0) * 1e3
            return pose, times
        t0 = time.perf_counter()
        box = self.tracker.update(item.detection.boxes, item.patches)
        t1 = time.perf_counter()
        kp = keypoints_from_heatmaps(item.heatmap, self.alpha, self.normalized, self.cam, item.frame)
        t2 = time.perf_counter()
        h, w = item.heatmap.shape[-2:]
        pose = Pose2D(uncrop(kp.joints, box, (w, h)), kp.confidence, self.cam, item.frame)
        t3 = time.perf_counter()
        times.update(track=(t1 - t0) * 1e3, decode_2d=(t2 - t1) * 1e3, keypoint_prep=(t3 - t2) * 1e3)
        return pose, times


@dataclass
class PipelineOutput:
    poses: list[PoseRecord] = field(default_factory=list)
    engine: list[PoseRecord] = field(default_factory=list)
    ik: list[dict] = field(default_factory=list)
    muscles: list[dict] = field(default_factory=list)
    dropped: list[int] = field(default_factory=list)
    timings: list[dict[str, float]] = field(default_factory=list)
    frames_in: int = 0

    def write(self, out_dir: str | Path) -> dict[str, Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = {"poses": out_dir / "poses.jsonl"}
        write_jsonl(paths["poses"], self.poses)
        for name in ("engine", "ik", "muscles"):
            recs = getattr(self, name)
            if recs:
                paths[name] = out_dir / f"{name}.jsonl"
                write_jsonl(paths[name], recs)
        return paths


class Downstream:
    """Triangulation onward; strictly sequential per frame."""

    def __init__(self, cams: list[CameraView], cfg: PipelineConfig):
        self.cams = cams
        self.cfg = cfg
        self.refiner = None
        if cfg.refiner:
            self.refiner = StreamingRefiner(RefinerWeights.load(cfg.path(cfg.refiner_weights)))
        self.engine_cfg = EngineFrameConfig.from_json(cfg.engine) if cfg.engine else EngineFrameConfig()
        self.ik = RigSolver(Rig.load(cfg.path(cfg.rig)) if cfg.rig else None, cfg.tol) if cfg.ik else None
        self.muscle = None
        if cfg.muscle:
            mmap = MuscleMap.load(cfg.path(cfg.muscle_map)) if cfg.muscle_map else None
            dt = cfg.frame_time / (2 if cfg.refiner else 1)
            self.muscle = MuscleStream(mmap, dt, tuple(cfg.thresholds))
        self.export = cfg.ik or cfg.muscle or bool(cfg.engine)

    def __call__(self, views: list[Pose2D], out: PipelineOutput, times: dict[str, float]) -> None:
        frame = views[0].frame_index
        t0 = time.perf_counter()
        try:
            pose, residual = triangulate_pose(self.cams, views)
        except Rehab3DError as exc:
            log.warning("frame %d dropped: %s", frame, exc)
            out.dropped.append(frame)
            return
        pose = type(pose)(pose.joints, pose.confidence, frame, frame * self.cfg.frame_time)
        times["triangulate_3d"] = (time.perf_counter() - t0) * 1e3
        if self.refiner is None:
            emitted = [(pose, PoseRecord.from_pose(pose, residual, timestamp=pose.timestamp))]
        else:
            t0 = time.perf_counter()
            refined = self.refiner.push(pose)
            times["refine"] = (time.perf_counter() - t0) * 1e3
            kinds = ("intermediate", "refined")
            emitted = [(p, PoseRecord.from_pose(p, None, timestamp=p.timestamp, kind=k))
                       for p, k in zip(refined, kinds)]
        for p, rec in emitted:
            out.poses.append(rec)
            if not self.export:
                continue
            ep = to_engine_frame(p, self.engine_cfg)
            out.engine.append(PoseRecord.from_pose(ep, None, timestamp=ep.timestamp, frame_space="engine"))
            target = ep
            if self.ik is not None:
                joints, sols = self.ik.solve(ep.joints)
                out.ik.append({"frame": ep.frame_index, "timestamp": ep.timestamp,
                               "joints": joints.tolist(),
                               "chains": [{"status": s.status.value, "iterations": s.iterations,
                                           "error": s.error} for s in sols]})
                target = ep.with_joints(joints)
            if self.muscle is not None:
                mf = self.muscle.push(target)
                if mf is not None:
                    rec_m = mf.to_json()
                    rec_m["timestamp"] = target.timestamp
                    out.muscles.append(rec_m)


class DropOldestQueue:
    """Bounded queue; in ``drop`` mode a full queue discards its oldest item."""

    def __init__(self, maxsize: int, drop: bool):
        self.maxsize = maxsize
        self.drop = drop
        self.items: deque = deque()
        self.cv = threading.Condition()
        self.dropped: list[int] = []
        self.high_water = 0

    def put(self, item) -> None:
        with self.cv:
            while len(self.items) >= self.maxsize:
                if self.drop:
                    old = self.items.popleft()
                    frame = next(iter(old.values())).frame if isinstance(old, dict) else None
                    self.dropped.append(frame)
                    log.warning("queue full: dropped oldest unprocessed frame %s", frame)
                else:
                    self.cv.wait()
            self.items.append(item)
            self.high_water = max(self.high_water, len(self.items))
            self.cv.notify_all()

    def get(self):
        with self.cv:
            while not self.items:
                self.cv.wait()
            item = self.items.popleft()
            self.cv.notify_all()
            return item


_END = object()


def run_pipeline(cfg: PipelineConfig, write: bool = True) -> PipelineOutput:
    """Run the full pipeline described by ``cfg``; optionally write outputs."""
    cfg.validate()
    cams_all = {c.id: c for c in load_cameras(cfg.path(cfg.cameras))}
    ids = cfg.camera_ids()
    missing = [c for c in ids if c not in cams_all]
    if missing:
        raise ConfigError(f"no calibration for camera(s) {missing}")
    cams = [cams_all[c] for c in ids]
    stages = {c: CameraStage(c, cfg) for c in ids}
    down = Downstream(cams, cfg)
    out = PipelineOutput()
    sync = FrameSynchronizer(ids, cfg.wait_window)
    bundles = synchronized(open_streams(cfg), sync)

    def process(bundle: dict[str, CameraItem], per_cam) -> None:
        out.frames_in += 1
        t0 = time.perf_counter()
        results = per_cam(bundle)
        times = {k: 0.0 for k in STAGES}
        for _, t in results:
            for k, v in t.items():
                times[k] += v
        down([p for p, _ in results], out, times)
        times["wall"] = (time.perf_counter() - t0) * 1e3
        out.timings.append(times)

    if cfg.single_thread:
        for bundle in bundles:
            process(bundle, lambda b: [stages[c](b[c]) for c in ids])
    else:
        q = DropOldestQueue(cfg.queue_size, drop=cfg.input_mode == "stream")
        error: list[BaseException] = []

        def reader():
            try:
                for b in bundles:
                    q.put(b)
            except BaseException as exc:      # surfaced in the consumer
                error.append(exc)
            finally:
                q.items.append(_END)
                with q.cv:
                    q.cv.notify_all()

        th = threading.Thread(target=reader, name="ingest", daemon=True)
        th.start()
        with ThreadPoolExecutor(max_workers=len(ids), thread_name_prefix="camera") as pool:
            def per_cam(b):
                futs = [pool.submit(stages[c], b[c]) for c in ids]
                return [f.result() for f in futs]
            while True:
                b = q.get()
                if b is _END:
                    break
                process(b, per_cam)
        th.join()
        if error:
            raise error[0]
        out.dropped += [f for f in q.dropped if f is not None]
    out.dropped = sorted(set(out.dropped) | set(sync.dropped))
    if write:
        out.write(cfg.path(cfg.out_dir))
    return out


# ---------------------------------------------------------------------------
# benchmark

@dataclass
class StageLatencyReport:
    num_cameras: int
    mode: str
    frames: int
    stages: dict[str, dict[str, float]]
    total_ms: float
    fps_without_refiner: float
    fps_with_refiner: float
    fps_with_refiner_measured: float

    def to_json(self) -> dict:
        return asdict(self)

    def table_row(self) -> dict[str, float | str | int]:
        s = self.stages
        return {
            "num_cam": self.num_cameras, "video": self.mode,
            "prep_detection": s["ingest_prep"]["mean"], "detection": s["detection_ingest"]["mean"],
            "track": s["track"]["mean"], "prep_3d": s["keypoint_prep"]["mean"],
            "2d": s["decode_2d"]["mean"], "3d": s["triangulate_3d"]["mean"],
            "total_ms": self.total_ms, "fps_wo_sn": self.fps_without_refiner,
            "fps_w_sn": self.fps_with_refiner,
        }

    def table_csv(self) -> str:
        row = self.table_row()
        head = ",".join(row)
        vals = ",".join(f"{v:.3f}" if isinstance(v, float) else str(v) for v in row.values())
        return head + "\n" + vals + "\n"


def _summary(x: list[float]) -> dict[str, float]:
    a = np.asarray(x, dtype=float)
    return {"mean": float(a.mean()), "median": float(np.median(a)), "p99": float(np.percentile(a, 99))}


def bench(cfg: PipelineConfig, repetitions: int = 1, mode: str = "file-replay") -> StageLatencyReport:
    """Per-stage latency over ``repetitions`` single-threaded runs.

    ``total_ms`` sums the mean of every stage except the refiner, so it is
    comparable with the no-refiner frame rate; the refiner doubles the
    emitted pose rate.
    """
    timings = []
    for _ in range(max(1, repetitions)):
        run_cfg = PipelineConfig(**{**cfg.to_json(), "single_thread": True,
                                    "thresholds": tuple(cfg.thresholds)})
        out = run_pipeline(run_cfg, write=False)
        timings += out.timings
    if not timings:
        raise BenchError("benchmark input produced no frames")
    stages = {k: _summary([t.get(k, 0.0) for t in timings]) for k in STAGES}
    total = sum(v["mean"] for k, v in stages.items() if k != "refine")
    fps = 1000.0 / total
    with_ref = 2.0 * 1000.0 / (total + stages["refine"]["mean"])
    return StageLatencyReport(len(cfg.camera_ids()), mode, len(timings), stages, total,
                              fps, 2.0 * fps, with_ref)
