"""Write synthetic scenes to disk in the pipeline's input formats."""
from __future__ import annotations

import json
from pathlib import Path

from .camera import save_cameras
from .heatmap import DEFAULT_ALPHA, HeatmapHeader, HeatmapWriter
from .records import DetectionRecord, KeypointRecord, PoseRecord, write_jsonl, write_patches
from .skeleton import NUM_JOINTS
from .synth import SynthScene, observe, observe_heatmaps, synth_detections


def write_ground_truth(path: str | Path, scene: SynthScene, label: str = "all") -> None:
    write_jsonl(path, (PoseRecord.from_pose(p, None, timestamp=p.timestamp, action=label)
                       for p in scene.gt))


def write_scene(scene: SynthScene, out_dir: str | Path, inputs: str = "keypoints",
                heatmap_size: tuple[int, int] = (32, 32), alpha: float = DEFAULT_ALPHA,
                label: str = "all", **config) -> Path:
    """Write cameras, ground truth, per-camera inputs and a pipeline config.

    ``inputs`` is ``keypoints`` (2D keypoint JSONL) or ``heatmaps`` (binary
    heatmap streams plus detection JSONL and patch files). Extra keyword
    arguments are copied into the config. Returns the config path.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_cameras(scene.cameras, out / "cameras.json")
    write_ground_truth(out / "gt.jsonl", scene, label)
    cfg: dict = {"cameras": "cameras.json", "alpha": alpha, "frame_time": 1.0 / scene.fps,
                 "seed": scene.seed, "out_dir": "out"}
    if inputs == "keypoints":
        (out / "keypoints").mkdir(exist_ok=True)
        cfg["keypoints"] = {}
        for cam, poses in observe(scene).items():
            rel = f"keypoints/{cam}.jsonl"
            write_jsonl(out / rel, (KeypointRecord.from_pose(p) for p in poses))
            cfg["keypoints"][cam] = rel
    elif inputs == "heatmaps":
        for d in ("heatmaps", "detections", "patches"):
            (out / d).mkdir(exist_ok=True)
        header = HeatmapHeader(NUM_JOINTS, heatmap_size[0], heatmap_size[1])
        hms = observe_heatmaps(scene, heatmap_size, alpha)
        dets = synth_detections(scene)
        cfg["heatmaps"], cfg["detections"] = {}, {}
        for cam, frames in hms.items():
            rel = f"heatmaps/{cam}.rphm"
            with open(out / rel, "wb") as f:
                w = HeatmapWriter(f, header)
                for frame, _, hm in frames:
                    w.write(frame, hm)
            cfg["heatmaps"][cam] = rel
            recs = []
            for df in dets[cam]:
                prel = f"{cam}_{df.frame_index:06d}.bin"
                write_patches(out / "patches" / prel, df.patches)
                recs.append(DetectionRecord(df.frame_index, cam, df.boxes, f"../patches/{prel}"))
            rel = f"detections/{cam}.jsonl"
            write_jsonl(out / rel, recs)
            cfg["detections"][cam] = rel
    else:
        raise ValueError(f"inputs must be keypoints or heatmaps, got {inputs!r}")
    cfg.update(config)
    path = out / "config.json"
    with open(path, "w") as f:
        json.dump(cfg, f, indent=2)
    return path
