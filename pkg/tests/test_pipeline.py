import json
import logging
import threading

import numpy as np
import pytest

from rehab3d.errors import BenchError, ConfigError
from rehab3d.metrics import mpjpe
from rehab3d.pipeline import (STAGES, CameraItem, DropOldestQueue, FrameSynchronizer, PipelineConfig,
                              bench, run_pipeline)
from rehab3d.records import parse_records
from rehab3d.refiner import RefinerWeights
from rehab3d.scene_io import write_scene
from rehab3d.synth import NoiseConfig, make_scene


def _setup(tmp_path, seconds=1.0, inputs="keypoints", n_cameras=4, sigma=0.0, seed=5, **cfg):
    scene = make_scene(n_cameras, seconds, seed=seed, noise=NoiseConfig(pixel_sigma=sigma))
    path = write_scene(scene, tmp_path, inputs, **cfg)
    return scene, PipelineConfig.load(path)


def _with_weights(tmp_path, cfg):
    RefinerWeights.init(0).save(tmp_path / "w.json")
    cfg.refiner, cfg.refiner_weights = True, "w.json"
    return cfg


@pytest.mark.parametrize("single", [True, False])
def test_noiseless_round_trip(tmp_path, single):
    scene, cfg = _setup(tmp_path, single_thread=single)
    out = run_pipeline(cfg)
    assert len(out.poses) == len(scene.gt) and not out.dropped
    for rec, gt in zip(out.poses, scene.gt):
        assert rec.frame == gt.frame_index
        assert mpjpe(rec.to_pose(), gt) < 1e-3
    written = parse_records(tmp_path / "out" / "poses.jsonl")
    assert [r.frame for r in written] == [g.frame_index for g in scene.gt]


def test_heatmap_mode_end_to_end(tmp_path):
    scene, cfg = _setup(tmp_path, 0.4, inputs="heatmaps")
    out = run_pipeline(cfg, write=False)
    assert len(out.poses) == len(scene.gt)
    err = [mpjpe(r.to_pose(), g) for r, g in zip(out.poses, scene.gt)]
    assert max(err) < 0.1


def test_refiner_record_count(tmp_path):
    scene, cfg = _setup(tmp_path, 0.5)
    out = run_pipeline(_with_weights(tmp_path, cfg), write=False)
    n = len(scene.gt)
    assert len(out.poses) == 2 * (n - 8)
    kinds = [r.extra["kind"] for r in out.poses]
    assert kinds == ["intermediate", "refined"] * (n - 8)
    frames = [r.frame for r in out.poses]
    assert frames[0::2] == frames[1::2] == list(range(8, n))
    ts = [r.extra["timestamp"] for r in out.poses]
    np.testing.assert_allclose(np.diff(ts), cfg.frame_time / 2)


def test_frame_indices_monotone_with_exports(tmp_path):
    _, cfg = _setup(tmp_path, 0.6, ik=True, muscle=True)
    out = run_pipeline(cfg)
    for recs in (out.poses, out.engine):
        frames = [r.frame for r in recs]
        assert frames == sorted(frames)
    assert [r["frame"] for r in out.ik] == [r.frame for r in out.poses]
    assert all(r.extra["frame_space"] == "engine" for r in out.engine)
    assert len(out.muscles) == len(out.poses) - 1
    for name in ("poses", "engine", "ik", "muscles"):
        assert (tmp_path / "out" / f"{name}.jsonl").exists()


def test_truncated_camera_file(tmp_path, caplog):
    scene, cfg = _setup(tmp_path, 0.5)
    path = cfg.path(cfg.keypoints["cam2"])
    data = path.read_bytes()
    path.write_bytes(data[: len(data) * 3 // 5])    # cut mid-record
    with caplog.at_level(logging.WARNING, "rehab3d"):
        out = run_pipeline(cfg, write=False)
    assert out.poses and out.dropped
    assert len(out.poses) + len(out.dropped) == len(scene.gt)
    assert out.dropped == list(range(len(out.poses), len(scene.gt)))
    assert any("dropped" in r.message for r in caplog.records)
    assert any("ends early" in r.message for r in caplog.records)


def test_camera_skipping_frames_is_dropped(tmp_path):
    scene, cfg = _setup(tmp_path, 0.3)
    path = cfg.path(cfg.keypoints["cam1"])
    lines = path.read_text().splitlines(keepends=True)
    path.write_text("".join(l for i, l in enumerate(lines) if i not in (3, 7)))
    out = run_pipeline(cfg, write=False)
    assert out.dropped == [3, 7]
    assert len(out.poses) == len(scene.gt) - 2


def test_config_errors(tmp_path):
    _, cfg = _setup(tmp_path, 0.1, n_cameras=2)
    cfg.keypoints = {"cam0": cfg.keypoints["cam0"]}
    with pytest.raises(ConfigError, match="two cameras"):
        run_pipeline(cfg)
    with pytest.raises(ConfigError, match="unknown"):
        PipelineConfig.from_json({"cameras": "c.json", "bogus": 1})
    _, cfg = _setup(tmp_path, 0.1)
    cfg.refiner = True
    with pytest.raises(ConfigError, match="refiner_weights"):
        cfg.validate()
    cfg.refiner_weights = "missing.json"
    with pytest.raises(ConfigError, match="does not exist"):
        cfg.validate()


def test_single_and_staged_identical(tmp_path):
    _, cfg = _setup(tmp_path, 0.6, sigma=2.0, ik=True, muscle=True)
    cfg = _with_weights(tmp_path, cfg)
    files = {}
    for mode, single in (("a", True), ("b", True), ("c", False)):
        cfg.single_thread, cfg.out_dir = single, mode
        run_pipeline(cfg)
        files[mode] = {p.name: p.read_bytes() for p in (tmp_path / mode).iterdir()}
    assert files["a"] == files["b"] == files["c"]


def test_queue_drop_oldest():
    q = DropOldestQueue(3, drop=True)
    for f in range(6):
        q.put({"cam0": CameraItem("cam0", f)})
    assert q.dropped == [0, 1, 2]
    assert [q.get()["cam0"].frame for _ in range(3)] == [3, 4, 5]
    assert q.high_water == 3


def test_queue_backpressure_blocks():
    q = DropOldestQueue(2, drop=False)
    q.put(1)
    q.put(2)
    done = threading.Event()

    def producer():
        q.put(3)
        done.set()

    th = threading.Thread(target=producer)
    th.start()
    assert not done.wait(0.2)
    assert q.get() == 1
    assert done.wait(2.0)
    th.join()
    assert [q.get(), q.get()] == [2, 3] and not q.dropped and q.high_water == 2


def test_stream_mode_bounded_queue(tmp_path):
    scene, cfg = _setup(tmp_path, 1.0, input_mode="stream", queue_size=4)
    out = run_pipeline(cfg, write=False)
    assert len(out.poses) + len(out.dropped) == len(scene.gt)
    frames = [r.frame for r in out.poses]
    assert frames == sorted(frames)


def test_synchronizer_wait_window():
    sync = FrameSynchronizer(["a", "b"], wait_window=2)
    sync.add(CameraItem("a", 0))
    for f in (1, 2):
        sync.add(CameraItem("b", f))
        sync.add(CameraItem("a", f))
    assert [sorted(b) for b in sync.pop_ready()] == []      # frame 0 waits for b
    sync.add(CameraItem("b", 3))
    ready = sync.pop_ready()
    assert sync.dropped == [0] and [b["a"].frame for b in ready] == [1, 2]


def test_bench_report(tmp_path):
    _, cfg = _setup(tmp_path, 0.3, inputs="heatmaps")
    rep = bench(_with_weights(tmp_path, cfg), repetitions=2)
    assert rep.frames == 2 * 15 and rep.num_cameras == 4
    assert set(rep.stages) == set(STAGES)
    assert rep.total_ms == pytest.approx(sum(v["mean"] for k, v in rep.stages.items() if k != "refine"))
    assert rep.fps_without_refiner == pytest.approx(1000.0 / rep.total_ms)
    assert rep.fps_with_refiner == pytest.approx(2 * rep.fps_without_refiner)
    row = rep.table_row()
    assert list(row) == ["num_cam", "video", "prep_detection", "detection", "track", "prep_3d", "2d",
                         "3d", "total_ms", "fps_wo_sn", "fps_w_sn"]
    assert rep.table_csv().splitlines()[0] == ",".join(row)
    json.dumps(rep.to_json())


def test_bench_empty_input(tmp_path):
    _, cfg = _setup(tmp_path, 0.1)
    for p in cfg.keypoints.values():
        cfg.path(p).write_text("")
    with pytest.raises(BenchError):
        bench(cfg)
