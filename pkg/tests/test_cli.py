import json
import subprocess
import sys

import numpy as np
import pytest

from rehab3d.cli import main
from rehab3d.records import DetectionRecord, parse_records, read_jsonl, write_jsonl, write_patches
from rehab3d.refiner import RefinerWeights
from rehab3d.synth import tracking_scenario


def _lines(path):
    return [obj for _, obj in read_jsonl(path)]


@pytest.fixture(scope="module")
def kp_scene(tmp_path_factory):
    d = tmp_path_factory.mktemp("kp")
    assert main(["synth", "--out", str(d), "--seconds", "0.5", "--seed", "3", "--kind", "squat"]) == 0
    return d


@pytest.fixture(scope="module")
def hm_scene(tmp_path_factory):
    d = tmp_path_factory.mktemp("hm")
    assert main(["synth", "--out", str(d), "--seconds", "0.3", "--inputs", "heatmaps",
                 "--cameras", "3"]) == 0
    return d


def test_synth_writes_inputs(kp_scene, hm_scene):
    cfg = json.loads((kp_scene / "config.json").read_text())
    assert sorted(cfg["keypoints"]) == ["cam0", "cam1", "cam2", "cam3"]
    assert cfg["seed"] == 3
    assert len(_lines(kp_scene / "gt.jsonl")) == 25
    assert {r["action"] for r in _lines(kp_scene / "gt.jsonl")} == {"squat"}
    assert (hm_scene / "heatmaps" / "cam2.rphm").exists()


def test_pipeline_and_eval(kp_scene, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["pipeline", "--config", str(kp_scene / "config.json"), "--out-dir", str(out),
                 "--ik", "--muscle", "--single-thread"]) == 0
    for name in ("poses", "engine", "ik", "muscles"):
        assert (out / f"{name}.jsonl").exists()
    capsys.readouterr()
    assert main(["eval", "--pred", str(out / "poses.jsonl"), "--gt", str(kp_scene / "gt.jsonl"),
                 "--json", str(tmp_path / "e.json"), "--csv", str(tmp_path / "e.csv")]) == 0
    table = capsys.readouterr().out.splitlines()
    assert table[0] == "action,MPJPE,P-MPJPE"
    assert table[1].startswith("squat,0.00") and table[-1].startswith("Avg,0.00")
    assert json.loads((tmp_path / "e.json").read_text())["mean_mpjpe_mm"] < 1e-3


def test_triangulate(kp_scene, tmp_path):
    args = ["triangulate", "--cameras", str(kp_scene / "cameras.json"), "--out", str(tmp_path / "p.jsonl"),
            "--keypoints"] + [f"cam{i}={kp_scene}/keypoints/cam{i}.jsonl" for i in range(4)]
    assert main(args) == 0
    pred = parse_records(tmp_path / "p.jsonl")
    gt = parse_records(kp_scene / "gt.jsonl")
    for a, b in zip(pred, gt):
        np.testing.assert_allclose(a.joints, b.joints, atol=1e-6)
    assert main(args[:-4] + ["cam0"]) == 1


@pytest.fixture
def crowd(tmp_path):
    """Detections with a subject and two distant distractors, plus patch files."""
    frames = tracking_scenario("m1", 20, seed=4)
    recs = []
    for f in frames:
        write_patches(tmp_path / f"p{f.frame_index}.bin", f.patches)
        recs.append(DetectionRecord(f.frame_index, "cam0", f.boxes, f"p{f.frame_index}.bin"))
    write_jsonl(tmp_path / "det.jsonl", recs)
    return tmp_path / "det.jsonl", [f.subject_index for f in frames]


def test_track(hm_scene, crowd, tmp_path):
    out = tmp_path / "t.jsonl"
    assert main(["track", "--detections", str(hm_scene / "detections" / "cam0.jsonl"),
                 "--out", str(out)]) == 0
    recs = _lines(out)
    assert len(recs) == 15 and {r["decision"] for r in recs} == {"Single"}
    assert {"frame", "cam", "index", "box", "decision"} <= set(recs[0])
    det, subject = crowd
    assert main(["track", "--detections", str(det), "--out", str(out)]) == 0
    recs = _lines(out)
    assert [r["index"] for r in recs] == subject
    assert {r["decision"] for r in recs[1:]} == {"IoUWin"}


def test_smooth_train_and_smooth(kp_scene, tmp_path):
    w, curve = tmp_path / "w.json", tmp_path / "c.csv"
    assert main(["smooth-train", "--clean", str(kp_scene / "gt.jsonl"), "--weights", str(w),
                 "--curve", str(curve), "--epochs", "3", "--seed", "1"]) == 0
    RefinerWeights.load(w)
    assert len(curve.read_text().splitlines()) == 1 + 3 + 1
    out = tmp_path / "s.jsonl"
    assert main(["smooth", "--weights", str(w), "--poses", str(kp_scene / "gt.jsonl"),
                 "--out", str(out)]) == 0
    assert len(_lines(out)) == 2 * (25 - 8)
    assert main(["smooth-train", "--clean", str(kp_scene / "gt.jsonl"), "--noisy", "a", "b",
                 "--weights", str(w)]) == 1


def test_ik_and_muscle(kp_scene, tmp_path):
    assert main(["ik", "--poses", str(kp_scene / "gt.jsonl"), "--out", str(tmp_path / "ik.jsonl"),
                 "--tol", "0.001"]) == 0
    recs = _lines(tmp_path / "ik.jsonl")
    assert len(recs) == 25 and all(c["status"] for r in recs for c in r["chains"])
    assert main(["muscle", "--poses", str(kp_scene / "gt.jsonl"), "--out", str(tmp_path / "m.jsonl"),
                 "--slow", "0.05", "--intense", "0.5"]) == 0
    m = _lines(tmp_path / "m.jsonl")
    assert len(m) == 24


def test_bench(hm_scene, tmp_path, capsys):
    assert main(["bench", "--config", str(hm_scene / "config.json"), "--repetitions", "1",
                 "--json", str(tmp_path / "b.json")]) == 0
    head = capsys.readouterr().out.splitlines()[0]
    assert head.startswith("num_cam,video,prep_detection")
    rep = json.loads((tmp_path / "b.json").read_text())
    assert rep["num_cameras"] == 3 and rep["frames"] == 15


def test_config_precedence(crowd, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"iou_gate": 2.0}))        # unreachable gate: never an IoU win
    det = str(crowd[0])
    assert main(["track", "--config", str(cfg), "--detections", det, "--out", str(tmp_path / "a.jsonl")]) == 0
    assert "IoUWin" not in {r["decision"] for r in _lines(tmp_path / "a.jsonl")}
    assert main(["track", "--config", str(cfg), "--iou-gate", "0.2", "--detections", det,
                 "--out", str(tmp_path / "b.jsonl")]) == 0
    assert "IoUWin" in {r["decision"] for r in _lines(tmp_path / "b.jsonl")}


def test_exit_codes(kp_scene, tmp_path):
    assert main([]) == 1
    assert main(["nope"]) == 1
    assert main(["pipeline"]) == 1                                        # --config missing
    bad_cfg = tmp_path / "bad.json"
    bad_cfg.write_text(json.dumps({"cameras": "x.json", "keypoints": {"a": "k"}}))
    assert main(["pipeline", "--config", str(bad_cfg)]) == 1
    assert main(["eval", "--pred", str(tmp_path / "none.jsonl"), "--gt", str(kp_scene / "gt.jsonl")]) == 2
    garbled = tmp_path / "g.jsonl"
    garbled.write_text('{"frame": 0, "joints": [[0, 0, 0]]}\n{oops\n')
    assert main(["eval", "--pred", str(garbled), "--gt", str(kp_scene / "gt.jsonl")]) == 2
    far = tmp_path / "far.jsonl"
    far.write_text(json.dumps({"frame": 999, "joints": [[0, 0, 0]] * 17}) + "\n")
    assert main(["eval", "--pred", str(far), "--gt", str(kp_scene / "gt.jsonl")]) == 2
    w = tmp_path / "w.json"
    w.write_text(json.dumps({**RefinerWeights.zeros().to_json(), "version": 99}))
    assert main(["smooth", "--weights", str(w), "--poses", str(kp_scene / "gt.jsonl"),
                 "--out", str(tmp_path / "o.jsonl")]) == 3


def test_console_script_entry():
    r = subprocess.run([sys.executable, "-m", "rehab3d.cli", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.strip()
