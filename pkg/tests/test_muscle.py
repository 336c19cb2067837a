import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rehab3d.errors import ConfigError, MapError, TimeStepError
from rehab3d.muscle import (Level, Muscle, MuscleMap, MuscleStream, classify, default_muscle_map,
                            joint_velocity, muscle_levels, speed)
from rehab3d.skeleton import Pose3D


def test_velocity_examples():
    np.testing.assert_array_equal(joint_velocity([1, 2, 3], [1, 2, 3]), 0.0)
    np.testing.assert_allclose(joint_velocity([0, 0, 0], [0.01, 0, 0], 0.02), [0.5, 0, 0])
    with pytest.raises(TimeStepError):
        joint_velocity([0, 0, 0], [1, 0, 0], 0.0)


@given(st.lists(st.floats(-10, 10), min_size=3, max_size=3), st.lists(st.floats(-10, 10), min_size=3, max_size=3))
def test_velocity_antisymmetric(a, b):
    np.testing.assert_array_equal(joint_velocity(a, b), -joint_velocity(b, a))


def test_speed_examples():
    assert speed([0, 0, 0]) == 0.0
    assert speed([0.5, 0, 0]) == pytest.approx(0.5 / 3)
    assert speed([-0.3, 9, 9], (1, 0, 0)) == pytest.approx(0.3)
    with pytest.raises(ConfigError):
        speed([1, 0, 0], (-1, 1, 1))


def test_classify_boundaries():
    assert classify(0.2).level is Level.INTENSE
    assert classify(0.08).level is Level.SLOW
    assert classify(0.5 / 3).level is Level.MODERATE
    assert classify(0.2).color == "yellow" and classify(0.1).color == "green" and classify(0.0).color == "blue"
    with pytest.raises(ConfigError):
        classify(0.1, (0.2, 0.08))


@given(st.floats(0, 5), st.floats(0, 5))
def test_classify_monotone(a, b):
    lo, hi = sorted((a, b))
    assert classify(lo).level.rank <= classify(hi).level.rank


def _pose(j, frame=0, dt=0.02):
    return Pose3D(j, None, frame, frame * dt)


def test_static_all_slow():
    j = np.random.default_rng(0).normal(size=(17, 3))
    mf = muscle_levels(_pose(j, 0), _pose(j, 1))
    assert all(v.level is Level.SLOW and v.color == "blue" for v in mf.levels.values())


def test_arm_motion_only_arm_muscles():
    j = np.zeros((17, 3))
    k = j.copy()
    k[[11, 12, 13]] += (0.02, 0, 0)                     # 1 m/s on x -> 1/3 per joint
    mf = muscle_levels(_pose(j, 0), _pose(k, 1))
    assert mf.levels["triceps_l"].level is Level.INTENSE
    for leg in ("quadriceps_l", "quadriceps_r", "hamstrings_l", "hamstrings_r", "calf_l", "calf_r"):
        assert mf.levels[leg].level is Level.SLOW


def test_dt_mismatch_warning():
    j = np.zeros((17, 3))
    mf = muscle_levels(Pose3D(j, None, 0, 0.0), Pose3D(j, None, 1, 0.05), dt=0.02)
    assert mf.warnings
    mf = muscle_levels(Pose3D(j, None, 0, 0.0), Pose3D(j, None, 1, 0.021), dt=0.02)
    assert not mf.warnings


def test_unknown_joint_in_map():
    mmap = MuscleMap({"x": Muscle((3, 40))})
    with pytest.raises(MapError):
        muscle_levels(_pose(np.zeros((17, 3))), _pose(np.zeros((17, 3)), 1), mmap)
    with pytest.raises(ConfigError):
        MuscleMap({"x": Muscle((1,), (0.5, 0.5, 0.5))})


@given(st.integers(0, 10000))
def test_translation_invariance_and_drift(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=(17, 3)), rng.normal(size=(17, 3))
    off = rng.normal(size=3)
    base = muscle_levels(_pose(a, 0), _pose(b, 1))
    moved = muscle_levels(_pose(a + off, 0), _pose(b + off, 1))
    for k in base.levels:
        assert base.levels[k].level is moved.levels[k].level
        assert moved.levels[k].speed == pytest.approx(base.levels[k].speed, rel=1e-9, abs=1e-9)
    # drift on one pose only, in a direction that keeps every component's sign
    drift = np.sign(b - a) * 0.01
    drifted = muscle_levels(_pose(a, 0), _pose(b + drift, 1))
    for k in base.levels:
        assert drifted.levels[k].speed > base.levels[k].speed


def test_map_json_roundtrip(tmp_path):
    m = default_muscle_map()
    (tmp_path / "m.json").write_text(json.dumps(m.to_json()))
    assert MuscleMap.load(tmp_path / "m.json").to_json() == m.to_json()
    assert len(m.muscles) == 12


def test_stream():
    s = MuscleStream()
    j = np.zeros((17, 3))
    assert s.push(_pose(j, 0)) is None
    out = s.push(_pose(j, 1))
    assert out.frame_index == 1
    assert out.to_json()["muscles"]["biceps_l"] == {"speed": 0.0, "level": "Slow", "color": "blue"}
