"""Muscle stress levels from skeletal joint velocity.

Per muscle: velocity of each associated joint between consecutive frames,
axis-weighted absolute speed, mean over the joints, then thresholding into
intense (yellow) / moderate (green) / slow (blue).

Thresholds are in world units per second (meters/s by default) at the
0.02 s frame time of 50 Hz capture.
"""
from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, MapError, TimeStepError
from .skeleton import NUM_JOINTS, Pose3D

log = logging.getLogger(__name__)

FRAME_TIME = 0.02
SLOW_THRESHOLD = 0.08
INTENSE_THRESHOLD = 0.2
EQUAL_WEIGHTS = (1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)


class Level(str, enum.Enum):
    INTENSE = "Intense"
    MODERATE = "Moderate"
    SLOW = "Slow"

    @property
    def color(self) -> str:
        return _COLORS[self]

    @property
    def rank(self) -> int:
        return _RANK[self]


_COLORS = {Level.INTENSE: "yellow", Level.MODERATE: "green", Level.SLOW: "blue"}
_RANK = {Level.SLOW: 0, Level.MODERATE: 1, Level.INTENSE: 2}


@dataclass(frozen=True)
class IntensityLevel:
    level: Level
    speed: float

    @property
    def color(self) -> str:
        return self.level.color

    def to_json(self) -> dict:
        return {"speed": self.speed, "level": self.level.value, "color": self.color}


def joint_velocity(prev, cur, dt: float = FRAME_TIME) -> np.ndarray:
    if not dt > 0:
        raise TimeStepError(f"frame time must be positive, got {dt}")
    return (np.asarray(cur, dtype=float) - np.asarray(prev, dtype=float)) / dt


def speed(v, weights=EQUAL_WEIGHTS) -> float | np.ndarray:
    """Weighted sum of absolute velocity components; works on (..., 3)."""
    w = np.asarray(weights, dtype=float)
    if w.shape != (3,) or np.any(w < 0):
        raise ConfigError(f"axis weights must be 3 non-negative numbers, got {weights}")
    s = np.abs(np.asarray(v, dtype=float)) @ w
    return float(s) if np.ndim(s) == 0 else s


def _check_thresholds(slow: float, intense: float) -> None:
    if not 0 < slow < intense:
        raise ConfigError(f"need 0 < slow < intense, got slow={slow}, intense={intense}")


def classify(s: float, thresholds: tuple[float, float] = (SLOW_THRESHOLD, INTENSE_THRESHOLD)) -> IntensityLevel:
    slow, intense = thresholds
    _check_thresholds(slow, intense)
    if s >= intense:
        level = Level.INTENSE
    elif s <= slow:
        level = Level.SLOW
    else:
        level = Level.MODERATE
    return IntensityLevel(level, float(s))


@dataclass(frozen=True)
class Muscle:
    joints: tuple[int, ...]
    weights: tuple[float, float, float] = EQUAL_WEIGHTS
    thresholds: tuple[float, float] | None = None


@dataclass
class MuscleMap:
    muscles: dict[str, Muscle] = field(default_factory=dict)

    def __post_init__(self):
        for name, m in self.muscles.items():
            w = np.asarray(m.weights, dtype=float)
            if w.shape != (3,) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-6:
                raise ConfigError(f"muscle {name}: weights must be >= 0 and sum to 1")
            if not m.joints:
                raise MapError(f"muscle {name}: no joints")
            if m.thresholds is not None:
                _check_thresholds(*m.thresholds)

    def validate(self, num_joints: int) -> None:
        for name, m in self.muscles.items():
            bad = [j for j in m.joints if not 0 <= j < num_joints]
            if bad:
                raise MapError(f"muscle {name}: unknown joint index {bad[0]}")

    def to_json(self) -> dict:
        out = {}
        for name, m in self.muscles.items():
            d = {"joints": list(m.joints), "weights": list(m.weights)}
            if m.thresholds is not None:
                d["thresholds"] = list(m.thresholds)
            out[name] = d
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "MuscleMap":
        muscles = {}
        for name, d in obj.items():
            th = d.get("thresholds")
            muscles[name] = Muscle(tuple(int(j) for j in d["joints"]),
                                   tuple(float(x) for x in d.get("weights", EQUAL_WEIGHTS)),
                                   tuple(th) if th is not None else None)
        return cls(muscles)

    @classmethod
    def load(cls, path: str | Path) -> "MuscleMap":
        with open(path) as f:
            return cls.from_json(json.load(f))


def default_muscle_map() -> MuscleMap:
    """Twelve major muscle groups on the 17-joint skeleton."""
    groups = {
        "biceps_l": (12, 13), "biceps_r": (15, 16),
        "triceps_l": (11, 12, 13), "triceps_r": (14, 15, 16),
        "deltoid_l": (11, 12), "deltoid_r": (14, 15),
        "quadriceps_l": (4, 5), "quadriceps_r": (1, 2),
        "hamstrings_l": (4, 5, 6), "hamstrings_r": (1, 2, 3),
        "calf_l": (5, 6), "calf_r": (2, 3),
    }
    return MuscleMap({k: Muscle(v) for k, v in groups.items()})


@dataclass
class MuscleFrame:
    frame_index: int
    levels: dict[str, IntensityLevel]
    warnings: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {"frame": self.frame_index,
                "muscles": {k: v.to_json() for k, v in self.levels.items()}}


def muscle_levels(prev_pose: Pose3D, cur_pose: Pose3D, mmap: MuscleMap | None = None,
                  dt: float = FRAME_TIME,
                  thresholds: tuple[float, float] = (SLOW_THRESHOLD, INTENSE_THRESHOLD)) -> MuscleFrame:
    """Classify every muscle from two consecutive poses.

    A warning is recorded when the pose timestamps disagree with ``dt`` by
    more than 10%.
    """
    mmap = mmap or default_muscle_map()
    n = len(cur_pose.joints)
    mmap.validate(n)
    warnings = []
    stamp_dt = cur_pose.timestamp - prev_pose.timestamp
    if stamp_dt != 0 and abs(stamp_dt - dt) > 0.1 * dt:
        msg = f"frame {cur_pose.frame_index}: timestamp step {stamp_dt:.4g}s vs dt {dt:.4g}s"
        log.warning(msg)
        warnings.append(msg)
    v = joint_velocity(prev_pose.joints, cur_pose.joints, dt)
    levels = {}
    for name, m in mmap.muscles.items():
        s = float(np.mean(speed(v[list(m.joints)], m.weights)))
        levels[name] = classify(s, m.thresholds or thresholds)
    return MuscleFrame(cur_pose.frame_index, levels, warnings)


class MuscleStream:
    """Consumes poses in order and emits one MuscleFrame per pose after the first."""

    def __init__(self, mmap: MuscleMap | None = None, dt: float = FRAME_TIME,
                 thresholds: tuple[float, float] = (SLOW_THRESHOLD, INTENSE_THRESHOLD)):
        self.mmap = mmap or default_muscle_map()
        self.dt = dt
        self.thresholds = thresholds
        self.prev: Pose3D | None = None

    def push(self, pose: Pose3D, dt: float | None = None) -> MuscleFrame | None:
        prev, self.prev = self.prev, pose
        if prev is None:
            return None
        return muscle_levels(prev, pose, self.mmap, dt or self.dt, self.thresholds)


__all__ = ["Level", "IntensityLevel", "joint_velocity", "speed", "classify", "Muscle",
           "MuscleMap", "default_muscle_map", "muscle_levels", "MuscleStream", "MuscleFrame",
           "NUM_JOINTS"]
