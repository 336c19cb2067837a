"""17-joint skeleton topology, pose containers and bone-length utilities.

Joint order follows the Human3.6M 17-joint convention::

    0 pelvis   1 r_hip    2 r_knee   3 r_ankle   4 l_hip    5 l_knee
    6 l_ankle  7 spine    8 thorax   9 neck     10 head    11 l_shoulder
    12 l_elbow 13 l_wrist 14 r_shoulder 15 r_elbow 16 r_wrist

All 3D coordinates are meters in a right-handed, z-up world frame.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import TopologyError

NUM_JOINTS = 17

H36M_JOINT_NAMES = (
    "pelvis", "r_hip", "r_knee", "r_ankle", "l_hip", "l_knee", "l_ankle",
    "spine", "thorax", "neck", "head",
    "l_shoulder", "l_elbow", "l_wrist", "r_shoulder", "r_elbow", "r_wrist",
)
H36M_PARENTS = (-1, 0, 1, 2, 0, 4, 5, 0, 7, 8, 9, 8, 11, 12, 8, 14, 15)


@dataclass(frozen=True)
class Skeleton:
    joint_names: tuple[str, ...]
    parents: tuple[int, ...]

    def __post_init__(self):
        names = tuple(self.joint_names)
        parents = tuple(int(p) for p in self.parents)
        object.__setattr__(self, "joint_names", names)
        object.__setattr__(self, "parents", parents)
        if len(names) != NUM_JOINTS or len(parents) != NUM_JOINTS:
            raise TopologyError(
                f"skeleton needs {NUM_JOINTS} joints, got {len(names)} names / {len(parents)} parents")
        roots = [i for i, p in enumerate(parents) if p < 0]
        if roots != [0]:
            raise TopologyError(f"joint 0 must be the only root, roots={roots}")
        for j in range(NUM_JOINTS):
            if parents[j] >= NUM_JOINTS:
                raise TopologyError(f"joint {j} has out-of-range parent {parents[j]}")
            if self.depth(j) is None:
                raise TopologyError(f"joint {j} does not reach the root (cycle)")

    @property
    def num_joints(self) -> int:
        return len(self.parents)

    @property
    def bones(self) -> list[tuple[int, int]]:
        """(parent, child) pairs, one per non-root joint, in joint order."""
        return [(p, j) for j, p in enumerate(self.parents) if p >= 0]

    def depth(self, joint: int) -> int | None:
        """Steps from ``joint`` to the root, or None if a cycle is hit."""
        steps = 0
        j = joint
        while self.parents[j] >= 0:
            j = self.parents[j]
            steps += 1
            if steps > len(self.parents):
                return None
        return steps

    def children(self, joint: int) -> list[int]:
        return [j for j, p in enumerate(self.parents) if p == joint]

    def index(self, name: str) -> int:
        return self.joint_names.index(name)

    def to_json(self) -> dict:
        return {"joint_names": list(self.joint_names), "parents": list(self.parents)}

    @classmethod
    def from_json(cls, obj: dict) -> "Skeleton":
        return cls(tuple(obj["joint_names"]), tuple(obj["parents"]))


H36M = Skeleton(H36M_JOINT_NAMES, H36M_PARENTS)


def load_skeleton(path: str | Path) -> Skeleton:
    with open(path) as f:
        return Skeleton.from_json(json.load(f))


def save_skeleton(skel: Skeleton, path: str | Path) -> None:
    with open(path, "w") as f:
        json.dump(skel.to_json(), f, indent=2)


def _as_joint_array(joints, dim: int) -> np.ndarray:
    arr = np.array(joints, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise TopologyError(f"expected (J, {dim}) joint array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


def _as_confidence(conf, n: int) -> np.ndarray:
    if conf is None:
        arr = np.ones(n)
    else:
        arr = np.array(conf, dtype=float).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Pose3D:
    """17 world-space joints (meters) with per-joint confidence."""

    joints: np.ndarray
    confidence: np.ndarray | None = None
    frame_index: int = 0
    timestamp: float = 0.0

    def __post_init__(self):
        joints = _as_joint_array(self.joints, 3)
        object.__setattr__(self, "joints", joints)
        object.__setattr__(self, "confidence", _as_confidence(self.confidence, len(joints)))

    def with_joints(self, joints: np.ndarray) -> "Pose3D":
        return Pose3D(joints, self.confidence, self.frame_index, self.timestamp)


@dataclass(frozen=True, eq=False)
class Pose2D:
    """17 image-space joints (pixels, u right / v down) for one camera."""

    joints: np.ndarray
    confidence: np.ndarray | None = None
    camera_id: str = ""
    frame_index: int = 0

    def __post_init__(self):
        joints = _as_joint_array(self.joints, 2)
        object.__setattr__(self, "joints", joints)
        object.__setattr__(self, "confidence", _as_confidence(self.confidence, len(joints)))


@dataclass
class ValidationReport:
    nonfinite_joints: list[int] = field(default_factory=list)
    confidence_out_of_range: list[int] = field(default_factory=list)
    joint_count_mismatch: tuple[int, int] | None = None

    @property
    def valid(self) -> bool:
        return not (self.nonfinite_joints or self.confidence_out_of_range
                    or self.joint_count_mismatch)

    def __bool__(self) -> bool:
        # truthy when there is something to report
        return not self.valid

    def messages(self) -> list[str]:
        out = []
        if self.joint_count_mismatch:
            got, want = self.joint_count_mismatch
            out.append(f"joint count {got}, expected {want}")
        out += [f"joint {j}: non-finite coordinate" for j in self.nonfinite_joints]
        out += [f"joint {j}: confidence outside [0, 1]" for j in self.confidence_out_of_range]
        return out


def validate_pose(pose: Pose3D | Pose2D, num_joints: int = NUM_JOINTS) -> ValidationReport:
    report = ValidationReport()
    n = len(pose.joints)
    if n != num_joints or len(pose.confidence) != n:
        report.joint_count_mismatch = (n, num_joints)
    finite = np.isfinite(pose.joints).all(axis=1)
    report.nonfinite_joints = [int(j) for j in np.flatnonzero(~finite)]
    conf = pose.confidence
    bad = ~((conf >= 0.0) & (conf <= 1.0))
    report.confidence_out_of_range = [int(j) for j in np.flatnonzero(bad)]
    return report


def bone_lengths(pose: Pose3D | np.ndarray, skel: Skeleton = H36M) -> np.ndarray:
    """Length of every bone, ordered like ``skel.bones`` (one per non-root joint)."""
    joints = pose.joints if isinstance(pose, Pose3D) else np.asarray(pose, dtype=float)
    if joints.shape[-2] != skel.num_joints:
        raise TopologyError(
            f"pose has {joints.shape[-2]} joints, skeleton has {skel.num_joints}")
    parent_idx = np.array([p for p, _ in skel.bones])
    child_idx = np.array([c for _, c in skel.bones])
    diff = joints[..., child_idx, :] - joints[..., parent_idx, :]
    return np.linalg.norm(diff, axis=-1)
