"""Pinhole cameras, Rodrigues rotations and engine-frame (left-handed) export."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BehindCameraError, CalibrationError, ConfigError
from .skeleton import Pose3D

ORTHO_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class CameraView:
    """Calibrated pinhole camera. ``R``/``t`` map world points into the camera frame."""

    id: str
    K: np.ndarray
    R: np.ndarray
    t: np.ndarray
    image_size: tuple[int, int] = (1280, 1280)
    P: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        K = np.array(self.K, dtype=float).reshape(3, 3)
        R = np.array(self.R, dtype=float).reshape(3, 3)
        t = np.array(self.t, dtype=float).reshape(3)
        check_calibration(K, R)
        for name, arr in (("K", K), ("R", R), ("t", t)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "id", str(self.id))
        object.__setattr__(self, "image_size", (int(self.image_size[0]), int(self.image_size[1])))
        P = K @ np.hstack([R, t[:, None]])
        P.setflags(write=False)
        object.__setattr__(self, "P", P)

    @property
    def center(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return -self.R.T @ self.t

    @property
    def optical_axis(self) -> np.ndarray:
        return self.R[2].copy()

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "K": self.K.reshape(-1).tolist(),
            "R": self.R.reshape(-1).tolist(),
            "t": self.t.tolist(),
            "width": self.image_size[0],
            "height": self.image_size[1],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "CameraView":
        try:
            return cls(obj["id"], obj["K"], obj["R"], obj["t"], (obj["width"], obj["height"]))
        except (KeyError, ValueError) as exc:
            raise CalibrationError(f"bad camera record: {exc}") from exc


def check_calibration(K: np.ndarray, R: np.ndarray) -> None:
    if not (np.isfinite(K).all() and np.isfinite(R).all()):
        raise CalibrationError("non-finite calibration values")
    if abs(K[1, 0]) > 0 or abs(K[2, 0]) > 0 or abs(K[2, 1]) > 0:
        raise CalibrationError("K must be upper triangular")
    if K[0, 0] <= 0 or K[1, 1] <= 0:
        raise CalibrationError("focal lengths must be positive")
    if not np.allclose(R.T @ R, np.eye(3), rtol=0, atol=ORTHO_TOL):
        raise CalibrationError("R is not orthonormal")
    if np.linalg.det(R) < 0:
        raise CalibrationError("R is a reflection (det -1)")


def projection_matrix(cam: CameraView) -> np.ndarray:
    """3x4 matrix ``K [R | t]``."""
    return cam.P.copy()


def project(cam: CameraView, point) -> np.ndarray:
    """Pixel coordinates (u, v) of one world point, or of an (N, 3) batch.

    Raises BehindCameraError when any point has depth <= 0.
    """
    X = np.asarray(point, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    p = X @ cam.P[:, :3].T + cam.P[:, 3]
    depth = X @ cam.R[2] + cam.t[2]
    if np.any(depth <= 0):
        raise BehindCameraError(f"camera {cam.id}: point at or behind the principal plane")
    uv = p[:, :2] / p[:, 2:3]
    return uv[0] if single else uv


def cross_matrix(v) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rodrigues_rotation(axis, angle: float) -> np.ndarray:
    """Rotation matrix ``I + sin(a) K + (1 - cos(a)) K^2`` about a unit axis."""
    axis = np.asarray(axis, dtype=float)
    norm = np.linalg.norm(axis)
    if norm == 0 or not np.isfinite(norm):
        raise ConfigError("rotation axis must be non-zero")
    if abs(norm - 1.0) > 1e-6:
        raise ConfigError(f"rotation axis must be unit length, |axis|={norm}")
    k = cross_matrix(axis / norm)
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


def look_at(center, target, up=(0.0, 0.0, 1.0)) -> tuple[np.ndarray, np.ndarray]:
    """World->camera (R, t) for a camera at ``center`` looking at ``target``.

    Camera axes: x right, y down, z forward.
    """
    center = np.asarray(center, dtype=float)
    forward = np.asarray(target, dtype=float) - center
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, up)
    if np.linalg.norm(right) < 1e-12:
        raise CalibrationError("viewing direction parallel to up vector")
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    R = np.stack([right, down, forward])
    return R, -R @ center


_AXES = {"X": 0, "Y": 1, "Z": 2}


@dataclass(frozen=True, eq=False)
class EngineFrameConfig:
    """Right-handed world -> left-handed engine frame: mirror, rotate, offset."""

    rodrigues_axis: tuple[float, float, float] = (0.0, 0.0, 1.0)
    rodrigues_angle: float = 0.0
    origin_offset: tuple[float, float, float] = (0.0, 0.0, 0.0)
    mirror_axis: str = "Z"

    def __post_init__(self):
        axis = np.asarray(self.rodrigues_axis, dtype=float)
        if axis.shape != (3,) or abs(np.linalg.norm(axis) - 1.0) > 1e-9:
            raise ConfigError("rodrigues_axis must be a unit 3-vector")
        if self.mirror_axis not in _AXES:
            raise ConfigError(f"mirror_axis must be one of X/Y/Z, got {self.mirror_axis!r}")
        if len(self.origin_offset) != 3 or not np.isfinite(self.rodrigues_angle):
            raise ConfigError("bad origin_offset / rodrigues_angle")

    def matrix(self) -> np.ndarray:
        """Linear part ``R @ M`` of the transform (det -1)."""
        M = np.eye(3)
        M[_AXES[self.mirror_axis], _AXES[self.mirror_axis]] = -1.0
        return rodrigues_rotation(self.rodrigues_axis, self.rodrigues_angle) @ M

    @classmethod
    def from_json(cls, obj: dict) -> "EngineFrameConfig":
        return cls(tuple(obj.get("rodrigues_axis", (0, 0, 1))),
                   float(obj.get("rodrigues_angle", 0.0)),
                   tuple(obj.get("origin_offset", (0, 0, 0))),
                   obj.get("mirror_axis", "Z"))


def to_engine_frame(pose: Pose3D, cfg: EngineFrameConfig = EngineFrameConfig()) -> Pose3D:
    A = cfg.matrix()
    joints = pose.joints @ A.T + np.asarray(cfg.origin_offset, dtype=float)
    return pose.with_joints(joints)


def load_cameras(path: str | Path) -> list[CameraView]:
    with open(path) as f:
        data = json.load(f)
    if not isinstance(data, list):
        raise CalibrationError("camera file must hold a JSON array")
    return [CameraView.from_json(obj) for obj in data]


def save_cameras(cams: list[CameraView], path: str | Path) -> None:
    with open(path, "w") as f:
        json.dump([c.to_json() for c in cams], f, indent=1)
