"""Weighted linear (DLT) multi-view triangulation solved by SVD.

For each camera ``c`` observing a joint at pixel ``(u, v)`` with weight
``w_c`` the homogeneous point ``y`` must satisfy::

    w_c * (u * P_c[2] - P_c[0]) . y = 0
    w_c * (v * P_c[2] - P_c[1]) . y = 0

The stacked (2C, 4) system is solved by the right-singular vector of the
smallest singular value.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import CameraView
from .errors import (DegenerateGeometryError, InsufficientViewsError, PointAtInfinityError,
                     SynchronizationError)
from .skeleton import NUM_JOINTS, Pose2D, Pose3D

DEGENERATE_RATIO = 0.99
INFINITY_EPS = 1e-12


@dataclass(frozen=True)
class JointObservation:
    camera_id: str
    u: float
    v: float
    weight: float = 1.0


@dataclass(frozen=True, eq=False)
class DltSystem:
    A: np.ndarray
    row_weights: np.ndarray
    camera_ids: tuple[str, ...]

    @property
    def weighted(self) -> np.ndarray:
        return self.row_weights[:, None] * self.A


def assemble_dlt(cams: list[CameraView], obs: list[JointObservation]) -> DltSystem:
    by_id = {c.id: c for c in cams}
    rows, weights, ids = [], [], []
    for o in obs:
        try:
            P = by_id[o.camera_id].P
        except KeyError:
            raise InsufficientViewsError(f"no camera with id {o.camera_id!r}") from None
        rows += [o.u * P[2] - P[0], o.v * P[2] - P[1]]
        weights += [o.weight, o.weight]
        ids.append(o.camera_id)
    if sum(1 for o in obs if o.weight > 0) < 2:
        raise InsufficientViewsError("need at least two views with positive weight")
    return DltSystem(np.array(rows), np.array(weights, dtype=float), tuple(ids))


def _solve(Aw: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # batched: Aw (..., 2C, 4) -> homogeneous solutions (..., 4), singular values (..., 4)
    _, s, vt = np.linalg.svd(Aw)
    return vt[..., -1, :], s


def _check(y_h: np.ndarray, s: np.ndarray) -> None:
    if s[-2] <= 1e-12 * max(s[0], 1e-300) or s[-1] > DEGENERATE_RATIO * s[-2]:
        raise DegenerateGeometryError(
            f"degenerate geometry: singular values {s[-2]:.3g}, {s[-1]:.3g}")
    if abs(y_h[3]) < INFINITY_EPS:
        raise PointAtInfinityError("triangulated point lies at infinity")


def triangulate_joint(sys: DltSystem) -> tuple[np.ndarray, float]:
    """Return (3D point, smallest singular value of the weighted system)."""
    y_h, s = _solve(sys.weighted)
    _check(y_h, s)
    if y_h[3] < 0:
        y_h = -y_h
    return y_h[:3] / y_h[3], float(s[-1])


def triangulate_pose(cams: list[CameraView], views: list[Pose2D],
                     weights: np.ndarray | None = None) -> tuple[Pose3D, np.ndarray]:
    """Triangulate all 17 joints from per-camera 2D poses.

    Per-joint weights default to each view's 2D confidence. Returns the pose
    (confidence ``exp(-residual)``) and the per-joint residuals.
    """
    if len(views) < 2:
        raise InsufficientViewsError(f"need at least two views, got {len(views)}")
    frames = {v.frame_index for v in views}
    if len(frames) != 1:
        raise SynchronizationError(f"views come from different frames: {sorted(frames)}")
    by_id = {c.id: c for c in cams}
    try:
        P = np.stack([by_id[v.camera_id].P for v in views])              # (C, 3, 4)
    except KeyError as exc:
        raise InsufficientViewsError(f"no camera with id {exc.args[0]!r}") from None
    uv = np.stack([v.joints for v in views], axis=1)                     # (J, C, 2)
    if weights is None:
        w = np.stack([v.confidence for v in views], axis=1)               # (J, C)
    else:
        w = np.asarray(weights, dtype=float).reshape(uv.shape[0], len(views))
    n_joints = uv.shape[0]

    A = np.empty((n_joints, len(views), 2, 4))
    A[:, :, 0] = uv[..., 0:1] * P[None, :, 2] - P[None, :, 0]
    A[:, :, 1] = uv[..., 1:2] * P[None, :, 2] - P[None, :, 1]
    Aw = (A * w[:, :, None, None]).reshape(n_joints, 2 * len(views), 4)

    if np.any((w > 0).sum(axis=1) < 2):
        bad = int(np.flatnonzero((w > 0).sum(axis=1) < 2)[0])
        raise InsufficientViewsError(f"joint {bad}: fewer than two positively weighted views")
    y_h, s = _solve(Aw)
    for j in range(n_joints):
        try:
            _check(y_h[j], s[j])
        except DegenerateGeometryError as exc:
            raise type(exc)(f"joint {j}: {exc}") from None
    y_h = y_h * np.sign(y_h[:, 3:4])
    joints = y_h[:, :3] / y_h[:, 3:4]
    residual = s[:, -1]
    conf = np.clip(np.exp(-residual), 0.0, 1.0)
    pose = Pose3D(joints, conf, frame_index=views[0].frame_index)
    return pose, residual


def triangulate_point(cams: list[CameraView], uv: dict[str, tuple[float, float]],
                      weights: dict[str, float] | None = None) -> np.ndarray:
    obs = [JointObservation(cid, u, v, 1.0 if weights is None else weights[cid])
           for cid, (u, v) in uv.items()]
    return triangulate_joint(assemble_dlt(cams, obs))[0]


__all__ = ["JointObservation", "DltSystem", "assemble_dlt", "triangulate_joint",
           "triangulate_pose", "triangulate_point", "NUM_JOINTS"]
