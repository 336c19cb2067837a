"""MPJPE, Procrustes-aligned P-MPJPE and acceleration error.

Inputs are meters; reported errors are millimeters.
"""
from __future__ import annotations

import csv
import io
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateAlignmentError, SequenceError, TopologyError
from .skeleton import NUM_JOINTS, Pose3D

MM = 1000.0


def _joints(p) -> np.ndarray:
    return p.joints if isinstance(p, Pose3D) else np.asarray(p, dtype=float)


def _check_pair(a: np.ndarray, b: np.ndarray, num_joints: int | None) -> None:
    if a.shape != b.shape:
        raise TopologyError(f"joint arrays differ in shape: {a.shape} vs {b.shape}")
    if num_joints is not None and a.shape[-2] != num_joints:
        raise TopologyError(f"expected {num_joints} joints, got {a.shape[-2]}")


def mpjpe(pred, gt, num_joints: int | None = NUM_JOINTS) -> float | np.ndarray:
    """Mean per-joint Euclidean error in mm; (..., J, 3) inputs give (...) outputs."""
    a, b = _joints(pred), _joints(gt)
    _check_pair(a, b, num_joints)
    e = np.linalg.norm(a - b, axis=-1).mean(axis=-1) * MM
    return float(e) if np.ndim(e) == 0 else e


@dataclass(eq=False)
class Alignment:
    aligned: np.ndarray
    scale: float
    rotation: np.ndarray
    translation: np.ndarray


def procrustes_align(pred, gt) -> Alignment:
    """Similarity transform (s, R, tau) minimizing sum |s R pred_i + tau - gt_i|^2."""
    X, Y = _joints(pred), _joints(gt)
    _check_pair(X, Y, None)
    mx, my = X.mean(axis=0), Y.mean(axis=0)
    X0, Y0 = X - mx, Y - my
    var_x = (X0 ** 2).sum()
    if var_x <= 1e-24:
        raise DegenerateAlignmentError("prediction has zero spatial variance")
    U, S, Vt = np.linalg.svd(X0.T @ Y0)
    D = np.ones(3)
    if np.linalg.det(U @ Vt) < 0:
        D[-1] = -1.0
    R = (Vt.T * D) @ U.T
    s = float((S * D).sum() / var_x)
    tau = my - s * R @ mx
    aligned = s * X @ R.T + tau
    return Alignment(aligned, s, R, tau)


def p_mpjpe(pred, gt, num_joints: int | None = NUM_JOINTS) -> float:
    a, b = _joints(pred), _joints(gt)
    _check_pair(a, b, num_joints)
    return mpjpe(procrustes_align(a, b).aligned, b, num_joints)


def accel_error(pred_seq, gt_seq) -> float:
    """Mean norm of the second-difference discrepancy, in mm/frame^2."""
    P = np.asarray([_joints(p) for p in pred_seq], dtype=float)
    G = np.asarray([_joints(g) for g in gt_seq], dtype=float)
    if P.shape != G.shape:
        raise SequenceError(f"sequence shapes differ: {P.shape} vs {G.shape}")
    if len(P) < 3:
        raise SequenceError("need at least 3 frames")
    ap = P[2:] - 2 * P[1:-1] + P[:-2]
    ag = G[2:] - 2 * G[1:-1] + G[:-2]
    return float(np.linalg.norm(ap - ag, axis=-1).mean() * MM)


@dataclass
class EvalReport:
    frames: list[int] = field(default_factory=list)
    labels: list[str] = field(default_factory=list)
    mpjpe: list[float] = field(default_factory=list)
    p_mpjpe: list[float] = field(default_factory=list)
    accel: float | None = None

    @property
    def mean_mpjpe(self) -> float:
        return float(np.mean(self.mpjpe)) if self.mpjpe else 0.0

    @property
    def mean_p_mpjpe(self) -> float:
        return float(np.mean(self.p_mpjpe)) if self.p_mpjpe else 0.0

    def by_action(self) -> dict[str, tuple[float, float]]:
        groups = defaultdict(lambda: ([], []))
        for lab, e1, e2 in zip(self.labels, self.mpjpe, self.p_mpjpe):
            groups[lab][0].append(e1)
            groups[lab][1].append(e2)
        return {k: (float(np.mean(a)), float(np.mean(b))) for k, (a, b) in groups.items()}

    def to_json(self) -> dict:
        return {
            "frames": self.frames,
            "mpjpe_mm": self.mpjpe,
            "p_mpjpe_mm": self.p_mpjpe,
            "mean_mpjpe_mm": self.mean_mpjpe,
            "mean_p_mpjpe_mm": self.mean_p_mpjpe,
            "accel_error_mm": self.accel,
            "actions": {k: {"mpjpe_mm": a, "p_mpjpe_mm": b} for k, (a, b) in self.by_action().items()},
        }

    def table_csv(self) -> str:
        """One row per action label plus a final Avg row."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["action", "MPJPE", "P-MPJPE"])
        for k, (a, b) in self.by_action().items():
            w.writerow([k, f"{a:.2f}", f"{b:.2f}"])
        w.writerow(["Avg", f"{self.mean_mpjpe:.2f}", f"{self.mean_p_mpjpe:.2f}"])
        return buf.getvalue()


def evaluate(pred: dict[int, np.ndarray], gt: dict[int, np.ndarray],
             labels: dict[int, str] | None = None) -> EvalReport:
    """Compare frame-indexed (J, 3) predictions with ground truth.

    Only frames present in both are scored. Acceleration error is computed
    over the longest run of consecutive shared frames when it has >= 3 frames.
    """
    frames = sorted(set(pred) & set(gt))
    if not frames:
        raise SequenceError("no overlapping frames between prediction and ground truth")
    rep = EvalReport()
    for f in frames:
        rep.frames.append(f)
        rep.labels.append((labels or {}).get(f, "all"))
        rep.mpjpe.append(mpjpe(pred[f], gt[f]))
        rep.p_mpjpe.append(p_mpjpe(pred[f], gt[f]))
    run = _longest_run(frames)
    if len(run) >= 3:
        rep.accel = accel_error([pred[f] for f in run], [gt[f] for f in run])
    return rep


def _longest_run(frames: list[int]) -> list[int]:
    best, cur = [], []
    for f in frames:
        cur = cur + [f] if cur and f == cur[-1] + 1 else [f]
        if len(cur) > len(best):
            best = cur
    return best
