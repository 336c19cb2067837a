"""Line-delimited JSON records and the binary patch format.

Every record type keeps fields it does not know about in ``extra`` so that
``emit(parse(line))`` reproduces the input semantically.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Iterator

import numpy as np

from .errors import FormatError
from .skeleton import Pose2D, Pose3D
from .tracker import BBox


def _dumps(obj) -> str:
    return json.dumps(obj, separators=(", ", ": "), allow_nan=False)


def read_jsonl(path_or_fp) -> Iterator[tuple[int, dict]]:
    """Yield (line number, object) for every non-blank line."""
    fp = open(path_or_fp) if isinstance(path_or_fp, (str, Path)) else path_or_fp
    try:
        for lineno, line in enumerate(fp, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"line {lineno}: malformed JSON ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise FormatError(f"line {lineno}: expected a JSON object")
            yield lineno, obj
    finally:
        if fp is not path_or_fp:
            fp.close()


def write_jsonl(path_or_fp, records: Iterable) -> None:
    fp = open(path_or_fp, "w") if isinstance(path_or_fp, (str, Path)) else path_or_fp
    try:
        for r in records:
            fp.write(_dumps(r.to_json() if hasattr(r, "to_json") else r) + "\n")
    finally:
        if fp is not path_or_fp:
            fp.close()


def _require(obj: dict, keys: tuple[str, ...], lineno: int | None) -> None:
    missing = [k for k in keys if k not in obj]
    if missing:
        where = f"line {lineno}: " if lineno else ""
        raise FormatError(f"{where}missing field(s) {missing}")


def _extra(obj: dict, known: tuple[str, ...]) -> dict:
    return {k: v for k, v in obj.items() if k not in known}


# ---------------------------------------------------------------------------

@dataclass(eq=False)
class KeypointRecord:
    frame: int
    cam: str
    joints: np.ndarray            # (J, 3): u, v, conf
    extra: dict = field(default_factory=dict)

    KNOWN = ("frame", "cam", "joints")

    @classmethod
    def from_json(cls, obj: dict, lineno: int | None = None) -> "KeypointRecord":
        _require(obj, cls.KNOWN, lineno)
        j = np.asarray(obj["joints"], dtype=float)
        if j.ndim != 2 or j.shape[1] != 3:
            raise FormatError(f"line {lineno}: joints must be [[u, v, conf], ...]")
        return cls(int(obj["frame"]), str(obj["cam"]), j, _extra(obj, cls.KNOWN))

    @classmethod
    def from_pose(cls, pose: Pose2D, **extra) -> "KeypointRecord":
        j = np.column_stack([pose.joints, pose.confidence])
        return cls(pose.frame_index, pose.camera_id, j, extra)

    def to_pose(self) -> Pose2D:
        return Pose2D(self.joints[:, :2], self.joints[:, 2], self.cam, self.frame)

    def to_json(self) -> dict:
        return {"frame": self.frame, "cam": self.cam, "joints": self.joints.tolist(), **self.extra}


@dataclass(eq=False)
class PoseRecord:
    frame: int
    joints: np.ndarray            # (J, 3)
    conf: np.ndarray | None = None
    residual: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    KNOWN = ("frame", "joints", "conf", "residual")

    @classmethod
    def from_json(cls, obj: dict, lineno: int | None = None) -> "PoseRecord":
        _require(obj, ("frame", "joints"), lineno)
        j = np.asarray(obj["joints"], dtype=float)
        if j.ndim != 2 or j.shape[1] != 3:
            raise FormatError(f"line {lineno}: joints must be [[x, y, z], ...]")
        conf = np.asarray(obj["conf"], float) if "conf" in obj else None
        res = np.asarray(obj["residual"], float) if "residual" in obj else None
        return cls(int(obj["frame"]), j, conf, res, _extra(obj, cls.KNOWN))

    @classmethod
    def from_pose(cls, pose: Pose3D, residual=None, **extra) -> "PoseRecord":
        return cls(pose.frame_index, np.asarray(pose.joints), np.asarray(pose.confidence),
                   None if residual is None else np.asarray(residual), extra)

    def to_pose(self) -> Pose3D:
        t = float(self.extra.get("timestamp", 0.0))
        return Pose3D(self.joints, self.conf, self.frame, t)

    def to_json(self) -> dict:
        out = {"frame": self.frame, "joints": self.joints.tolist()}
        if self.conf is not None:
            out["conf"] = self.conf.tolist()
        if self.residual is not None:
            out["residual"] = self.residual.tolist()
        out.update(self.extra)
        return out


@dataclass(eq=False)
class DetectionRecord:
    frame: int
    cam: str
    boxes: list[BBox]
    patches: str | None = None
    extra: dict = field(default_factory=dict)

    KNOWN = ("frame", "cam", "boxes", "patches")

    @classmethod
    def from_json(cls, obj: dict, lineno: int | None = None) -> "DetectionRecord":
        _require(obj, ("frame", "cam", "boxes"), lineno)
        try:
            boxes = [BBox.from_json(b) for b in obj["boxes"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"line {lineno}: bad box ({exc})") from None
        return cls(int(obj["frame"]), str(obj["cam"]), boxes, obj.get("patches"),
                   _extra(obj, cls.KNOWN))

    def to_json(self) -> dict:
        out = {"frame": self.frame, "cam": self.cam, "boxes": [b.to_json() for b in self.boxes]}
        if self.patches is not None:
            out["patches"] = self.patches
        out.update(self.extra)
        return out


def parse_records(path_or_fp, kind: str = "pose") -> list:
    """Parse a JSON Lines file into typed records (``pose``/``keypoint``/``detection``)."""
    cls = {"pose": PoseRecord, "keypoint": KeypointRecord, "detection": DetectionRecord}[kind]
    return [cls.from_json(obj, lineno) for lineno, obj in read_jsonl(path_or_fp)]


def emit_records(path_or_fp, records: Iterable) -> None:
    write_jsonl(path_or_fp, records)


# ---------------------------------------------------------------------------
# patch files: per box u32 width, u32 height, then width*height*3 RGB8 bytes

_DIMS = struct.Struct("<II")


def write_patches(path_or_fp, patches: list[np.ndarray]) -> None:
    fp = open(path_or_fp, "wb") if isinstance(path_or_fp, (str, Path)) else path_or_fp
    try:
        for p in patches:
            p = np.ascontiguousarray(p, dtype=np.uint8)
            h, w, _ = p.shape
            fp.write(_DIMS.pack(w, h))
            fp.write(p.tobytes())
    finally:
        if fp is not path_or_fp:
            fp.close()


def read_patches(path_or_fp: str | Path | IO[bytes]) -> list[np.ndarray]:
    if isinstance(path_or_fp, (str, Path)):
        with open(path_or_fp, "rb") as f:
            data = f.read()
    else:
        data = path_or_fp.read()
    out, off = [], 0
    while off < len(data):
        if off + _DIMS.size > len(data):
            raise FormatError(f"truncated patch header at byte offset {off}")
        w, h = _DIMS.unpack_from(data, off)
        off += _DIMS.size
        n = w * h * 3
        if off + n > len(data):
            raise FormatError(f"truncated patch body at byte offset {off}")
        out.append(np.frombuffer(data, np.uint8, n, off).reshape(h, w, 3))
        off += n
    return out
