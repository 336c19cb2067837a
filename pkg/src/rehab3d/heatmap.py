"""Heatmap -> 2D keypoints via temperature-scaled spatial softmax and soft-argmax.

Coordinates are (u, v) = (column, row), origin at the center of cell (0, 0).
"""
from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Iterator

import numpy as np

from .errors import FormatError, InvalidHeatmapError, NormalizationError, TopologyError
from .skeleton import NUM_JOINTS, Pose2D

DEFAULT_ALPHA = 100.0


def spatial_softmax(hm: np.ndarray, alpha: float = DEFAULT_ALPHA) -> np.ndarray:
    """Softmax over the spatial axes of a (..., H, W) heatmap."""
    hm = np.asarray(hm, dtype=float)
    if not np.isfinite(alpha):
        raise InvalidHeatmapError("alpha must be finite")
    if not np.isfinite(hm).all():
        raise InvalidHeatmapError("heatmap contains NaN/inf")
    logits = alpha * hm
    logits = logits - logits.max(axis=(-2, -1), keepdims=True)
    e = np.exp(logits)
    return e / e.sum(axis=(-2, -1), keepdims=True)


def soft_argmax(hm_normalized: np.ndarray, atol: float = 1e-3) -> np.ndarray:
    """Probability-weighted mean cell coordinate of each (H, W) plane.

    Returns (..., 2) array of (u, v).
    """
    p = np.asarray(hm_normalized, dtype=float)
    sums = p.sum(axis=(-2, -1))
    if np.any(np.abs(sums - 1.0) > atol) or np.any(p < 0):
        raise NormalizationError(f"planes are not normalized (sums {np.ravel(sums)[:3]}...)")
    h, w = p.shape[-2:]
    u = (p.sum(axis=-2) * np.arange(w)).sum(axis=-1)
    v = (p.sum(axis=-1) * np.arange(h)).sum(axis=-1)
    return np.stack([u, v], axis=-1)


def keypoints_from_heatmaps(hm: np.ndarray, alpha: float = DEFAULT_ALPHA,
                            normalized: bool = False, camera_id: str = "",
                            frame_index: int = 0) -> Pose2D:
    """Decode a (17, H, W) stack into heatmap-pixel keypoints.

    Confidence is the peak of each normalized plane.
    """
    hm = np.asarray(hm, dtype=float)
    if hm.ndim != 3 or hm.shape[0] != NUM_JOINTS:
        raise TopologyError(f"expected ({NUM_JOINTS}, H, W) heatmaps, got {hm.shape}")
    p = hm if normalized else spatial_softmax(hm, alpha)
    uv = soft_argmax(p)
    conf = np.clip(p.max(axis=(-2, -1)), 0.0, 1.0)
    return Pose2D(uv, conf, camera_id, frame_index)


def uncrop(uv: np.ndarray, box, heatmap_size: tuple[int, int]) -> np.ndarray:
    """Map heatmap-cell coordinates of a crop back to full-image pixels.

    Cell centers of a W x H heatmap are spread evenly over the box:
    ``u_img = x1 + (u + 0.5) * (x2 - x1) / W``.
    """
    w, h = heatmap_size
    uv = np.asarray(uv, dtype=float)
    sx = (box.x2 - box.x1) / w
    sy = (box.y2 - box.y1) / h
    return np.stack([box.x1 + (uv[..., 0] + 0.5) * sx, box.y1 + (uv[..., 1] + 0.5) * sy], axis=-1)


def crop_coords(uv_img: np.ndarray, box, heatmap_size: tuple[int, int]) -> np.ndarray:
    """Inverse of :func:`uncrop`."""
    w, h = heatmap_size
    uv_img = np.asarray(uv_img, dtype=float)
    sx = (box.x2 - box.x1) / w
    sy = (box.y2 - box.y1) / h
    return np.stack([(uv_img[..., 0] - box.x1) / sx - 0.5, (uv_img[..., 1] - box.y1) / sy - 0.5], axis=-1)


# binary stream ----------------------------------------------------------------

MAGIC = b"RPHM"
VERSION = 1
_HEADER = struct.Struct("<4sIIIIB")
_FRAME = struct.Struct("<Q")


@dataclass(frozen=True)
class HeatmapHeader:
    joints: int
    width: int
    height: int
    normalized: bool = False
    version: int = VERSION

    @property
    def frame_bytes(self) -> int:
        return _FRAME.size + 4 * self.joints * self.width * self.height


class HeatmapWriter:
    def __init__(self, fp: BinaryIO, header: HeatmapHeader):
        self.fp = fp
        self.header = header
        fp.write(_HEADER.pack(MAGIC, header.version, header.joints, header.width,
                              header.height, int(header.normalized)))

    def write(self, frame: int, planes: np.ndarray) -> None:
        h = self.header
        planes = np.asarray(planes, dtype="<f4")
        if planes.shape != (h.joints, h.height, h.width):
            raise FormatError(f"frame shape {planes.shape} does not match header")
        self.fp.write(_FRAME.pack(frame))
        self.fp.write(planes.tobytes())


def read_header(fp: BinaryIO) -> HeatmapHeader:
    raw = fp.read(_HEADER.size)
    if len(raw) < _HEADER.size:
        raise FormatError(f"truncated heatmap header at byte offset {len(raw)}")
    magic, version, j, w, h, flag = _HEADER.unpack(raw)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r} at byte offset 0")
    if version != VERSION:
        raise FormatError(f"unsupported heatmap stream version {version} at byte offset 4")
    if w < 1 or h < 1 or j < 1:
        raise FormatError("heatmap dimensions must be positive")
    return HeatmapHeader(j, w, h, bool(flag), version)


def iter_heatmaps(fp: BinaryIO) -> Iterator[tuple[int, np.ndarray]]:
    """Yield (frame index, (J, H, W) float32 planes) from a heatmap stream."""
    header = read_header(fp)
    offset = _HEADER.size
    n = header.joints * header.width * header.height
    while True:
        raw = fp.read(_FRAME.size)
        if not raw:
            return
        if len(raw) < _FRAME.size:
            raise FormatError(f"truncated frame index at byte offset {offset}")
        (frame,) = _FRAME.unpack(raw)
        body = fp.read(4 * n)
        if len(body) < 4 * n:
            raise FormatError(f"truncated frame {frame} at byte offset {offset + _FRAME.size + len(body)}")
        offset += _FRAME.size + 4 * n
        yield frame, np.frombuffer(body, dtype="<f4").reshape(header.joints, header.height, header.width)


def read_heatmap_file(path: str | Path) -> tuple[HeatmapHeader, list[tuple[int, np.ndarray]]]:
    with open(path, "rb") as f:
        header = read_header(f)
        f.seek(0)
        return header, list(iter_heatmaps(f))


def write_heatmap_file(path: str | Path, header: HeatmapHeader, frames) -> None:
    with open(path, "wb") as f:
        w = HeatmapWriter(f, header)
        for frame, planes in frames:
            w.write(frame, planes)


def heatmap_bytes(header: HeatmapHeader, frames) -> bytes:
    buf = io.BytesIO()
    w = HeatmapWriter(buf, header)
    for frame, planes in frames:
        w.write(frame, planes)
    return buf.getvalue()
