"""Single-subject tracker: IoU gating with a color-histogram fallback.

Decision tree per frame, given the previous subject box ``B_L``:

* one detection -> take it (``Single``)
* candidates = boxes with IoU(B_L, box) > ``iou_gate``
* exactly one candidate, or top-1 minus top-2 IoU >= ``tie_margin``
  -> highest-IoU box (``IoUWin``)
* otherwise, including no candidates -> box whose color histogram is most
  similar to the stored subject descriptor (``ColorFallback``)
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import DescriptorError, InvalidBoxError, InvalidPatchError, TrackingLostError

N_BINS = 8


@dataclass(frozen=True)
class BBox:
    x1: float
    y1: float
    x2: float
    y2: float
    score: float = 1.0

    def __post_init__(self):
        if not (self.x2 > self.x1 and self.y2 > self.y1):
            raise InvalidBoxError(f"degenerate box {self}")
        if not 0.0 <= self.score <= 1.0:
            raise InvalidBoxError(f"box score {self.score} outside [0, 1]")

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    def to_json(self) -> dict:
        return {"x1": self.x1, "y1": self.y1, "x2": self.x2, "y2": self.y2, "score": self.score}

    @classmethod
    def from_json(cls, obj: dict) -> "BBox":
        return cls(float(obj["x1"]), float(obj["y1"]), float(obj["x2"]), float(obj["y2"]),
                   float(obj.get("score", 1.0)))


def iou(a: BBox, b: BBox) -> float:
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


@dataclass(frozen=True, eq=False)
class ColorDescriptor:
    """Per-channel 8-bin RGB histogram, each channel L1-normalized. Shape (3, 8)."""

    histogram: np.ndarray

    def __post_init__(self):
        h = np.array(self.histogram, dtype=float)
        if h.ndim != 2 or h.shape[0] != 3:
            raise DescriptorError(f"descriptor must be (3, bins), got {h.shape}")
        h.setflags(write=False)
        object.__setattr__(self, "histogram", h)


def color_descriptor(patch, width: int | None = None, height: int | None = None) -> ColorDescriptor:
    """Histogram of an RGB8 patch.

    ``patch`` is either an (H, W, 3) uint8 array or a flat RGB8 byte buffer
    with explicit ``width`` and ``height``.
    """
    if isinstance(patch, (bytes, bytearray, memoryview)):
        if width is None or height is None:
            raise InvalidPatchError("raw buffers need width and height")
        arr = np.frombuffer(patch, dtype=np.uint8)
        if arr.size != width * height * 3:
            raise InvalidPatchError(f"buffer holds {arr.size} bytes, expected {width * height * 3}")
        arr = arr.reshape(height * width, 3)
    else:
        arr = np.asarray(patch)
        if arr.ndim != 3 or arr.shape[-1] != 3:
            raise InvalidPatchError(f"patch must be (H, W, 3), got {arr.shape}")
        arr = arr.reshape(-1, 3)
    if arr.shape[0] == 0:
        raise InvalidPatchError("empty patch")
    bins = arr.astype(np.int64) * N_BINS // 256
    hist = np.stack([np.bincount(bins[:, c], minlength=N_BINS) for c in range(3)]).astype(float)
    hist /= arr.shape[0]
    return ColorDescriptor(hist)


def descriptor_similarity(a: ColorDescriptor, b: ColorDescriptor) -> float:
    """Mean over channels of the histogram intersection."""
    if a.histogram.shape != b.histogram.shape:
        raise DescriptorError(f"bin layouts differ: {a.histogram.shape} vs {b.histogram.shape}")
    return float(np.minimum(a.histogram, b.histogram).sum(axis=1).mean())


def blend_descriptors(old: ColorDescriptor, new: ColorDescriptor, weight: float = 0.5) -> ColorDescriptor:
    return ColorDescriptor((1.0 - weight) * old.histogram + weight * new.histogram)


class Decision(str, enum.Enum):
    SINGLE = "Single"
    IOU_WIN = "IoUWin"
    COLOR_FALLBACK = "ColorFallback"


@dataclass(frozen=True)
class TrackState:
    last_box: BBox
    last_descriptor: ColorDescriptor | None = None
    frames_tracked: int = 0


class _Counter:
    # counts descriptor computations made by track_step
    def __init__(self):
        self.descriptors = 0


stats = _Counter()


def _rank_by_iou(ious: list[float], boxes: list[BBox], idx: list[int]) -> list[int]:
    # higher IoU, then higher score, then lower index
    return sorted(idx, key=lambda i: (-ious[i], -boxes[i].score, i))


def track_step(state: TrackState | None, boxes: list[BBox], patches=None,
               iou_gate: float = 0.2, tie_margin: float = 0.3,
               blend: float = 0.5) -> tuple[BBox, TrackState, Decision]:
    """Pick the subject among ``boxes`` for one frame.

    Args:
        state: previous tracker state; None starts a new track on the
            highest-scoring box.
        boxes: detections of this frame, at least one.
        patches: optional per-box RGB patches (arrays or (bytes, w, h)
            triples), only read when the color fallback is needed.

    Returns:
        (selected box, new state, decision).
    """
    if not boxes:
        raise TrackingLostError("no detections in frame")

    def descriptor(i: int) -> ColorDescriptor:
        stats.descriptors += 1
        p = patches[i]
        if isinstance(p, tuple):
            return color_descriptor(*p)
        return color_descriptor(p)

    if state is None:
        i = min(range(len(boxes)), key=lambda k: (-boxes[k].score, k))
        desc = descriptor(i) if patches is not None else None
        return boxes[i], TrackState(boxes[i], desc, 1), Decision.SINGLE

    n = len(boxes)
    if n == 1:
        return boxes[0], TrackState(boxes[0], state.last_descriptor, state.frames_tracked + 1), Decision.SINGLE

    ious = [iou(state.last_box, b) for b in boxes]
    candidates = _rank_by_iou(ious, boxes, [i for i in range(n) if ious[i] > iou_gate])
    chosen = None
    if len(candidates) == 1:
        chosen = candidates[0]
    elif len(candidates) > 1 and ious[candidates[0]] - ious[candidates[1]] >= tie_margin:
        chosen = candidates[0]
    if chosen is not None:
        new = TrackState(boxes[chosen], state.last_descriptor, state.frames_tracked + 1)
        return boxes[chosen], new, Decision.IOU_WIN

    if patches is None or state.last_descriptor is None:
        raise TrackingLostError("IoU is ambiguous and no color features are available")
    descs = [descriptor(i) for i in range(n)]
    sims = [descriptor_similarity(state.last_descriptor, d) for d in descs]
    chosen = min(range(n), key=lambda i: (-sims[i], -boxes[i].score, i))
    desc = blend_descriptors(state.last_descriptor, descs[chosen], blend)
    new = TrackState(boxes[chosen], desc, state.frames_tracked + 1)
    return boxes[chosen], new, Decision.COLOR_FALLBACK


class SubjectTracker:
    """Stateful wrapper, one per camera stream.

    The color descriptor is refreshed on IoU wins only when patches are
    supplied and ``refresh_descriptor`` is set; otherwise the fast path never
    touches pixels.
    """

    def __init__(self, iou_gate: float = 0.2, tie_margin: float = 0.3,
                 initial: BBox | None = None, refresh_descriptor: bool = False):
        self.iou_gate = iou_gate
        self.tie_margin = tie_margin
        self.refresh_descriptor = refresh_descriptor
        self.state = TrackState(initial) if initial is not None else None
        self.decisions: list[Decision] = []

    def update(self, boxes: list[BBox], patches=None) -> BBox:
        box, self.state, decision = track_step(self.state, boxes, patches,
                                               self.iou_gate, self.tie_margin)
        if patches is not None and decision is not Decision.COLOR_FALLBACK:
            # a descriptor is needed before the first ambiguous frame
            if self.refresh_descriptor or self.state.last_descriptor is None:
                i = next(k for k, b in enumerate(boxes) if b is box)
                p = patches[i]
                stats.descriptors += 1
                desc = color_descriptor(*p) if isinstance(p, tuple) else color_descriptor(p)
                self.state = TrackState(self.state.last_box, desc, self.state.frames_tracked)
        self.decisions.append(decision)
        return box
