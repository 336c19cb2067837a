"""Synthetic ground truth: camera rigs, articulated motion, 2D observations,
heatmaps and detection scenarios.

The world frame is right-handed and z-up with the subject's pelvis near the
origin (feet around z = -0.9 m). The subject faces +x, its left side is +y.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .camera import CameraView, look_at, rodrigues_rotation
from .errors import ConfigError, Rehab3DError
from .heatmap import DEFAULT_ALPHA, crop_coords
from .skeleton import H36M, NUM_JOINTS, Pose2D, Pose3D, Skeleton
from .tracker import BBox

# parent -> joint offsets of the rest pose (arms hanging), meters
REST_OFFSETS = np.array([
    [0.0, 0.0, 0.0],        # pelvis
    [0.0, -0.12, 0.0],      # r_hip
    [0.0, 0.0, -0.44],      # r_knee
    [0.0, 0.0, -0.44],      # r_ankle
    [0.0, 0.12, 0.0],       # l_hip
    [0.0, 0.0, -0.44],      # l_knee
    [0.0, 0.0, -0.44],      # l_ankle
    [0.0, 0.0, 0.23],       # spine
    [0.0, 0.0, 0.25],       # thorax
    [0.03, 0.0, 0.10],      # neck
    [0.0, 0.0, 0.12],       # head
    [0.0, 0.16, -0.02],     # l_shoulder
    [0.0, 0.0, -0.28],      # l_elbow
    [0.0, 0.0, -0.25],      # l_wrist
    [0.0, -0.16, -0.02],    # r_shoulder
    [0.0, 0.0, -0.28],      # r_elbow
    [0.0, 0.0, -0.25],      # r_wrist
])

_X = np.array([1.0, 0.0, 0.0])
_Y = np.array([0.0, 1.0, 0.0])
_Z = np.array([0.0, 0.0, 1.0])


def _rot(axis, angle) -> np.ndarray:
    return rodrigues_rotation(axis, float(angle))


# ---------------------------------------------------------------------------
# cameras

def make_rig(n_cameras: int = 4, radius: float = 3.0, height: float = 0.0,
             focal: float = 1000.0, image_size: tuple[int, int] = (1280, 1280),
             target=(0.0, 0.0, 0.0), start_angle: float = np.pi / 4) -> list[CameraView]:
    """Cameras evenly spaced on a circle, all looking at ``target``."""
    if n_cameras < 2:
        raise ConfigError(f"a rig needs at least two cameras, got {n_cameras}")
    w, h = image_size
    K = np.array([[focal, 0.0, w / 2.0], [0.0, focal, h / 2.0], [0.0, 0.0, 1.0]])
    cams = []
    for i in range(n_cameras):
        phi = start_angle + 2.0 * np.pi * i / n_cameras
        center = np.array([radius * np.cos(phi), radius * np.sin(phi), height])
        R, t = look_at(center, target)
        cams.append(CameraView(f"cam{i}", K, R, t, image_size))
    return cams


# ---------------------------------------------------------------------------
# motion

class MotionKind(str, enum.Enum):
    WALK = "walk"
    SQUAT = "squat"
    ARM_RAISE = "arm_raise"
    LEG_FOLD = "leg_fold"


DEFAULT_PERIODS = {MotionKind.WALK: 1.2, MotionKind.SQUAT: 3.0,
                   MotionKind.ARM_RAISE: 3.0, MotionKind.LEG_FOLD: 3.0}


def forward_kinematics(local_rots: np.ndarray, root_pos: np.ndarray, root_rot: np.ndarray,
                       skel: Skeleton = H36M, offsets: np.ndarray = REST_OFFSETS) -> np.ndarray:
    """Joint positions from per-joint local rotations (J, 3, 3).

    ``local_rots[j]`` rotates the subtree below joint ``j``.
    """
    n = skel.num_joints
    pos = np.zeros((n, 3))
    glob = np.zeros((n, 3, 3))
    pos[0] = root_pos
    glob[0] = root_rot @ local_rots[0]
    for j in range(1, n):
        p = skel.parents[j]
        pos[j] = pos[p] + glob[p] @ offsets[j]
        glob[j] = glob[p] @ local_rots[j]
    return pos


def _pose_at(kind: MotionKind, t: float, period: float, amp: float, phase: float,
             heading: float) -> np.ndarray:
    w = 2.0 * np.pi / period
    rots = np.tile(np.eye(3), (NUM_JOINTS, 1, 1))
    root = np.zeros(3)
    if kind is MotionKind.WALK:
        swing = amp * np.radians(25.0) * np.sin(w * t + phase)
        rots[1] = _rot(_Y, -swing)
        rots[4] = _rot(_Y, swing)
        rots[2] = _rot(_Y, amp * np.radians(30.0) * max(0.0, np.sin(w * t + phase + np.pi / 2)))
        rots[5] = _rot(_Y, amp * np.radians(30.0) * max(0.0, -np.sin(w * t + phase + np.pi / 2)))
        rots[11] = _rot(_Y, -swing * 0.8)
        rots[14] = _rot(_Y, swing * 0.8)
        rots[12] = _rot(_Y, -np.radians(15.0))
        rots[15] = _rot(_Y, -np.radians(15.0))
        root = np.array([0.3 * np.sin(w * t / 4.0 + phase), 0.0,
                         0.02 * np.cos(2.0 * w * t + 2.0 * phase)])
    elif kind is MotionKind.SQUAT:
        th = amp * np.radians(60.0) * 0.5 * (1.0 - np.cos(w * t + phase))
        for hip, knee in ((1, 2), (4, 5)):
            rots[hip] = _rot(_Y, -th)
            rots[knee] = _rot(_Y, 2.0 * th)
            # rots[ankle] stays identity
        rots[7] = _rot(_Y, th / 2.0)
        rots[11] = _rot(_Y, -th)
        rots[14] = _rot(_Y, -th)
        root = np.array([0.0, 0.0, -0.88 * (1.0 - np.cos(th))])
    elif kind is MotionKind.ARM_RAISE:
        a = amp * np.radians(150.0) * 0.5 * (1.0 - np.cos(w * t + phase))
        rots[11] = _rot(_X, a)
        rots[14] = _rot(_X, -a)
        rots[12] = _rot(_X, 0.2 * a)
        rots[15] = _rot(_X, -0.2 * a)
    elif kind is MotionKind.LEG_FOLD:
        s = 0.5 * (1.0 - np.cos(w * t + phase))
        th = amp * np.radians(70.0) * s
        rots[4] = _rot(_Y, -th) @ _rot(_X, -amp * np.radians(20.0) * s)
        rots[5] = _rot(_Y, 1.6 * th)
        rots[11] = _rot(_X, np.radians(20.0) * s)
        rots[14] = _rot(_X, -np.radians(20.0) * s)
    return forward_kinematics(rots, root, _rot(_Z, heading))


def synth_motion(skel: Skeleton = H36M, seconds: float = 2.0, fps: float = 50.0,
                 kind: str | MotionKind = MotionKind.WALK, period: float | None = None,
                 seed: int = 0, start_frame: int = 0, time_offset: float = 0.0) -> list[Pose3D]:
    """Parametric motion of the 17-joint rig.

    Amplitude, phase and heading are jittered by ``seed``. ``period`` sets
    the tempo in seconds per cycle.
    """
    if seconds <= 0 or fps <= 0:
        raise ConfigError("seconds and fps must be positive")
    try:
        kind = MotionKind(kind)
    except ValueError:
        raise ConfigError(f"unknown motion kind {kind!r}") from None
    if skel.parents != H36M.parents:
        raise ConfigError("synthetic motion is defined for the 17-joint H36M topology")
    rng = np.random.default_rng(seed)
    amp = rng.uniform(0.85, 1.0)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    heading = rng.uniform(-0.3, 0.3)
    period = period or DEFAULT_PERIODS[kind] * rng.uniform(0.9, 1.1)
    n = int(round(seconds * fps))
    out = []
    for k in range(n):
        t = time_offset + k / fps
        out.append(Pose3D(_pose_at(kind, t, period, amp, phase, heading),
                          frame_index=start_frame + k, timestamp=t))
    return out


def motion_array(poses: list[Pose3D]) -> np.ndarray:
    return np.stack([p.joints for p in poses])


# ---------------------------------------------------------------------------
# scene

@dataclass
class NoiseConfig:
    pixel_sigma: float = 0.0
    heatmap_sigma: float = 1.5
    occlusion_prob: float | dict[str, float] = 0.0

    def occlusion_for(self, cam_id: str) -> float:
        if isinstance(self.occlusion_prob, dict):
            return float(self.occlusion_prob.get(cam_id, 0.0))
        return float(self.occlusion_prob)


@dataclass
class DistractorTrack:
    """A non-subject person box moving linearly in image space.

    ``start``/``end`` are box centers (u, v) in pixels for frame 0 and the
    last frame; ``size`` is (w, h) in pixels. None uses the subject's size.
    """

    start: tuple[float, float]
    end: tuple[float, float]
    size: tuple[float, float] | None = None
    color: tuple[int, int, int] = (40, 60, 200)
    score: float = 0.9


@dataclass
class SynthScene:
    cameras: list[CameraView]
    gt: list[Pose3D]
    fps: float = 50.0
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    distractors: dict[str, list[DistractorTrack]] = field(default_factory=dict)
    seed: int = 0


def in_image_fraction(cams: list[CameraView], poses: list[Pose3D]) -> float:
    """Fraction of frames whose joints all project inside every image."""
    J = motion_array(poses)
    ok = np.ones(len(J), dtype=bool)
    for c in cams:
        X = J.reshape(-1, 3)
        depth = X @ c.R[2] + c.t[2]
        p = X @ c.P[:, :3].T + c.P[:, 3]
        uv = (p[:, :2] / np.where(depth[:, None] > 0, p[:, 2:3], np.nan)).reshape(len(J), -1, 2)
        w, h = c.image_size
        inside = (uv[..., 0] >= 0) & (uv[..., 0] < w) & (uv[..., 1] >= 0) & (uv[..., 1] < h)
        ok &= inside.all(axis=1)
    return float(ok.mean())


def make_scene(n_cameras: int = 4, seconds: float = 2.0, fps: float = 50.0,
               kind: str = "walk", seed: int = 0, noise: NoiseConfig | None = None,
               radius: float = 3.0, focal: float = 1000.0,
               image_size: tuple[int, int] = (1280, 1280), period: float | None = None,
               min_visible: float = 0.95) -> SynthScene:
    """Rig + motion; regenerates with derived seeds until the subject stays in view."""
    cams = make_rig(n_cameras, radius, focal=focal, image_size=image_size)
    for attempt in range(10):
        gt = synth_motion(H36M, seconds, fps, kind, period, seed + 1000 * attempt)
        if in_image_fraction(cams, gt) >= min_visible:
            return SynthScene(cams, gt, fps, noise or NoiseConfig(), {}, seed)
    raise Rehab3DError("could not keep the subject inside the images; enlarge images or radius")


# ---------------------------------------------------------------------------
# observations

def _project_all(cam: CameraView, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    depth = X @ cam.R[2] + cam.t[2]
    p = X @ cam.P[:, :3].T + cam.P[:, 3]
    with np.errstate(divide="ignore", invalid="ignore"):
        uv = p[..., :2] / p[..., 2:3]
    return uv, depth > 0


def observe(scene: SynthScene, pixel_sigma: float | None = None) -> dict[str, list[Pose2D]]:
    """Per-camera 2D keypoints for every frame.

    Noise and occlusion are drawn from a generator seeded by the scene seed,
    so identical scenes give identical observations.
    """
    sigma = scene.noise.pixel_sigma if pixel_sigma is None else pixel_sigma
    rng = np.random.default_rng([scene.seed, 1])
    J = motion_array(scene.gt)                        # (F, 17, 3)
    out = {}
    for cam in scene.cameras:
        uv, front = _project_all(cam, J)
        noise = rng.normal(0.0, 1.0, uv.shape) * sigma if sigma > 0 else 0.0
        occl = rng.random(front.shape) < scene.noise.occlusion_for(cam.id)
        conf = np.where(front & ~occl, 1.0, 0.0)
        uv = np.where(front[..., None], uv + noise, 0.0)
        out[cam.id] = [Pose2D(uv[f], conf[f], cam.id, scene.gt[f].frame_index)
                       for f in range(len(J))]
    return out


def subject_box(uv: np.ndarray, pad: float = 0.25, score: float = 0.95) -> BBox:
    """Joint bounding rectangle grown by ``pad`` of its size on every side."""
    lo, hi = uv.min(axis=0), uv.max(axis=0)
    size = np.maximum(hi - lo, 1.0)
    lo = lo - pad * size
    hi = hi + pad * size
    return BBox(float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1]), score)


def render_heatmaps(uv_crop: np.ndarray, size: tuple[int, int] = (32, 32), sigma: float = 2.0,
                    alpha: float = DEFAULT_ALPHA) -> np.ndarray:
    """(J, H, W) heatmaps whose spatial softmax at ``alpha`` is a Gaussian bump.

    Values are log-Gaussian logits ``-d^2 / (2 sigma^2 alpha)``: a unit-peak
    Gaussian decoded through a sharp softmax would be pulled toward the
    nearest cell center by up to ~0.2 px.
    """
    w, h = size
    v, u = np.mgrid[0:h, 0:w]
    uv_crop = np.asarray(uv_crop, dtype=float)
    d2 = (u[None] - uv_crop[:, 0, None, None]) ** 2 + (v[None] - uv_crop[:, 1, None, None]) ** 2
    return -d2 / (2.0 * sigma * sigma * alpha)


def gaussian_heatmaps(uv: np.ndarray, size: tuple[int, int], sigma: float = 2.0) -> np.ndarray:
    """Classic unit-peak Gaussian bumps, as a heatmap regressor would emit."""
    w, h = size
    v, u = np.mgrid[0:h, 0:w]
    uv = np.asarray(uv, dtype=float)
    d2 = (u[None] - uv[:, 0, None, None]) ** 2 + (v[None] - uv[:, 1, None, None]) ** 2
    return np.exp(-d2 / (2.0 * sigma * sigma))


def observe_heatmaps(scene: SynthScene, size: tuple[int, int] = (32, 32),
                     alpha: float = DEFAULT_ALPHA, pixel_sigma: float | None = None):
    """Per camera: list of (frame, subject box, (17, H, W) crop heatmaps)."""
    views = observe(scene, pixel_sigma)
    clean = observe(scene, 0.0)
    out = {}
    for cam in scene.cameras:
        frames = []
        for pose, ref in zip(views[cam.id], clean[cam.id]):
            box = subject_box(ref.joints)
            hm = render_heatmaps(crop_coords(pose.joints, box, size), size,
                                 scene.noise.heatmap_sigma, alpha)
            frames.append((pose.frame_index, box, hm))
        out[cam.id] = frames
    return out


# ---------------------------------------------------------------------------
# detections and tracking scenarios

SUBJECT_COLOR = (200, 50, 40)
PATCH_SIZE = (16, 32)


def make_patch(color, rng: np.random.Generator, size=PATCH_SIZE, jitter: int = 12) -> np.ndarray:
    w, h = size
    base = np.asarray(color, dtype=np.int64)
    noise = rng.integers(-jitter, jitter + 1, (h, w, 3))
    return np.clip(base + noise, 0, 255).astype(np.uint8)


@dataclass
class DetectionFrame:
    frame_index: int
    boxes: list[BBox]
    patches: list[np.ndarray]
    identities: list[str]

    @property
    def subject_index(self) -> int:
        return self.identities.index("subject")


def _box_at(center, size, score) -> BBox:
    cx, cy = center
    w, h = size
    return BBox(cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2, score)


def synth_detections(scene: SynthScene, seed: int | None = None) -> dict[str, list[DetectionFrame]]:
    """Subject box from the projected ground truth plus configured distractors."""
    rng = np.random.default_rng([scene.seed if seed is None else seed, 2])
    clean = observe(scene, 0.0)
    out = {}
    for cam in scene.cameras:
        frames = []
        tracks = scene.distractors.get(cam.id, [])
        n = len(scene.gt)
        for k, pose in enumerate(clean[cam.id]):
            sb = subject_box(pose.joints)
            boxes, patches, ids = [sb], [make_patch(SUBJECT_COLOR, rng)], ["subject"]
            for i, tr in enumerate(tracks):
                s = k / max(n - 1, 1)
                c = (1 - s) * np.asarray(tr.start) + s * np.asarray(tr.end)
                size = tr.size or (sb.x2 - sb.x1, sb.y2 - sb.y1)
                boxes.append(_box_at(c, size, tr.score))
                patches.append(make_patch(tr.color, rng))
                ids.append(f"distractor{i}")
            frames.append(DetectionFrame(pose.frame_index, boxes, patches, ids))
        out[cam.id] = frames
    return out


class Scenario(str, enum.Enum):
    SINGLE = "single"          # n = 1
    ONE_CANDIDATE = "m1"       # distractor far away, one IoU candidate
    TIE = "tie"                # distractor crosses the subject, near-equal IoU
    JUMP = "m0"                # subject teleports, no IoU candidate


DISTRACTOR_COLORS = ((40, 60, 200), (40, 190, 60), (220, 220, 60), (120, 40, 160))


def tracking_scenario(kind: str | Scenario, n_frames: int = 60, seed: int = 0,
                      n_distractors: int = 2) -> list[DetectionFrame]:
    """Image-space detection sequences exercising each tracker branch.

    Boxes are listed in shuffled order so the subject's position in the list
    carries no information.
    """
    kind = Scenario(kind)
    rng = np.random.default_rng(seed)
    size = np.array([rng.uniform(120, 180), rng.uniform(280, 360)])
    start = np.array([rng.uniform(300, 400), rng.uniform(450, 550)])
    vel = rng.uniform(-1.5, 1.5, 2)
    frames = []
    jump_at = n_frames // 2
    for k in range(n_frames):
        c = start + vel * k
        if kind is Scenario.JUMP and k >= jump_at:
            c = c + np.array([600.0, 0.0])
        entries = [("subject", _box_at(c, size, 0.95), SUBJECT_COLOR)]
        if kind is Scenario.ONE_CANDIDATE:
            for i in range(n_distractors):
                dc = np.array([900.0 + 200 * i, 500.0 + rng.uniform(-5, 5)])
                entries.append((f"distractor{i}", _box_at(dc, size, 0.9), DISTRACTOR_COLORS[i]))
        elif kind is Scenario.TIE:
            # crossing: passes over the subject around the middle of the sequence
            s = k / max(n_frames - 1, 1)
            dc = np.array([start[0] - 150 + 300 * s, c[1] + 10.0])
            entries.append(("distractor0", _box_at(dc, size * 1.02, 0.9), DISTRACTOR_COLORS[0]))
            for i in range(1, n_distractors):
                dc = np.array([1000.0 + 100 * i, 400.0])
                entries.append((f"distractor{i}", _box_at(dc, size, 0.85), DISTRACTOR_COLORS[i]))
        elif kind is Scenario.JUMP:
            for i in range(n_distractors):
                dc = np.array([start[0] - 250 - 150 * i, 150.0 + 30 * i])
                entries.append((f"distractor{i}", _box_at(dc, size * 0.8, 0.9), DISTRACTOR_COLORS[i]))
        order = rng.permutation(len(entries)) if k > 0 else np.arange(len(entries))
        entries = [entries[i] for i in order]
        frames.append(DetectionFrame(
            k, [e[1] for e in entries], [make_patch(e[2], rng) for e in entries],
            [e[0] for e in entries]))
    return frames
