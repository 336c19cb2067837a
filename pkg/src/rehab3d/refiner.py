"""Causal sliding-window temporal refiner with frame doubling.

Each of the 51 pose channels (17 joints x 3 axes) is fed independently
through one small channel-shared network::

    9 past values -> Linear(9, 64) -> LeakyReLU(0.1)
                  -> 2 x [h + Linear(LeakyReLU(Linear(h)))]
                  -> Linear(64, 2)

The two outputs are the intermediate pose half a frame before the current
one and the refined current pose, so every input frame after warm-up yields
two output poses. Gradients are written out by hand; training uses Adam.
"""
from __future__ import annotations

import json
import logging
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DatasetError, DivergenceError, ModelError
from .skeleton import Pose3D

log = logging.getLogger(__name__)

WINDOW = 9
OUTPUTS = 2
HIDDEN = 64
N_BLOCKS = 2
LEAK = 0.1
FORMAT_VERSION = 1


# ---------------------------------------------------------------------------
# sliding window

class PoseWindow:
    """Ring buffer of the current and preceding eight poses."""

    def __init__(self, size: int = WINDOW):
        self.size = size
        self.frames: deque[Pose3D] = deque(maxlen=size)
        self.gaps = 0

    def push(self, pose: Pose3D) -> bool:
        """Append ``pose``; returns True once the window is full.

        A frame-index jump empties the buffer first and counts a gap.
        """
        if self.frames and pose.frame_index != self.frames[-1].frame_index + 1:
            log.warning("frame gap %d -> %d, refiner window restarted",
                        self.frames[-1].frame_index, pose.frame_index)
            self.frames.clear()
            self.gaps += 1
        self.frames.append(pose)
        return self.ready

    @property
    def ready(self) -> bool:
        return len(self.frames) == self.size

    def channels(self) -> np.ndarray:
        """(51, 9) array, oldest frame first."""
        stack = np.stack([p.joints for p in self.frames])      # (9, 17, 3)
        return stack.reshape(len(self.frames), -1).T


def push_frame(window: PoseWindow, pose: Pose3D) -> bool:
    return window.push(pose)


# ---------------------------------------------------------------------------
# network

PARAM_SHAPES = {
    "W_in": (WINDOW, HIDDEN), "b_in": (HIDDEN,),
    **{f"{k}{i}": s for i in range(N_BLOCKS)
       for k, s in (("W1_", (HIDDEN, HIDDEN)), ("b1_", (HIDDEN,)),
                    ("W2_", (HIDDEN, HIDDEN)), ("b2_", (HIDDEN,)))},
    "W_out": (HIDDEN, OUTPUTS), "b_out": (OUTPUTS,),
}


@dataclass
class RefinerWeights:
    """Network parameters plus the fixed input normalization.

    With ``center`` set, each channel window is expressed relative to its
    current-frame value and multiplied by ``scale`` before entering the
    network; outputs are mapped back the same way.
    """

    params: dict[str, np.ndarray]
    center: bool = True
    scale: float = 10.0
    hidden: int = HIDDEN

    def __post_init__(self):
        shapes = param_shapes(self.hidden)
        if set(self.params) != set(shapes):
            raise ModelError(f"parameter set mismatch: {sorted(set(self.params) ^ set(shapes))}")
        for k, shape in shapes.items():
            arr = np.asarray(self.params[k], dtype=float)
            if arr.shape != shape:
                raise ModelError(f"{k}: shape {arr.shape}, expected {shape}")
            if not np.isfinite(arr).all():
                raise ModelError(f"{k}: non-finite parameters")
            self.params[k] = arr

    @classmethod
    def zeros(cls, center: bool = False, scale: float = 1.0, hidden: int = HIDDEN) -> "RefinerWeights":
        return cls({k: np.zeros(s) for k, s in param_shapes(hidden).items()}, center, scale, hidden)

    @classmethod
    def init(cls, rng: np.random.Generator | int = 0, center: bool = True, scale: float = 10.0,
             hidden: int = HIDDEN) -> "RefinerWeights":
        rng = np.random.default_rng(rng)
        p = {}
        for k, s in param_shapes(hidden).items():
            if k.startswith("b"):
                p[k] = np.zeros(s)
            elif k.startswith("W2_") or k == "W_out":
                p[k] = rng.normal(0.0, 0.1 / np.sqrt(s[0]), s)
            else:
                p[k] = rng.normal(0.0, np.sqrt(2.0 / s[0]), s)
        return cls(p, center, scale, hidden)

    def copy(self) -> "RefinerWeights":
        return RefinerWeights({k: v.copy() for k, v in self.params.items()},
                              self.center, self.scale, self.hidden)

    def to_json(self) -> dict:
        return {
            "format": "rehab3d-refiner",
            "version": FORMAT_VERSION,
            "window": WINDOW,
            "outputs": OUTPUTS,
            "hidden": self.hidden,
            "blocks": N_BLOCKS,
            "center": self.center,
            "scale": self.scale,
            "layers": {k: {"shape": list(v.shape), "values": v.reshape(-1).tolist()}
                       for k, v in self.params.items()},
        }

    @classmethod
    def from_json(cls, obj: dict) -> "RefinerWeights":
        if obj.get("version") != FORMAT_VERSION or obj.get("window") != WINDOW:
            raise ModelError(f"unsupported weights file (version {obj.get('version')})")
        params = {k: np.array(v["values"], dtype=float).reshape(v["shape"])
                  for k, v in obj["layers"].items()}
        return cls(params, bool(obj["center"]), float(obj["scale"]), int(obj["hidden"]))

    def save(self, path: str | Path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_json(), f)

    @classmethod
    def load(cls, path: str | Path) -> "RefinerWeights":
        with open(path) as f:
            return cls.from_json(json.load(f))


def param_shapes(hidden: int = HIDDEN) -> dict[str, tuple[int, ...]]:
    if hidden == HIDDEN:
        return dict(PARAM_SHAPES)
    return {k: tuple(hidden if d == HIDDEN else d for d in s) for k, s in PARAM_SHAPES.items()}


def _leaky(x):
    return np.maximum(x, LEAK * x)          # valid because 0 < LEAK < 1


def _leaky_grad(x):
    return np.where(x > 0, 1.0, LEAK)


def forward(params: dict[str, np.ndarray], x: np.ndarray, cache: bool = False):
    """Raw network on (N, 9) inputs -> (N, 2)."""
    z = x @ params["W_in"] + params["b_in"]
    h = _leaky(z)
    acts = [(x, z)]
    for i in range(N_BLOCKS):
        a = h @ params[f"W1_{i}"] + params[f"b1_{i}"]
        r = _leaky(a)
        acts.append((h, a, r))
        h = h + r @ params[f"W2_{i}"] + params[f"b2_{i}"]
    out = h @ params["W_out"] + params["b_out"]
    if cache:
        return out, (acts, h)
    return out


def backward(params: dict[str, np.ndarray], cached, d_out: np.ndarray) -> dict[str, np.ndarray]:
    acts, h_last = cached
    g = {"W_out": h_last.T @ d_out, "b_out": d_out.sum(axis=0)}
    dh = d_out @ params["W_out"].T
    for i in reversed(range(N_BLOCKS)):
        h, a, r = acts[i + 1]
        g[f"W2_{i}"] = r.T @ dh
        g[f"b2_{i}"] = dh.sum(axis=0)
        da = (dh @ params[f"W2_{i}"].T) * _leaky_grad(a)
        g[f"W1_{i}"] = h.T @ da
        g[f"b1_{i}"] = da.sum(axis=0)
        dh = dh + da @ params[f"W1_{i}"].T
    x, z = acts[0]
    dz = dh * _leaky_grad(z)
    g["W_in"] = x.T @ dz
    g["b_in"] = dz.sum(axis=0)
    return g


def _normalize(weights: RefinerWeights, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    ref = x[:, -1:] if weights.center else np.zeros((len(x), 1))
    return (x - ref) * weights.scale, ref


def predict(weights: RefinerWeights, x: np.ndarray) -> np.ndarray:
    """Map (N, 9) channel windows to (N, 2) outputs [intermediate, current]."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != WINDOW:
        raise ModelError(f"expected (N, {WINDOW}) windows, got {x.shape}")
    xn, ref = _normalize(weights, x)
    return forward(weights.params, xn) / weights.scale + ref


def refine(window: PoseWindow, weights: RefinerWeights) -> tuple[Pose3D, Pose3D]:
    """Return (refined current pose, intermediate pose).

    The intermediate pose sits half a frame period before the current one.
    """
    if not window.ready:
        raise ModelError("refiner window is not full")
    frames = list(window.frames)
    y = predict(weights, window.channels())                 # (51, 2)
    cur, prev = frames[-1], frames[-2]
    n = len(cur.joints)
    mid_t = 0.5 * (prev.timestamp + cur.timestamp)
    refined = Pose3D(y[:, 1].reshape(n, 3), cur.confidence, cur.frame_index, cur.timestamp)
    mid = Pose3D(y[:, 0].reshape(n, 3), np.minimum(prev.confidence, cur.confidence),
                 cur.frame_index, mid_t)
    return refined, mid


class StreamingRefiner:
    """Feed poses one by one; emits [intermediate, refined] per frame once warm."""

    def __init__(self, weights: RefinerWeights):
        self.weights = weights
        self.window = PoseWindow()

    def push(self, pose: Pose3D) -> list[Pose3D]:
        if not self.window.push(pose):
            return []
        refined, mid = refine(self.window, self.weights)
        return [mid, refined]


# ---------------------------------------------------------------------------
# loss

@dataclass
class RefinerHyperparams:
    alpha_loss: float = 0.5
    learning_rate: float = 1e-3
    epochs: int = 200
    batch_size: int = 64
    window: int = WINDOW
    outputs: int = OUTPUTS
    velocity_form: str = "difference"     # or "product" (literal |dG|*|dY|)
    seed: int = 0
    center: bool = True
    scale: float = 10.0
    hidden: int = HIDDEN

    def __post_init__(self):
        if not 0.0 <= self.alpha_loss <= 1.0:
            raise ConfigError("alpha_loss must lie in [0, 1]")
        if self.window != WINDOW or self.outputs != OUTPUTS:
            raise ConfigError(f"window/outputs are fixed at {WINDOW}/{OUTPUTS}")
        if self.velocity_form not in ("difference", "product"):
            raise ConfigError(f"unknown velocity_form {self.velocity_form!r}")
        if self.epochs < 1 or self.batch_size < 1 or self.learning_rate <= 0:
            raise ConfigError("epochs, batch_size and learning_rate must be positive")


def _loss_and_grad(pred, gt, prev_gt, prev_pred, alpha, velocity_form="difference"):
    # pred, gt: (N, 2); prev_*: (N,). Returns loss and dL/dpred.
    n_elem = pred.size
    diff = pred - gt
    l_pos = np.abs(diff).sum() / n_elem
    d_pos = np.sign(diff) / n_elem

    g_prev = np.concatenate([prev_gt[:, None], gt[:, :-1]], axis=1)
    y_prev = np.concatenate([prev_pred[:, None], pred[:, :-1]], axis=1)
    dg = gt - g_prev
    dy = pred - y_prev
    if velocity_form == "difference":
        e = dy - dg
        l_vel = np.abs(e).sum() / n_elem
        s = np.sign(e) / n_elem
    else:
        l_vel = (np.abs(dg) * np.abs(dy)).sum() / n_elem
        s = np.abs(dg) * np.sign(dy) / n_elem
    # dy_t = pred_t - pred_{t-1}: pred_t gets +s_t and -s_{t+1}
    d_vel = s.copy()
    d_vel[:, :-1] -= s[:, 1:]
    loss = alpha * l_pos + (1.0 - alpha) * l_vel
    return loss, alpha * d_pos + (1.0 - alpha) * d_vel


def loss_total(pred, gt, prev_gt, prev_pred, alpha_loss: float = 0.5,
               velocity_form: str = "difference") -> float:
    """Position + velocity L1 loss over T=2 output frames.

    Args:
        pred, gt: (..., 2, C) or (2, C) arrays, frames in temporal order.
        prev_gt, prev_pred: (..., C) frame preceding the first output.
    """
    pred = np.asarray(pred, dtype=float)
    gt = np.asarray(gt, dtype=float)
    prev_gt = np.asarray(prev_gt, dtype=float)
    prev_pred = np.asarray(prev_pred, dtype=float)
    if pred.shape != gt.shape or prev_gt.shape != prev_pred.shape or pred.shape[:-2] + pred.shape[-1:] != prev_gt.shape:
        raise ModelError(f"loss shape mismatch: pred {pred.shape}, gt {gt.shape}, prev {prev_gt.shape}")
    if not 0.0 <= alpha_loss <= 1.0:
        raise ConfigError("alpha_loss must lie in [0, 1]")
    T = pred.shape[-2]
    p = np.moveaxis(pred, -2, -1).reshape(-1, T)
    g = np.moveaxis(gt, -2, -1).reshape(-1, T)
    loss, _ = _loss_and_grad(p, g, prev_gt.reshape(-1), prev_pred.reshape(-1), alpha_loss, velocity_form)
    return float(loss)


# ---------------------------------------------------------------------------
# training

@dataclass
class TrainingSet:
    """Flattened channel windows ready for minibatching.

    Each sample is one pose window (51 channels) at frame ``t`` with its
    predecessor window at ``t - 1``.
    """

    x: np.ndarray          # (S, 51, 9) noisy windows ending at t
    x_prev: np.ndarray     # (S, 51, 9) noisy windows ending at t - 1
    target: np.ndarray     # (S, 51, 2) clean [mid(t), clean(t)]
    prev_gt: np.ndarray    # (S, 51) clean(t - 1)


def build_training_set(trajectories) -> TrainingSet:
    """Turn (clean, noisy[, clean_mid]) sequences into windows.

    ``clean`` and ``noisy`` are (T, J, 3); ``clean_mid[t]`` is the clean pose
    half a frame before ``t`` and defaults to the midpoint of clean t-1 and t.
    """
    xs, xps, ts, pgs = [], [], [], []
    for item in trajectories:
        clean, noisy = np.asarray(item[0], float), np.asarray(item[1], float)
        if clean.shape != noisy.shape or clean.ndim != 3:
            raise DatasetError(f"clean/noisy shapes differ: {clean.shape} vs {noisy.shape}")
        T = len(clean)
        if T < WINDOW + 1:
            raise DatasetError(f"trajectory of {T} frames is shorter than {WINDOW + 1}")
        mid = np.asarray(item[2], float) if len(item) > 2 and item[2] is not None else None
        if mid is None:
            mid = np.concatenate([clean[:1], 0.5 * (clean[1:] + clean[:-1])])
        c = clean.reshape(T, -1)
        nz = noisy.reshape(T, -1)
        m = mid.reshape(T, -1)
        win = np.lib.stride_tricks.sliding_window_view(nz, WINDOW, axis=0)   # (T-8, C, 9)
        t_idx = np.arange(WINDOW, T)
        xs.append(win[t_idx - WINDOW + 1])
        xps.append(win[t_idx - WINDOW])
        ts.append(np.stack([m[t_idx], c[t_idx]], axis=-1))
        pgs.append(c[t_idx - 1])
    return TrainingSet(np.concatenate(xs), np.concatenate(xps), np.concatenate(ts), np.concatenate(pgs))


def batch_loss_grad(weights: RefinerWeights, x, x_prev, target, prev_gt, alpha, velocity_form="difference"):
    """Loss and parameter gradients for a batch of channel windows (N, 9)."""
    p = weights.params
    xn, ref = _normalize(weights, x)
    out, cache = forward(p, xn, cache=True)
    pred = out / weights.scale + ref
    prev_pred = predict(weights, x_prev)[:, 1]           # treated as constant
    loss, d_pred = _loss_and_grad(pred, target, prev_gt, prev_pred, alpha, velocity_form)
    grads = backward(p, cache, d_pred / weights.scale)
    return loss, grads


@dataclass
class TrainResult:
    weights: RefinerWeights
    loss_curve: list[float] = field(default_factory=list)

    def write_curve(self, path: str | Path) -> None:
        with open(path, "w") as f:
            f.write("epoch,loss\n")
            for i, v in enumerate(self.loss_curve):
                f.write(f"{i},{v!r}\n")


class Adam:
    def __init__(self, params: dict[str, np.ndarray], lr=1e-3, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, g in grads.items():
            self.m[k] = self.b1 * self.m[k] + (1.0 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1.0 - self.b2) * g * g
            params[k] -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def _epoch_loss(weights, data: TrainingSet, hp: RefinerHyperparams) -> float:
    C = data.x.shape[1]
    return batch_loss_grad(weights, data.x.reshape(-1, WINDOW), data.x_prev.reshape(-1, WINDOW),
                           data.target.reshape(-1, OUTPUTS), data.prev_gt.reshape(-1),
                           hp.alpha_loss, hp.velocity_form)[0] if C else 0.0


def train(trajectories, hp: RefinerHyperparams = RefinerHyperparams(),
          init: RefinerWeights | None = None) -> TrainResult:
    """Fit the refiner with Adam on minibatches of pose windows.

    ``loss_curve[0]`` is the dataset loss before training; each later entry
    is the sample-weighted mean minibatch loss of one epoch.
    """
    data = trajectories if isinstance(trajectories, TrainingSet) else build_training_set(trajectories)
    rng = np.random.default_rng(hp.seed)
    weights = init.copy() if init is not None else RefinerWeights.init(rng, hp.center, hp.scale, hp.hidden)
    opt = Adam(weights.params, hp.learning_rate)
    curve = [_epoch_loss(weights, data, hp)]
    n = len(data.x)
    for epoch in range(hp.epochs):
        order = rng.permutation(n)
        batch_losses = []
        for start in range(0, n, hp.batch_size):
            idx = order[start:start + hp.batch_size]
            loss, grads = batch_loss_grad(
                weights, data.x[idx].reshape(-1, WINDOW), data.x_prev[idx].reshape(-1, WINDOW),
                data.target[idx].reshape(-1, OUTPUTS), data.prev_gt[idx].reshape(-1),
                hp.alpha_loss, hp.velocity_form)
            opt.step(weights.params, grads)
            batch_losses.append(loss * len(idx))
        loss = float(np.sum(batch_losses) / n)
        curve.append(loss)
        if not np.isfinite(loss) or loss > 10.0 * curve[0]:
            raise DivergenceError(f"loss diverged at epoch {epoch}: {loss} (initial {curve[0]})")
        log.debug("epoch %d loss %.6g", epoch, loss)
    return TrainResult(weights, curve)


def refine_sequence(poses: list[Pose3D], weights: RefinerWeights) -> list[Pose3D]:
    """Run the streaming refiner over a pose sequence; returns all emitted poses."""
    s = StreamingRefiner(weights)
    out = []
    for p in poses:
        out += s.push(p)
    return out
