"""FABRIK (Forward And Backward Reaching Inverse Kinematics).

Single chains are solved by :func:`solve`; a full-body rig is a list of
chains solved root-outward, each anchored at its parent chain's solved joint.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ChainError

PERTURB = np.array([1e-9, 0.0, 0.0])


class IkStatus(str, enum.Enum):
    REACHED = "Reached"
    UNREACHABLE = "Unreachable"
    MAX_ITERATIONS = "MaxIterations"


@dataclass(frozen=True, eq=False)
class Chain:
    """Joint chain p_1..p_n with root anchor b and optional cone limits.

    ``limits[i]`` bounds the angle (radians) between segment i and segment
    i-1, for i = 1..n-2; ``None`` entries are unconstrained.
    """

    positions: np.ndarray
    lengths: np.ndarray | None = None
    root_anchor: np.ndarray | None = None
    limits: tuple[float | None, ...] | None = None

    def __post_init__(self):
        p = np.array(self.positions, dtype=float)
        if p.ndim != 2 or p.shape[1] != 3 or len(p) < 2:
            raise ChainError(f"chain needs >= 2 joints as (n, 3), got {p.shape}")
        rest = np.linalg.norm(np.diff(p, axis=0), axis=1)
        d = rest if self.lengths is None else np.array(self.lengths, dtype=float)
        if d.shape != (len(p) - 1,) or np.any(d <= 0) or not np.isfinite(d).all():
            raise ChainError("segment lengths must be positive, one per segment")
        if not np.allclose(d, rest, rtol=0, atol=1e-9 * max(1.0, d.max())):
            raise ChainError("positions do not match segment lengths")
        b = p[0].copy() if self.root_anchor is None else np.array(self.root_anchor, dtype=float)
        if self.limits is not None and len(self.limits) != len(p):
            raise ChainError("limits need one entry per joint")
        object.__setattr__(self, "positions", p)
        object.__setattr__(self, "lengths", d)
        object.__setattr__(self, "root_anchor", b)

    @property
    def n(self) -> int:
        return len(self.positions)

    @property
    def reach(self) -> float:
        return float(self.lengths.sum())


@dataclass(eq=False)
class IkSolution:
    positions: np.ndarray
    iterations: int
    error: float
    status: IkStatus
    history: list[float] = field(default_factory=list)


def reachable(chain: Chain, target) -> tuple[bool, float]:
    dist = float(np.linalg.norm(chain.root_anchor - np.asarray(target, dtype=float)))
    return dist <= chain.reach, dist


def _place(anchor: np.ndarray, toward: np.ndarray, length: float) -> np.ndarray:
    # point at `length` from anchor along anchor->toward:
    # (1 - lam) * anchor + lam * toward with lam = length / r
    r = np.linalg.norm(toward - anchor)
    if r == 0.0:
        toward = toward + PERTURB
        r = np.linalg.norm(toward - anchor)
    lam = length / r
    return (1.0 - lam) * anchor + lam * toward


def stretch_toward(chain: Chain, target) -> np.ndarray:
    """Lay the chain straight from the root anchor toward an unreachable target."""
    t = np.asarray(target, dtype=float)
    p = chain.positions.copy()
    p[0] = chain.root_anchor
    for i in range(chain.n - 1):
        r = np.linalg.norm(t - p[i])
        if r == 0.0:
            raise ChainError("target coincides with a chain joint")
        lam = chain.lengths[i] / r
        p[i + 1] = (1.0 - lam) * p[i] + lam * t
    return p


def forward_reach(positions: np.ndarray, lengths: np.ndarray, target) -> np.ndarray:
    """End effector to the target, then pull each joint back toward its child."""
    p = np.array(positions, dtype=float)
    p[-1] = target
    for i in range(len(p) - 2, -1, -1):
        p[i] = _place(p[i + 1], p[i], lengths[i])
    return p


def backward_reach(positions: np.ndarray, lengths: np.ndarray, root_anchor) -> np.ndarray:
    """Root to its anchor, then push each joint out from its parent."""
    p = np.array(positions, dtype=float)
    p[0] = root_anchor
    for i in range(len(p) - 1):
        p[i + 1] = _place(p[i], p[i + 1], lengths[i])
    return p


def _rotate_toward(v: np.ndarray, axis_dir: np.ndarray, max_angle: float) -> np.ndarray:
    # clamp direction v to lie within max_angle of axis_dir; keeps |v|
    n = np.linalg.norm(v)
    a = axis_dir / np.linalg.norm(axis_dir)
    u = v / n
    cos = np.clip(u @ a, -1.0, 1.0)
    if np.arccos(cos) <= max_angle:
        return v
    perp = u - cos * a
    pn = np.linalg.norm(perp)
    if pn < 1e-12:
        perp = np.cross(a, [1.0, 0.0, 0.0])
        if np.linalg.norm(perp) < 1e-6:
            perp = np.cross(a, [0.0, 1.0, 0.0])
        pn = np.linalg.norm(perp)
    perp /= pn
    return n * (np.cos(max_angle) * a + np.sin(max_angle) * perp)


def apply_limits(positions: np.ndarray, limits) -> np.ndarray:
    """Project segments root-outward into their cone limits (lengths kept)."""
    if limits is None:
        return positions
    p = positions.copy()
    for i in range(1, len(p) - 1):
        lim = limits[i]
        if lim is None:
            continue
        seg = p[i + 1] - p[i]
        new = _rotate_toward(seg, p[i] - p[i - 1], lim)
        if new is not seg:
            shift = p[i] + new - p[i + 1]
            p[i + 1:] += shift
    return p


def solve(chain: Chain, target, tol: float = 0.01, max_iter: int = 20,
          record: bool = False) -> IkSolution:
    """Drive the chain's end effector to ``target``.

    ``history`` (when ``record``) holds the end-effector error after every
    full forward+backward iteration, starting with the initial error.
    """
    t = np.asarray(target, dtype=float)
    if t.shape != (3,) or not np.isfinite(t).all():
        raise ChainError(f"target must be a finite 3-vector, got {t}")
    ok, _ = reachable(chain, t)
    if not ok:
        p = stretch_toward(chain, t)
        return IkSolution(p, 0, float(np.linalg.norm(p[-1] - t)), IkStatus.UNREACHABLE)

    p = chain.positions.copy()
    if not np.array_equal(p[0], chain.root_anchor):
        p = backward_reach(p, chain.lengths, chain.root_anchor)
        p = apply_limits(p, chain.limits)
    err = float(np.linalg.norm(p[-1] - t))
    history = [err] if record else []
    it = 0
    while err > tol and it < max_iter:
        p = forward_reach(p, chain.lengths, t)
        p = apply_limits(p, chain.limits)
        p = backward_reach(p, chain.lengths, chain.root_anchor)
        p = apply_limits(p, chain.limits)
        it += 1
        err = float(np.linalg.norm(p[-1] - t))
        if record:
            history.append(err)
    status = IkStatus.REACHED if err <= tol else IkStatus.MAX_ITERATIONS
    return IkSolution(p, it, err, status, history)


# ---------------------------------------------------------------------------
# full-body rig

@dataclass
class ChainSpec:
    joints: list[int]
    lengths: list[float] | None = None
    limits: list[float | None] | None = None


DEFAULT_CHAINS = (
    ChainSpec([0, 7, 8, 9, 10]),    # spine to head
    ChainSpec([8, 11, 12, 13]),     # left arm
    ChainSpec([8, 14, 15, 16]),     # right arm
    ChainSpec([0, 4, 5, 6]),        # left leg
    ChainSpec([0, 1, 2, 3]),        # right leg
)


@dataclass
class Rig:
    """Chains over pose joint indices plus a pose-joint -> rig-joint map."""

    chains: list[ChainSpec] = field(default_factory=lambda: [ChainSpec(list(c.joints)) for c in DEFAULT_CHAINS])
    joint_map: list[int] | None = None

    @classmethod
    def from_json(cls, obj: dict) -> "Rig":
        chains = [ChainSpec(list(c["joints"]), c.get("lengths"), c.get("limits"))
                  for c in obj["chains"]]
        return cls(chains, obj.get("joint_map"))

    def to_json(self) -> dict:
        out = {"chains": [{k: v for k, v in (("joints", c.joints), ("lengths", c.lengths),
                                              ("limits", c.limits)) if v is not None}
                          for c in self.chains]}
        if self.joint_map is not None:
            out["joint_map"] = self.joint_map
        return out

    @classmethod
    def load(cls, path: str | Path) -> "Rig":
        with open(path) as f:
            return cls.from_json(json.load(f))


class RigSolver:
    """Per-frame full-body IK with warm starts from the previous solution.

    Rest lengths come from the rig file or, if absent, from the first pose.
    """

    def __init__(self, rig: Rig | None = None, tol: float = 0.01, max_iter: int = 20):
        self.rig = rig or Rig()
        self.tol = tol
        self.max_iter = max_iter
        self.lengths: list[np.ndarray] | None = None
        self.state: np.ndarray | None = None

    def _map(self, targets: np.ndarray) -> np.ndarray:
        m = self.rig.joint_map
        return targets if m is None else targets[np.asarray(m)]

    def solve(self, targets: np.ndarray) -> tuple[np.ndarray, list[IkSolution]]:
        """Solve all chains for one (J, 3) target pose; returns rig joints and per-chain results."""
        targets = self._map(np.asarray(targets, dtype=float))
        if self.lengths is None:
            self.lengths = [
                np.asarray(c.lengths, float) if c.lengths is not None
                else np.linalg.norm(np.diff(targets[c.joints], axis=0), axis=1)
                for c in self.rig.chains]
        if self.state is None:
            self.state = self._rest_from(targets)
        out = self.state.copy()
        out[self.rig.chains[0].joints[0]] = targets[self.rig.chains[0].joints[0]]
        results = []
        for cs, d in zip(self.rig.chains, self.lengths):
            anchor = out[cs.joints[0]]
            start = _chain_positions(self.state[cs.joints], d, anchor)
            chain = Chain(start, d, anchor, tuple(cs.limits) if cs.limits else None)
            sol = solve(chain, targets[cs.joints[-1]], self.tol, self.max_iter)
            out[cs.joints] = sol.positions
            results.append(sol)
        self.state = out
        return out, results

    def _rest_from(self, targets: np.ndarray) -> np.ndarray:
        rest = targets.copy()
        for cs, d in zip(self.rig.chains, self.lengths):
            rest[cs.joints] = _chain_positions(rest[cs.joints], d, rest[cs.joints[0]])
        return rest


def _chain_positions(guess: np.ndarray, lengths: np.ndarray, anchor: np.ndarray) -> np.ndarray:
    # re-lay a guess so it matches the chain's segment lengths exactly
    p = np.array(guess, dtype=float)
    return backward_reach(p, lengths, anchor)
