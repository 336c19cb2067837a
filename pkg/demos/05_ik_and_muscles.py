"""FABRIK chains on a moving skeleton and color-coded muscle intensity.

Run: python demos/05_ik_and_muscles.py
"""
from collections import Counter

import numpy as np

from rehab3d.camera import EngineFrameConfig, to_engine_frame
from rehab3d.fabrik import Chain, solve
from rehab3d.muscle import MuscleStream, classify
from rehab3d.synth import synth_motion

# a single 3-segment arm reaching for a point
chain = Chain(np.array([[0, 0, 0], [0.3, 0, 0], [0.55, 0, 0], [0.75, 0, 0]], float))
sol = solve(chain, [0.2, 0.4, 0.3], record=True)
print(f"reach: {sol.status.value} after {sol.iterations} iterations, error trace",
      np.round(sol.history, 4))
sol = solve(chain, [2.0, 0, 0])
print("too far:", sol.status.value, "-> chain stretched along", np.round(sol.positions[-1], 3))

# the thresholds: <= 0.08 m/s slow (blue), >= 0.2 m/s intense (yellow)
for s in (0.05, 0.08, 0.12, 0.2, 0.5):
    lv = classify(s)
    print(f"speed {s:.2f} m/s -> {lv.level.value} ({lv.color})")

# a fast arm raise, converted into the engine frame, then classified per muscle
poses = [to_engine_frame(p, EngineFrameConfig()) for p in synth_motion(seconds=2.0, kind="arm_raise",
                                                                       period=1.5)]
stream = MuscleStream()
counts = Counter()
for p in poses:
    frame = stream.push(p)
    if frame is not None:
        counts.update(f"{name}:{lv.level.value}" for name, lv in frame.levels.items()
                      if "deltoid" in name or "biceps" in name)
for k, v in sorted(counts.items()):
    print(f"{k:>30} {v} frames")
