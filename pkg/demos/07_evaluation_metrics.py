"""MPJPE, Procrustes-aligned P-MPJPE and acceleration error.

Run: python demos/07_evaluation_metrics.py
"""
import numpy as np

from rehab3d.metrics import accel_error, mpjpe, p_mpjpe, procrustes_align
from rehab3d.synth import motion_array, synth_motion

gt = motion_array(synth_motion(seconds=1.0, kind="walk"))

# a 3-4-5 offset in millimetres
print("offset (3, 4, 0) mm ->", mpjpe(gt[0] + [0.003, 0.004, 0.0], gt[0]), "mm")

# rotating, scaling and shifting the whole pose costs nothing after alignment
c, s = np.cos(0.7), np.sin(0.7)
R = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])
moved = 1.3 * gt[0] @ R.T + [0.5, 0.2, -0.1]
al = procrustes_align(moved, gt[0])
print(f"similarity transform: MPJPE {mpjpe(moved, gt[0]):.1f} mm, P-MPJPE {p_mpjpe(moved, gt[0]):.1e} mm, "
      f"recovered scale {al.scale:.4f}")

# jitter barely moves positions on average but shows up in acceleration
rng = np.random.default_rng(0)
jittery = gt + rng.normal(0, 0.005, gt.shape)
print(f"5 mm jitter: MPJPE {np.mean(mpjpe(jittery, gt)):.1f} mm, accel error {accel_error(jittery, gt):.1f} mm")
