"""Training the 9-frame temporal refiner on noisy synthetic trajectories.

The refiner emits two poses per input frame (one half a frame earlier), so
the output rate doubles. Takes about a minute on one CPU core.

Run: python demos/04_temporal_refiner.py
"""
import numpy as np

from rehab3d.metrics import accel_error, mpjpe
from rehab3d.refiner import RefinerHyperparams, refine_sequence, train
from rehab3d.skeleton import Pose3D
from rehab3d.synth import MotionKind, motion_array, synth_motion

rng = np.random.default_rng(0)
kinds = list(MotionKind)


def trajectories(seeds, sigma=0.02):
    out = []
    for i, s in enumerate(seeds):
        clean = motion_array(synth_motion(seconds=4.0, kind=kinds[i % 4], seed=s))
        out.append((clean, clean + rng.normal(0, sigma, clean.shape)))
    return out


result = train(trajectories(range(12)), RefinerHyperparams(epochs=15))
print("loss curve:", " ".join(f"{v:.4f}" for v in result.loss_curve[::3]))

clean, noisy = trajectories([500])[0]
seq = [Pose3D(noisy[t], np.ones(17), t, t * 0.02) for t in range(len(noisy))]
out = refine_sequence(seq, result.weights)
refined = np.stack([p.joints for p in out[1::2]])
print(f"{len(seq)} frames in, {len(out)} poses out")
print(f"MPJPE noisy {np.mean(mpjpe(noisy[8:], clean[8:])):.1f} mm -> "
      f"refined {np.mean(mpjpe(refined, clean[8:])):.1f} mm")
print(f"accel error noisy {accel_error(noisy[8:], clean[8:]):.1f} mm -> "
      f"refined {accel_error(refined, clean[8:]):.1f} mm")
