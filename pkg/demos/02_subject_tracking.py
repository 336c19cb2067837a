"""Keeping the same person selected while others walk through the frame.

Run: python demos/02_subject_tracking.py
"""
from collections import Counter

from rehab3d.synth import Scenario, tracking_scenario
from rehab3d.tracker import SubjectTracker, stats

# each scenario exercises one branch of the decision tree
for kind in Scenario:
    frames = tracking_scenario(kind, n_frames=60, seed=1)
    tracker = SubjectTracker()
    before = stats.descriptors
    correct = sum(tracker.update(f.boxes, f.patches) is f.boxes[f.subject_index] for f in frames)
    decisions = Counter(d.value for d in tracker.decisions)
    print(f"{kind.value:>6}: subject kept on {correct}/{len(frames)} frames, "
          f"decisions {dict(decisions)}, color descriptors computed {stats.descriptors - before}")

# the fast IoU path never looks at pixels; color is only read when IoU is ambiguous
