"""Multi-view 3D human pose estimation for rehabilitation feedback.

Synthetic multi-camera capture, subject tracking, heatmap keypoint decoding,
DLT triangulation, a temporal refiner that doubles the pose rate, FABRIK
inverse kinematics and muscle-intensity classification.
"""
__version__ = "0.1.0"

from .camera import CameraView, EngineFrameConfig, look_at, project, rodrigues_rotation, to_engine_frame
from .errors import ConfigError, DataError, FormatError, Rehab3DError
from .fabrik import Chain, IkSolution, IkStatus, Rig, RigSolver, solve
from .heatmap import keypoints_from_heatmaps, soft_argmax, spatial_softmax, uncrop
from .metrics import evaluate, mpjpe, p_mpjpe, procrustes_align
from .muscle import Level, MuscleMap, MuscleStream, classify, muscle_levels
from .pipeline import PipelineConfig, StageLatencyReport, bench, run_pipeline
from .refiner import RefinerHyperparams, RefinerWeights, StreamingRefiner, refine, train
from .skeleton import H36M, Pose2D, Pose3D, Skeleton, bone_lengths, validate_pose
from .tracker import BBox, SubjectTracker, color_descriptor, iou, track_step
from .triangulation import triangulate_point, triangulate_pose

__all__ = [
    "CameraView", "EngineFrameConfig", "look_at", "project", "rodrigues_rotation", "to_engine_frame",
    "ConfigError", "DataError", "FormatError", "Rehab3DError",
    "Chain", "IkSolution", "IkStatus", "Rig", "RigSolver", "solve",
    "keypoints_from_heatmaps", "soft_argmax", "spatial_softmax", "uncrop",
    "evaluate", "mpjpe", "p_mpjpe", "procrustes_align",
    "Level", "MuscleMap", "MuscleStream", "classify", "muscle_levels",
    "PipelineConfig", "StageLatencyReport", "bench", "run_pipeline",
    "RefinerHyperparams", "RefinerWeights", "StreamingRefiner", "refine", "train",
    "H36M", "Pose2D", "Pose3D", "Skeleton", "bone_lengths", "validate_pose",
    "BBox", "SubjectTracker", "color_descriptor", "iou", "track_step",
    "triangulate_point", "triangulate_pose",
]
