"""Exception hierarchy.

``ConfigError`` maps to CLI exit code 1, ``DataError`` subclasses to exit
code 2 and everything else under ``Rehab3DError`` to exit code 3.
"""


class Rehab3DError(Exception):
    pass


class DataError(Rehab3DError):
    """Malformed or inconsistent input data."""


class ConfigError(Rehab3DError):
    pass


class TopologyError(DataError):
    pass


class FormatError(DataError):
    pass


class CalibrationError(DataError):
    pass


class BehindCameraError(Rehab3DError):
    pass


class InvalidBoxError(DataError):
    pass


class InvalidPatchError(DataError):
    pass


class DescriptorError(DataError):
    pass


class TrackingLostError(Rehab3DError):
    pass


class InvalidHeatmapError(DataError):
    pass


class NormalizationError(DataError):
    pass


class InsufficientViewsError(Rehab3DError):
    pass


class DegenerateGeometryError(Rehab3DError):
    pass


class PointAtInfinityError(DegenerateGeometryError):
    pass


class SynchronizationError(DataError):
    pass


class ModelError(Rehab3DError):
    pass


class DatasetError(DataError):
    pass


class DivergenceError(Rehab3DError):
    pass


class ChainError(DataError):
    pass


class TimeStepError(Rehab3DError):
    pass


class MapError(DataError):
    pass


class DegenerateAlignmentError(Rehab3DError):
    pass


class SequenceError(DataError):
    pass


class BenchError(Rehab3DError):
    pass
