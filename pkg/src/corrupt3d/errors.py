"""Exception hierarchy for corrupt3d."""


class Corrupt3dError(Exception):
    """Base class for all corrupt3d errors."""


class MissingEgoPose(Corrupt3dError):
    """Motion compensation requested on a frame without an ego pose."""


class DegenerateControlPoints(Corrupt3dError):
    """TPS control points are collinear or duplicated beyond tolerance."""


class MalformedPointFile(Corrupt3dError):
    """Velodyne .bin file has bad length or non-finite values."""


class MalformedLabel(Corrupt3dError):
    """KITTI label file could not be parsed."""


class MalformedCalib(Corrupt3dError):
    """KITTI calib file could not be parsed."""


class MalformedImage(Corrupt3dError):
    """Image file could not be decoded."""


class IncompleteFrame(Corrupt3dError):
    """A listed frame id is missing one of its modality files."""


class EmptyGroundTruth(Corrupt3dError):
    """AP is undefined because no ground-truth box matches the filter."""


class MissingCell(Corrupt3dError):
    """AP table is missing one or more (corruption, severity) cells."""


class ZeroCleanAP(Corrupt3dError):
    """Relative corruption error is undefined when clean AP is zero."""


class ConfigError(Corrupt3dError):
    """Run configuration is invalid (exit code 2 at the CLI)."""
