"""Exception types shared across the package."""


class FacekinError(Exception):
    """Base class for all package-specific errors."""


class PyramidTooDeepError(FacekinError):
    """Requested pyramid has a level smaller than the minimum allowed size."""


class DegenerateHessianError(FacekinError):
    """Patch has too little texture for a stable Gauss-Newton solve."""


class DegenerateShapeError(FacekinError):
    """Landmark set collapses to (nearly) a single point; no similarity fit."""


class SequenceTooShortError(FacekinError):
    """Landmark sequence has fewer frames than one clip."""


class MissingFrameError(FacekinError):
    """A landmark record references a frame image that is not present."""


class SingleClassError(FacekinError):
    """Operation requires both classes but the input contains only one."""


class FormatVersionError(FacekinError):
    """File was written by a newer format version than this reader supports."""


class ConfigError(FacekinError):
    """Run configuration file contains unknown keys or malformed values."""


class LandmarkParseError(FacekinError):
    """Landmark file line could not be parsed; message carries line number."""


class WrongPointCountError(LandmarkParseError):
    """Landmark record does not contain exactly 68 coordinate pairs."""


class TemplateMismatchError(FacekinError):
    """Model and template files do not belong to the same training run."""


class OutOfBoundsTrajectoryError(FacekinError):
    """Synthetic ground-truth trajectory leaves the image bounds."""
