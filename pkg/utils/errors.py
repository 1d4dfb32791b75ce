# Error types shared by every facefuse package
# Purpose: one root exception so the CLI can turn failures into a single diagnostic line


class FaceFuseError(Exception):
    """Root of all facefuse errors"""


class ImageNotFoundError(FaceFuseError, FileNotFoundError):
    pass


class ImageFormatError(FaceFuseError, ValueError):
    """File exists but is not a supported image or field container"""


class CorruptImageError(FaceFuseError, ValueError):
    pass


class ShapeMismatchError(FaceFuseError, ValueError):
    pass


class RangeError(FaceFuseError, ValueError):
    """Value outside its declared range or an invalid parameter value"""


class ConfigError(FaceFuseError, ValueError):
    pass


class CheckpointError(FaceFuseError, RuntimeError):
    pass


class EmbedderUnavailableError(FaceFuseError, RuntimeError):
    pass


class TrainingDivergedError(FaceFuseError, RuntimeError):
    pass


class MissingMaskError(FaceFuseError, ValueError):
    pass


class EvaluationError(FaceFuseError, ValueError):
    pass
