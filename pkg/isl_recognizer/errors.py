# errors.py


class IslrError(Exception):
    """Base class for every error raised by the toolkit."""


class ConfigError(IslrError, ValueError):
    pass


class ImageFormatError(IslrError, ValueError):
    pass


class FaceAnnotationError(IslrError, ValueError):
    def __init__(self, path, line_no: int, message: str):
        self.path = str(path)
        self.line_no = line_no
        super().__init__(f"{self.path}:{line_no}: {message}")


class FeatureGridMismatch(IslrError, ValueError):
    pass


class KnnError(IslrError, ValueError):
    pass


class HmmError(IslrError, ValueError):
    pass


class UnknownSymbolError(HmmError):
    pass


class ModelFormatError(IslrError, ValueError):
    """A model file could not be parsed; carries the offending line number."""

    def __init__(self, path, line_no: int, message: str):
        self.path = str(path)
        self.line_no = line_no
        super().__init__(f"{self.path}: line {line_no}: {message}")


class ModelVersionError(IslrError, ValueError):
    pass


class PipelineStageError(IslrError):
    """Wraps a failure inside one pipeline stage."""

    def __init__(self, stage: str, frame_index: int, cause: Exception):
        self.stage = stage
        self.frame_index = frame_index
        super().__init__(f"stage '{stage}' failed on frame {frame_index}: {cause}")


class ProtocolError(IslrError, ValueError):
    pass


class ClientError(IslrError):
    pass


class EvaluationError(IslrError, ValueError):
    pass


class DatasetError(IslrError, ValueError):
    pass
