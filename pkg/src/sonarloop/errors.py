"""Exception types shared across the package."""


class SonarLoopError(Exception):
    """Base class for all errors raised by this package."""


class InvalidPoseError(SonarLoopError):
    """Orientation matrix is not a proper rotation, or pose fields are invalid."""


class DegenerateCloudError(SonarLoopError):
    """Point cloud too small or degenerate for the requested operation."""


class RejectedInputError(SonarLoopError):
    """A sensor stream violates its ordering or validity contract."""


class DatasetFormatError(SonarLoopError):
    """A dataset file is missing, malformed, or declares the wrong units.

    Carries the offending file and (1-based) line number when known.
    """

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc = f"{path}"
            if line is not None:
                loc += f":{line}"
            loc += ": "
        super().__init__(loc + message)
        self.path = path
        self.line = line


class UndefinedSimilarityError(SonarLoopError):
    """Similarity requested between empty feature maps."""


class EvaluationError(SonarLoopError):
    """Evaluation cannot proceed (e.g. no positive pairs: recall undefined)."""
