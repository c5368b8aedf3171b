"""Exception hierarchy shared by every module."""


class PcrkError(ValueError):
    """Base class for input and numerical errors raised by pcrk."""


class InsufficientPointsError(PcrkError):
    pass


class DegenerateGeometryError(PcrkError):
    pass


class SizeMismatchError(PcrkError):
    pass


class BehindCameraError(PcrkError):
    pass


class NoSurfaceError(PcrkError):
    pass


class DivergenceError(PcrkError):
    """Optimization produced a non-finite loss.

    ``points`` holds the last state whose loss was finite.
    """

    def __init__(self, message, points=None, iteration=None):
        super().__init__(message)
        self.points = points
        self.iteration = iteration


class OcclusionError(PcrkError):
    pass


class StageError(PcrkError):
    """A refinement stage failed; ``stage`` names it, ``__cause__`` holds the original error."""

    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause
