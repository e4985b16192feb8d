"""Exception hierarchy shared by every stage."""


class FocError(Exception):
    """Base class for all errors raised by this package."""


class OutOfBounds(FocError, ValueError):
    pass


class DimensionMismatch(FocError, ValueError):
    pass


class DegeneratePolygon(FocError, ValueError):
    pass


class ValueOutOfRange(FocError, ValueError):
    pass


class ParseError(FocError, ValueError):
    pass


class InvalidDetection(FocError, ValueError):
    """A detection record violates its invariants (confidence, box size)."""


class ImageTooSmall(FocError, ValueError):
    pass


class RoiTooSmall(FocError, ValueError):
    pass


class UnsupportedBitDepth(FocError, ValueError):
    pass


class MaskTooSmall(FocError, ValueError):
    pass


class NoKnownNeighbors(FocError, ValueError):
    pass


class ZeroGroundTruth(FocError, ValueError):
    pass


class NoObjects(FocError, ValueError):
    pass


class EmptyInput(FocError, ValueError):
    pass


class ImageIdMismatch(FocError, ValueError):
    pass


class SameReviewer(FocError, ValueError):
    pass


class IllegalTransition(FocError):
    pass


class DuplicateApprover(FocError):
    pass


class InsufficientPool(FocError, ValueError):
    pass


class InfeasibleBalance(FocError, ValueError):
    pass


class ConfigError(FocError, ValueError):
    pass


class StageError(FocError):
    """Wraps a failure inside one pipeline stage for one image."""

    def __init__(self, stage, image_id, cause):
        self.stage = stage
        self.image_id = image_id
        self.cause = cause
        super().__init__(f"[{stage}] {image_id}: {type(cause).__name__}: {cause}")
