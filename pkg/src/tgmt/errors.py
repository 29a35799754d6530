"""Exception types shared across the package."""


class TgmtError(Exception):
    """Base class for every error raised by this package."""


class FormatError(TgmtError, ValueError):
    """A file does not follow its declared format.

    `reason` is a short tag (header, truncated, duplicate, empty, parse)
    and `offset`, when known, is the byte offset of the defect.
    """

    def __init__(self, reason, message, offset=None):
        detail = f"{reason}: {message}"
        if offset is not None:
            detail += f" (byte offset {offset})"
        super().__init__(detail)
        self.reason = reason
        self.offset = offset


class IoError(TgmtError, OSError):
    """Underlying I/O failure while writing an artifact file."""


class DimError(TgmtError, ValueError):
    """Vector dimensionalities do not match."""


class DegenerateVectorError(TgmtError, ValueError):
    """A vector with zero norm where a direction is required."""


class EmptyLabelError(TgmtError, ValueError):
    """A label is empty or tokenizes to nothing."""


class UnembeddableLabelError(TgmtError):
    """No token of a label is present in the embedding table."""

    def __init__(self, label, side=None):
        where = f" ({side} side)" if side else ""
        super().__init__(f"label {label!r} has no usable embedding{where}")
        self.label = label
        self.side = side


class EmptyActivitySetError(TgmtError, ValueError):
    """Relevance requested against an empty activity set."""


class DuplicateClassError(TgmtError, ValueError):
    """The candidate class list contains a repeated label."""


class ShapeError(TgmtError, ValueError):
    """Tensor shapes are incompatible with the requested operation."""


class LabelError(TgmtError, ValueError):
    """A class label index is outside the classifier's range."""


class OptimizerError(TgmtError):
    """Optimizer invoked on parameters without gradients."""


class ConfigError(TgmtError, ValueError):
    """Inconsistent or invalid configuration."""


class DataError(TgmtError, ValueError):
    """A dataset is empty or otherwise unusable."""


class SamplingError(TgmtError, ValueError):
    """Not enough frames to sample the requested segments."""


class CropError(TgmtError, ValueError):
    """Crop geometry does not fit inside the frame."""


class TrainingDivergedError(TgmtError):
    """Training produced a non-finite loss."""
