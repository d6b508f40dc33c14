"""Exception types shared across the pipeline.

The CLI maps the three base categories to exit codes: UsageError -> 1,
DataError -> 2, NumericError -> 3. Plain OSError from file operations is
treated as a data error.
"""


class RetinoBenchError(Exception):
    """Base class for every error raised by this package."""


class UsageError(RetinoBenchError):
    """Invalid configuration or command-line usage."""


class DataError(RetinoBenchError):
    """Invalid or missing input data / on-disk artifacts."""


class NumericError(RetinoBenchError):
    """Non-finite values encountered during optimization."""


# --- dataset ---------------------------------------------------------------

class MissingPathError(DataError):
    pass


class MalformedRowError(DataError):
    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class UnknownLabelError(DataError):
    def __init__(self, value: str):
        super().__init__(f"unknown label {value!r}")
        self.value = value


class EmptyManifestError(DataError):
    pass


class DegenerateFractionError(UsageError):
    pass


# --- preprocess ------------------------------------------------------------

class ZeroDimensionError(RetinoBenchError, ValueError):
    pass


class AlreadyNormalizedError(RetinoBenchError, ValueError):
    pass


class InvalidPolicyError(UsageError):
    pass


# --- model / backbones -----------------------------------------------------

class UnknownBackboneError(UsageError):
    def __init__(self, backbone_id: str):
        super().__init__(f"unknown backbone {backbone_id!r}")
        self.backbone_id = backbone_id


class WeightArchiveMissingError(DataError):
    pass


class BackboneUnavailableError(DataError):
    pass


class ShapeMismatchError(RetinoBenchError, ValueError):
    def __init__(self, message: str, layer: str | None = None):
        super().__init__(message if layer is None else f"{layer}: {message}")
        self.layer = layer


class NotOneHotError(RetinoBenchError, ValueError):
    pass


class StaleCacheError(RetinoBenchError, ValueError):
    pass


# --- optim / train ---------------------------------------------------------

class NonFiniteGradientError(NumericError):
    pass


class NonFiniteLossError(NumericError):
    def __init__(self, epoch: int, value: float):
        super().__init__(f"non-finite training loss {value!r} at epoch {epoch}")
        self.epoch = epoch


class EmptySplitError(DataError):
    pass


class CorruptCheckpointError(DataError):
    pass


class BackboneMismatchError(DataError):
    pass


# --- metrics / report ------------------------------------------------------

class LengthMismatchError(RetinoBenchError, ValueError):
    pass


class EmptyLabelsError(RetinoBenchError, ValueError):
    pass


class DegenerateClassError(RetinoBenchError, ValueError):
    """A one-vs-rest split with no positives or no negatives; the ROC curve
    is undefined for such a class."""


class EmptyHistoryError(RetinoBenchError, ValueError):
    pass


class IncompleteRecordError(RetinoBenchError, ValueError):
    pass


class RunDirectoryLockedError(DataError):
    pass
