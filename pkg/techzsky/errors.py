"""
Exception hierarchy for TechZSky.

Every error raised on purpose by the package derives from `TechZSkyError`.
`DataError` covers bad inputs (images, ground truth, configs, bank files) and
maps to CLI exit code 3; `InternalError` covers states that should never occur
on valid inputs and maps to exit code 4.
"""


class TechZSkyError(Exception):
    """Base class for all TechZSky errors."""

    exit_code = 4


class DataError(TechZSkyError, ValueError):
    exit_code = 3


class InternalError(TechZSkyError, RuntimeError):
    exit_code = 4


# imagecore
class ImageTooSmall(DataError):
    pass


class BadPatchSize(DataError):
    pass


class NonFiniteInput(DataError):
    pass


# edges
class BadThresholds(DataError):
    pass


# blade
class DimensionMismatch(DataError):
    pass


class ConfigMismatch(DataError):
    pass


class BankFormatError(DataError):
    pass


class BankVersionMismatch(BankFormatError):
    pass


class SolveFailure(InternalError):
    pass


class InsufficientNegatives(UserWarning):
    """Fewer eligible negative edge pixels than positives; all of them were used."""


# dp
class WeightOutOfRange(DataError):
    pass


class Infeasible(InternalError):
    pass


# eval
class LengthMismatch(DataError):
    pass


class EmptyInput(DataError):
    pass


class MissingDirectory(DataError):
    pass


class MalformedGroundTruth(DataError):
    pass


# cli / orchestrator
class ConfigError(DataError):
    pass


class NoTrainingPairs(DataError):
    pass


class NoMatchedPairs(DataError):
    pass


class UnknownMethod(DataError):
    pass


class PipelineBusy(InternalError):
    pass
