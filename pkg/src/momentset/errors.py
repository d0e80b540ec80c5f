"""Exception hierarchy shared across the package."""


class MomentSetError(Exception):
    """Base class for all package errors."""

    category = "internal"


class ShapeError(MomentSetError):
    category = "shape"


class RankError(MomentSetError):
    category = "shape"


class DomainError(MomentSetError):
    category = "numeric"


class DegenerateVectorError(MomentSetError):
    category = "numeric"


class ConfigError(MomentSetError):
    category = "config"


class GenerationError(MomentSetError):
    category = "datagen"


class TimestampRangeError(MomentSetError):
    category = "range"


class InputTooShortError(MomentSetError):
    category = "shape"


class CapacityError(MomentSetError):
    category = "matching"


class ContractError(MomentSetError):
    category = "contract"


class OptimizerError(MomentSetError):
    category = "numeric"


class FeatureStoreError(MomentSetError):
    category = "io"


class BadMagicError(FeatureStoreError):
    category = "format"


class VersionMismatchError(FeatureStoreError):
    category = "format"


class TruncatedFileError(FeatureStoreError):
    category = "format"


class CheckpointError(MomentSetError):
    category = "io"
