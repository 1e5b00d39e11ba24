"""Exception hierarchy for the maskprompt toolkit.

Exit-code mapping used by the CLI:
  validation errors (bad parameters, bad geometry)   -> 1
  I/O and file-format errors                         -> 2
  segmenter contract violations                      -> 3
"""


class MaskPromptError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(MaskPromptError, ValueError):
    """Invalid parameter or inconsistent in-memory data."""


class ConfigError(ValidationError):
    """Invalid pipeline configuration value."""


class DimensionMismatchError(ValidationError):
    """Arrays that must share dimensions do not."""


class NonDivisibleFactorError(ValidationError):
    """Downscale factor does not divide a mask dimension."""


class MixedTileSizesError(ValidationError):
    """Tiles offered for merging do not share one size."""


class EmptyInputError(ValidationError):
    """An aggregation was asked to summarize nothing."""


class SpeckleTooLargeError(ValidationError):
    """Requested noise speckle would rival the target component."""


class MissingGroundTruthError(ValidationError):
    """A mock segmenter has no ground truth for a requested case."""


class StorageError(MaskPromptError):
    """Base class for file-format and dataset errors (CLI exit 2)."""


class UnsupportedPngError(StorageError):
    """PNG is not single-channel 8-bit grayscale."""


class BadMagicError(StorageError):
    """File does not start with a version-1.0 NPY prelude."""


class WrongDtypeError(StorageError):
    """NPY payload is not little-endian float32 in C order."""


class WrongRankError(StorageError):
    """NPY payload is not two-dimensional."""


class OutOfRangeValueError(StorageError):
    """A probability value falls outside [0, 1] (or is not finite)."""


class MalformedJsonError(StorageError):
    """A JSON document could not be parsed."""


class SchemaVersionError(StorageError):
    """A JSON document carries an unsupported schema version."""


class ManifestError(StorageError):
    """A prompt manifest violates its structural invariants."""


class ContainmentError(ManifestError):
    """A manifest box escapes its slot's quadrant."""


class DatasetError(StorageError):
    """Dataset layout is incomplete or inconsistent."""


class DatasetMissingError(DatasetError):
    """Dataset root or a required domain directory does not exist."""


class SegmenterContractError(MaskPromptError):
    """A segmenter broke its behavioral contract (CLI exit 3)."""


class MissingPredictionsError(SegmenterContractError):
    """The external segmenter did not deliver a required prediction file."""
