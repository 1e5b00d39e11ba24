class AdapterError(Exception):
    """Base class for adapter failures."""


class CheckpointMissingError(AdapterError):
    """The requested checkpoint path does not exist or is not loadable."""


class ManifestSchemaMismatchError(AdapterError):
    """The prompt manifest carries an unsupported schema version or shape."""


class DatasetLookupError(AdapterError):
    """A ground-truth file named by the manifest could not be found."""
