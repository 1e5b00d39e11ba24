"""sam_adapter: runs a promptable-segmentation checkpoint over pipeline
prompt manifests and writes predictions in the pipeline's storage formats."""

from .config import AdapterConfig
from .errors import (
    AdapterError,
    CheckpointMissingError,
    DatasetLookupError,
    ManifestSchemaMismatchError,
)
from .finetune import finetune_decoder
from .inference import run_inference
from .manifest import Manifest, parse_manifest
from .model import decoder_checksums, encoder_checksums, freeze_encoders, load_model

__version__ = "0.1.0"

__all__ = [
    "AdapterConfig",
    "AdapterError",
    "CheckpointMissingError",
    "DatasetLookupError",
    "Manifest",
    "ManifestSchemaMismatchError",
    "decoder_checksums",
    "encoder_checksums",
    "finetune_decoder",
    "freeze_encoders",
    "load_model",
    "parse_manifest",
    "run_inference",
]
