"""maskprompt: coarse-mask filtering, box-prompt refinement, composite
batching, and cross-domain Dice evaluation for promptable segmentation."""

from .compose import CompositeBatch, TileSlot, merge_tiles, remap_mask_to_slot, split_composite
from .masks import (
    BoundingBox,
    ComponentLabeling,
    bbox_from_mask,
    downscale_mask,
    label_components,
    largest_component_filter,
    rescale_bbox,
    threshold,
)
from .metrics import CaseScore, DiceReport, SweepTable, aggregate, dice, sweep_report
from .pipeline import (
    CaseRecord,
    PipelineConfig,
    emit_phase,
    refine_boxes,
    run_pipeline,
    score_phase,
)
from .segmenters import (
    NoisySegmenter,
    PerfectSegmenter,
    SegmenterContract,
    mock_noisy_segmenter,
    mock_perfect_segmenter,
)
from .synth import NoiseSpec, make_synthetic_dataset, noisy_coarse_generator

__version__ = "0.1.0"

__all__ = [
    "BoundingBox",
    "CaseRecord",
    "CaseScore",
    "ComponentLabeling",
    "CompositeBatch",
    "DiceReport",
    "NoiseSpec",
    "NoisySegmenter",
    "PerfectSegmenter",
    "PipelineConfig",
    "SegmenterContract",
    "SweepTable",
    "TileSlot",
    "aggregate",
    "bbox_from_mask",
    "dice",
    "downscale_mask",
    "emit_phase",
    "label_components",
    "largest_component_filter",
    "make_synthetic_dataset",
    "merge_tiles",
    "mock_noisy_segmenter",
    "mock_perfect_segmenter",
    "noisy_coarse_generator",
    "refine_boxes",
    "remap_mask_to_slot",
    "rescale_bbox",
    "run_pipeline",
    "score_phase",
    "split_composite",
    "sweep_report",
    "threshold",
]
