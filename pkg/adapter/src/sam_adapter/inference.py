"""Serve box-prompted predictions for every composite in a manifest.

Output convention (shared with the pipeline's score phase):
``<output_dir>/<composite_id>/<slot_index>/<box_index>.npy``, one
composite-dimensioned float32 probability map per prompt box. Blank slots
produce no files.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .config import AdapterConfig
from .manifest import Manifest, parse_manifest
from .model import (
    load_model,
    predict_box_probabilities,
    preprocess_image,
    scale_boxes,
)


def _load_gray(path: Path) -> np.ndarray:
    with Image.open(path) as img:
        if img.mode != "L":
            raise ValueError(f"{path}: composite images must be 8-bit grayscale PNG")
        return np.asarray(img, dtype=np.uint8)


def _write_probmap(path: Path, array: np.ndarray) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    np.save(path, np.ascontiguousarray(array, dtype="<f4"))


def run_inference(manifest_path, cfg: AdapterConfig) -> list[Path]:
    """Predict one probability map per (composite, box); returns written paths."""
    manifest: Manifest = parse_manifest(manifest_path)
    model = load_model(cfg.checkpoint, cfg.device)
    model.eval()
    image_size = model.config.vision_config.image_size
    out_dir = Path(cfg.output_dir or "predictions")

    written: list[Path] = []
    composite_side = 2 * manifest.tile_size
    for comp in manifest.composites:
        boxes = comp.flat_boxes
        if not boxes:
            continue
        gray = _load_gray(comp.image_path(Path(manifest_path)))
        if gray.shape != (composite_side, composite_side):
            raise ValueError(
                f"{comp.composite_id}: composite is {gray.shape}, "
                f"manifest tile_size implies {(composite_side, composite_side)}"
            )
        pixel_values = preprocess_image(gray, image_size, cfg.device)
        input_boxes = scale_boxes(boxes, composite_side, image_size, cfg.device)
        with torch.no_grad():
            probs = predict_box_probabilities(model, pixel_values, input_boxes, composite_side)
        maps = probs.cpu().numpy()

        flat_index = 0
        for slot, slot_boxes in zip(comp.slots, comp.boxes):
            for box_index in range(len(slot_boxes)):
                path = out_dir / comp.composite_id / str(slot.index) / f"{box_index}.npy"
                _write_probmap(path, maps[flat_index])
                written.append(path)
                flat_index += 1
    return written
