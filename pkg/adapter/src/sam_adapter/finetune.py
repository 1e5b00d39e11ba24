"""Mask-decoder fine-tuning with frozen image and prompt encoders.

Targets come from the dataset's ground-truth masks, remapped into composite
coordinates by slot offset (slot k occupies (k // 2 * S, k % 2 * S)). The
loss is per-pixel binary cross-entropy plus soft Dice on the upsampled
decoder logits. ``batch_size`` is realized as gradient accumulation over
composites, since box counts vary per composite.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .config import AdapterConfig
from .errors import DatasetLookupError
from .inference import _load_gray
from .manifest import Manifest, parse_manifest
from .model import (
    decoder_parameters,
    freeze_encoders,
    load_model,
    predict_box_probabilities,
    preprocess_image,
    scale_boxes,
)


def _load_gt(dataset_root: Path, case_id: str, tile_size: int) -> np.ndarray:
    domain, _, stem = case_id.partition("/")
    path = dataset_root / domain / f"{stem}_gt.png"
    if not path.is_file():
        raise DatasetLookupError(f"ground truth not found for case {case_id!r}: {path}")
    with Image.open(path) as img:
        arr = np.asarray(img)
    mask = arr != 0
    if mask.shape != (tile_size, tile_size):
        raise DatasetLookupError(
            f"{path}: mask is {mask.shape}, expected {(tile_size, tile_size)}"
        )
    return mask


def _composite_targets(comp, dataset_root: Path, tile_size: int) -> torch.Tensor:
    """One composite-frame binary target per prompt box, stacked."""
    side = 2 * tile_size
    targets = []
    for slot, slot_boxes in zip(comp.slots, comp.boxes):
        if not slot_boxes:
            continue
        gt = _load_gt(dataset_root, slot.case_id, tile_size)
        row_off = (slot.index // 2) * tile_size
        col_off = (slot.index % 2) * tile_size
        remapped = np.zeros((side, side), dtype=np.float32)
        remapped[row_off : row_off + tile_size, col_off : col_off + tile_size] = gt
        targets.extend([remapped] * len(slot_boxes))
    return torch.from_numpy(np.stack(targets))


def _bce_soft_dice(probs: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    eps = 1e-6
    bce = torch.nn.functional.binary_cross_entropy(probs, targets)
    overlap = (probs * targets).sum(dim=(-2, -1))
    denom = probs.sum(dim=(-2, -1)) + targets.sum(dim=(-2, -1))
    soft_dice = (2 * overlap + eps) / (denom + eps)
    return bce + (1.0 - soft_dice).mean()


def finetune_decoder(
    manifest_path,
    dataset_root,
    cfg: AdapterConfig,
    save_dir=None,
) -> dict:
    """Fine-tune the mask decoder; returns {'loss': per-epoch means}.

    Only decoder parameters receive gradients or optimizer updates; every
    encoder tensor is bit-identical before and after.
    """
    manifest: Manifest = parse_manifest(manifest_path)
    dataset_root = Path(dataset_root)
    torch.manual_seed(cfg.seed)

    model = load_model(cfg.checkpoint, cfg.device)
    model.train()
    freeze_encoders(model)
    optimizer = torch.optim.Adam(decoder_parameters(model), lr=cfg.learning_rate)

    image_size = model.config.vision_config.image_size
    side = 2 * manifest.tile_size
    examples = []
    for comp in manifest.composites:
        if not comp.flat_boxes:
            continue
        gray = _load_gray(comp.image_path(Path(manifest_path)))
        examples.append(
            {
                "pixels": preprocess_image(gray, image_size, cfg.device),
                "boxes": scale_boxes(comp.flat_boxes, side, image_size, cfg.device),
                "targets": _composite_targets(comp, dataset_root, manifest.tile_size).to(cfg.device),
            }
        )
    if not examples:
        raise DatasetLookupError("manifest holds no prompt boxes to train on")

    history: list[float] = []
    for _epoch in range(cfg.epochs):
        losses = []
        optimizer.zero_grad()
        accumulated = 0
        for example in examples:
            probs = predict_box_probabilities(
                model, example["pixels"], example["boxes"], side
            )
            loss = _bce_soft_dice(probs, example["targets"])
            (loss / cfg.batch_size).backward()
            losses.append(float(loss.detach()))
            accumulated += 1
            if accumulated == cfg.batch_size:
                optimizer.step()
                optimizer.zero_grad()
                accumulated = 0
        if accumulated:
            optimizer.step()
            optimizer.zero_grad()
        history.append(float(np.mean(losses)))

    if save_dir is not None:
        Path(save_dir).mkdir(parents=True, exist_ok=True)
        model.save_pretrained(str(save_dir))
    return {"loss": history}
