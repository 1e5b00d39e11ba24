"""Checkpoint loading, parameter freezing, and state hashing.

The adapter fine-tunes only the lightweight mask decoder; the image encoder,
prompt encoder, and their shared positional embedding stay frozen, and
``encoder_checksums`` lets tests prove it.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import torch
from transformers import SamModel

from .errors import CheckpointMissingError

DECODER_PREFIX = "mask_decoder."

# SAM's standard pixel normalization (0-255 intensity scale).
PIXEL_MEAN = (123.675, 116.28, 103.53)
PIXEL_STD = (58.395, 57.12, 57.375)


def load_model(checkpoint: str, device: str = "cpu") -> SamModel:
    path = Path(checkpoint)
    if not path.exists():
        raise CheckpointMissingError(f"checkpoint not found: {checkpoint}")
    try:
        model = SamModel.from_pretrained(str(path))
    except Exception as exc:  # transformers raises a zoo of types here
        raise CheckpointMissingError(f"cannot load checkpoint {checkpoint}: {exc}") from exc
    return model.to(device)


def freeze_encoders(model: SamModel) -> None:
    """Leave only mask-decoder parameters trainable."""
    for name, param in model.named_parameters():
        param.requires_grad_(name.startswith(DECODER_PREFIX))


def decoder_parameters(model: SamModel):
    return [p for n, p in model.named_parameters() if n.startswith(DECODER_PREFIX)]


def _state_checksums(model: SamModel, want_decoder: bool) -> dict[str, str]:
    out: dict[str, str] = {}
    for name, tensor in model.state_dict().items():
        if name.startswith(DECODER_PREFIX) == want_decoder:
            data = tensor.detach().cpu().contiguous().numpy().tobytes()
            out[name] = hashlib.sha256(data).hexdigest()
    return out


def encoder_checksums(model: SamModel) -> dict[str, str]:
    """SHA-256 per non-decoder tensor (image encoder, prompt encoder, shared
    positional embedding)."""
    return _state_checksums(model, want_decoder=False)


def decoder_checksums(model: SamModel) -> dict[str, str]:
    return _state_checksums(model, want_decoder=True)


def preprocess_image(gray: "np.ndarray", image_size: int, device: str = "cpu") -> torch.Tensor:
    """Grayscale uint8 grid -> normalized (1, 3, image_size, image_size) batch."""
    import numpy as np

    arr = np.asarray(gray, dtype=np.float32)
    tensor = torch.from_numpy(arr)[None, None]
    tensor = torch.nn.functional.interpolate(
        tensor, size=(image_size, image_size), mode="bilinear", align_corners=False
    )
    tensor = tensor.repeat(1, 3, 1, 1)
    mean = torch.tensor(PIXEL_MEAN).view(1, 3, 1, 1)
    std = torch.tensor(PIXEL_STD).view(1, 3, 1, 1)
    return ((tensor - mean) / std).to(device)


def scale_boxes(boxes, source_side: int, image_size: int, device: str = "cpu") -> torch.Tensor:
    """Composite-frame inclusive boxes -> prompt-encoder coordinates.

    The +1 on max corners converts inclusive pixel indices to exclusive
    edges before scaling, so a full-frame box maps to the full model frame.
    """
    scale = image_size / source_side
    rows = [
        [b[0] * scale, b[1] * scale, (b[2] + 1) * scale, (b[3] + 1) * scale]
        for b in boxes
    ]
    return torch.tensor([rows], dtype=torch.float32, device=device)


def predict_box_probabilities(
    model: SamModel, pixel_values: torch.Tensor, input_boxes: torch.Tensor, out_side: int
) -> torch.Tensor:
    """Forward pass -> (n_boxes, out_side, out_side) probabilities in [0, 1]."""
    outputs = model(
        pixel_values=pixel_values, input_boxes=input_boxes, multimask_output=False
    )
    logits = outputs.pred_masks[0, :, 0]  # (n_boxes, h, w)
    logits = torch.nn.functional.interpolate(
        logits[:, None], size=(out_side, out_side), mode="bilinear", align_corners=False
    )[:, 0]
    return torch.sigmoid(logits).clamp(0.0, 1.0)
