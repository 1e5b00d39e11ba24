"""Fixtures: a tiny randomly initialized SAM-architecture checkpoint and a
one-composite prompt manifest emitted by the real pipeline CLI over a
hand-written miniature dataset. The dataset files are produced with numpy and
Pillow directly so the adapter side never leans on pipeline code."""

from __future__ import annotations

import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
import torch
from PIL import Image

TILE = 32
CASES = [("B", "case0000"), ("B", "case0001"), ("B", "case0002")]


def build_tiny_checkpoint(path: Path) -> None:
    from transformers import SamConfig, SamModel
    from transformers.models.sam.configuration_sam import (
        SamMaskDecoderConfig,
        SamPromptEncoderConfig,
        SamVisionConfig,
    )

    vision = SamVisionConfig(
        hidden_size=32,
        intermediate_size=64,
        num_hidden_layers=2,
        num_attention_heads=2,
        image_size=64,
        patch_size=8,
        output_channels=32,
        global_attn_indexes=[1],
        num_pos_feats=16,
    )
    prompt = SamPromptEncoderConfig(
        hidden_size=32, image_embedding_size=8, image_size=64, mask_input_channels=4
    )
    decoder = SamMaskDecoderConfig(
        hidden_size=32,
        num_hidden_layers=2,
        num_attention_heads=2,
        iou_head_hidden_dim=32,
        iou_head_depth=2,
    )
    config = SamConfig(
        vision_config=vision.to_dict(),
        prompt_encoder_config=prompt.to_dict(),
        mask_decoder_config=decoder.to_dict(),
    )
    torch.manual_seed(0)
    SamModel(config).save_pretrained(str(path))


def write_case(domain_dir: Path, stem: str, seed: int) -> None:
    rng = np.random.default_rng(seed)
    gt = np.zeros((TILE, TILE), dtype=bool)
    gt[8:24, 8:24] = True
    image = np.where(gt, 170, 40).astype(np.uint8) + rng.integers(
        0, 20, (TILE, TILE)
    ).astype(np.uint8)
    coarse = np.where(gt, 0.9, 0.1).astype(np.float32)

    domain_dir.mkdir(parents=True, exist_ok=True)
    Image.fromarray(image, mode="L").save(domain_dir / f"{stem}_image.png")
    Image.fromarray(np.where(gt, 255, 0).astype(np.uint8), mode="L").save(
        domain_dir / f"{stem}_gt.png"
    )
    np.save(domain_dir / f"{stem}_coarse.npy", coarse)


def run_pipeline_cli(*args: str) -> subprocess.CompletedProcess:
    return subprocess.run(
        [sys.executable, "-m", "maskprompt.cli", *args],
        capture_output=True,
        text=True,
    )


@pytest.fixture(scope="session")
def tiny_checkpoint(tmp_path_factory) -> Path:
    path = tmp_path_factory.mktemp("ckpt") / "tiny-sam"
    build_tiny_checkpoint(path)
    return path


@pytest.fixture(scope="session")
def dataset_root(tmp_path_factory) -> Path:
    root = tmp_path_factory.mktemp("dataset")
    write_case(root / "A", "case0000", seed=1)
    for i, (domain, stem) in enumerate(CASES):
        write_case(root / domain, stem, seed=10 + i)
    return root


@pytest.fixture(scope="session")
def emitted_run(dataset_root, tmp_path_factory) -> Path:
    """Pipeline emit phase: composites/ plus a 1-composite manifest."""
    out = tmp_path_factory.mktemp("emitted")
    result = run_pipeline_cli(
        "pipeline",
        "--dataset",
        str(dataset_root),
        "--source",
        "A",
        "--tile-size",
        str(TILE),
        "--segmenter",
        "external",
        "--phase",
        "emit",
        "--out",
        str(out),
    )
    assert result.returncode == 0, result.stderr
    assert (out / "manifest.json").is_file()
    return out
