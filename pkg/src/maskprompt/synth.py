"""Synthetic fixtures: noisy coarse-map generation and a multi-domain dataset
builder. These stand in for a trained backbone so the refinement pipeline can
be exercised and tested without any neural dependency.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import SpeckleTooLargeError, ValidationError
from .masks import BoundingBox, bbox_from_mask, label_components
from .segmenters import stable_case_key
from .storage import (
    COARSE_SUFFIX,
    GT_SUFFIX,
    IMAGE_SUFFIX,
    write_image,
    write_mask,
    write_probmap,
)


@dataclass(frozen=True)
class NoiseSpec:
    """Speckle-noise recipe for synthetic coarse maps.

    Confidence levels keep ground truth and speckles above the backbone
    threshold (0.75 by default downstream) and background below it. Speckles
    are placed at least ``clear_margin`` pixels away from the target's tight
    box and from each other; use clear_margin >= 2 * downscale_factor so
    OR-pooling cannot fuse a speckle with anything else.
    """

    speckle_count: int = 0
    speckle_size: int = 2
    gt_confidence: float = 0.9
    speckle_confidence: float = 0.85
    background_confidence: float = 0.1
    clear_margin: int = 8
    seed: int = 0

    def __post_init__(self) -> None:
        if self.speckle_count < 0 or self.speckle_size < 1:
            raise ValidationError("speckle_count must be >= 0 and speckle_size >= 1")
        for name in ("gt_confidence", "speckle_confidence", "background_confidence"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValidationError(f"{name} must lie in [0, 1], got {value}")
        if self.clear_margin < 0:
            raise ValidationError("clear_margin must be >= 0")


def _boxes_too_close(a, b, margin: int) -> bool:
    return (
        a.x_min - margin <= b.x_max
        and b.x_min - margin <= a.x_max
        and a.y_min - margin <= b.y_max
        and b.y_min - margin <= a.y_max
    )


def noisy_coarse_generator(gt_mask: np.ndarray, spec: NoiseSpec) -> np.ndarray:
    """Build a coarse probability map from ground truth plus speckle noise.

    Deterministic under ``spec.seed``. Every speckle is strictly smaller than
    the target's largest component and disjoint from its tight box, so the
    largest-component filter's premise always holds on generated data.
    """
    gt = np.asarray(gt_mask, dtype=bool)
    labeling = label_components(gt, 4)
    largest = int(labeling.sizes[1:].max()) if labeling.num_components else 0
    if spec.speckle_count > 0 and spec.speckle_size >= largest:
        raise SpeckleTooLargeError(
            f"speckle_size {spec.speckle_size} must be smaller than the largest "
            f"ground-truth component ({largest} px)"
        )

    conf = np.where(gt, spec.gt_confidence, spec.background_confidence).astype(np.float32)
    if spec.speckle_count == 0:
        return conf

    h, w = gt.shape
    width = math.ceil(math.sqrt(spec.speckle_size))
    height = math.ceil(spec.speckle_size / width)
    if height > h or width > w:
        raise ValidationError(f"speckle footprint {height}x{width} exceeds mask {h}x{w}")

    rng = np.random.default_rng(np.random.SeedSequence([spec.seed & 0xFFFFFFFF, 0x5BEC]))
    placed: list[BoundingBox] = []
    gt_box = bbox_from_mask(gt)
    for _ in range(spec.speckle_count):
        for _attempt in range(1000):
            r0 = int(rng.integers(0, h - height + 1))
            c0 = int(rng.integers(0, w - width + 1))
            candidate = BoundingBox(c0, r0, c0 + width - 1, r0 + height - 1)
            if gt_box is not None and _boxes_too_close(candidate, gt_box, spec.clear_margin):
                continue
            if any(_boxes_too_close(candidate, p, spec.clear_margin) for p in placed):
                continue
            placed.append(candidate)
            remaining = spec.speckle_size
            for row in range(r0, r0 + height):
                cols = min(width, remaining)
                conf[row, c0 : c0 + cols] = spec.speckle_confidence
                remaining -= cols
            break
        else:
            raise ValidationError(
                f"could not place speckle {len(placed)} of {spec.speckle_count}; "
                "mask too crowded for the requested clear_margin"
            )
    return conf


def _aligned_span(rng: np.random.Generator, extent: int, lo: int, hi: int, align: int) -> tuple[int, int]:
    """Random [start, stop) span with block-aligned edges inside [lo, hi)."""
    length = int(rng.integers(lo // align, hi // align + 1)) * align
    length = max(align, min(length, extent - 2 * align))
    start = int(rng.integers(1, (extent - length) // align)) * align
    return start, start + length


def make_target_mask(
    rng: np.random.Generator,
    size: int,
    align: int = 4,
    shape: str = "cross",
) -> np.ndarray:
    """Single-component target whose tight box sits on ``align`` boundaries.

    Block alignment makes the downscale/rescale round trip reproduce the tight
    box exactly, which the ordering fixtures rely on.
    """
    mask = np.zeros((size, size), dtype=bool)
    r0, r1 = _aligned_span(rng, size, size // 8, size // 3, align)
    c0, c1 = _aligned_span(rng, size, size // 8, size // 3, align)
    if shape == "rect":
        mask[r0:r1, c0:c1] = True
    elif shape == "cross":
        # Two overlapping bars spanning the full aligned box: the tight box is
        # exactly [r0, r1) x [c0, c1) but the corners stay background.
        band_r = max(align, (r1 - r0) // 3 // align * align)
        band_c = max(align, (c1 - c0) // 3 // align * align)
        rm = r0 + (r1 - r0 - band_r) // 2
        cm = c0 + (c1 - c0 - band_c) // 2
        mask[rm : rm + band_r, c0:c1] = True
        mask[r0:r1, cm : cm + band_c] = True
    else:
        raise ValidationError(f"unknown target shape {shape!r}")
    return mask


def make_blob_mask(rng: np.random.Generator, size: int, n_blobs: int = 4) -> np.ndarray:
    """Union of random filled ellipses; the stand-in for organic predictions."""
    yy, xx = np.mgrid[0:size, 0:size]
    mask = np.zeros((size, size), dtype=bool)
    for _ in range(n_blobs):
        cy = int(rng.integers(size // 8, size - size // 8))
        cx = int(rng.integers(size // 8, size - size // 8))
        ry = int(rng.integers(max(2, size // 16), max(3, size // 4)))
        rx = int(rng.integers(max(2, size // 16), max(3, size // 4)))
        mask |= ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
    return mask


DEFAULT_DOMAINS = ("A", "B", "C", "D", "E", "F")


def make_synthetic_dataset(
    root,
    domains=DEFAULT_DOMAINS,
    cases_per_domain: int = 16,
    size: int = 512,
    seed: int = 0,
    align: int = 4,
    noise: NoiseSpec | None = None,
) -> dict[str, list[str]]:
    """Write a multi-domain dataset of block-aligned targets to ``root``.

    Per case: an 8-bit image with a domain-dependent intensity profile, a
    ground-truth mask, and a coarse map from ``noisy_coarse_generator`` (clean
    when ``noise`` is None). Returns the case stems per domain.
    """
    root = Path(root)
    stems: dict[str, list[str]] = {}
    for d_index, domain in enumerate(domains):
        domain_dir = root / domain
        domain_dir.mkdir(parents=True, exist_ok=True)
        stems[domain] = []
        for c_index in range(cases_per_domain):
            stem = f"case{c_index:04d}"
            case_id = f"{domain}/{stem}"
            rng = np.random.default_rng(
                np.random.SeedSequence([seed & 0xFFFFFFFF, stable_case_key(case_id)])
            )
            shape = "rect" if (c_index + d_index) % 2 else "cross"
            gt = make_target_mask(rng, size, align=align, shape=shape)

            if noise is None:
                case_noise = NoiseSpec(speckle_count=0)
            else:
                case_noise = replace(noise, seed=int(rng.integers(0, 2**31)))
            coarse = noisy_coarse_generator(gt, case_noise)

            # Domain shift shows up as a brightness/contrast drift plus grain.
            base = 30 + 18 * d_index
            grain = rng.integers(0, 25, size=gt.shape)
            image = np.where(gt, 140 + 10 * d_index, base) + grain
            image = np.clip(image, 0, 255).astype(np.uint8)

            write_image(domain_dir / f"{stem}{IMAGE_SUFFIX}", image)
            write_mask(domain_dir / f"{stem}{GT_SUFFIX}", gt)
            write_probmap(domain_dir / f"{stem}{COARSE_SUFFIX}", coarse)
            stems[domain].append(stem)
    return stems
