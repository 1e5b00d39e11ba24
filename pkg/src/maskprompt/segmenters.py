"""Box-prompted segmenter contract and the built-in mock implementations.

A segmenter receives one CompositeBatch and returns exactly one probability
map per prompt box, each of composite dimensions with values in [0, 1], in
slot-major box order. ``validate_predictions`` enforces that contract before
any score is computed.
"""

from __future__ import annotations

import hashlib
from typing import Protocol, runtime_checkable

import numpy as np

from .compose import CompositeBatch, slot_offset
from .errors import MissingGroundTruthError, SegmenterContractError
from .masks import BoundingBox


@runtime_checkable
class SegmenterContract(Protocol):
    """Behavioral interface satisfied by SAM adapters and the mocks alike."""

    reentrant: bool

    def predict(self, batch: CompositeBatch) -> list[np.ndarray]: ...


def validate_predictions(batch: CompositeBatch, maps) -> list[np.ndarray]:
    """Reject wrong map counts, dimensions, dtypes, or value ranges."""
    maps = list(maps)
    expected = batch.box_count
    if len(maps) != expected:
        raise SegmenterContractError(
            f"segmenter returned {len(maps)} maps for {expected} boxes"
        )
    side = 2 * batch.tile_size
    for i, arr in enumerate(maps):
        arr = np.asarray(arr)
        if arr.shape != (side, side):
            raise SegmenterContractError(
                f"map {i} has shape {arr.shape}, expected {(side, side)}"
            )
        if not np.issubdtype(arr.dtype, np.floating):
            raise SegmenterContractError(f"map {i} dtype {arr.dtype} is not floating")
        if arr.size and (not np.isfinite(arr).all() or arr.min() < 0.0 or arr.max() > 1.0):
            raise SegmenterContractError(f"map {i} holds values outside [0, 1]")
    return maps


def iter_slot_boxes(batch: CompositeBatch):
    """Yield (slot, box) pairs in the contract's slot-major order."""
    for slot, boxes in zip(batch.slots, batch.boxes):
        for box in boxes:
            yield slot, box


def _box_region(map_out: np.ndarray, box: BoundingBox) -> tuple[slice, slice]:
    return slice(box.y_min, box.y_max + 1), slice(box.x_min, box.x_max + 1)


class PerfectSegmenter:
    """Oracle segmenter: confidence 1.0 exactly on ground-truth pixels inside
    the prompt box, 0.0 elsewhere."""

    reentrant = True

    def __init__(self, gt_by_case):
        self._gt = dict(gt_by_case)

    def predict(self, batch: CompositeBatch) -> list[np.ndarray]:
        side = 2 * batch.tile_size
        out: list[np.ndarray] = []
        for slot, box in iter_slot_boxes(batch):
            gt = self._gt.get(slot.case_id)
            if gt is None:
                raise MissingGroundTruthError(f"no ground truth for case {slot.case_id!r}")
            row_off, col_off = slot_offset(slot.index, batch.tile_size)
            prob = np.zeros((side, side), dtype=np.float32)
            quadrant = prob[
                row_off : row_off + batch.tile_size,
                col_off : col_off + batch.tile_size,
            ]
            quadrant[gt] = 1.0
            clipped = np.zeros_like(prob)
            rows, cols = _box_region(clipped, box)
            clipped[rows, cols] = prob[rows, cols]
            out.append(clipped)
        return out


def case_confidence_field(
    gt: np.ndarray,
    seed: int,
    case_id: str,
    gt_floor: float = 0.6,
    background_ceiling: float = 0.55,
) -> np.ndarray:
    """Deterministic per-case confidence field for the noisy mock.

    Ground-truth pixels draw from [gt_floor, 1), background pixels from
    [0, background_ceiling). The field depends only on (seed, case_id, pixel),
    never on the prompt box, so enlarging a box can only add false positives.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFF, stable_case_key(case_id)]))
    u = rng.random(gt.shape)
    field = np.where(gt, gt_floor + (1.0 - gt_floor) * u, background_ceiling * u)
    return field.astype(np.float32)


def stable_case_key(case_id: str) -> int:
    """Platform-stable 64-bit key for seeding per-case randomness."""
    digest = hashlib.sha256(case_id.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


class NoisySegmenter:
    """Seeded stochastic segmenter for sweep and ordering experiments.

    Within the prompt box it reproduces the case's confidence field; outside
    the box everything is 0. Raising theta2 therefore prunes true positives,
    and growing the box admits more false positives, which is exactly the
    behavior the threshold-sweep and box-ablation harnesses need.
    """

    reentrant = True

    def __init__(self, gt_by_case, seed: int = 0, gt_floor: float = 0.6, background_ceiling: float = 0.55):
        if not 0.0 < gt_floor < 1.0 or not 0.0 <= background_ceiling <= 1.0:
            raise SegmenterContractError(
                "noisy segmenter confidence bands must lie inside [0, 1]"
            )
        self._gt = dict(gt_by_case)
        self.seed = seed
        self.gt_floor = gt_floor
        self.background_ceiling = background_ceiling

    def field_for_case(self, case_id: str) -> np.ndarray:
        gt = self._gt.get(case_id)
        if gt is None:
            raise MissingGroundTruthError(f"no ground truth for case {case_id!r}")
        return case_confidence_field(
            gt, self.seed, case_id, self.gt_floor, self.background_ceiling
        )

    def predict(self, batch: CompositeBatch) -> list[np.ndarray]:
        side = 2 * batch.tile_size
        out: list[np.ndarray] = []
        fields: dict[str, np.ndarray] = {}
        for slot, box in iter_slot_boxes(batch):
            field = fields.get(slot.case_id)
            if field is None:
                field = self.field_for_case(slot.case_id)
                fields[slot.case_id] = field
            row_off, col_off = slot_offset(slot.index, batch.tile_size)
            prob = np.zeros((side, side), dtype=np.float32)
            prob[
                row_off : row_off + batch.tile_size,
                col_off : col_off + batch.tile_size,
            ] = field
            clipped = np.zeros_like(prob)
            rows, cols = _box_region(clipped, box)
            clipped[rows, cols] = prob[rows, cols]
            out.append(clipped)
        return out


def mock_perfect_segmenter(gt_by_case) -> PerfectSegmenter:
    return PerfectSegmenter(gt_by_case)


def mock_noisy_segmenter(gt_by_case, seed: int = 0, **bands) -> NoisySegmenter:
    return NoisySegmenter(gt_by_case, seed=seed, **bands)
