"""Pack four same-size tiles into one 2x2 composite and map geometry between
tile-local and composite coordinates.

Slot order is row-major: 0 = top-left, 1 = top-right, 2 = bottom-left,
3 = bottom-right. Missing tiles become zero-filled blank slots so the
composite shape stays constant for a fixed-input-size encoder.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ContainmentError,
    DimensionMismatchError,
    MixedTileSizesError,
    ValidationError,
)
from .masks import BoundingBox, as_mask

SLOT_COUNT = 4


@dataclass(frozen=True)
class TileSlot:
    index: int
    case_id: str | None
    blank: bool = False

    def __post_init__(self) -> None:
        if not 0 <= self.index < SLOT_COUNT:
            raise ValidationError(f"slot index must be 0..3, got {self.index}")
        if self.blank and self.case_id is not None:
            raise ValidationError("blank slots carry no case id")
        if not self.blank and self.case_id is None:
            raise ValidationError("non-blank slots need a case id")


@dataclass
class CompositeBatch:
    tile_size: int
    slots: list[TileSlot]
    image: np.ndarray
    boxes: list[list[BoundingBox]] = field(default_factory=lambda: [[], [], [], []])
    composite_id: str | None = None

    def __post_init__(self) -> None:
        s = self.tile_size
        if len(self.slots) != SLOT_COUNT:
            raise ValidationError(f"a composite has exactly {SLOT_COUNT} slots")
        if self.image.shape != (2 * s, 2 * s):
            raise DimensionMismatchError(
                f"composite image must be {2 * s}x{2 * s}, got {self.image.shape}"
            )
        if len(self.boxes) != SLOT_COUNT:
            raise ValidationError("boxes must list one (possibly empty) list per slot")
        for slot, slot_boxes in zip(self.slots, self.boxes):
            if slot.blank and slot_boxes:
                raise ValidationError(f"blank slot {slot.index} must carry zero boxes")
            quadrant = slot_quadrant(slot.index, s)
            for box in slot_boxes:
                if not quadrant.contains(box):
                    raise ContainmentError(
                        f"box {box.to_list()} escapes slot {slot.index} quadrant"
                    )

    @property
    def box_count(self) -> int:
        return sum(len(b) for b in self.boxes)


def slot_offset(index: int, tile_size: int) -> tuple[int, int]:
    """(row_offset, col_offset) of slot ``index`` in the composite."""
    if not 0 <= index < SLOT_COUNT:
        raise ValidationError(f"slot index must be 0..3, got {index}")
    return (index // 2) * tile_size, (index % 2) * tile_size


def slot_quadrant(index: int, tile_size: int) -> BoundingBox:
    row_off, col_off = slot_offset(index, tile_size)
    return BoundingBox(col_off, row_off, col_off + tile_size - 1, row_off + tile_size - 1)


def box_to_composite(box: BoundingBox, slot_index: int, tile_size: int) -> BoundingBox:
    """Translate a tile-local box into composite coordinates."""
    if box.x_max >= tile_size or box.y_max >= tile_size:
        raise ContainmentError(
            f"tile-local box {box.to_list()} exceeds tile size {tile_size}"
        )
    row_off, col_off = slot_offset(slot_index, tile_size)
    return box.translate(col_off, row_off)

def box_to_tile(box: BoundingBox, slot_index: int, tile_size: int) -> BoundingBox:
    """Translate a composite-coordinate box back into its tile's frame."""
    if not slot_quadrant(slot_index, tile_size).contains(box):
        raise ContainmentError(
            f"composite box {box.to_list()} lies outside slot {slot_index}"
        )
    row_off, col_off = slot_offset(slot_index, tile_size)
    return box.translate(-col_off, -row_off)


def merge_tiles(
    tiles,
    boxes=None,
    case_ids=None,
    composite_id: str | None = None,
) -> CompositeBatch:
    """Copy 1-4 same-size square tiles into a 2S x 2S composite.

    Tiles fill slots in index order; remaining slots are zero-filled blanks.
    Per-tile boxes (tile-local coordinates) are translated by their slot
    offset into composite coordinates.
    """
    tiles = list(tiles)
    if not 1 <= len(tiles) <= SLOT_COUNT:
        raise ValidationError(f"merge takes 1..4 tiles, got {len(tiles)}")
    arrays = [np.asarray(t) for t in tiles]
    first = arrays[0]
    if first.ndim != 2 or first.shape[0] != first.shape[1]:
        raise MixedTileSizesError(f"tiles must be square 2-D grids, got {first.shape}")
    size = first.shape[0]
    for arr in arrays[1:]:
        if arr.shape != first.shape:
            raise MixedTileSizesError(
                f"tile sizes differ: {first.shape} vs {arr.shape}"
            )
        if arr.dtype != first.dtype:
            raise MixedTileSizesError(
                f"tile dtypes differ: {first.dtype} vs {arr.dtype}"
            )

    if boxes is None:
        boxes = [[] for _ in arrays]
    if len(boxes) != len(arrays):
        raise ValidationError("need one box list per tile")
    if case_ids is None:
        case_ids = [f"tile{i}" for i in range(len(arrays))]
    if len(case_ids) != len(arrays):
        raise ValidationError("need one case id per tile")

    image = np.zeros((2 * size, 2 * size), dtype=first.dtype)
    slots: list[TileSlot] = []
    composite_boxes: list[list[BoundingBox]] = []
    for index in range(SLOT_COUNT):
        if index < len(arrays):
            row_off, col_off = slot_offset(index, size)
            image[row_off : row_off + size, col_off : col_off + size] = arrays[index]
            slots.append(TileSlot(index=index, case_id=str(case_ids[index])))
            composite_boxes.append(
                [box_to_composite(b, index, size) for b in boxes[index]]
            )
        else:
            slots.append(TileSlot(index=index, case_id=None, blank=True))
            composite_boxes.append([])
    return CompositeBatch(
        tile_size=size,
        slots=slots,
        image=image,
        boxes=composite_boxes,
        composite_id=composite_id,
    )


def remap_mask_to_slot(mask, slot: TileSlot | int, tile_size: int | None = None) -> np.ndarray:
    """Place an S x S mask into its slot's quadrant of an all-background 2S x 2S mask."""
    m = as_mask(mask)
    if m.shape[0] != m.shape[1]:
        raise DimensionMismatchError(f"tile mask must be square, got {m.shape}")
    size = m.shape[0]
    if tile_size is not None and tile_size != size:
        raise DimensionMismatchError(
            f"mask is {size}x{size} but tile size is {tile_size}"
        )
    index = slot.index if isinstance(slot, TileSlot) else int(slot)
    row_off, col_off = slot_offset(index, size)
    out = np.zeros((2 * size, 2 * size), dtype=bool)
    out[row_off : row_off + size, col_off : col_off + size] = m
    return out


def split_composite(pred, slots) -> dict[str, np.ndarray]:
    """Crop a 2S x 2S composite grid back into per-case S x S quadrants.

    Blank slots are dropped; the result maps case_id to its quadrant crop in
    slot order.
    """
    arr = np.asarray(pred)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] % 2:
        raise DimensionMismatchError(
            f"composite grid must be square with even side, got {arr.shape}"
        )
    size = arr.shape[0] // 2
    out: dict[str, np.ndarray] = {}
    for slot in slots:
        if slot.blank:
            continue
        row_off, col_off = slot_offset(slot.index, size)
        out[slot.case_id] = arr[row_off : row_off + size, col_off : col_off + size].copy()
    return out
