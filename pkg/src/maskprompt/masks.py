"""Pixel-grid primitives: thresholding, connected components, largest-component
filtering with downscale acceleration, and bounding-box extraction/rescaling.

Masks are 2-D boolean numpy arrays, probability maps are 2-D float arrays with
values in [0, 1]. Coordinates are (x, y) = (column, row), inclusive on both
ends for boxes.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatchError,
    NonDivisibleFactorError,
    OutOfRangeValueError,
    ValidationError,
)

CONNECTIVITIES = (4, 8)


@dataclass(frozen=True)
class BoundingBox:
    """Inclusive pixel rectangle; x is the column axis, y the row axis."""

    x_min: int
    y_min: int
    x_max: int
    y_max: int

    def __post_init__(self) -> None:
        for name in ("x_min", "y_min", "x_max", "y_max"):
            value = getattr(self, name)
            object.__setattr__(self, name, int(value))
        if self.x_min < 0 or self.y_min < 0:
            raise ValidationError(f"box coordinates must be non-negative: {self}")
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ValidationError(f"box min corner must not exceed max corner: {self}")

    @property
    def width(self) -> int:
        return self.x_max - self.x_min + 1

    @property
    def height(self) -> int:
        return self.y_max - self.y_min + 1

    @property
    def area(self) -> int:
        return self.width * self.height

    def translate(self, dx: int, dy: int) -> "BoundingBox":
        return BoundingBox(self.x_min + dx, self.y_min + dy, self.x_max + dx, self.y_max + dy)

    def contains(self, other: "BoundingBox") -> bool:
        return (
            self.x_min <= other.x_min
            and self.y_min <= other.y_min
            and other.x_max <= self.x_max
            and other.y_max <= self.y_max
        )

    def within_image(self, height: int, width: int) -> bool:
        return self.x_max < width and self.y_max < height

    def to_list(self) -> list[int]:
        return [self.x_min, self.y_min, self.x_max, self.y_max]

    @classmethod
    def from_list(cls, values) -> "BoundingBox":
        if len(values) != 4:
            raise ValidationError(f"a box needs 4 coordinates, got {len(values)}")
        return cls(*values)


@dataclass
class ComponentLabeling:
    """Row-major component labels (0 = background) plus per-label pixel counts.

    ``sizes[i]`` is the number of pixels carrying label ``i``; index 0 counts
    background pixels. Components are numbered by discovery order of a
    row-major scan, so the component owning the earliest foreground pixel is
    label 1.
    """

    labels: np.ndarray
    sizes: np.ndarray

    @property
    def num_components(self) -> int:
        return len(self.sizes) - 1


def as_mask(mask) -> np.ndarray:
    """Coerce input to a 2-D boolean array; integer grids use nonzero-as-true."""
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise DimensionMismatchError(f"mask must be 2-D, got shape {arr.shape}")
    if arr.dtype == np.bool_:
        return arr
    if np.issubdtype(arr.dtype, np.integer):
        return arr != 0
    raise ValidationError(f"mask dtype must be boolean or integer, got {arr.dtype}")


def validate_probability_map(prob_map) -> np.ndarray:
    """Check a confidence grid: 2-D float, finite, all values in [0, 1]."""
    arr = np.asarray(prob_map)
    if arr.ndim != 2:
        raise DimensionMismatchError(f"probability map must be 2-D, got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.floating):
        raise ValidationError(f"probability map dtype must be floating, got {arr.dtype}")
    if arr.size:
        if not np.isfinite(arr).all():
            raise OutOfRangeValueError("probability map contains non-finite values")
        lo = float(arr.min())
        hi = float(arr.max())
        if lo < 0.0 or hi > 1.0:
            raise OutOfRangeValueError(f"probability values outside [0, 1]: min={lo}, max={hi}")
    return arr


def threshold(prob_map, theta: float) -> np.ndarray:
    """Binarize a confidence grid with the inclusive rule ``value >= theta``."""
    if not 0.0 <= theta <= 1.0:
        raise ValidationError(f"theta must lie in [0, 1], got {theta}")
    arr = np.asarray(prob_map)
    if arr.ndim != 2:
        raise DimensionMismatchError(f"probability map must be 2-D, got shape {arr.shape}")
    return arr >= theta


def _runs(mask: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    """Extract maximal horizontal foreground runs in row-major order.

    Returns (rows, col_starts, col_ends_exclusive, padded_row_stride). Rows are
    padded with one background column so runs never wrap across row ends.
    """
    h, w = mask.shape
    padded = np.zeros((h, w + 1), dtype=np.int8)
    padded[:, :w] = mask
    flat = padded.ravel()
    diff = np.diff(flat, prepend=np.int8(0), append=np.int8(0))
    starts = np.flatnonzero(diff == 1)
    ends = np.flatnonzero(diff == -1)
    rows = starts // (w + 1)
    return rows, starts - rows * (w + 1), ends - rows * (w + 1), w + 1


def label_components(mask, connectivity: int = 4) -> ComponentLabeling:
    """Label connected components by breadth-first search over row runs.

    Maximal horizontal runs are the BFS nodes; two runs in adjacent rows are
    neighbors when their column intervals overlap (4-connectivity) or overlap
    after widening by one column (8-connectivity). Labels follow row-major
    discovery order: the component containing the first foreground pixel of a
    row-major scan is label 1.
    """
    m = as_mask(mask)
    if connectivity not in CONNECTIVITIES:
        raise ValidationError(f"connectivity must be 4 or 8, got {connectivity}")
    h, w = m.shape
    labels = np.zeros((h, w), dtype=np.int32)
    if h == 0 or w == 0:
        return ComponentLabeling(labels, np.zeros(1, dtype=np.int64))

    rows, col_starts, col_ends, stride = _runs(m)
    n_runs = len(rows)
    if n_runs == 0:
        return ComponentLabeling(labels, np.array([h * w], dtype=np.int64))

    # First run index of each row, with a terminal sentinel.
    row_ptr = np.searchsorted(rows, np.arange(h + 1)).tolist()
    cs = col_starts.tolist()
    ce = col_ends.tolist()

    # Interval sweep between consecutive rows; `reach` widens intervals so
    # diagonal contact counts under 8-connectivity.
    reach = 0 if connectivity == 4 else 1
    adjacency: list[list[int]] = [[] for _ in range(n_runs)]
    for r in range(h - 1):
        i = row_ptr[r]
        i_end = row_ptr[r + 1]
        j = i_end
        j_end = row_ptr[r + 2]
        while i < i_end and j < j_end:
            if cs[i] < ce[j] + reach and cs[j] < ce[i] + reach:
                adjacency[i].append(j)
                adjacency[j].append(i)
            if ce[i] < ce[j]:
                i += 1
            else:
                j += 1

    run_labels = [0] * n_runs
    next_label = 0
    queue: deque[int] = deque()
    for seed in range(n_runs):
        if run_labels[seed]:
            continue
        next_label += 1
        run_labels[seed] = next_label
        queue.append(seed)
        while queue:
            run = queue.popleft()
            for neighbor in adjacency[run]:
                if not run_labels[neighbor]:
                    run_labels[neighbor] = next_label
                    queue.append(neighbor)

    # Paint labels back onto the grid with a prefix-sum over run boundaries.
    label_arr = np.asarray(run_labels, dtype=np.int32)
    delta = np.zeros(h * stride + 1, dtype=np.int32)
    flat_starts = rows * stride + col_starts
    flat_ends = rows * stride + col_ends
    delta[flat_starts] = label_arr
    delta[flat_ends] -= label_arr
    labels = np.cumsum(delta[:-1], dtype=np.int32).reshape(h, stride)[:, :w]

    lengths = (col_ends - col_starts).astype(np.int64)
    sizes = np.zeros(next_label + 1, dtype=np.int64)
    np.add.at(sizes, label_arr, lengths)
    sizes[0] = h * w - int(lengths.sum())
    return ComponentLabeling(labels, sizes)


def largest_component_filter(mask, connectivity: int = 4) -> np.ndarray:
    """Keep only the largest connected component; ties go to the earliest
    component in row-major scan order. An empty mask stays empty."""
    labeling = label_components(mask, connectivity)
    if labeling.num_components == 0:
        return np.zeros_like(labeling.labels, dtype=bool)
    keep = 1 + int(np.argmax(labeling.sizes[1:]))
    return labeling.labels == keep


def downscale_mask(mask, factor: int) -> np.ndarray:
    """OR-pool a mask over ``factor`` x ``factor`` blocks.

    A low-resolution pixel is foreground iff its source block contains any
    foreground pixel, so no component can vanish during downscaling.
    """
    m = as_mask(mask)
    factor = int(factor)
    if factor < 1:
        raise ValidationError(f"factor must be >= 1, got {factor}")
    if factor == 1:
        return m.copy()
    h, w = m.shape
    if h % factor or w % factor:
        raise NonDivisibleFactorError(
            f"factor {factor} does not divide mask dimensions {h}x{w}"
        )
    # Two single-axis reductions run markedly faster than one tuple-axis any.
    pooled_rows = m.reshape(h // factor, factor, w).any(axis=1)
    return pooled_rows.reshape(h // factor, w // factor, factor).any(axis=2)


def bbox_from_mask(mask) -> BoundingBox | None:
    """Tightest inclusive box around the foreground, or None for an empty mask."""
    m = as_mask(mask)
    row_any = m.any(axis=1)
    if not row_any.any():
        return None
    row_idx = np.flatnonzero(row_any)
    col_idx = np.flatnonzero(m.any(axis=0))
    return BoundingBox(int(col_idx[0]), int(row_idx[0]), int(col_idx[-1]), int(row_idx[-1]))


def rescale_bbox(box: BoundingBox, factor: int) -> BoundingBox:
    """Scale a box from block coordinates back to pixel coordinates.

    The result covers every full-resolution pixel whose block lay inside the
    box, so max edges map to ``(edge + 1) * factor - 1`` rather than plain
    multiplication (which would clip up to factor-1 rows/columns).
    """
    factor = int(factor)
    if factor < 1:
        raise ValidationError(f"factor must be >= 1, got {factor}")
    return BoundingBox(
        box.x_min * factor,
        box.y_min * factor,
        (box.x_max + 1) * factor - 1,
        (box.y_max + 1) * factor - 1,
    )
