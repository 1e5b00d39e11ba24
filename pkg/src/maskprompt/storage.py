"""Bit-exact file formats and dataset ingestion.

Formats at the pipeline/adapter boundary (byte-level details in
docs/formats.md):

* masks and images: single-channel 8-bit PNG. Reads treat any nonzero pixel
  as foreground; mask writes are canonical {0, 255}.
* probability maps: NPY format version 1.0, little-endian float32, C order,
  2-D, every value in [0, 1]. Out-of-range values are an error, never a
  silent clamp.
* prompt manifests, reports, sweep tables, configs: UTF-8 JSON with a
  ``schema_version`` key.
"""

from __future__ import annotations

import ast
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .compose import SLOT_COUNT, slot_quadrant
from .errors import (
    BadMagicError,
    ContainmentError,
    DatasetError,
    DatasetMissingError,
    MalformedJsonError,
    ManifestError,
    OutOfRangeValueError,
    SchemaVersionError,
    StorageError,
    UnsupportedPngError,
    WrongDtypeError,
    WrongRankError,
)
from .masks import BoundingBox, validate_probability_map
from .metrics import CaseScore, DiceReport, SweepTable

MANIFEST_SCHEMA_VERSION = 1
REPORT_SCHEMA_VERSION = 1
SWEEP_SCHEMA_VERSION = 1

_NPY_MAGIC = b"\x93NUMPY"


# --------------------------------------------------------------------------
# PNG masks and grayscale images


def _read_gray_png(path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            if img.format != "PNG":
                raise UnsupportedPngError(f"{path}: not a PNG file (format={img.format})")
            if img.mode != "L":
                raise UnsupportedPngError(
                    f"{path}: need single-channel 8-bit PNG, got mode {img.mode!r}"
                )
            return np.asarray(img, dtype=np.uint8)
    except UnidentifiedImageError as exc:
        raise UnsupportedPngError(f"{path}: not a decodable image") from exc


def read_mask(path) -> np.ndarray:
    """Load a binary mask; any nonzero pixel counts as foreground."""
    return _read_gray_png(path) != 0


def write_mask(path, mask) -> None:
    """Write a mask as canonical {0, 255} single-channel PNG."""
    arr = np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(path, format="PNG")


def read_image(path) -> np.ndarray:
    """Load an 8-bit grayscale image as a uint8 grid."""
    return _read_gray_png(path)


def write_image(path, image) -> None:
    arr = np.asarray(image)
    if arr.dtype != np.uint8:
        raise StorageError(f"grayscale images must be uint8, got {arr.dtype}")
    Image.fromarray(arr, mode="L").save(path, format="PNG")


# --------------------------------------------------------------------------
# NPY probability maps (format version 1.0, written and parsed by hand so the
# on-disk contract is explicit)


def write_probmap(path, prob_map) -> None:
    arr = validate_probability_map(prob_map)
    data = np.ascontiguousarray(arr, dtype="<f4")
    header = "{'descr': '<f4', 'fortran_order': False, 'shape': (%d, %d), }" % data.shape
    # Pad with spaces so magic + version + length + header is 64-byte aligned.
    base = len(_NPY_MAGIC) + 2 + 2
    pad = (-(base + len(header) + 1)) % 64
    header_bytes = (header + " " * pad + "\n").encode("latin1")
    with open(path, "wb") as fh:
        fh.write(_NPY_MAGIC)
        fh.write(b"\x01\x00")
        fh.write(struct.pack("<H", len(header_bytes)))
        fh.write(header_bytes)
        fh.write(data.tobytes(order="C"))


def read_probmap(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[: len(_NPY_MAGIC)] != _NPY_MAGIC:
        raise BadMagicError(f"{path}: missing NPY magic string")
    if raw[6:8] != b"\x01\x00":
        raise BadMagicError(
            f"{path}: unsupported NPY version {raw[6]}.{raw[7]} (need 1.0)"
        )
    if len(raw) < 10:
        raise BadMagicError(f"{path}: truncated NPY prelude")
    (header_len,) = struct.unpack("<H", raw[8:10])
    header_end = 10 + header_len
    if len(raw) < header_end:
        raise BadMagicError(f"{path}: truncated NPY header")
    try:
        header = ast.literal_eval(raw[10:header_end].decode("latin1").strip())
    except (ValueError, SyntaxError) as exc:
        raise BadMagicError(f"{path}: unparseable NPY header") from exc
    if not isinstance(header, dict):
        raise BadMagicError(f"{path}: NPY header is not a dict")

    descr = header.get("descr")
    if descr != "<f4":
        raise WrongDtypeError(f"{path}: dtype {descr!r}, need little-endian float32 '<f4'")
    if header.get("fortran_order") is not False:
        raise WrongDtypeError(f"{path}: payload must be C-order")
    shape = header.get("shape")
    if (
        not isinstance(shape, tuple)
        or len(shape) != 2
        or not all(isinstance(n, int) and n >= 0 for n in shape)
    ):
        raise WrongRankError(f"{path}: shape {shape!r}, need a 2-D grid")

    count = shape[0] * shape[1]
    payload = raw[header_end:]
    if len(payload) != count * 4:
        raise StorageError(
            f"{path}: payload holds {len(payload)} bytes, expected {count * 4}"
        )
    arr = np.frombuffer(payload, dtype="<f4", count=count).reshape(shape).copy()
    if count:
        if not np.isfinite(arr).all():
            raise OutOfRangeValueError(f"{path}: non-finite probability values")
        lo, hi = float(arr.min()), float(arr.max())
        if lo < 0.0 or hi > 1.0:
            raise OutOfRangeValueError(
                f"{path}: probability values outside [0, 1] (min={lo}, max={hi})"
            )
    return arr


# --------------------------------------------------------------------------
# Prompt manifests


@dataclass
class ManifestSlot:
    index: int
    case_id: str | None
    domain: str | None
    blank: bool


@dataclass
class ManifestComposite:
    composite_id: str
    image_ref: str
    slots: list[ManifestSlot]
    boxes: list[list[BoundingBox]]


@dataclass
class PromptManifest:
    tile_size: int
    composites: list[ManifestComposite] = field(default_factory=list)

    def validate(self) -> None:
        seen: set[str] = set()
        for comp in self.composites:
            if comp.composite_id in seen:
                raise ManifestError(f"duplicate composite id {comp.composite_id!r}")
            seen.add(comp.composite_id)
            if len(comp.slots) != SLOT_COUNT or len(comp.boxes) != SLOT_COUNT:
                raise ManifestError(
                    f"composite {comp.composite_id!r} needs {SLOT_COUNT} slots and box lists"
                )
            for slot, boxes in zip(comp.slots, comp.boxes):
                if slot.blank:
                    if boxes or slot.case_id is not None:
                        raise ManifestError(
                            f"blank slot {slot.index} of {comp.composite_id!r} must be empty"
                        )
                    continue
                if slot.case_id is None:
                    raise ManifestError(
                        f"slot {slot.index} of {comp.composite_id!r} lacks a case id"
                    )
                quadrant = slot_quadrant(slot.index, self.tile_size)
                for box in boxes:
                    if not quadrant.contains(box):
                        raise ContainmentError(
                            f"box {box.to_list()} escapes slot {slot.index} of "
                            f"{comp.composite_id!r}"
                        )


def manifest_to_dict(manifest: PromptManifest) -> dict:
    return {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "tile_size": manifest.tile_size,
        "composites": [
            {
                "composite_id": comp.composite_id,
                "image": comp.image_ref,
                "slots": [
                    {
                        "index": slot.index,
                        "case_id": slot.case_id,
                        "domain": slot.domain,
                        "blank": slot.blank,
                    }
                    for slot in comp.slots
                ],
                "boxes": [[box.to_list() for box in boxes] for boxes in comp.boxes],
            }
            for comp in manifest.composites
        ],
    }


def write_manifest(path, manifest: PromptManifest) -> None:
    manifest.validate()
    _write_json(path, manifest_to_dict(manifest))


def read_manifest(path) -> PromptManifest:
    doc = _read_json(path)
    _check_version(doc, MANIFEST_SCHEMA_VERSION, path)
    try:
        composites = [
            ManifestComposite(
                composite_id=comp["composite_id"],
                image_ref=comp["image"],
                slots=[
                    ManifestSlot(
                        index=int(slot["index"]),
                        case_id=slot["case_id"],
                        domain=slot["domain"],
                        blank=bool(slot["blank"]),
                    )
                    for slot in comp["slots"]
                ],
                boxes=[
                    [BoundingBox.from_list(box) for box in boxes]
                    for boxes in comp["boxes"]
                ],
            )
            for comp in doc["composites"]
        ]
        manifest = PromptManifest(tile_size=int(doc["tile_size"]), composites=composites)
    except (KeyError, TypeError, ValueError) as exc:
        raise ManifestError(f"{path}: malformed manifest structure: {exc}") from exc
    manifest.validate()
    return manifest


# --------------------------------------------------------------------------
# Dice reports and sweep tables


def report_to_dict(report: DiceReport) -> dict:
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "source_domain": report.source_domain,
        "per_domain_mean": report.per_domain_mean,
        "source_to_rest": report.source_to_rest,
        "scores": [
            {
                "case_id": s.case_id,
                "source_domain": s.source_domain,
                "target_domain": s.target_domain,
                "dice": s.dice,
            }
            for s in report.scores
        ],
    }


def report_from_dict(doc: dict, origin: str = "<report>") -> DiceReport:
    _check_version(doc, REPORT_SCHEMA_VERSION, origin)
    try:
        return DiceReport(
            source_domain=doc["source_domain"],
            scores=[
                CaseScore(
                    case_id=s["case_id"],
                    source_domain=s["source_domain"],
                    target_domain=s["target_domain"],
                    dice=float(s["dice"]),
                )
                for s in doc["scores"]
            ],
            per_domain_mean={d: float(v) for d, v in doc["per_domain_mean"].items()},
            source_to_rest=float(doc["source_to_rest"]),
        )
    except (KeyError, TypeError) as exc:
        raise StorageError(f"{origin}: malformed report structure: {exc}") from exc


def render_report_text(report: DiceReport) -> str:
    """Aligned text table: one column per target domain plus the AVG column,
    values as percentages with two decimals."""
    domains = sorted(report.per_domain_mean)
    header = ["Source"] + domains + ["AVG"]
    row = [report.source_domain]
    row += [f"{report.per_domain_mean[d] * 100:.2f}" for d in domains]
    row.append(f"{report.source_to_rest * 100:.2f}")
    return _render_table(header, [row])


def write_report(report: DiceReport, path, format: str = "structured") -> None:
    """Persist a report: ``structured`` JSON (round-trips) or aligned ``text``."""
    if format == "structured":
        _write_json(path, report_to_dict(report))
    elif format == "text":
        Path(path).write_text(render_report_text(report) + "\n", encoding="utf-8")
    else:
        raise StorageError(f"unknown report format {format!r}")


def read_report(path) -> DiceReport:
    return report_from_dict(_read_json(path), origin=str(path))


def sweep_to_dict(table: SweepTable) -> dict:
    return {
        "schema_version": SWEEP_SCHEMA_VERSION,
        "theta2": table.thetas,
        "sources": table.sources,
        "cells": table.cells,
        "row_averages": table.row_averages,
    }


def sweep_from_dict(doc: dict, origin: str = "<sweep>") -> SweepTable:
    _check_version(doc, SWEEP_SCHEMA_VERSION, origin)
    try:
        return SweepTable(
            thetas=[float(t) for t in doc["theta2"]],
            sources=list(doc["sources"]),
            cells=[[float(v) for v in row] for row in doc["cells"]],
            row_averages=[float(v) for v in doc["row_averages"]],
        )
    except (KeyError, TypeError) as exc:
        raise StorageError(f"{origin}: malformed sweep structure: {exc}") from exc


def render_sweep_text(table: SweepTable) -> str:
    header = ["theta2"] + [f"{s} to Rest" for s in table.sources] + ["Average"]
    rows = []
    for theta, cells, avg in zip(table.thetas, table.cells, table.row_averages):
        rows.append(
            [f"{theta:g}"]
            + [f"{v * 100:.2f}" for v in cells]
            + [f"{avg * 100:.2f}"]
        )
    return _render_table(header, rows)


def write_sweep(table: SweepTable, path, format: str = "structured") -> None:
    if format == "structured":
        _write_json(path, sweep_to_dict(table))
    elif format == "text":
        Path(path).write_text(render_sweep_text(table) + "\n", encoding="utf-8")
    else:
        raise StorageError(f"unknown sweep format {format!r}")


# --------------------------------------------------------------------------
# Dataset layout
#
# root/
#   <domain>/
#     <stem>_image.png   8-bit grayscale slice
#     <stem>_gt.png      ground-truth mask
#     <stem>_coarse.npy  coarse probability map

IMAGE_SUFFIX = "_image.png"
GT_SUFFIX = "_gt.png"
COARSE_SUFFIX = "_coarse.npy"


@dataclass(frozen=True)
class CasePaths:
    stem: str
    domain: str
    image: Path
    gt: Path
    coarse: Path

    @property
    def case_id(self) -> str:
        return f"{self.domain}/{self.stem}"


def scan_dataset(root) -> dict[str, list[CasePaths]]:
    """Index a dataset directory: one subdirectory per domain, three files per
    case stem. Incomplete cases are rejected here, never mid-pipeline."""
    root = Path(root)
    if not root.is_dir():
        raise DatasetMissingError(f"dataset root {root} does not exist")
    domains = sorted(p.name for p in root.iterdir() if p.is_dir())
    if not domains:
        raise DatasetMissingError(f"dataset root {root} has no domain directories")
    index: dict[str, list[CasePaths]] = {}
    for domain in domains:
        domain_dir = root / domain
        names = sorted(p.name for p in domain_dir.iterdir() if p.is_file())
        stems = sorted(n[: -len(IMAGE_SUFFIX)] for n in names if n.endswith(IMAGE_SUFFIX))
        expected = {
            f"{stem}{suffix}"
            for stem in stems
            for suffix in (IMAGE_SUFFIX, GT_SUFFIX, COARSE_SUFFIX)
        }
        missing = sorted(expected - set(names))
        if missing:
            raise DatasetError(f"{domain_dir}: incomplete cases, missing {missing}")
        strays = sorted(set(names) - expected)
        if strays:
            raise DatasetError(f"{domain_dir}: files without a complete case: {strays}")
        if not stems:
            raise DatasetError(f"{domain_dir}: domain has no cases")
        index[domain] = [
            CasePaths(
                stem=stem,
                domain=domain,
                image=domain_dir / f"{stem}{IMAGE_SUFFIX}",
                gt=domain_dir / f"{stem}{GT_SUFFIX}",
                coarse=domain_dir / f"{stem}{COARSE_SUFFIX}",
            )
            for stem in stems
        ]
    return index


def load_case_arrays(paths: CasePaths) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Read (image, gt mask, coarse map) for a case and verify matching dims."""
    image = read_image(paths.image)
    gt = read_mask(paths.gt)
    coarse = read_probmap(paths.coarse)
    if not (image.shape == gt.shape == coarse.shape):
        raise DatasetError(
            f"case {paths.case_id}: dimensions disagree "
            f"(image {image.shape}, gt {gt.shape}, coarse {coarse.shape})"
        )
    return image, gt, coarse


def prediction_path(predictions_dir, composite_id: str, slot_index: int, box_index: int) -> Path:
    """Prediction file convention shared with the segmenter adapter:
    ``<dir>/<composite_id>/<slot_index>/<box_index>.npy``."""
    return Path(predictions_dir) / composite_id / str(slot_index) / f"{box_index}.npy"


# --------------------------------------------------------------------------
# Shared JSON helpers


def _write_json(path, doc: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _read_json(path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedJsonError(f"{path}: not UTF-8 text") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedJsonError(f"{path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise MalformedJsonError(f"{path}: top-level JSON value must be an object")
    return doc


def _check_version(doc: dict, expected: int, origin) -> None:
    version = doc.get("schema_version")
    if version != expected:
        raise SchemaVersionError(
            f"{origin}: schema_version {version!r} unsupported (expected {expected})"
        )


def _render_table(header: list[str], rows: list[list[str]]) -> str:
    widths = [len(h) for h in header]
    for row in rows:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip()]
    for row in rows:
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
    return "\n".join(lines)
