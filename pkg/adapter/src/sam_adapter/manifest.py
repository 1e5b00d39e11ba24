"""Independent reader for the prompt-manifest JSON the pipeline emits.

This deliberately shares no code with the pipeline package; the JSON schema
(documented in the pipeline repo's docs/formats.md) is the only contract.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import ManifestSchemaMismatchError

SUPPORTED_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class SlotEntry:
    index: int
    case_id: str | None
    domain: str | None
    blank: bool


@dataclass(frozen=True)
class CompositeEntry:
    composite_id: str
    image_ref: str
    slots: tuple[SlotEntry, ...]
    boxes: tuple[tuple[tuple[int, int, int, int], ...], ...]  # per slot

    def image_path(self, manifest_path: Path) -> Path:
        return (Path(manifest_path).parent / self.image_ref).resolve()

    @property
    def flat_boxes(self) -> list[tuple[int, int, int, int]]:
        return [box for slot_boxes in self.boxes for box in slot_boxes]


@dataclass(frozen=True)
class Manifest:
    tile_size: int
    composites: tuple[CompositeEntry, ...]


def parse_manifest(path) -> Manifest:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestSchemaMismatchError(f"{path}: cannot read manifest: {exc}") from exc
    version = doc.get("schema_version")
    if version != SUPPORTED_SCHEMA_VERSION:
        raise ManifestSchemaMismatchError(
            f"{path}: schema_version {version!r}, supported: {SUPPORTED_SCHEMA_VERSION}"
        )
    try:
        composites = []
        for comp in doc["composites"]:
            slots = tuple(
                SlotEntry(
                    index=int(slot["index"]),
                    case_id=slot["case_id"],
                    domain=slot["domain"],
                    blank=bool(slot["blank"]),
                )
                for slot in comp["slots"]
            )
            boxes = tuple(
                tuple(tuple(int(v) for v in box) for box in slot_boxes)
                for slot_boxes in comp["boxes"]
            )
            if len(slots) != 4 or len(boxes) != 4:
                raise ManifestSchemaMismatchError(
                    f"{path}: composite {comp.get('composite_id')!r} must have 4 slots"
                )
            composites.append(
                CompositeEntry(
                    composite_id=comp["composite_id"],
                    image_ref=comp["image"],
                    slots=slots,
                    boxes=boxes,
                )
            )
    except (KeyError, TypeError, ValueError) as exc:
        raise ManifestSchemaMismatchError(f"{path}: malformed manifest: {exc}") from exc
    return Manifest(tile_size=int(doc["tile_size"]), composites=tuple(composites))
