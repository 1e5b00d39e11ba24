"""End-to-end orchestration: threshold the coarse map, filter, refine boxes,
merge tiles into composites, call the segmenter, threshold its output, split,
and score.

The segmenter sits behind a pluggable contract. Mock segmenters run in
process; an external adapter is served through a two-phase file protocol:
``emit`` writes composite images plus a prompt manifest, ``score`` consumes
the adapter's prediction files. The box producer supports the four ablation
modes: refined (filtered), raw coarse, ground truth, and full image.
"""

from __future__ import annotations

import json
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .compose import CompositeBatch, TileSlot, merge_tiles, slot_offset
from .errors import (
    ConfigError,
    DatasetError,
    DatasetMissingError,
    MissingPredictionsError,
    SegmenterContractError,
    StorageError,
)
from .masks import (
    BoundingBox,
    bbox_from_mask,
    downscale_mask,
    largest_component_filter,
    rescale_bbox,
    threshold,
)
from .metrics import CaseScore, DiceReport, aggregate
from .segmenters import validate_predictions
from .storage import (
    CasePaths,
    ManifestComposite,
    ManifestSlot,
    PromptManifest,
    load_case_arrays,
    prediction_path,
    read_manifest,
    read_mask,
    read_probmap,
    scan_dataset,
    write_image,
    write_manifest,
    write_probmap,
    write_report,
)

BOX_SOURCES = ("filtered", "coarse_raw", "gt", "full_image")
FALLBACKS = ("full_image_box", "skip_case")


@dataclass(frozen=True)
class PipelineConfig:
    theta1: float = 0.75
    theta2: float = 0.5
    downscale_factor: int = 4
    connectivity: int = 4
    tile_size: int = 512
    box_source: str = "filtered"
    empty_mask_fallback: str = "full_image_box"
    source_domain: str | None = None
    target_domains: tuple[str, ...] | None = None
    dataset_root: str | None = None
    seed: int = 0
    jobs: int = 1

    def __post_init__(self) -> None:
        if not 0.0 <= self.theta1 <= 1.0 or not 0.0 <= self.theta2 <= 1.0:
            raise ConfigError(
                f"thresholds must lie in [0, 1]: theta1={self.theta1}, theta2={self.theta2}"
            )
        if self.downscale_factor < 1:
            raise ConfigError(f"downscale_factor must be >= 1, got {self.downscale_factor}")
        if self.connectivity not in (4, 8):
            raise ConfigError(f"connectivity must be 4 or 8, got {self.connectivity}")
        if self.tile_size < 1:
            raise ConfigError(f"tile_size must be positive, got {self.tile_size}")
        if self.tile_size % self.downscale_factor:
            raise ConfigError(
                f"downscale_factor {self.downscale_factor} must divide tile_size {self.tile_size}"
            )
        if self.box_source not in BOX_SOURCES:
            raise ConfigError(f"box_source must be one of {BOX_SOURCES}, got {self.box_source!r}")
        if self.empty_mask_fallback not in FALLBACKS:
            raise ConfigError(
                f"empty_mask_fallback must be one of {FALLBACKS}, got {self.empty_mask_fallback!r}"
            )
        if self.jobs < 1:
            raise ConfigError(f"jobs must be >= 1, got {self.jobs}")
        if self.target_domains is not None:
            object.__setattr__(self, "target_domains", tuple(self.target_domains))

    @classmethod
    def from_dict(cls, doc: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        return cls(**doc)

    @classmethod
    def from_file(cls, path, overrides: dict | None = None) -> "PipelineConfig":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError:
            raise
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise ConfigError(f"{path}: config is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        if overrides:
            doc.update(overrides)
        return cls.from_dict(doc)

    def for_run(self) -> "PipelineConfig":
        if self.source_domain is None:
            raise ConfigError("source_domain is required for pipeline runs")
        if self.dataset_root is None:
            raise ConfigError("dataset_root is required for pipeline runs")
        return self


@dataclass
class CaseRecord:
    case_id: str
    domain: str
    image: np.ndarray
    coarse_map: np.ndarray
    gt_mask: np.ndarray

    def __post_init__(self) -> None:
        if not (self.image.shape == self.coarse_map.shape == self.gt_mask.shape):
            raise DatasetError(
                f"case {self.case_id}: image/coarse/gt dimensions disagree"
            )


def load_case(paths: CasePaths) -> CaseRecord:
    image, gt, coarse = load_case_arrays(paths)
    return CaseRecord(
        case_id=paths.case_id,
        domain=paths.domain,
        image=image,
        coarse_map=coarse,
        gt_mask=gt,
    )


def refine_boxes(case: CaseRecord, cfg: PipelineConfig) -> BoundingBox | None:
    """Produce the prompt box for one case according to ``cfg.box_source``.

    Returns None only when the relevant mask is empty and the fallback is
    ``skip_case``; with ``full_image_box`` the whole frame is the prompt.
    """
    h, w = case.gt_mask.shape
    full = BoundingBox(0, 0, w - 1, h - 1)
    if cfg.box_source == "full_image":
        return full

    if cfg.box_source == "gt":
        box = bbox_from_mask(case.gt_mask)
    else:
        fg = threshold(case.coarse_map, cfg.theta1)
        low = downscale_mask(fg, cfg.downscale_factor)
        if cfg.box_source == "filtered":
            low = largest_component_filter(low, cfg.connectivity)
        low_box = bbox_from_mask(low)
        box = None if low_box is None else rescale_bbox(low_box, cfg.downscale_factor)

    if box is not None:
        return box
    if cfg.empty_mask_fallback == "full_image_box":
        return full
    return None


def _resolve_targets(cfg: PipelineConfig, index: dict) -> list[str]:
    if cfg.target_domains is None:
        targets = [d for d in sorted(index) if d != cfg.source_domain]
    else:
        targets = list(cfg.target_domains)
        missing = sorted(set(targets) - set(index))
        if missing:
            raise DatasetMissingError(f"target domains missing from dataset: {missing}")
        if cfg.source_domain in targets:
            raise ConfigError(
                f"source domain {cfg.source_domain!r} cannot be a target domain"
            )
    if not targets:
        raise ConfigError("no target domains to evaluate")
    return targets


def load_gt_lookup(cfg: PipelineConfig) -> dict[str, np.ndarray]:
    """Ground-truth masks for every case the run will score, keyed by case id.
    This is what the mock segmenters are constructed from."""
    cfg = cfg.for_run()
    index = scan_dataset(cfg.dataset_root)
    if cfg.source_domain not in index:
        raise DatasetMissingError(
            f"source domain {cfg.source_domain!r} not in dataset (found {sorted(index)})"
        )
    lookup: dict[str, np.ndarray] = {}
    for domain in _resolve_targets(cfg, index):
        for paths in index[domain]:
            lookup[paths.case_id] = read_mask(paths.gt)
    return lookup


@dataclass
class CompositePlan:
    composite_id: str
    target_domain: str
    cases: list[CaseRecord]
    boxes: list[list[BoundingBox]]  # tile-local, one list per occupied slot

    def batch(self) -> CompositeBatch:
        return merge_tiles(
            [case.image for case in self.cases],
            boxes=self.boxes,
            case_ids=[case.case_id for case in self.cases],
            composite_id=self.composite_id,
        )


@dataclass
class RunPlan:
    cfg: PipelineConfig
    composites: list[CompositePlan]
    gt_by_case: dict[str, np.ndarray]
    skipped: list[str] = field(default_factory=list)


def plan_run(cfg: PipelineConfig) -> RunPlan:
    """Load the dataset and lay out composites for every target domain.

    Cases are grouped four at a time in dataset order within each target
    domain; a trailing remainder leaves blank slots. Cases whose box producer
    returned None (skip_case fallback) are left out entirely.
    """
    cfg = cfg.for_run()
    index = scan_dataset(cfg.dataset_root)
    if cfg.source_domain not in index:
        raise DatasetMissingError(
            f"source domain {cfg.source_domain!r} not in dataset "
            f"(found {sorted(index)})"
        )
    targets = _resolve_targets(cfg, index)

    composites: list[CompositePlan] = []
    gt_by_case: dict[str, np.ndarray] = {}
    skipped: list[str] = []
    for domain in targets:
        kept: list[tuple[CaseRecord, BoundingBox]] = []
        for paths in index[domain]:
            case = load_case(paths)
            if case.gt_mask.shape != (cfg.tile_size, cfg.tile_size):
                raise DatasetError(
                    f"case {case.case_id}: dimensions {case.gt_mask.shape} do not "
                    f"match tile_size {cfg.tile_size}"
                )
            box = refine_boxes(case, cfg)
            if box is None:
                skipped.append(case.case_id)
                continue
            gt_by_case[case.case_id] = case.gt_mask
            kept.append((case, box))
        for start in range(0, len(kept), 4):
            chunk = kept[start : start + 4]
            composites.append(
                CompositePlan(
                    composite_id=f"{domain}-{start // 4:04d}",
                    target_domain=domain,
                    cases=[case for case, _ in chunk],
                    boxes=[[box] for _, box in chunk],
                )
            )
    return RunPlan(cfg=cfg, composites=composites, gt_by_case=gt_by_case, skipped=skipped)


def manifest_from_plan(plan: RunPlan) -> PromptManifest:
    composites = []
    for comp_plan in plan.composites:
        batch = comp_plan.batch()
        domains = {case.case_id: case.domain for case in comp_plan.cases}
        slots = [
            ManifestSlot(
                index=slot.index,
                case_id=slot.case_id,
                domain=domains.get(slot.case_id),
                blank=slot.blank,
            )
            for slot in batch.slots
        ]
        composites.append(
            ManifestComposite(
                composite_id=comp_plan.composite_id,
                image_ref=f"composites/{comp_plan.composite_id}.png",
                slots=slots,
                boxes=batch.boxes,
            )
        )
    return PromptManifest(tile_size=plan.cfg.tile_size, composites=composites)


def score_composite(
    slots: list[TileSlot],
    boxes: list[list[BoundingBox]],
    maps: list[np.ndarray],
    tile_size: int,
    theta2: float,
    gt_by_case: dict[str, np.ndarray],
    source_domain: str,
    domain_by_case: dict[str, str],
) -> list[CaseScore]:
    """Threshold per-box maps, crop to the prompting slot's quadrant, OR the
    slot's boxes together, and Dice each tile against its ground truth."""
    scores: list[CaseScore] = []
    map_index = 0
    for slot, slot_boxes in zip(slots, boxes):
        if slot.blank:
            continue
        tile_pred = np.zeros((tile_size, tile_size), dtype=bool)
        row_off, col_off = slot_offset(slot.index, tile_size)
        for _box in slot_boxes:
            binary = threshold(maps[map_index], theta2)
            tile_pred |= binary[
                row_off : row_off + tile_size, col_off : col_off + tile_size
            ]
            map_index += 1
        gt = gt_by_case[slot.case_id]
        overlap = int(np.count_nonzero(tile_pred & gt))
        total = int(np.count_nonzero(tile_pred)) + int(np.count_nonzero(gt))
        value = 1.0 if total == 0 else 2.0 * overlap / total
        scores.append(
            CaseScore(
                case_id=slot.case_id,
                source_domain=source_domain,
                target_domain=domain_by_case[slot.case_id],
                dice=value,
            )
        )
    return scores


def run_pipeline(cfg: PipelineConfig, segmenter, artifacts_dir=None) -> DiceReport:
    """Run the full mock-side pipeline and aggregate a DiceReport.

    When ``artifacts_dir`` is given, the run also writes everything the
    two-phase protocol would produce: composite PNGs, the prompt manifest,
    per-box prediction NPYs, and the report in both formats.
    """
    plan = plan_run(cfg)
    if not plan.composites:
        raise DatasetError("every case was skipped; nothing to score")
    domain_by_case = {
        case.case_id: case.domain for comp in plan.composites for case in comp.cases
    }

    out_dir = Path(artifacts_dir) if artifacts_dir is not None else None
    if out_dir is not None:
        (out_dir / "composites").mkdir(parents=True, exist_ok=True)
        write_manifest(out_dir / "manifest.json", manifest_from_plan(plan))

    predict_lock = threading.Lock()
    reentrant = getattr(segmenter, "reentrant", True)

    def process(comp_plan: CompositePlan) -> list[CaseScore]:
        batch = comp_plan.batch()
        if reentrant:
            maps = segmenter.predict(batch)
        else:
            with predict_lock:
                maps = segmenter.predict(batch)
        maps = validate_predictions(batch, maps)
        if out_dir is not None:
            write_image(out_dir / "composites" / f"{batch.composite_id}.png", batch.image)
            map_index = 0
            for slot, slot_boxes in zip(batch.slots, batch.boxes):
                for box_index in range(len(slot_boxes)):
                    path = prediction_path(
                        out_dir / "predictions", batch.composite_id, slot.index, box_index
                    )
                    path.parent.mkdir(parents=True, exist_ok=True)
                    write_probmap(path, maps[map_index])
                    map_index += 1
        return score_composite(
            batch.slots,
            batch.boxes,
            maps,
            cfg.tile_size,
            cfg.theta2,
            plan.gt_by_case,
            cfg.source_domain,
            domain_by_case,
        )

    if cfg.jobs > 1 and len(plan.composites) > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            score_lists = list(pool.map(process, plan.composites))
    else:
        score_lists = [process(comp) for comp in plan.composites]

    scores = [score for sub in score_lists for score in sub]
    report = aggregate(scores)
    if out_dir is not None:
        write_report(report, out_dir / "report.json", format="structured")
        write_report(report, out_dir / "report.txt", format="text")
    return report


def emit_phase(cfg: PipelineConfig, out_dir) -> Path:
    """Phase one of the external protocol: write composite images and the
    prompt manifest, then stop. No segmenter is involved."""
    plan = plan_run(cfg)
    if not plan.composites:
        raise DatasetError("every case was skipped; nothing to emit")
    out_dir = Path(out_dir)
    (out_dir / "composites").mkdir(parents=True, exist_ok=True)
    manifest = manifest_from_plan(plan)
    for comp_plan in plan.composites:
        batch = comp_plan.batch()
        write_image(out_dir / "composites" / f"{batch.composite_id}.png", batch.image)
    manifest_path = out_dir / "manifest.json"
    write_manifest(manifest_path, manifest)
    return manifest_path


def score_phase(
    cfg: PipelineConfig,
    manifest_path,
    predictions_dir,
    out_dir=None,
) -> DiceReport:
    """Phase two: score prediction files an adapter produced for a manifest.

    Prediction files that are missing or malformed count as segmenter contract
    violations, not dataset errors.
    """
    cfg = cfg.for_run()
    manifest = read_manifest(manifest_path)
    if manifest.tile_size != cfg.tile_size:
        raise ConfigError(
            f"manifest tile_size {manifest.tile_size} does not match config {cfg.tile_size}"
        )
    index = scan_dataset(cfg.dataset_root)
    side = 2 * cfg.tile_size

    gt_by_case: dict[str, np.ndarray] = {}
    domain_by_case: dict[str, str] = {}
    paths_by_case = {
        paths.case_id: paths for cases in index.values() for paths in cases
    }
    scores: list[CaseScore] = []
    for comp in manifest.composites:
        slots = [
            TileSlot(index=s.index, case_id=s.case_id, blank=s.blank) for s in comp.slots
        ]
        maps: list[np.ndarray] = []
        for slot, slot_boxes in zip(comp.slots, comp.boxes):
            if slot.blank:
                continue
            if slot.case_id not in paths_by_case:
                raise DatasetError(f"manifest case {slot.case_id!r} is not in the dataset")
            if slot.case_id not in gt_by_case:
                gt_by_case[slot.case_id] = read_mask(paths_by_case[slot.case_id].gt)
                domain_by_case[slot.case_id] = slot.domain or paths_by_case[slot.case_id].domain
            for box_index in range(len(slot_boxes)):
                path = prediction_path(predictions_dir, comp.composite_id, slot.index, box_index)
                if not path.is_file():
                    raise MissingPredictionsError(f"prediction file missing: {path}")
                try:
                    arr = read_probmap(path)
                except StorageError as exc:
                    raise SegmenterContractError(f"invalid prediction file: {exc}") from exc
                if arr.shape != (side, side):
                    raise SegmenterContractError(
                        f"{path}: prediction shape {arr.shape}, expected {(side, side)}"
                    )
                maps.append(arr)
        scores.extend(
            score_composite(
                slots,
                comp.boxes,
                maps,
                cfg.tile_size,
                cfg.theta2,
                gt_by_case,
                cfg.source_domain,
                domain_by_case,
            )
        )
    report = aggregate(scores)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_report(report, out_dir / "report.json", format="structured")
        write_report(report, out_dir / "report.txt", format="text")
    return report


def sweep_runs(cfg: PipelineConfig, thetas, sources, segmenter_factory):
    """Run the pipeline per (source, theta2) and collect reports for the
    threshold-sweep table: maps theta2 -> list of reports, one per source."""
    reports: dict[float, list[DiceReport]] = {}
    for theta in thetas:
        row = []
        for source in sources:
            run_cfg = replace(cfg, source_domain=source, target_domains=None, theta2=theta)
            segmenter = segmenter_factory(run_cfg)
            row.append(run_pipeline(run_cfg, segmenter))
        reports[float(theta)] = row
    return reports
