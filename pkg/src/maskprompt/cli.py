"""Command-line interface: one subcommand per pipeline stage plus the full
run, the threshold sweep, and report rendering.

Exit codes: 0 success, 1 validation error, 2 I/O or file-format error,
3 segmenter contract violation. Errors go to stderr; data goes to files or
stdout only. ``MASKPROMPT_CONFIG`` names a default config file.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .compose import TileSlot, merge_tiles, split_composite
from .errors import (
    MaskPromptError,
    SegmenterContractError,
    StorageError,
    ValidationError,
)
from .masks import (
    BoundingBox,
    bbox_from_mask,
    downscale_mask,
    largest_component_filter,
    rescale_bbox,
    threshold,
)
from .metrics import dice, sweep_report
from .pipeline import (
    BOX_SOURCES,
    FALLBACKS,
    PipelineConfig,
    emit_phase,
    load_gt_lookup,
    run_pipeline,
    score_phase,
    sweep_runs,
)
from .segmenters import NoisySegmenter, PerfectSegmenter
from .storage import (
    read_image,
    read_manifest,
    read_mask,
    read_probmap,
    read_report,
    render_report_text,
    render_sweep_text,
    write_image,
    write_manifest,
    write_mask,
    write_probmap,
    write_report,
    write_sweep,
)

CONFIG_ENV_VAR = "MASKPROMPT_CONFIG"


def _load_probability_input(path: Path) -> np.ndarray:
    """Confidence grid from file: NPY natively, or an 8-bit PNG whose pixel
    values map to v/255."""
    if path.suffix == ".npy":
        return read_probmap(path)
    return read_image(path).astype(np.float32) / 255.0


def _write_box(box: BoundingBox, out: str | None) -> None:
    doc = {"x_min": box.x_min, "y_min": box.y_min, "x_max": box.x_max, "y_max": box.y_max}
    text = json.dumps(doc, indent=2, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


def cmd_threshold(args) -> int:
    prob = _load_probability_input(Path(args.input))
    write_mask(args.out, threshold(prob, args.theta))
    return 0


def cmd_filter(args) -> int:
    prob = _load_probability_input(Path(args.input))
    fg = threshold(prob, args.theta)
    low = downscale_mask(fg, args.factor)
    kept = largest_component_filter(low, args.connectivity)
    write_mask(args.out, kept)
    if args.box_out:
        box = bbox_from_mask(kept)
        if box is None:
            raise ValidationError("filtered mask is empty; no box to write")
        _write_box(rescale_bbox(box, args.factor), args.box_out)
    return 0


def cmd_bbox(args) -> int:
    mask = read_mask(args.input)
    box = bbox_from_mask(mask)
    if box is None:
        raise ValidationError(f"{args.input}: mask is empty, no bounding box")
    if args.rescale > 1:
        box = rescale_bbox(box, args.rescale)
    _write_box(box, args.out)
    return 0


def cmd_merge(args) -> int:
    tile_paths = [Path(p) for p in args.tiles.split(",") if p]
    tiles = [read_image(p) for p in tile_paths]
    ids = args.ids.split(",") if args.ids else [p.stem for p in tile_paths]
    boxes = None
    if args.boxes:
        doc = json.loads(Path(args.boxes).read_text(encoding="utf-8"))
        boxes = [[BoundingBox.from_list(b) for b in tile_boxes] for tile_boxes in doc]
    batch = merge_tiles(tiles, boxes=boxes, case_ids=ids, composite_id=args.composite_id)
    write_image(args.out_image, batch.image)
    if args.out_manifest:
        from .storage import ManifestComposite, ManifestSlot, PromptManifest

        manifest = PromptManifest(
            tile_size=batch.tile_size,
            composites=[
                ManifestComposite(
                    composite_id=args.composite_id,
                    image_ref=str(args.out_image),
                    slots=[
                        ManifestSlot(s.index, s.case_id, None, s.blank) for s in batch.slots
                    ],
                    boxes=batch.boxes,
                )
            ],
        )
        write_manifest(args.out_manifest, manifest)
    return 0


def cmd_split(args) -> int:
    pred = read_probmap(args.input)
    if args.manifest:
        manifest = read_manifest(args.manifest)
        match = [c for c in manifest.composites if c.composite_id == args.composite_id]
        if not match:
            raise ValidationError(
                f"composite {args.composite_id!r} not found in {args.manifest}"
            )
        slots = [TileSlot(s.index, s.case_id, s.blank) for s in match[0].slots]
    else:
        side = pred.shape[0] // 2
        slots = [TileSlot(k, f"slot{k}") for k in range(4)]
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for case_id, tile in split_composite(pred, slots).items():
        safe = case_id.replace("/", "_")
        write_probmap(out_dir / f"{safe}.npy", tile)
    return 0


def cmd_dice(args) -> int:
    value = dice(read_mask(args.pred), read_mask(args.gt))
    print(value)
    return 0


def _config_from_args(args) -> PipelineConfig:
    overrides: dict = {}
    for key, attr in [
        ("theta1", "theta1"),
        ("theta2", "theta2"),
        ("downscale_factor", "factor"),
        ("connectivity", "connectivity"),
        ("tile_size", "tile_size"),
        ("box_source", "box_source"),
        ("empty_mask_fallback", "fallback"),
        ("source_domain", "source"),
        ("dataset_root", "dataset"),
        ("seed", "seed"),
        ("jobs", "jobs"),
    ]:
        value = getattr(args, attr, None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "targets", None):
        overrides["target_domains"] = tuple(args.targets.split(","))

    config_path = getattr(args, "config", None) or os.environ.get(CONFIG_ENV_VAR)
    if config_path:
        return PipelineConfig.from_file(config_path, overrides)
    return PipelineConfig.from_dict(overrides)


def _make_mock(kind: str, cfg: PipelineConfig):
    lookup = load_gt_lookup(cfg)
    if kind == "mock-perfect":
        return PerfectSegmenter(lookup)
    return NoisySegmenter(lookup, seed=cfg.seed)


def cmd_pipeline(args) -> int:
    cfg = _config_from_args(args)
    out_dir = Path(args.out)

    if args.phase == "emit":
        emit_phase(cfg, out_dir)
        return 0

    if args.phase == "score":
        if args.segmenter != "external":
            raise ValidationError("--phase score applies to --segmenter external")
        if not args.predictions:
            raise ValidationError("--phase score requires --predictions DIR")
        manifest_path = args.manifest or out_dir / "manifest.json"
        report = score_phase(cfg, manifest_path, args.predictions, out_dir=out_dir)
        print(render_report_text(report))
        return 0

    if args.segmenter == "external":
        raise ValidationError(
            "--segmenter external runs in two phases: emit, then score --predictions DIR"
        )
    report = run_pipeline(cfg, _make_mock(args.segmenter, cfg), artifacts_dir=out_dir)
    print(render_report_text(report))
    return 0


def cmd_sweep(args) -> int:
    cfg = _config_from_args(args)
    thetas = [float(t) for t in args.theta2_grid.split(",") if t]
    if not thetas:
        raise ValidationError("--theta2 needs at least one value")
    if args.sources == "all":
        from .storage import scan_dataset

        sources = sorted(scan_dataset(cfg.dataset_root))
    else:
        sources = args.sources.split(",")
    reports = sweep_runs(
        cfg,
        thetas=thetas,
        sources=sources,
        segmenter_factory=lambda run_cfg: _make_mock(args.segmenter, run_cfg),
    )
    table = sweep_report(reports)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_sweep(table, out_dir / "sweep.json", format="structured")
    write_sweep(table, out_dir / "sweep.txt", format="text")
    for theta, row in reports.items():
        for report in row:
            run_dir = out_dir / "runs" / f"{report.source_domain}-theta{theta:g}"
            run_dir.mkdir(parents=True, exist_ok=True)
            write_report(report, run_dir / "report.json", format="structured")
    print(render_sweep_text(table))
    return 0


def cmd_report(args) -> int:
    report = read_report(args.input)
    text = render_report_text(report)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="maskprompt",
        description="Refine coarse masks into box prompts, batch composites, and score cross-domain Dice.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("threshold", help="binarize a probability map")
    p.add_argument("--in", dest="input", required=True, help="NPY map or 8-bit PNG (v/255)")
    p.add_argument("--theta", type=float, required=True)
    p.add_argument("--out", required=True, help="output mask PNG")
    p.set_defaults(func=cmd_threshold)

    p = sub.add_parser(
        "filter",
        help="threshold, downscale, and keep the largest component",
    )
    p.add_argument("--in", dest="input", required=True, help="NPY map or 8-bit PNG (v/255)")
    p.add_argument("--theta", type=float, default=0.75)
    p.add_argument("--factor", type=int, default=4)
    p.add_argument("--connectivity", type=int, choices=(4, 8), default=4)
    p.add_argument("--out", required=True, help="filtered low-resolution mask PNG")
    p.add_argument("--box-out", help="also write the rescaled prompt box as JSON")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("bbox", help="tight bounding box of a mask")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--rescale", type=int, default=1)
    p.add_argument("--out", help="write JSON here instead of stdout")
    p.set_defaults(func=cmd_bbox)

    p = sub.add_parser("merge", help="pack up to four tiles into a composite")
    p.add_argument("--tiles", required=True, help="comma-separated tile PNGs")
    p.add_argument("--boxes", help="JSON file: per-tile lists of [x0,y0,x1,y1]")
    p.add_argument("--ids", help="comma-separated case ids (default: file stems)")
    p.add_argument("--composite-id", default="composite-0000")
    p.add_argument("--out-image", required=True)
    p.add_argument("--out-manifest")
    p.set_defaults(func=cmd_merge)

    p = sub.add_parser("split", help="crop a composite prediction back to tiles")
    p.add_argument("--in", dest="input", required=True, help="composite NPY map")
    p.add_argument("--manifest", help="manifest naming the composite's slots")
    p.add_argument("--composite-id", default="composite-0000")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("dice", help="Dice overlap of two mask PNGs")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.set_defaults(func=cmd_dice)

    def add_config_flags(p, with_theta2=True):
        p.add_argument("--config", help=f"config JSON (default ${CONFIG_ENV_VAR})")
        p.add_argument("--dataset", help="dataset root directory")
        p.add_argument("--source", help="source domain label")
        p.add_argument("--targets", help="comma-separated target domains")
        p.add_argument("--theta1", type=float)
        if with_theta2:
            p.add_argument("--theta2", type=float)
        p.add_argument("--factor", type=int, dest="factor")
        p.add_argument("--connectivity", type=int, choices=(4, 8))
        p.add_argument("--tile-size", type=int, dest="tile_size")
        p.add_argument("--box-source", choices=BOX_SOURCES, dest="box_source")
        p.add_argument("--fallback", choices=FALLBACKS)
        p.add_argument("--seed", type=int)
        p.add_argument("--jobs", type=int)

    p = sub.add_parser("pipeline", help="full refinement + segmentation + scoring run")
    add_config_flags(p)
    p.add_argument(
        "--segmenter",
        choices=("mock-perfect", "mock-noisy", "external"),
        default="mock-perfect",
    )
    p.add_argument("--phase", choices=("all", "emit", "score"), default="all")
    p.add_argument("--out", required=True, help="artifact directory")
    p.add_argument("--predictions", help="prediction directory (score phase)")
    p.add_argument("--manifest", help="manifest path (score phase; default <out>/manifest.json)")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("sweep", help="theta2 sweep grid over mock runs")
    add_config_flags(p, with_theta2=False)
    p.add_argument(
        "--theta2",
        dest="theta2_grid",
        required=True,
        help="comma-separated theta2 values, e.g. 0.5,0.75,0.9",
    )
    p.add_argument("--sources", default="all", help="comma-separated sources or 'all'")
    p.add_argument(
        "--segmenter", choices=("mock-perfect", "mock-noisy"), default="mock-noisy"
    )
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="render a structured report as a text table")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code if isinstance(exc.code, int) else 1
        return 0 if code == 0 else 1
    try:
        return args.func(args)
    except SegmenterContractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (StorageError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (MaskPromptError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
