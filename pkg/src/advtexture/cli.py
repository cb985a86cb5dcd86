"""Command-line interface.

Subcommands: extract-boxes, train (stage one), refine (stage two),
baseline <kind>, synthesize, evaluate, shift-study, plot. Every command
reads the run config file; --seed, --out and --detector override it.
Exit codes: 0 success, 2 usage error, 1 categorized toolkit error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import data_io, evaluation, pipeline
from .detector import create_adapter
from .errors import AdvTextureError, ArtifactMismatchError, InvalidArgumentError
from .objectives import LossReport
from .texture_core import tile_pattern

log = logging.getLogger(__name__)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="advtexture",
        description="Expandable adversarial textures against person detectors.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="run config YAML")
        p.add_argument("--out", required=True, help="run directory")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--detector", default=None, help="override config detector")

    p = sub.add_parser("extract-boxes", help="self-label training images with placement boxes")
    common(p)
    p.add_argument("--split", default=None, help="dataset split (default: train split)")
    p.add_argument("--force", action="store_true", help="re-extract even if cached")

    p = sub.add_parser("train", help="stage one: train generator + auxiliary scorer")
    common(p)

    p = sub.add_parser("refine", help="stage two: search the toroidal latent unit")
    common(p)
    p.add_argument("--checkpoint", default=None, help="stage-one checkpoint (default: final)")

    p = sub.add_parser("baseline", help="produce a baseline texture")
    common(p)
    p.add_argument("kind", choices=[k.value for k in pipeline.BaselineKind])
    p.add_argument("--patch", default=None, help="input patch PNG (tiled_patch baseline)")

    p = sub.add_parser("synthesize", help="emit a texture from a trained run")
    common(p)
    p.add_argument("--latent-sides", type=int, nargs=2, metavar=("H", "W"), required=True)
    p.add_argument("--ega", action="store_true",
                   help="sample a normal latent instead of tiling the refined unit")
    p.add_argument("--texture-out", default=None, help="output PNG path")

    p = sub.add_parser("evaluate", help="AP / recall curve / mASR of a texture")
    common(p)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--texture", default=None, help="texture PNG to evaluate")
    group.add_argument("--clean", action="store_true", help="evaluate clean images (AP 1.0)")
    p.add_argument("--crop-mode", default="toroidal", choices=["toroidal", "interior", "single"])
    p.add_argument("--no-resample", action="store_true", help="use the canonical crop only")
    p.add_argument("--tag", default=None, help="label for output files")

    p = sub.add_parser("shift-study", help="AP vs crop displacement ratio")
    common(p)
    p.add_argument("--texture", required=True)
    p.add_argument("--ratios", type=float, nargs="+", default=[0.0, 0.25, 0.5, 0.75, 1.0])
    p.add_argument("--crop-mode", default="toroidal", choices=["toroidal", "interior", "single"])
    p.add_argument("--tag", default=None)

    p = sub.add_parser("plot", help="render loss / recall / shift plots from a run")
    p.add_argument("--out", required=True, help="run directory")

    return parser


def _load_config(args) -> pipeline.RunConfig:
    cfg = pipeline.RunConfig.from_yaml(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.detector is not None:
        cfg.detector = args.detector
    return cfg


def _adapter(cfg: pipeline.RunConfig):
    return create_adapter(cfg.detector, **cfg.detector_kwargs)


def _snapshot_config(cfg: pipeline.RunConfig, run_dir: Path):
    run_dir.mkdir(parents=True, exist_ok=True)
    cfg.write_yaml(run_dir / "config.yaml")


def _test_images(cfg: pipeline.RunConfig):
    manifest = data_io.load_dataset(cfg.dataset_root, cfg.test_split)
    return [img for _, img in manifest.iter_images()]


def _cmd_extract_boxes(args) -> int:
    cfg = _load_config(args)
    run_dir = Path(args.out)
    _snapshot_config(cfg, run_dir)
    adapter = _adapter(cfg)
    split = args.split or cfg.train_split
    manifest = data_io.load_dataset(cfg.dataset_root, split)
    boxes = pipeline.prepare_boxes(cfg, run_dir, adapter, manifest, split=split,
                                   force=args.force)
    n = sum(len(b) for b in boxes.values())
    print(f"cached {n} boxes over {len(boxes)} images at "
          f"{pipeline.box_cache_path(run_dir, cfg, split)}")
    return 0


def _cmd_train(args) -> int:
    cfg = _load_config(args)
    run_dir = Path(args.out)
    _snapshot_config(cfg, run_dir)
    adapter = _adapter(cfg)
    manifest = data_io.load_dataset(cfg.dataset_root, cfg.train_split)
    boxes = pipeline.load_boxes(cfg, run_dir)
    _, _, reports = pipeline.train_stage_one(cfg, run_dir, adapter, manifest, boxes)
    if reports:
        print(f"stage one done: {len(reports)} steps, "
              f"final total loss {reports[-1].total:.4f}")
    else:
        print("stage one done: 0 steps (networks initialized only)")
    return 0


def _cmd_refine(args) -> int:
    cfg = _load_config(args)
    run_dir = Path(args.out)
    adapter = _adapter(cfg)
    manifest = data_io.load_dataset(cfg.dataset_root, cfg.train_split)
    boxes = pipeline.load_boxes(cfg, run_dir)
    ckpt = args.checkpoint or run_dir / "checkpoints" / "stage1_final.pt"
    generator, _, _ = pipeline.load_stage_one(ckpt)
    _, reports = pipeline.optimize_latent_stage_two(generator, cfg, run_dir, adapter,
                                                    manifest, boxes)
    if reports:
        print(f"stage two done: {len(reports)} steps, "
              f"final energy {reports[-1].energy:.4f}")
    else:
        print("stage two done: 0 steps")
    return 0


def _cmd_baseline(args) -> int:
    cfg = _load_config(args)
    run_dir = Path(args.out)
    _snapshot_config(cfg, run_dir)
    kind = pipeline.BaselineKind(args.kind)
    needs_training = kind not in (pipeline.BaselineKind.RANDOM_TEXTURE,
                                  pipeline.BaselineKind.TILED_PATCH)
    adapter = manifest = boxes = None
    if needs_training:
        adapter = _adapter(cfg)
        manifest = data_io.load_dataset(cfg.dataset_root, cfg.train_split)
        boxes = pipeline.load_boxes(cfg, run_dir)
    result = pipeline.run_baseline(kind, cfg, run_dir, adapter, manifest, boxes,
                                   patch_path=args.patch)
    out = data_io.export_texture(result["texture"],
                                 run_dir / "textures" / f"baseline_{kind.value}.png",
                                 tile_preview=True)
    print(f"baseline {kind.value}: wrote {out}")
    return 0


def _cmd_synthesize(args) -> int:
    cfg = _load_config(args)
    run_dir = Path(args.out)
    generator, _, s1 = pipeline.load_stage_one(run_dir / "checkpoints" / "stage1_final.pt")
    local = None
    if not args.ega:
        local, s2 = pipeline.load_stage_two(run_dir / "checkpoints" / "stage2_final.pt")
        if s2.get("generator_sha") != pipeline.state_sha(generator):
            raise ArtifactMismatchError(
                "stage-two unit was refined against a different generator checkpoint"
            )
    rng = np.random.default_rng(cfg.seed if args.seed is None else args.seed)
    texture = pipeline.synthesize_texture(generator, local, tuple(args.latent_sides), rng)
    out = Path(args.texture_out) if args.texture_out else (
        run_dir / "textures" / ("texture_ega.png" if args.ega else "texture_tcega.png"))
    data_io.export_texture(texture, out, tile_preview=True)
    h, w = texture.spatial
    print(f"wrote {out} ({h}x{w})")
    return 0


def _cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    run_dir = Path(args.out)
    adapter = _adapter(cfg)
    images = _test_images(cfg)
    eval_dir = run_dir / "eval"
    if args.clean:
        gt = evaluation.build_ground_truth(adapter, images, cfg.eval_conf_threshold,
                                           cfg.eval_nms_iou)
        preds = evaluation.predict(adapter, images, cfg.eval_nms_iou)
        ap = evaluation.compute_ap(preds, gt)
        evaluation.write_metrics_json(eval_dir / "clean_metrics.json",
                                      evaluation.EvalResult(ap, [], 0.0, []),
                                      extra={"mode": "clean"})
        print(f"clean AP {ap:.3f}")
        return 0
    texture = data_io.load_texture(args.texture)
    tag = args.tag or Path(args.texture).stem
    result = evaluation.evaluate_texture(
        adapter, images, texture, seed=cfg.seed, resample=not args.no_resample,
        crop_mode=args.crop_mode, crop=cfg.crop_size,
        conf_threshold=cfg.eval_conf_threshold, nms_iou=cfg.eval_nms_iou,
        apply_transforms=cfg.eval_apply_transforms, placement=cfg.placement, eot=cfg.eot,
        tps_grid_size=cfg.tps_grid_size, tps_sigma=cfg.tps_sigma)
    evaluation.write_metrics_json(eval_dir / f"{tag}_metrics.json", result,
                                  extra={"texture": str(args.texture)})
    evaluation.write_curve_csv(eval_dir / f"{tag}_recall.csv", result.recall_curve,
                               ("confidence", "recall"))
    print(f"texture {tag}: AP {result.ap:.3f} mASR {result.masr:.3f}")
    return 0


def _cmd_shift_study(args) -> int:
    cfg = _load_config(args)
    run_dir = Path(args.out)
    adapter = _adapter(cfg)
    images = _test_images(cfg)
    texture = data_io.load_texture(args.texture)
    tag = args.tag or Path(args.texture).stem
    result = evaluation.shift_study(
        texture, args.ratios, adapter, images, seed=cfg.seed, crop=cfg.crop_size,
        crop_mode=args.crop_mode, conf_threshold=cfg.eval_conf_threshold,
        nms_iou=cfg.eval_nms_iou, apply_transforms=cfg.eval_apply_transforms,
        placement=cfg.placement, eot=cfg.eot, tps_grid_size=cfg.tps_grid_size,
        tps_sigma=cfg.tps_sigma)
    rows = sorted(result.items())
    evaluation.write_curve_csv(run_dir / "eval" / f"{tag}_shift.csv", rows,
                               ("shift_ratio", "ap"))
    for r, ap in rows:
        print(f"shift {r:.2f}: AP {ap:.3f}")
    return 0


def _cmd_plot(args) -> int:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    run_dir = Path(args.out)
    made = 0
    logs_dir = run_dir / "logs"
    log_paths = sorted(logs_dir.glob("*_losses.ndjson")) if logs_dir.is_dir() else []
    for log_path in log_paths:
        reports = [LossReport.from_json_line(l) for l in log_path.read_text().splitlines() if l]
        if not reports:
            continue
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot([r.step for r in reports], [r.total for r in reports], label="total")
        ax.plot([r.step for r in reports], [r.energy for r in reports], label="energy")
        ax.set_xlabel("step")
        ax.set_ylabel("loss")
        ax.legend()
        ax.set_title(log_path.stem)
        fig.tight_layout()
        fig.savefig(log_path.with_suffix(".png"))
        plt.close(fig)
        made += 1
    eval_dir = run_dir / "eval"
    if eval_dir.is_dir():
        for csv_path in sorted(eval_dir.glob("*.csv")):
            rows = csv_path.read_text().splitlines()
            if len(rows) < 2:
                continue
            header = rows[0].split(",")
            data = [[float(v) for v in r.split(",")] for r in rows[1:]]
            fig, ax = plt.subplots(figsize=(6, 4))
            ax.plot([d[0] for d in data], [d[1] for d in data], marker="o")
            ax.set_xlabel(header[0])
            ax.set_ylabel(header[1])
            ax.set_ylim(-0.02, 1.02)
            ax.set_title(csv_path.stem)
            fig.tight_layout()
            fig.savefig(csv_path.with_suffix(".png"))
            plt.close(fig)
            made += 1
    print(f"rendered {made} plots under {run_dir}")
    return 0


_COMMANDS = {
    "extract-boxes": _cmd_extract_boxes,
    "train": _cmd_train,
    "refine": _cmd_refine,
    "baseline": _cmd_baseline,
    "synthesize": _cmd_synthesize,
    "evaluate": _cmd_evaluate,
    "shift-study": _cmd_shift_study,
    "plot": _cmd_plot,
}


def cli(argv) -> int:
    """Run one CLI invocation; returns the process exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except InvalidArgumentError as exc:
        print(f"invalid argument: {exc}", file=sys.stderr)
        return 1
    except ArtifactMismatchError as exc:
        print(f"artifact mismatch: {exc}", file=sys.stderr)
        return 1
    except AdvTextureError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    raise SystemExit(cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
