#!/usr/bin/env python3
"""Desk-scale end-to-end trial: tune the toy config against the acceptance bars.

Runs stage one + stage two + pixel-patch baseline on the toy detector and
prints the quantities the acceptance suite will gate on.
"""

import argparse
import time
from pathlib import Path

import numpy as np
import torch

from advtexture import data_io, evaluation, pipeline, toy


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--workdir", default="/tmp/desk_trial")
    ap.add_argument("--steps1", type=int, default=200)
    ap.add_argument("--steps2", type=int, default=100)
    ap.add_argument("--lr1", type=float, default=0.001)
    ap.add_argument("--lr2", type=float, default=0.03)
    ap.add_argument("--lrb", type=float, default=0.1)
    ap.add_argument("--batch", type=int, default=4)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--n-test", type=int, default=32)
    args = ap.parse_args()

    torch.manual_seed(0)
    work = Path(args.workdir)
    t0 = time.time()
    if not (work / "data" / "train").is_dir():
        toy.build_toyset(work / "data", n_train=64, n_test=args.n_test, seed=11)
    cfg = pipeline.RunConfig(
        seed=args.seed,
        detector="toy",
        dataset_root=str(work / "data"),
        generator="toy",
        stage_one=pipeline.StageConfig(args.steps1, args.lr1, args.batch),
        stage_two=pipeline.StageConfig(args.steps2, args.lr2, args.batch),
        baseline=pipeline.StageConfig(args.steps1, args.lrb, args.batch),
        checkpoint_every=0,
    )
    adapter = toy.toy_detector()
    manifest = data_io.load_dataset(cfg.dataset_root, "train")
    run_dir = work / "run"
    boxes = pipeline.prepare_boxes(cfg, run_dir, adapter, manifest)
    n_boxes = sum(len(b) for b in boxes.values())
    print(f"[{time.time()-t0:6.1f}s] boxes: {n_boxes} over {len(boxes)} images")

    gen, aux, rep1 = pipeline.train_stage_one(cfg, run_dir, adapter, manifest, boxes)
    tot = [r.total for r in rep1]
    first50, last50 = float(np.mean(tot[:50])), float(np.mean(tot[-50:]))
    print(f"[{time.time()-t0:6.1f}s] stage1: first50 {first50:.4f} last50 {last50:.4f} "
          f"drop {(1 - last50 / first50) * 100:.1f}%  "
          f"(u_obj {rep1[0].u_obj:.3f} -> {np.mean([r.u_obj for r in rep1[-50:]]):.3f})")

    local, rep2 = pipeline.optimize_latent_stage_two(gen, cfg, run_dir, adapter, manifest, boxes)
    e2 = [r.energy for r in rep2]
    print(f"[{time.time()-t0:6.1f}s] stage2: first25 {np.mean(e2[:25]):.4f} "
          f"last25 {np.mean(e2[-25:]):.4f}")

    patch_tex, repp = pipeline.optimize_pixel_attack(
        cfg, adapter, manifest, boxes, side=cfg.crop_size, wrap=False, tag="patch1x")
    print(f"[{time.time()-t0:6.1f}s] single patch: first25 {np.mean([r.energy for r in repp[:25]]):.4f} "
          f"last25 {np.mean([r.energy for r in repp[-25:]]):.4f}")

    tex_tcega = pipeline.synthesize_texture(gen, local, gen.spec.min_latent_side)
    tex_rand = pipeline.random_texture(np.random.default_rng([cfg.seed, 4]),
                                       unit_size=2 * cfg.crop_size, block=cfg.crop_size // 5)

    test = data_io.load_dataset(cfg.dataset_root, "test")
    images = [img for _, img in test.iter_images()]
    kw = dict(seed=cfg.seed, crop=cfg.crop_size, conf_threshold=0.5, nms_iou=0.4)
    r_rand = evaluation.evaluate_texture(adapter, images, tex_rand, **kw)
    r_tcega = evaluation.evaluate_texture(adapter, images, tex_tcega, **kw)
    r_ega = evaluation.evaluate_texture(
        adapter, images,
        pipeline.synthesize_texture(gen, None, gen.spec.min_latent_side,
                                    np.random.default_rng(5)), **kw)
    print(f"[{time.time()-t0:6.1f}s] AP random {r_rand.ap:.3f} | EGA {r_ega.ap:.3f} | "
          f"TC-EGA {r_tcega.ap:.3f} | gap {r_rand.ap - r_tcega.ap:.3f}")
    print(f"         mASR random {r_rand.masr:.3f} | TC-EGA {r_tcega.masr:.3f}")

    ratios = [0.0, 0.25, 0.5, 0.75, 1.0]
    sh_tcega = evaluation.shift_study(tex_tcega, ratios, adapter, images,
                                      crop_mode="toroidal", **kw)
    sh_patch = evaluation.shift_study(patch_tex, ratios, adapter, images,
                                      crop_mode="single", **kw)
    aps_t = [sh_tcega[r] for r in ratios]
    aps_p = [sh_patch[r] for r in ratios]
    print(f"[{time.time()-t0:6.1f}s] shift TC-EGA {['%.3f' % a for a in aps_t]} std {np.std(aps_t):.4f}")
    print(f"         shift patch  {['%.3f' % a for a in aps_p]} std {np.std(aps_p):.4f}")
    print(f"total time {time.time()-t0:.1f}s")


if __name__ == "__main__":
    main()
