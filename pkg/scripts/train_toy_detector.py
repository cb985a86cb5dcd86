#!/usr/bin/env python3
"""Train the bundled toy person detector fixture and report quality numbers.

Writes src/advtexture/assets/toy_detector.pt. The fixture must detect
synthetic persons reliably (also under benign torso occluders) and stay
quiet on blank images and clutter.
"""

import argparse
from pathlib import Path

import numpy as np
import torch

from advtexture import toy
from advtexture.detector import iou_cxcywh


def evaluate(det, n=60, seed=999, occluders=False):
    rng = np.random.default_rng(seed)
    cfg = toy.SceneConfig(occluder_prob=1.0 if occluders else 0.0)
    tp = fp = fn = 0
    for _ in range(n):
        img, boxes = toy.render_scene(rng, cfg)
        dets = det.detect_eval(torch.from_numpy(img).unsqueeze(0), 0.5, 0.4)[0]
        matched = set()
        for d in dets:
            best, best_iou = None, 0.5
            for gi, g in enumerate(boxes):
                if gi in matched:
                    continue
                v = iou_cxcywh(d.box, g)
                if v > best_iou:
                    best, best_iou = gi, v
            if best is None:
                fp += 1
            else:
                matched.add(best)
                tp += 1
        fn += len(boxes) - len(matched)
    recall = tp / max(1, tp + fn)
    precision = tp / max(1, tp + fp)
    return recall, precision


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=2500)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--out", default="src/advtexture/assets/toy_detector.pt")
    args = ap.parse_args()

    det = toy.train_toy_detector(steps=args.steps, seed=args.seed, progress=True)

    r, p = evaluate(det, occluders=False)
    ro, po = evaluate(det, occluders=True)
    blank = det.detect_raw(torch.full((1, 3, 128, 128), 0.5))[0]
    max_blank = blank.scores.max().item() if blank.scores.numel() else 0.0
    print(f"clean scenes:    recall {r:.3f} precision {p:.3f}")
    print(f"occluded scenes: recall {ro:.3f} precision {po:.3f}")
    print(f"blank image max confidence: {max_blank:.4f}")

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    toy.save_toy_detector(det, out)
    print(f"saved {out} ({out.stat().st_size} bytes)")


if __name__ == "__main__":
    main()
