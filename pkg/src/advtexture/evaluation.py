"""Digital-domain metrics: AP, recall-confidence curves, ASR/mASR, shift study.

Ground truth is detector-self-labeled on the clean test images, so the
clean AP is 1.0 by construction and any drop measures the attack. Lower
AP means a stronger attack.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .detector import Detection, DetectorAdapter, iou_cxcywh
from .errors import InvalidArgumentError
from .texture_core import TexturePattern, toroidal_crop
from .transforms import apply_eot, place_patch, sample_eot, sample_tps, tps_transform

log = logging.getLogger(__name__)

MASR_THRESHOLDS = tuple(round(0.1 * k, 1) for k in range(1, 10))


@dataclass
class EvalResult:
    """Metrics of one texture against one detector on one image set."""

    ap: float
    recall_curve: list[tuple[float, float]]
    masr: float
    asr_table: list[tuple[float, float]]

    def to_dict(self) -> dict:
        return {
            "ap": self.ap,
            "recall_curve": [[t, r] for t, r in self.recall_curve],
            "masr": self.masr,
            "asr_table": [[t, a] for t, a in self.asr_table],
        }


def build_ground_truth(adapter: DetectorAdapter, images, conf_threshold: float = 0.5,
                       nms_iou: float = 0.4) -> list[list[Detection]]:
    """Self-label clean images: the detector's confident boxes become GT."""
    gt = []
    for img in images:
        gt.append(adapter.detect_eval(img.unsqueeze(0), conf_threshold, nms_iou)[0])
    return gt


def _match_greedy(pred: list[Detection], gt: list[Detection], iou_threshold: float,
                  strict: bool) -> list[bool]:
    """True/false-positive labels for predictions sorted by confidence.

    Each prediction matches its highest-IoU ground-truth box; the match
    counts only if that box is still unmatched and the IoU clears the
    threshold (strictly when strict=True).
    """
    order = sorted(range(len(pred)), key=lambda i: (-pred[i].confidence, i))
    used = [False] * len(gt)
    tp = [False] * len(pred)
    for i in order:
        best_j, best_iou = -1, 0.0
        for j, g in enumerate(gt):
            v = iou_cxcywh(pred[i].box, g.box)
            if v > best_iou:
                best_j, best_iou = j, v
        ok = best_iou > iou_threshold if strict else best_iou >= iou_threshold
        if ok and best_j >= 0 and not used[best_j]:
            used[best_j] = True
            tp[i] = True
    return tp


def compute_ap(predictions: list[list[Detection]], ground_truth: list[list[Detection]],
               iou_threshold: float = 0.5) -> float:
    """Single-class average precision with all-points interpolation.

    Predictions across images are ranked by confidence and matched
    greedily at IoU >= iou_threshold. Returns NaN when there is no
    ground truth at all (AP undefined).
    """
    if len(predictions) != len(ground_truth):
        raise InvalidArgumentError("predictions and ground truth must align per image")
    n_gt = sum(len(g) for g in ground_truth)
    if n_gt == 0:
        return float("nan")
    scored = []
    for img_idx, preds in enumerate(predictions):
        tp = _match_greedy(preds, ground_truth[img_idx], iou_threshold, strict=False)
        for det, is_tp in zip(preds, tp):
            scored.append((det.confidence, img_idx, is_tp))
    if not scored:
        return 0.0
    scored.sort(key=lambda t: -t[0])
    tps = np.array([s[2] for s in scored], dtype=np.float64)
    cum_tp = np.cumsum(tps)
    cum_fp = np.cumsum(1.0 - tps)
    recall = cum_tp / n_gt
    precision = cum_tp / (cum_tp + cum_fp)

    mrec = np.concatenate([[0.0], recall, [1.0]])
    mpre = np.concatenate([[0.0], precision, [0.0]])
    for i in range(len(mpre) - 2, -1, -1):
        mpre[i] = max(mpre[i], mpre[i + 1])
    idx = np.nonzero(mrec[1:] != mrec[:-1])[0] + 1
    return float(np.sum((mrec[idx] - mrec[idx - 1]) * mpre[idx]))


def recall_confidence_curve(predictions: list[list[Detection]],
                            ground_truth: list[list[Detection]],
                            thresholds) -> list[tuple[float, float]]:
    """Fraction of GT boxes retrieved by predictions with confidence >= t."""
    thresholds = list(thresholds)
    if any(b < a for a, b in zip(thresholds, thresholds[1:])):
        raise InvalidArgumentError("thresholds must be sorted ascending")
    n_gt = sum(len(g) for g in ground_truth)
    curve = []
    for t in thresholds:
        matched = 0
        for preds, gt in zip(predictions, ground_truth):
            kept = [p for p in preds if p.confidence >= t]
            matched += sum(_match_greedy(kept, gt, 0.5, strict=True))
        curve.append((float(t), matched / n_gt if n_gt else 0.0))
    return curve


def masr(predictions: list[list[Detection]], ground_truth: list[list[Detection]],
         thresholds=MASR_THRESHOLDS) -> tuple[float, list[tuple[float, float]]]:
    """Attack success rate per confidence threshold, and its mean.

    An image counts as correctly detected at threshold t when any
    prediction with confidence > t overlaps a GT box with IoU > 0.5;
    ASR(t) is the fraction of images not correctly detected. Images
    without GT are skipped.
    """
    table = []
    for t in thresholds:
        total = failed = 0
        for preds, gt in zip(predictions, ground_truth):
            if not gt:
                continue
            total += 1
            detected = any(
                p.confidence > t and any(iou_cxcywh(p.box, g.box) > 0.5 for g in gt)
                for p in preds
            )
            if not detected:
                failed += 1
        table.append((float(t), failed / total if total else 0.0))
    value = float(np.mean([a for _, a in table])) if table else 0.0
    return value, table


def _crop_for_box(texture_data: torch.Tensor, rng, crop: int, crop_mode: str,
                  resample: bool, shift_cols: int = 0) -> torch.Tensor:
    if crop_mode == "toroidal":
        if resample:
            off_r = int(rng.integers(texture_data.shape[1]))
            off_c = int(rng.integers(texture_data.shape[2]))
        else:
            off_r, off_c = 0, 0
        return toroidal_crop(texture_data, off_r, off_c + shift_cols, crop, crop)
    if crop_mode == "interior":
        max_r = texture_data.shape[1] - crop
        max_c = texture_data.shape[2] - crop
        if max_r < 0 or max_c < 0:
            raise InvalidArgumentError("texture smaller than crop size in interior mode")
        if resample:
            off_r = int(rng.integers(max_r + 1))
            off_c = int(rng.integers(max_c + 1))
        else:
            off_r, off_c = 0, 0
        off_c = min(off_c + shift_cols, max_c)
        return texture_data[:, off_r:off_r + crop, off_c:off_c + crop]
    if crop_mode == "single":
        # a lone patch over empty surroundings: shifting the window exposes
        # zero fill, reproducing the segment-missing situation
        patch = texture_data
        if patch.shape[1] != crop or patch.shape[2] != crop:
            patch = torch.nn.functional.interpolate(
                patch.unsqueeze(0), size=(crop, crop), mode="bilinear", align_corners=False
            )[0]
        out = torch.zeros(3, crop, crop, dtype=patch.dtype)
        if shift_cols < crop:
            out[:, :, :crop - shift_cols] = patch[:, :, shift_cols:]
        return out
    raise InvalidArgumentError(f"unknown crop_mode {crop_mode!r}")


def attack_testset(adapter: DetectorAdapter, images, texture: TexturePattern,
                   resample: bool, rng: np.random.Generator, *,
                   ground_truth: list[list[Detection]] | None = None,
                   crop: int = 150, crop_mode: str = "toroidal",
                   placement=None, eot=None, tps_grid_size: int = 5,
                   tps_sigma: float = 0.03, apply_transforms: bool = True,
                   conf_threshold: float = 0.5, nms_iou: float = 0.4,
                   shift_cols: int = 0) -> tuple[list[torch.Tensor], list[list[Detection]]]:
    """Place texture crops on every self-labeled person of a test set.

    One crop is drawn per placed box (random position when resample is
    set, the canonical position otherwise), run through the same
    transform chain used for crafting, and composited at the same
    placement geometry. Returns (modified images, ground truth).
    """
    from .transforms import EotRanges, PlacementConfig

    placement = placement or PlacementConfig()
    eot = eot or EotRanges()
    if ground_truth is None:
        ground_truth = build_ground_truth(adapter, images, conf_threshold, nms_iou)
    modified = []
    with torch.no_grad():
        for img, gt in zip(images, ground_truth):
            out = img
            boxes = sorted(gt, key=lambda d: -d.confidence)
            for box in boxes:
                patch = _crop_for_box(texture.data, rng, crop, crop_mode, resample, shift_cols)
                if apply_transforms:
                    params = sample_eot(rng, eot)
                    warp = sample_tps(rng, tps_grid_size, tps_sigma)
                    patch = tps_transform(apply_eot(patch, params, rng), warp)
                out = place_patch(out, [box], patch, rng, placement)
            modified.append(out)
    return modified, ground_truth


def predict(adapter: DetectorAdapter, images, nms_iou: float = 0.4) -> list[list[Detection]]:
    """Ranked predictions for metric computation (floor-level confidence cut)."""
    preds = []
    for img in images:
        preds.append(adapter.detect_eval(img.unsqueeze(0), adapter.conf_floor, nms_iou)[0])
    return preds


def evaluate_texture(adapter: DetectorAdapter, images, texture: TexturePattern, *,
                     seed: int = 0, resample: bool = True, crop_mode: str = "toroidal",
                     crop: int = 150, conf_threshold: float = 0.5, nms_iou: float = 0.4,
                     apply_transforms: bool = True, placement=None, eot=None,
                     tps_grid_size: int = 5, tps_sigma: float = 0.03,
                     recall_thresholds=None,
                     ground_truth: list[list[Detection]] | None = None) -> EvalResult:
    """AP + recall curve + mASR of one texture on a test set."""
    rng = np.random.default_rng(seed)
    modified, gt = attack_testset(
        adapter, images, texture, resample, rng, ground_truth=ground_truth, crop=crop,
        crop_mode=crop_mode, placement=placement, eot=eot, tps_grid_size=tps_grid_size,
        tps_sigma=tps_sigma, apply_transforms=apply_transforms,
        conf_threshold=conf_threshold, nms_iou=nms_iou)
    preds = predict(adapter, modified, nms_iou)
    thresholds = recall_thresholds if recall_thresholds is not None \
        else [round(0.05 * k, 2) for k in range(20)]
    value, table = masr(preds, gt)
    return EvalResult(
        ap=compute_ap(preds, gt),
        recall_curve=recall_confidence_curve(preds, gt, thresholds),
        masr=value,
        asr_table=table,
    )


def shift_study(texture: TexturePattern, shift_ratios, adapter: DetectorAdapter, images, *,
                seed: int = 0, crop: int = 150, crop_mode: str = "toroidal",
                conf_threshold: float = 0.5, nms_iou: float = 0.4,
                apply_transforms: bool = True, placement=None, eot=None,
                tps_grid_size: int = 5, tps_sigma: float = 0.03) -> dict[float, float]:
    """AP as crops are displaced from the canonical position by r * crop size.

    Expandable textures wrap toroidally; a lone patch exposes zero fill,
    so its AP degrades with the ratio while a seamless texture's stays
    flat. The rng is re-seeded identically per ratio, so the only change
    across ratios is the displacement.
    """
    ratios = [float(r) for r in shift_ratios]
    if any(r < 0 or r > 1 for r in ratios):
        raise InvalidArgumentError("shift ratios must lie in [0, 1]")
    gt = build_ground_truth(adapter, images, conf_threshold, nms_iou)
    result = {}
    for r in ratios:
        rng = np.random.default_rng(seed)
        modified, _ = attack_testset(
            adapter, images, texture, False, rng, ground_truth=gt, crop=crop,
            crop_mode=crop_mode, placement=placement, eot=eot, tps_grid_size=tps_grid_size,
            tps_sigma=tps_sigma, apply_transforms=apply_transforms,
            conf_threshold=conf_threshold, nms_iou=nms_iou,
            shift_cols=round(r * crop))
        preds = predict(adapter, modified, nms_iou)
        result[r] = compute_ap(preds, gt)
    return result


def write_metrics_json(path, result: EvalResult, extra: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = result.to_dict()
    if extra:
        payload.update(extra)
    path.write_text(json.dumps(payload, indent=2) + "\n")
    return path


def write_curve_csv(path, rows, header: tuple[str, ...]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        for row in rows:
            w.writerow([f"{v:.6f}" for v in row])
    return path
