"""Desk-scale fixtures: synthetic blob-person scenes and a tiny person detector.

The scenes draw simple figures (head, torso, legs) over cluttered
backgrounds; the detector is a small fully-convolutional net with a
single-scale grid head, trained with benign-occluder augmentation so
that arbitrary non-adversarial patches on the torso do not already break
detection. Everything is deterministic under a seed and runs in minutes
on a CPU, which makes the whole attack pipeline testable without large
pretrained weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .detector import DetectorAdapter, RawDetections, register_adapter
from .errors import InvalidArgumentError

FIXTURE_NAME = "toy_detector.pt"
FIXTURE_FORMAT = "advtexture-toy-detector-v1"


@dataclass(frozen=True)
class SceneConfig:
    image_size: int = 128
    min_persons: int = 1
    max_persons: int = 2
    empty_prob: float = 0.0
    occluder_prob: float = 0.0  # benign torso patch, used during detector training


def _fill_rect(img, y0, y1, x0, x1, color):
    s = img.shape[1]
    y0, y1 = max(0, int(y0)), min(s, int(y1))
    x0, x1 = max(0, int(x0)), min(s, int(x1))
    if y1 > y0 and x1 > x0:
        img[:, y0:y1, x0:x1] = color.reshape(3, 1, 1)


def _fill_circle(img, cy, cx, radius, color):
    s = img.shape[1]
    yy, xx = np.ogrid[:s, :s]
    mask = (yy - cy) ** 2 + (xx - cx) ** 2 <= radius**2
    img[:, mask] = color.reshape(3, 1)


def _random_background(rng, s):
    c0 = rng.uniform(0.25, 0.85, size=3)
    c1 = rng.uniform(0.25, 0.85, size=3)
    ramp = np.linspace(0.0, 1.0, s)
    if rng.random() < 0.5:
        grad = c0[:, None, None] + (c1 - c0)[:, None, None] * ramp[None, :, None]
    else:
        grad = c0[:, None, None] + (c1 - c0)[:, None, None] * ramp[None, None, :]
    img = grad + rng.normal(0.0, 0.02, size=(3, s, s))
    # non-person clutter so the detector cannot fire on any colored blob
    for _ in range(rng.integers(0, 4)):
        color = rng.uniform(0.1, 0.9, size=3)
        w = rng.integers(s // 10, s // 3)
        h = rng.integers(s // 10, s // 3)
        y0 = rng.integers(0, s - h)
        x0 = rng.integers(0, s - w)
        if rng.random() < 0.5:
            _fill_rect(img, y0, y0 + h, x0, x0 + w, color)
        else:
            _fill_circle(img, y0 + h / 2, x0 + w / 2, min(w, h) / 2, color)
    return img


def _skin_tone(rng):
    return np.array([rng.uniform(0.72, 0.95), rng.uniform(0.52, 0.72), rng.uniform(0.38, 0.58)])


def _draw_person(img, rng, cx, cy, height):
    """Head + torso + legs figure centered at (cx, cy); returns its tight box."""
    s = img.shape[1]
    top = cy - height / 2
    width = 0.40 * height
    skin = _skin_tone(rng)
    shirt = rng.uniform(0.05, 0.95, size=3)
    pants = rng.uniform(0.05, 0.6, size=3)
    # torso
    _fill_rect(img, top + 0.20 * height, top + 0.58 * height,
               cx - 0.18 * height, cx + 0.18 * height, shirt)
    # arms
    _fill_rect(img, top + 0.22 * height, top + 0.52 * height,
               cx - 0.26 * height, cx - 0.18 * height, skin)
    _fill_rect(img, top + 0.22 * height, top + 0.52 * height,
               cx + 0.18 * height, cx + 0.26 * height, skin)
    # legs
    _fill_rect(img, top + 0.58 * height, top + 0.98 * height,
               cx - 0.15 * height, cx - 0.03 * height, pants)
    _fill_rect(img, top + 0.58 * height, top + 0.98 * height,
               cx + 0.03 * height, cx + 0.15 * height, pants)
    # head
    _fill_circle(img, top + 0.11 * height, cx, 0.10 * height, skin)
    return (cx / s, cy / s, (2 * 0.26 * height) / s, height / s)


def _benign_occluder(rng, side):
    """A random non-adversarial patch: flat color, color blocks, or noise."""
    kind = rng.integers(0, 3)
    if kind == 0:
        return np.broadcast_to(rng.uniform(0, 1, size=(3, 1, 1)), (3, side, side)).copy()
    if kind == 1:
        blocks = rng.uniform(0, 1, size=(3, 4, 4))
        reps = math.ceil(side / 4)
        return np.repeat(np.repeat(blocks, reps, axis=1), reps, axis=2)[:, :side, :side]
    return rng.uniform(0, 1, size=(3, side, side))


def render_scene(rng: np.random.Generator, cfg: SceneConfig = SceneConfig()):
    """One synthetic scene: returns (image (3,S,S) float32 in [0,1], boxes).

    Boxes are normalized (cx, cy, w, h) tuples, one per drawn person.
    """
    s = cfg.image_size
    img = _random_background(rng, s)
    boxes = []
    if rng.random() >= cfg.empty_prob:
        n = int(rng.integers(cfg.min_persons, cfg.max_persons + 1))
        for _ in range(n):
            for _attempt in range(20):
                height = rng.uniform(0.40, 0.72) * s
                cx = rng.uniform(0.30 * height, s - 0.30 * height)
                cy = rng.uniform(height / 2 + 1, s - height / 2 - 1)
                cand = (cx / s, cy / s, (0.52 * height) / s, height / s)
                if all(_boxes_apart(cand, b) for b in boxes):
                    box = _draw_person(img, rng, cx, cy, height)
                    if cfg.occluder_prob > 0 and rng.random() < cfg.occluder_prob:
                        _paste_occluder(img, rng, box)
                    boxes.append(box)
                    break
    return np.clip(img, 0.0, 1.0).astype(np.float32), boxes


def _boxes_apart(a, b):
    return abs(a[0] - b[0]) > (a[2] + b[2]) / 2 or abs(a[1] - b[1]) > (a[3] + b[3]) / 2


def _paste_occluder(img, rng, box):
    """Paste a benign patch with the same geometry the attack placement uses."""
    s = img.shape[1]
    cx, cy, w, h = box
    side = max(1, round(0.55 * w * s))
    occ = _benign_occluder(rng, side)
    x0 = round(cx * s - side / 2)
    y0 = round((cy - 0.05 * h) * s - side / 2)
    x0c, y0c = max(0, x0), max(0, y0)
    x1c, y1c = min(s, x0 + side), min(s, y0 + side)
    if x1c > x0c and y1c > y0c:
        img[:, y0c:y1c, x0c:x1c] = occ[:, y0c - y0:y1c - y0, x0c - x0:x1c - x0]


class ToyPersonDetector(DetectorAdapter, nn.Module):
    """Tiny single-scale grid detector over 16x16-pixel cells.

    The machine floor is 0.1: the head is effectively silent below that
    (blank inputs score ~1e-4), so lower cells are noise, not candidates.
    """

    name = "toy"
    family = "one_stage"
    differentiable = True
    conf_floor = 0.1
    stride = 16

    def __init__(self):
        nn.Module.__init__(self)
        self.backbone = nn.Sequential(
            nn.Conv2d(3, 16, 5, stride=2, padding=2), nn.LeakyReLU(0.1),
            nn.Conv2d(16, 32, 3, stride=2, padding=1), nn.LeakyReLU(0.1),
            nn.Conv2d(32, 48, 3, stride=2, padding=1), nn.LeakyReLU(0.1),
            nn.Conv2d(48, 64, 3, stride=2, padding=1), nn.LeakyReLU(0.1),
            nn.Conv2d(64, 64, 3, stride=1, padding=1), nn.LeakyReLU(0.1),
        )
        self.head = nn.Conv2d(64, 5, 1)

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        return self.head(self.backbone(images))

    def _prepare(self, images) -> torch.Tensor:
        if isinstance(images, (list, tuple)):
            images = torch.stack(list(images))
        if images.ndim == 3:
            images = images.unsqueeze(0)
        if images.ndim != 4 or images.shape[1] != 3:
            raise InvalidArgumentError(f"expected (B, 3, H, W) images, got {tuple(images.shape)}")
        h, w = images.shape[2], images.shape[3]
        th = math.ceil(h / self.stride) * self.stride
        tw = math.ceil(w / self.stride) * self.stride
        if (th, tw) != (h, w):
            images = F.interpolate(images, size=(th, tw), mode="bilinear", align_corners=False)
        return images

    def detect_raw(self, images) -> list[RawDetections]:
        images = self._prepare(images)
        out = self.forward(images)
        b, _, gh, gw = out.shape
        conf = torch.sigmoid(out[:, 0])
        txy = torch.sigmoid(out[:, 1:3])
        twh = torch.sigmoid(out[:, 3:5])
        gy = torch.arange(gh, dtype=out.dtype).reshape(1, gh, 1)
        gx = torch.arange(gw, dtype=out.dtype).reshape(1, 1, gw)
        cx = (gx + txy[:, 0]) / gw
        cy = (gy + txy[:, 1]) / gh
        boxes = torch.stack([cx, cy, twh[:, 0], twh[:, 1]], dim=-1)  # (B, gh, gw, 4)
        results = []
        for i in range(b):
            flat_conf = conf[i].reshape(-1)
            flat_boxes = boxes[i].reshape(-1, 4)
            keep = flat_conf > self.conf_floor
            results.append(RawDetections(flat_boxes[keep], flat_conf[keep]))
        return results


def _training_targets(boxes_batch, gh, gw):
    """Grid objectness plus box-regression targets for a batch of scenes."""
    b = len(boxes_batch)
    obj = torch.zeros(b, gh, gw)
    box_t = torch.zeros(b, 4, gh, gw)
    mask = torch.zeros(b, gh, gw, dtype=torch.bool)
    for i, boxes in enumerate(boxes_batch):
        for cx, cy, w, h in boxes:
            gj = min(gw - 1, int(cx * gw))
            gi = min(gh - 1, int(cy * gh))
            obj[i, gi, gj] = 1.0
            box_t[i, 0, gi, gj] = cx * gw - gj
            box_t[i, 1, gi, gj] = cy * gh - gi
            box_t[i, 2, gi, gj] = w
            box_t[i, 3, gi, gj] = h
            mask[i, gi, gj] = True
    return obj, box_t, mask


def train_toy_detector(steps: int = 2500, batch_size: int = 8, seed: int = 7,
                       image_size: int = 128, lr: float = 1e-3,
                       progress: bool = False) -> ToyPersonDetector:
    """Train the fixture detector on synthetic scenes with occluder augmentation."""
    rng = np.random.default_rng(seed)
    torch.manual_seed(seed)
    det = ToyPersonDetector()
    opt = torch.optim.Adam(det.parameters(), lr=lr)
    cfg = SceneConfig(image_size=image_size, empty_prob=0.15, occluder_prob=0.5)
    bce = nn.BCEWithLogitsLoss(pos_weight=torch.tensor(8.0))
    for step in range(steps):
        imgs, boxes = [], []
        for _ in range(batch_size):
            img, bxs = render_scene(rng, cfg)
            imgs.append(torch.from_numpy(img))
            boxes.append(bxs)
        x = torch.stack(imgs)
        out = det(x)
        gh, gw = out.shape[2], out.shape[3]
        obj_t, box_t, mask = _training_targets(boxes, gh, gw)
        loss = bce(out[:, 0], obj_t)
        if mask.any():
            pred_box = torch.sigmoid(out[:, 1:5])
            mask4 = mask.unsqueeze(1).expand_as(pred_box)
            loss = loss + 5.0 * F.mse_loss(pred_box[mask4], box_t[mask4])
        opt.zero_grad()
        loss.backward()
        opt.step()
        if progress and (step + 1) % 200 == 0:
            print(f"toy detector step {step + 1}/{steps} loss {loss.item():.4f}")
    det.eval()
    return det


def save_toy_detector(det: ToyPersonDetector, path):
    torch.save({"format": FIXTURE_FORMAT, "state": det.state_dict()}, path)


def toy_detector(weights: str | Path | None = None) -> ToyPersonDetector:
    """Load the bundled fixture weights (or an explicit weights file)."""
    det = ToyPersonDetector()
    if weights is None:
        ref = resources.files("advtexture").joinpath("assets").joinpath(FIXTURE_NAME)
        with resources.as_file(ref) as p:
            payload = torch.load(p, map_location="cpu", weights_only=True)
    else:
        payload = torch.load(Path(weights), map_location="cpu", weights_only=True)
    if payload.get("format") != FIXTURE_FORMAT:
        raise InvalidArgumentError(f"unexpected toy detector format {payload.get('format')!r}")
    det.load_state_dict(payload["state"])
    det.eval()
    return det


def build_toyset(out_dir, n_train: int = 64, n_test: int = 48, seed: int = 11,
                 image_size: int = 128):
    """Write a small synthetic dataset (train/ and test/ PNG folders)."""
    from PIL import Image

    out_dir = Path(out_dir)
    rng = np.random.default_rng(seed)
    cfg = SceneConfig(image_size=image_size)
    for split, count in (("train", n_train), ("test", n_test)):
        d = out_dir / split
        d.mkdir(parents=True, exist_ok=True)
        for i in range(count):
            img, _ = render_scene(rng, cfg)
            arr = np.rint(img.transpose(1, 2, 0) * 255.0).astype(np.uint8)
            Image.fromarray(arr).save(d / f"scene_{i:04d}.png")
    return out_dir


register_adapter("toy", lambda weights=None: toy_detector(weights))
