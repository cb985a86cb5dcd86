"""Dataset ingestion and artifact persistence.

Textures are exported as lossless 8-bit PNG (quantization is the only
export error); box caches and metrics use diffable text formats;
checkpoints are binary archives carrying a format tag, spec metadata and
parameter arrays. Every persisted artifact records the hash of the run
config that produced it.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .detector import Detection
from .errors import DatasetError, InvalidArgumentError
from .texture_core import TexturePattern, tile_pattern

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "advtexture-ckpt-v1"
BOX_CACHE_FORMAT = "advtexture-boxes-v1"

_IMAGE_EXTS = {".png", ".jpg", ".jpeg", ".bmp"}


@dataclass(frozen=True)
class ImageRecord:
    id: str
    path: Path
    width: int
    height: int


@dataclass
class DatasetManifest:
    """Sorted-by-id listing of a directory-of-images dataset split."""

    root: Path
    split: str
    records: list[ImageRecord]
    skipped: list[str]

    def __len__(self):
        return len(self.records)

    def iter_images(self):
        for rec in self.records:
            yield rec.id, load_image(rec.path)

    def image(self, image_id: str) -> torch.Tensor:
        for rec in self.records:
            if rec.id == image_id:
                return load_image(rec.path)
        raise InvalidArgumentError(f"unknown image id {image_id!r}")


def _split_dir(root: Path, split: str) -> Path:
    candidates = [
        root / split,
        root / split.capitalize(),
        root / split / "pos",
        root / split.capitalize() / "pos",
    ]
    for c in candidates:
        if c.is_dir():
            # reference pedestrian layout keeps images under <Split>/pos
            pos = c / "pos"
            return pos if pos.is_dir() else c
    raise DatasetError(f"no split directory for {split!r} under {root}")


def load_dataset(root, split: str) -> DatasetManifest:
    """Scan a split directory into a deterministic manifest.

    Corrupt or unreadable images are listed in the manifest's skip
    report; more than 1% corrupt aborts the load.
    """
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset root {root} does not exist")
    split_dir = _split_dir(root, split)
    paths = sorted(p for p in split_dir.rglob("*") if p.suffix.lower() in _IMAGE_EXTS)
    records, skipped = [], []
    for p in paths:
        try:
            with Image.open(p) as im:
                w, h = im.size
        except Exception as exc:  # noqa: BLE001 - any decode failure is a skip
            skipped.append(f"{p}: {exc}")
            continue
        records.append(ImageRecord(id=p.stem, path=p, width=w, height=h))
    ids = [r.id for r in records]
    if len(set(ids)) != len(ids):
        raise DatasetError(f"duplicate image ids under {split_dir}")
    if not records:
        log.warning("load_dataset: no images under %s", split_dir)
    if paths and len(skipped) > 0.01 * len(paths):
        raise DatasetError(
            f"{len(skipped)}/{len(paths)} images unreadable under {split_dir}: "
            + "; ".join(skipped[:5])
        )
    if skipped:
        log.warning("load_dataset: skipped %d unreadable images", len(skipped))
    records.sort(key=lambda r: r.id)
    return DatasetManifest(root=root, split=split, records=records, skipped=skipped)


@lru_cache(maxsize=512)
def _load_image_cached(path_str: str) -> torch.Tensor:
    with Image.open(path_str) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    return torch.from_numpy(arr.transpose(2, 0, 1))


def load_image(path) -> torch.Tensor:
    """Decode an image file to a (3, H, W) float tensor in [0, 1]."""
    return _load_image_cached(str(path)).clone()


def export_texture(texture: TexturePattern, path, tile_preview: bool = False) -> Path:
    """Write a texture as lossless 8-bit PNG (round-half-even quantization).

    With tile_preview a 3x3 tiled PNG is written next to it, demonstrating
    seam continuity of the wrapped pattern.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = texture.data.detach().cpu().numpy()
    arr = np.rint(data * 255.0).clip(0, 255).astype(np.uint8)
    Image.fromarray(arr.transpose(1, 2, 0)).save(path)
    if tile_preview:
        tiled = np.tile(arr, (1, 3, 3))
        Image.fromarray(tiled.transpose(1, 2, 0)).save(path.with_name(path.stem + "_tiled3x3.png"))
    return path


def load_texture(path) -> TexturePattern:
    """Reload an exported texture; max abs error vs the original is <= 1/255."""
    return TexturePattern(load_image(path))


def tiled_preview_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + "_tiled3x3.png")


def tile_texture(texture: TexturePattern, reps_rows: int, reps_cols: int) -> TexturePattern:
    return TexturePattern(tile_pattern(texture, reps_rows, reps_cols))


def config_hash(config_dict: dict) -> str:
    """Stable hash of a config snapshot (canonical JSON, sha256)."""
    blob = json.dumps(config_dict, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def cache_dir(default: Path | None = None) -> Path:
    """Box-cache directory; override with ADVTEXTURE_CACHE_DIR."""
    env = os.environ.get("ADVTEXTURE_CACHE_DIR")
    if env:
        return Path(env)
    return Path(default) if default is not None else Path(".advtexture_cache")


def save_box_cache(path, boxes: dict[str, list[Detection]], meta: dict) -> Path:
    """Persist per-image placement boxes as versioned columnar text.

    Floats use fixed 6-decimal formatting so a rerun with the same inputs
    is byte-identical.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"# {BOX_CACHE_FORMAT}"]
    for key in sorted(meta):
        lines.append(f"# {key}={meta[key]}")
    for image_id in sorted(boxes):
        dets = boxes[image_id]
        lines.append(f"{image_id} {len(dets)}")
        for d in dets:
            cx, cy, w, h = d.box
            lines.append(f"{cx:.6f} {cy:.6f} {w:.6f} {h:.6f} {d.confidence:.6f}")
    path.write_text("\n".join(lines) + "\n")
    return path


def load_box_cache(path) -> tuple[dict[str, list[Detection]], dict]:
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"box cache {path} does not exist")
    lines = path.read_text().splitlines()
    if not lines or lines[0] != f"# {BOX_CACHE_FORMAT}":
        raise InvalidArgumentError(f"{path} is not a {BOX_CACHE_FORMAT} file")
    meta: dict[str, str] = {}
    i = 1
    while i < len(lines) and lines[i].startswith("# "):
        key, _, value = lines[i][2:].partition("=")
        meta[key] = value
        i += 1
    boxes: dict[str, list[Detection]] = {}
    while i < len(lines):
        if not lines[i].strip():
            i += 1
            continue
        image_id, n = lines[i].rsplit(" ", 1)
        dets = []
        for j in range(int(n)):
            cx, cy, w, h, conf = (float(v) for v in lines[i + 1 + j].split())
            dets.append(Detection((cx, cy, w, h), conf))
        boxes[image_id] = dets
        i += 1 + int(n)
    return boxes, meta


def save_checkpoint(path, kind: str, payload: dict) -> Path:
    """Binary archive: format tag + kind + JSON-able metadata + tensors."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save({"format": CHECKPOINT_FORMAT, "kind": kind, **payload}, path)
    return path


def load_checkpoint(path, expect_kind: str | None = None) -> dict:
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"checkpoint {path} does not exist")
    payload = torch.load(path, map_location="cpu", weights_only=True)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise InvalidArgumentError(f"{path} has unexpected format {payload.get('format')!r}")
    if expect_kind is not None and payload.get("kind") != expect_kind:
        raise InvalidArgumentError(
            f"{path} holds a {payload.get('kind')!r} checkpoint, expected {expect_kind!r}"
        )
    return payload
