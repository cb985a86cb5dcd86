"""Uniform adapter interface over target person detectors.

Adapters expose two views of the same model: ``detect_raw`` returns every
candidate person box with confidences that keep gradient connectivity to
the input pixels (for attack training), and ``detect_eval`` returns
thresholded, NMS-suppressed boxes (for metrics). Real pretrained
detectors are optional plug-ins loaded from external weight files; the
bundled toy detector makes the whole pipeline testable at desk scale.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, Iterable, NamedTuple

import numpy as np
import torch

from .errors import CapabilityError, InvalidArgumentError

PERSON_CLASS = 0


@dataclass(frozen=True)
class Detection:
    """One predicted box: normalized (cx, cy, w, h), confidence, class id."""

    box: tuple[float, float, float, float]
    confidence: float
    class_id: int = PERSON_CLASS

    def __post_init__(self):
        cx, cy, w, h = self.box
        if not all(np.isfinite(v) for v in (cx, cy, w, h, self.confidence)):
            raise InvalidArgumentError(f"non-finite detection {self}")
        if w <= 0 or h <= 0:
            raise InvalidArgumentError(f"degenerate box size ({w}, {h})")
        if not 0.0 <= self.confidence <= 1.0:
            raise InvalidArgumentError(f"confidence {self.confidence} outside [0, 1]")

    @property
    def area(self) -> float:
        return self.box[2] * self.box[3]


class RawDetections(NamedTuple):
    """Candidate boxes for one image; tensors stay on the autograd graph."""

    boxes: torch.Tensor  # (N, 4) normalized cxcywh
    scores: torch.Tensor  # (N,)


def iou_cxcywh(a, b) -> float:
    """IoU between two normalized (cx, cy, w, h) boxes."""
    ax0, ay0 = a[0] - a[2] / 2, a[1] - a[3] / 2
    ax1, ay1 = a[0] + a[2] / 2, a[1] + a[3] / 2
    bx0, by0 = b[0] - b[2] / 2, b[1] - b[3] / 2
    bx1, by1 = b[0] + b[2] / 2, b[1] + b[3] / 2
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = a[2] * a[3] + b[2] * b[3] - inter
    return float(inter / union) if union > 0 else 0.0


def nms(boxes: np.ndarray, scores: np.ndarray, iou_threshold: float) -> list[int]:
    """Greedy NMS; returns kept indices.

    Processing order is a stable sort by (confidence desc, index asc), so
    the result is independent of input ordering up to that tie-break.
    """
    n = len(scores)
    order = sorted(range(n), key=lambda i: (-scores[i], i))
    kept: list[int] = []
    suppressed = [False] * n
    for i in order:
        if suppressed[i]:
            continue
        kept.append(i)
        for j in order:
            if not suppressed[j] and j != i and iou_cxcywh(boxes[i], boxes[j]) > iou_threshold:
                suppressed[j] = True
    return kept


class DetectorAdapter(ABC):
    """Common surface over person detectors.

    Subclasses set ``name``, ``family`` ("one_stage" or "two_stage"),
    ``differentiable``, and ``conf_floor`` (the machine floor under which
    raw candidates are dropped).
    """

    name: str = "base"
    family: str = "one_stage"
    person_class_id: int = PERSON_CLASS
    differentiable: bool = False
    conf_floor: float = 1e-3

    @abstractmethod
    def detect_raw(self, images) -> list[RawDetections]:
        """All candidate person boxes per image, no NMS, gradients attached."""

    def require_differentiable(self):
        if not self.differentiable:
            raise CapabilityError(
                f"adapter {self.name!r} does not expose differentiable confidences"
            )

    def detect_eval(self, images, conf_threshold: float, nms_iou: float) -> list[list[Detection]]:
        """Thresholded, NMS-suppressed person boxes per image."""
        if not 0.0 <= conf_threshold <= 1.0 or not 0.0 <= nms_iou <= 1.0:
            raise InvalidArgumentError("thresholds must lie in [0, 1]")
        results = []
        with torch.no_grad():
            raw = self.detect_raw(images)
        for dets in raw:
            boxes = dets.boxes.detach().cpu().numpy()
            scores = dets.scores.detach().cpu().numpy()
            keep = [i for i in range(len(scores)) if scores[i] > conf_threshold]
            boxes, scores = boxes[keep], scores[keep]
            kept = nms(boxes, scores, nms_iou)
            results.append([
                Detection(tuple(float(v) for v in boxes[i]), float(min(scores[i], 1.0)),
                          self.person_class_id)
                for i in kept
            ])
        return results


def default_box_extraction(adapter: DetectorAdapter) -> tuple[float, float]:
    """Per-family training-box settings: (confidence threshold, min area fraction)."""
    if adapter.family == "two_stage":
        return 0.75, 0.0016
    return 0.5, 0.0


def extract_training_boxes(adapter: DetectorAdapter, images,
                           conf_threshold: float, nms_iou: float,
                           min_area_fraction: float = 0.0) -> dict[str, list[Detection]]:
    """Self-label a dataset with placement targets for attack training.

    ``images`` is a DatasetManifest or any iterable of (image_id, tensor)
    pairs. Boxes below the confidence threshold, then NMS losers, then
    boxes smaller than min_area_fraction of the image are dropped. The
    result is deterministic for a fixed adapter and dataset.
    """
    items: Iterable = images.iter_images() if hasattr(images, "iter_images") else images
    out: dict[str, list[Detection]] = {}
    for image_id, img in items:
        dets = adapter.detect_eval(img.unsqueeze(0), conf_threshold, nms_iou)[0]
        out[str(image_id)] = [d for d in dets if d.area >= min_area_fraction]
    return out


_ADAPTERS: dict[str, Callable[..., DetectorAdapter]] = {}


def register_adapter(name: str, factory: Callable[..., DetectorAdapter]):
    _ADAPTERS[name] = factory


def available_adapters() -> list[str]:
    _load_builtin_adapters()
    return sorted(_ADAPTERS)


def _load_builtin_adapters():
    from . import toy  # noqa: F401  (registers "toy")
    from . import real_adapters  # noqa: F401  (registers torchvision plug-ins)


def create_adapter(name: str, **kwargs) -> DetectorAdapter:
    """Instantiate a registered adapter by name."""
    _load_builtin_adapters()
    if name not in _ADAPTERS:
        raise InvalidArgumentError(
            f"unknown detector {name!r}; available: {', '.join(sorted(_ADAPTERS))}"
        )
    return _ADAPTERS[name](**kwargs)
