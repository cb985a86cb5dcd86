"""Optional plug-in adapters over torchvision detection models.

These require model weights from a local file (no downloads happen
here): pass ``weights_path`` pointing at a state dict saved from the
matching torchvision constructor. Internal score thresholding and NMS
are disabled so that ``detect_raw`` really returns raw candidates; the
shared ``detect_eval`` applies the toolkit's own filtering uniformly.
"""

from __future__ import annotations

from pathlib import Path

import torch

from .detector import DetectorAdapter, RawDetections, register_adapter
from .errors import InvalidArgumentError

_COCO_PERSON = 1  # torchvision label space: 0 is background


class TorchvisionAdapter(DetectorAdapter):
    differentiable = True
    conf_floor = 1e-3

    def __init__(self, builder_name: str, family: str, weights_path: str | Path,
                 max_candidates: int = 500):
        import torchvision.models.detection as tvd

        if weights_path is None:
            raise InvalidArgumentError(
                f"{builder_name} needs weights_path (external weight files are not bundled)"
            )
        builder = getattr(tvd, builder_name)
        self.name = builder_name
        self.family = family
        self.model = builder(weights=None, weights_backbone=None)
        state = torch.load(Path(weights_path), map_location="cpu", weights_only=True)
        self.model.load_state_dict(state)
        self.model.eval()
        # keep every candidate: filtering belongs to detect_eval
        if hasattr(self.model, "roi_heads"):
            self.model.roi_heads.score_thresh = 0.0
            self.model.roi_heads.nms_thresh = 1.0
            self.model.roi_heads.detections_per_img = max_candidates
        if hasattr(self.model, "score_thresh"):
            self.model.score_thresh = 0.0
        if hasattr(self.model, "nms_thresh"):
            self.model.nms_thresh = 1.0
        if hasattr(self.model, "detections_per_img"):
            self.model.detections_per_img = max_candidates

    def detect_raw(self, images) -> list[RawDetections]:
        if torch.is_tensor(images) and images.ndim == 3:
            images = [images]
        image_list = list(images) if not torch.is_tensor(images) else list(images.unbind(0))
        outputs = self.model(image_list)
        results = []
        for img, out in zip(image_list, outputs):
            h, w = img.shape[1], img.shape[2]
            person = out["labels"] == _COCO_PERSON
            xyxy = out["boxes"][person]
            scores = out["scores"][person]
            cx = (xyxy[:, 0] + xyxy[:, 2]) / (2 * w)
            cy = (xyxy[:, 1] + xyxy[:, 3]) / (2 * h)
            bw = (xyxy[:, 2] - xyxy[:, 0]) / w
            bh = (xyxy[:, 3] - xyxy[:, 1]) / h
            keep = scores > self.conf_floor
            boxes = torch.stack([cx, cy, bw, bh], dim=1)[keep]
            results.append(RawDetections(boxes, scores[keep]))
        return results


register_adapter(
    "fasterrcnn",
    lambda weights_path=None, **kw: TorchvisionAdapter(
        "fasterrcnn_resnet50_fpn", "two_stage", weights_path, **kw),
)
register_adapter(
    "maskrcnn",
    lambda weights_path=None, **kw: TorchvisionAdapter(
        "maskrcnn_resnet50_fpn", "two_stage", weights_path, **kw),
)
register_adapter(
    "retinanet",
    lambda weights_path=None, **kw: TorchvisionAdapter(
        "retinanet_resnet50_fpn", "one_stage", weights_path, **kw),
)
register_adapter(
    "ssd300",
    lambda weights_path=None, **kw: TorchvisionAdapter(
        "ssd300_vgg16", "one_stage", weights_path, **kw),
)
