"""Physical-robustness transform stack and patch application.

The chain patch -> photometric jitter -> non-rigid warp -> placement onto
detected persons is differentiable end to end with respect to the patch
pixels, so detector confidences backpropagate into the texture being
optimized.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .errors import InvalidArgumentError, NumericDegeneracyError
from .texture_core import _raw

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EotRanges:
    """Sampling ranges for the per-step transform draw (lo, hi) pairs."""

    scale: tuple[float, float] = (0.9, 1.1)
    contrast: tuple[float, float] = (0.8, 1.2)
    brightness: tuple[float, float] = (-0.1, 0.1)
    noise_amplitude: float = 0.05
    rotation: tuple[float, float] = (-10.0, 10.0)

    def to_dict(self) -> dict:
        return {
            "scale": list(self.scale),
            "contrast": list(self.contrast),
            "brightness": list(self.brightness),
            "noise_amplitude": self.noise_amplitude,
            "rotation": list(self.rotation),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EotRanges":
        return cls(
            scale=tuple(d.get("scale", (0.9, 1.1))),
            contrast=tuple(d.get("contrast", (0.8, 1.2))),
            brightness=tuple(d.get("brightness", (-0.1, 0.1))),
            noise_amplitude=float(d.get("noise_amplitude", 0.05)),
            rotation=tuple(d.get("rotation", (-10.0, 10.0))),
        )


@dataclass(frozen=True)
class EotParams:
    """One sampled transform: photometric jitter plus zoom/rotation."""

    scale: float = 1.0
    contrast: float = 1.0
    brightness: float = 0.0
    noise_amplitude: float = 0.0
    rotation: float = 0.0

    def __post_init__(self):
        if self.scale <= 0:
            raise InvalidArgumentError(f"scale must be positive, got {self.scale}")
        if self.noise_amplitude < 0:
            raise InvalidArgumentError("noise_amplitude must be nonnegative")


def sample_eot(rng: np.random.Generator, ranges: EotRanges) -> EotParams:
    """Draw independent uniform transform parameters from the configured ranges."""
    for name in ("scale", "contrast", "brightness", "rotation"):
        lo, hi = getattr(ranges, name)
        if lo > hi:
            raise InvalidArgumentError(f"inverted {name} range ({lo}, {hi})")
    if ranges.noise_amplitude < 0:
        raise InvalidArgumentError("noise_amplitude must be nonnegative")
    return EotParams(
        scale=float(rng.uniform(*ranges.scale)),
        contrast=float(rng.uniform(*ranges.contrast)),
        brightness=float(rng.uniform(*ranges.brightness)),
        noise_amplitude=float(ranges.noise_amplitude),
        rotation=float(rng.uniform(*ranges.rotation)),
    )


def apply_eot(patch, p: EotParams, rng: np.random.Generator | None = None) -> torch.Tensor:
    """Photometric jitter then zoom/rotation; differentiable w.r.t. the patch.

    Photometric step: clamp(contrast * patch + brightness + noise, 0, 1)
    with per-pixel uniform noise in [-noise_amplitude, +noise_amplitude].
    Geometric step: content zoom by `scale` and rotation by `rotation`
    degrees about the center, border-padded; skipped entirely at the
    identity so the identity transform is exact.
    """
    t = _raw(patch)
    if t.ndim != 3:
        raise InvalidArgumentError(f"patch must be (C, H, W), got {tuple(t.shape)}")
    out = t * p.contrast + p.brightness
    if p.noise_amplitude > 0:
        if rng is None:
            raise InvalidArgumentError("noise_amplitude > 0 requires an rng")
        noise = torch.from_numpy(
            rng.uniform(-p.noise_amplitude, p.noise_amplitude, size=tuple(t.shape))
        ).to(t.dtype)
        out = out + noise
    out = out.clamp(0.0, 1.0)
    if p.scale == 1.0 and p.rotation == 0.0:
        return out
    theta_rad = math.radians(p.rotation)
    cos, sin = math.cos(theta_rad) / p.scale, math.sin(theta_rad) / p.scale
    theta = torch.tensor([[cos, -sin, 0.0], [sin, cos, 0.0]], dtype=out.dtype).unsqueeze(0)
    grid = F.affine_grid(theta, (1, *out.shape), align_corners=True)
    return F.grid_sample(
        out.unsqueeze(0), grid, mode="bilinear", padding_mode="border", align_corners=True
    )[0]


@dataclass
class TpsWarp:
    """Thin-plate warp: a G x G control grid plus per-point displacements.

    Coordinates and displacements live in the [-1, 1] normalized frame of
    the patch; zero displacements define the identity warp.
    """

    control_points: torch.Tensor  # (G, G, 2)
    displacements: torch.Tensor  # (G, G, 2)

    def __post_init__(self):
        if self.control_points.shape != self.displacements.shape:
            raise InvalidArgumentError("control grid and displacements must have equal shapes")
        if self.control_points.ndim != 3 or self.control_points.shape[-1] != 2:
            raise InvalidArgumentError("control grid must be (G, G, 2)")
        if self.control_points.shape[0] < 3 or self.control_points.shape[1] < 3:
            raise InvalidArgumentError("control grid must be at least 3x3")

    @property
    def grid_size(self) -> int:
        return int(self.control_points.shape[0])

    @classmethod
    def identity(cls, grid_size: int = 5) -> "TpsWarp":
        pts = _uniform_control_grid(grid_size)
        return cls(pts, torch.zeros_like(pts))


def _uniform_control_grid(grid_size: int) -> torch.Tensor:
    ax = torch.linspace(-1.0, 1.0, grid_size, dtype=torch.float64)
    gy, gx = torch.meshgrid(ax, ax, indexing="ij")
    return torch.stack([gx, gy], dim=-1)


def sample_tps(rng: np.random.Generator, grid_size: int = 5, sigma: float = 0.03) -> TpsWarp:
    """Random warp: i.i.d. Gaussian control displacements with std sigma."""
    if grid_size < 3:
        raise InvalidArgumentError(f"grid_size must be >= 3, got {grid_size}")
    if sigma < 0:
        raise InvalidArgumentError("sigma must be nonnegative")
    pts = _uniform_control_grid(grid_size)
    disp = torch.from_numpy(rng.normal(0.0, sigma, size=(grid_size, grid_size, 2))) if sigma > 0 \
        else torch.zeros_like(pts)
    return TpsWarp(pts, disp.to(torch.float64))


def _tps_kernel(r2: torch.Tensor) -> torch.Tensor:
    # U(r) = r^2 log r^2, with the removable singularity U(0) = 0
    return torch.xlogy(r2, r2)


def _solve_tps(points: torch.Tensor, values: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Solve the thin-plate system for weights (T, 2) and affine part (3, 2)."""
    n = points.shape[0]
    diff = points.unsqueeze(1) - points.unsqueeze(0)
    k = _tps_kernel((diff * diff).sum(-1))
    p = torch.cat([torch.ones(n, 1, dtype=points.dtype), points], dim=1)
    lmat = torch.zeros(n + 3, n + 3, dtype=points.dtype)
    lmat[:n, :n] = k
    lmat[:n, n:] = p
    lmat[n:, :n] = p.t()
    rhs = torch.zeros(n + 3, 2, dtype=points.dtype)
    rhs[:n] = values
    try:
        sol = torch.linalg.solve(lmat, rhs)
    except RuntimeError as exc:
        raise NumericDegeneracyError(f"singular thin-plate system: {exc}") from exc
    if not torch.isfinite(sol).all():
        raise NumericDegeneracyError("thin-plate solve produced non-finite coefficients")
    return sol[:n], sol[n:]


def tps_transform(patch, warp: TpsWarp) -> torch.Tensor:
    """Warp a patch by the thin-plate displacement field, bilinear sampling.

    The sampling flow is identity + f(x) where f interpolates the control
    displacements; out-of-range samples clamp to the border.
    """
    t = _raw(patch)
    if t.ndim != 3:
        raise InvalidArgumentError(f"patch must be (C, H, W), got {tuple(t.shape)}")
    pts = warp.control_points.reshape(-1, 2).to(torch.float64)
    disp = warp.displacements.reshape(-1, 2).to(torch.float64)
    if not torch.any(disp != 0):
        return t.clone()
    w, a = _solve_tps(pts, disp)

    h, wid = int(t.shape[1]), int(t.shape[2])
    ys = torch.linspace(-1.0, 1.0, h, dtype=torch.float64)
    xs = torch.linspace(-1.0, 1.0, wid, dtype=torch.float64)
    gy, gx = torch.meshgrid(ys, xs, indexing="ij")
    grid = torch.stack([gx, gy], dim=-1)  # (H, W, 2)

    diff = grid.unsqueeze(2) - pts.reshape(1, 1, -1, 2)
    u = _tps_kernel((diff * diff).sum(-1))  # (H, W, T)
    offset = (
        a[0].reshape(1, 1, 2)
        + grid[..., 0:1] * a[1].reshape(1, 1, 2)
        + grid[..., 1:2] * a[2].reshape(1, 1, 2)
        + torch.einsum("hwt,td->hwd", u, w)
    )
    flow = (grid + offset).to(t.dtype).unsqueeze(0)
    return F.grid_sample(
        t.unsqueeze(0), flow, mode="bilinear", padding_mode="border", align_corners=True
    )[0]


@dataclass(frozen=True)
class PlacementConfig:
    """Where a patch lands on a detected person box.

    The patch is centered horizontally on the box, shifted vertically by
    center_y_offset * box height (negative = up, toward the torso), with
    width width_ratio * box width. center_jitter > 0 adds uniform jitter
    to the center, in fractions of the box size, drawn from the rng.
    """

    width_ratio: float = 0.55
    center_y_offset: float = -0.05
    center_jitter: float = 0.0

    def to_dict(self) -> dict:
        return {
            "width_ratio": self.width_ratio,
            "center_y_offset": self.center_y_offset,
            "center_jitter": self.center_jitter,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PlacementConfig":
        return cls(
            width_ratio=float(d.get("width_ratio", 0.55)),
            center_y_offset=float(d.get("center_y_offset", -0.05)),
            center_jitter=float(d.get("center_jitter", 0.0)),
        )


def _box_fields(box):
    if hasattr(box, "box"):
        cx, cy, w, h = box.box
        conf = box.confidence
    else:
        cx, cy, w, h = box[:4]
        conf = box[4] if len(box) > 4 else 1.0
    return float(cx), float(cy), float(w), float(h), float(conf)


def place_patch(image, boxes, patch, rng: np.random.Generator | None = None,
                config: PlacementConfig | None = None) -> torch.Tensor:
    """Composite one patch per box onto an image; gradients reach the patch.

    Boxes are processed in descending confidence order (ties broken by
    input index), so in overlaps the lowest-confidence placement wins.
    Degenerate boxes are skipped with a warning; placements are clipped
    to the image bounds.
    """
    cfg = config or PlacementConfig()
    img = _raw(image)
    pt = _raw(patch)
    if img.ndim != 3 or pt.ndim != 3:
        raise InvalidArgumentError("image and patch must be (C, H, W)")
    if pt.shape[1] != pt.shape[2]:
        raise InvalidArgumentError(f"patch must be square, got {tuple(pt.shape[1:])}")
    if not boxes:
        return img
    h_img, w_img = int(img.shape[1]), int(img.shape[2])
    order = sorted(range(len(boxes)), key=lambda i: (-_box_fields(boxes[i])[4], i))
    out = img.clone()
    for i in order:
        cx, cy, w, h, _ = _box_fields(boxes[i])
        if w <= 0 or h <= 0:
            log.warning("place_patch: skipping degenerate box %s", (cx, cy, w, h))
            continue
        if cfg.center_jitter > 0 and rng is not None:
            cx = cx + float(rng.uniform(-cfg.center_jitter, cfg.center_jitter)) * w
            cy = cy + float(rng.uniform(-cfg.center_jitter, cfg.center_jitter)) * h
        side = max(1, round(cfg.width_ratio * w * w_img))
        # antialias matters: placements usually shrink the patch a lot, and
        # plain bilinear downsampling would leave most patch pixels with no
        # gradient path from the composited image
        resized = F.interpolate(pt.unsqueeze(0), size=(side, side), mode="bilinear",
                                align_corners=False, antialias=True)[0]
        cx_px = cx * w_img
        cy_px = (cy + cfg.center_y_offset * h) * h_img
        x0 = round(cx_px - side / 2)
        y0 = round(cy_px - side / 2)
        x1, y1 = x0 + side, y0 + side
        sx0, sy0 = max(0, -x0), max(0, -y0)
        sx1 = side - max(0, x1 - w_img)
        sy1 = side - max(0, y1 - h_img)
        if sx1 <= sx0 or sy1 <= sy0:
            continue
        x0c, y0c = max(0, x0), max(0, y0)
        out[:, y0c:y0c + (sy1 - sy0), x0c:x0c + (sx1 - sx0)] = resized[:, sy0:sy1, sx0:sx1]
    return out
