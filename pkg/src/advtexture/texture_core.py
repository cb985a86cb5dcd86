"""Toroidal/tiling math on latent tensors and RGB rasters.

A pattern is treated as the unfolded plane of a 2-torus: cropping wraps
around both spatial axes, so windows taken across a tile junction of a
tiled pattern are identical to windows taken on the torus itself. All
operations here are pure and work on either torch tensors or numpy
arrays of shape (C, H, W); torch inputs keep gradient connectivity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .errors import InvalidArgumentError


def _raw(pattern):
    """Unwrap a pattern dataclass to its array; pass arrays through."""
    if torch.is_tensor(pattern) or isinstance(pattern, np.ndarray):
        return pattern
    return pattern.data


def _check_chw(data, name):
    if data.ndim != 3:
        raise InvalidArgumentError(f"{name} must have shape (C, H, W), got {tuple(data.shape)}")
    if torch.is_tensor(data):
        finite = bool(torch.isfinite(data).all())
    else:
        finite = bool(np.isfinite(data).all())
    if not finite:
        raise InvalidArgumentError(f"{name} contains non-finite values")


@dataclass
class LocalLatentPattern:
    """A square C x L x L latent unit, the unfolded plane of a latent torus."""

    data: torch.Tensor

    def __post_init__(self):
        _check_chw(self.data, "LocalLatentPattern")
        if self.data.shape[1] != self.data.shape[2]:
            raise InvalidArgumentError(
                f"LocalLatentPattern must be square, got {tuple(self.data.shape[1:])}"
            )

    @property
    def side(self) -> int:
        return int(self.data.shape[1])

    @property
    def channels(self) -> int:
        return int(self.data.shape[0])


@dataclass
class LatentVariable:
    """A C x H x W latent tensor fed to the generator (batch handled by callers)."""

    data: torch.Tensor

    def __post_init__(self):
        _check_chw(self.data, "LatentVariable")

    @property
    def channels(self) -> int:
        return int(self.data.shape[0])

    @property
    def spatial(self) -> tuple[int, int]:
        return int(self.data.shape[1]), int(self.data.shape[2])


@dataclass
class TexturePattern:
    """An RGB raster, 3 x H x W with every value in [0, 1]."""

    data: torch.Tensor

    def __post_init__(self):
        _check_chw(self.data, "TexturePattern")
        if self.data.shape[0] != 3:
            raise InvalidArgumentError(
                f"TexturePattern needs exactly 3 channels, got {self.data.shape[0]}"
            )
        lo = float(self.data.min()) if self.data.numel() else 0.0
        hi = float(self.data.max()) if self.data.numel() else 0.0
        if lo < 0.0 or hi > 1.0:
            raise InvalidArgumentError(f"TexturePattern values outside [0, 1]: [{lo}, {hi}]")

    @property
    def spatial(self) -> tuple[int, int]:
        return int(self.data.shape[1]), int(self.data.shape[2])


def toroidal_crop(pattern, offset_row: int, offset_col: int, out_rows: int, out_cols: int):
    """Crop a window from a pattern folded as a torus.

    Element [c, i, j] of the output is pattern[c, (offset_row+i) mod S_r,
    (offset_col+j) mod S_c]. Offsets may be any integers (reduced with
    non-negative modulo); the window may be larger than the pattern, in
    which case content repeats. Implemented by index arithmetic only —
    no tiled intermediate is materialized.
    """
    if out_rows < 1 or out_cols < 1:
        raise InvalidArgumentError(f"output size must be positive, got {out_rows}x{out_cols}")
    data = _raw(pattern)
    _check_chw(data, "pattern")
    s_r, s_c = int(data.shape[1]), int(data.shape[2])
    if torch.is_tensor(data):
        rows = (int(offset_row) + torch.arange(out_rows)) % s_r
        cols = (int(offset_col) + torch.arange(out_cols)) % s_c
        return data[:, rows][:, :, cols]
    rows = (int(offset_row) + np.arange(out_rows)) % s_r
    cols = (int(offset_col) + np.arange(out_cols)) % s_c
    return data[:, rows[:, None], cols[None, :]]


def tile_pattern(pattern, reps_rows: int, reps_cols: int):
    """Tile a pattern blockwise; block (a, b) of the result equals the pattern."""
    if reps_rows < 1 or reps_cols < 1:
        raise InvalidArgumentError(f"reps must be positive, got {reps_rows}x{reps_cols}")
    data = _raw(pattern)
    _check_chw(data, "pattern")
    if torch.is_tensor(data):
        return data.repeat(1, reps_rows, reps_cols)
    return np.tile(data, (1, reps_rows, reps_cols))


def make_latent_from_local(local, rows: int, cols: int) -> LatentVariable:
    """Expand a local latent unit to an arbitrary-size latent by toroidal wrap.

    Offset (0, 0) is used canonically; offset choice only translates the
    resulting texture.
    """
    if rows < 1 or cols < 1:
        raise InvalidArgumentError(f"latent size must be positive, got {rows}x{cols}")
    return LatentVariable(toroidal_crop(local, 0, 0, rows, cols))


def random_toroidal_offsets(rng: np.random.Generator, pattern_side: int) -> tuple[int, int]:
    """Draw uniform (row, col) crop offsets in {0, ..., pattern_side - 1}."""
    if pattern_side < 1:
        raise InvalidArgumentError(f"pattern_side must be positive, got {pattern_side}")
    off = rng.integers(0, pattern_side, size=2)
    return int(off[0]), int(off[1])
