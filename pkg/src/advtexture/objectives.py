"""Training objectives: detector-confidence energy and the mutual-information term.

The attack treats good patches as low-energy states of an unnormalized
density exp(-U); the partition constant never enters any computed
quantity, so the energy here is used raw. The generator is trained on
the Monte-Carlo energy estimate plus a Jensen-Shannon mutual-information
objective scored by an auxiliary network.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, asdict

import torch
import torch.nn.functional as F

from .errors import InvalidArgumentError
from .texture_core import _raw

log = logging.getLogger(__name__)

# Smoothing width of the |.| surrogate inside tv_loss. Each term is
# sqrt(x^2 + eps^2) - eps: differentiable at 0 and exactly 0 there, and
# within eps of |x| everywhere else.
TV_EPS = 1e-6


@dataclass(frozen=True)
class EnergyConfig:
    """Coefficients of the patch energy (u_obj + alpha * u_tv) / beta.

    box_aggregate selects how per-box confidences collapse into u_obj for
    one image: "mean" over surviving boxes (default, smoother gradients)
    or "max" for a strongest-box objective.
    """

    alpha: float = 0.1
    beta: float = 1.0
    box_aggregate: str = "mean"

    def __post_init__(self):
        if self.beta <= 0:
            raise InvalidArgumentError(f"beta must be > 0, got {self.beta}")
        if self.alpha < 0:
            raise InvalidArgumentError(f"alpha must be >= 0, got {self.alpha}")
        if self.box_aggregate not in ("mean", "max"):
            raise InvalidArgumentError(f"unknown box_aggregate {self.box_aggregate!r}")


@dataclass(frozen=True)
class LossReport:
    """Per-step loss decomposition, one JSON line per training step."""

    step: int
    u_obj: float
    u_tv: float
    energy: float
    info: float
    total: float

    def to_json_line(self) -> str:
        return json.dumps(asdict(self))

    @classmethod
    def from_json_line(cls, line: str) -> "LossReport":
        return cls(**json.loads(line))


def _smooth_abs(x: torch.Tensor) -> torch.Tensor:
    return torch.sqrt(x * x + TV_EPS * TV_EPS) - TV_EPS


def tv_loss(patch) -> torch.Tensor:
    """Total-variation of a patch: sum of smoothed |neighbor differences|.

    Accepts (C, H, W) for a scalar result or (B, C, H, W) for a
    per-sample vector. Spatial sides must be >= 2.
    """
    t = _raw(patch)
    if not torch.is_tensor(t):
        t = torch.as_tensor(t)
    batched = t.ndim == 4
    if t.ndim not in (3, 4):
        raise InvalidArgumentError(f"patch must be 3-D or 4-D, got shape {tuple(t.shape)}")
    if t.shape[-1] < 2 or t.shape[-2] < 2:
        raise InvalidArgumentError(f"patch spatial sides must be >= 2, got {tuple(t.shape)}")
    d_row = _smooth_abs(t[..., 1:, :] - t[..., :-1, :])
    d_col = _smooth_abs(t[..., :, 1:] - t[..., :, :-1])
    if batched:
        return d_row.flatten(1).sum(dim=1) + d_col.flatten(1).sum(dim=1)
    return d_row.sum() + d_col.sum()


def obj_loss(confidences) -> torch.Tensor:
    """Mean detector confidence over a (possibly empty) box list.

    An empty list contributes zero: late in training the attack can
    suppress every box and optimization must continue.
    """
    if torch.is_tensor(confidences):
        flat = confidences.reshape(-1)
    else:
        parts = [c.reshape(-1) if torch.is_tensor(c) else torch.as_tensor([float(c)]) for c in confidences]
        flat = torch.cat(parts) if parts else torch.zeros(0)
    if flat.numel() == 0:
        log.warning("obj_loss: no boxes survived filtering; contributing 0")
        return torch.zeros(())
    return flat.mean()


def energy(u_obj, u_tv, cfg: EnergyConfig):
    """Patch energy (u_obj + alpha * u_tv) / beta."""
    return (u_obj + cfg.alpha * u_tv) / cfg.beta


def adversary_objective(energies) -> torch.Tensor:
    """Monte-Carlo estimate of the expected patch energy: the sample mean."""
    if torch.is_tensor(energies):
        stacked = energies.reshape(-1)
    else:
        if len(energies) == 0:
            raise InvalidArgumentError("adversary_objective needs at least one sample")
        stacked = torch.stack([e if torch.is_tensor(e) else torch.as_tensor(float(e)) for e in energies])
    if stacked.numel() == 0:
        raise InvalidArgumentError("adversary_objective needs at least one sample")
    return stacked.mean()


def info_objective(joint_scores, marginal_scores) -> torch.Tensor:
    """Negated Jensen-Shannon MI estimate from auxiliary-network scores.

    Returns mean(softplus(-t_joint)) + mean(softplus(t_marginal)); minimizing
    this maximizes the MI lower bound. At all-zero scores the value is
    exactly 2*log(2).
    """
    t_j = joint_scores if torch.is_tensor(joint_scores) else torch.as_tensor(
        [float(t) for t in joint_scores], dtype=torch.get_default_dtype()
    )
    t_m = marginal_scores if torch.is_tensor(marginal_scores) else torch.as_tensor(
        [float(t) for t in marginal_scores], dtype=torch.get_default_dtype()
    )
    if t_j.numel() == 0 or t_m.numel() == 0:
        raise InvalidArgumentError("info_objective needs nonempty joint and marginal scores")
    return F.softplus(-t_j).mean() + F.softplus(t_m).mean()


def total_stage_one_loss(adv, info):
    """Joint objective for the generator and auxiliary network: adv + info."""
    return adv + info
