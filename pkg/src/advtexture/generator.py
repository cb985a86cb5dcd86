"""The expandable fully-convolutional texture generator and the auxiliary scorer.

Every layer of the generator is a zero-padded convolution with an
element-wise activation, optionally preceded by integer nearest-neighbor
upsampling. That structure makes the map from latent to texture
translation-equivariant everywhere except a boundary band whose width is
the receptive-field radius in output pixels; the band is published as
``Generator.boundary_margin`` so equivariance checks can exclude it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import InvalidArgumentError, InvalidSpecError
from .texture_core import LatentVariable, TexturePattern

_ACTIVATIONS = {
    "relu": F.relu,
    "leaky_relu": lambda x: F.leaky_relu(x, 0.2),
    "tanh": torch.tanh,
    "sigmoid": torch.sigmoid,
}


@dataclass(frozen=True)
class LayerSpec:
    """One generator layer: optional upsample, then a zero-padded conv."""

    out_channels: int
    kernel_size: int = 3
    upsample: int = 1


_PAPER_LAYERS = (
    LayerSpec(128, 3, 2),
    LayerSpec(64, 3, 2),
    LayerSpec(64, 3, 3),
    LayerSpec(32, 3, 3),
    LayerSpec(32, 3, 1),
    LayerSpec(16, 3, 1),
    LayerSpec(3, 3, 1),
)


@dataclass(frozen=True)
class GeneratorSpec:
    """Architecture of the expandable generator.

    The spatial map is affine: a latent of side s yields a texture of side
    expansion_factor * s, where expansion_factor is the product of the
    per-layer upsampling factors.
    """

    latent_channels: int = 128
    layers: tuple[LayerSpec, ...] = _PAPER_LAYERS
    min_latent_side: tuple[int, int] = (9, 9)
    hidden_activation: str = "leaky_relu"
    output_activation: str = "sigmoid"

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not self.layers:
            raise InvalidSpecError("generator needs at least one layer")
        if self.latent_channels < 1:
            raise InvalidSpecError("latent_channels must be positive")
        for i, layer in enumerate(self.layers):
            if layer.out_channels < 1:
                raise InvalidSpecError(f"layer {i}: out_channels must be positive")
            if layer.kernel_size < 1 or layer.kernel_size % 2 == 0:
                # odd kernels keep the zero padding symmetric, so conv output
                # size equals input size and the spatial map stays affine
                raise InvalidSpecError(f"layer {i}: kernel_size must be odd, got {layer.kernel_size}")
            if layer.upsample < 1:
                raise InvalidSpecError(f"layer {i}: upsample must be >= 1")
        if self.layers[-1].out_channels != 3:
            raise InvalidSpecError("last layer must emit 3 channels (RGB)")
        if self.hidden_activation not in _ACTIVATIONS:
            raise InvalidSpecError(f"unknown hidden activation {self.hidden_activation!r}")
        if self.output_activation not in ("sigmoid",):
            raise InvalidSpecError("output activation must map onto [0, 1] (sigmoid)")
        if min(self.min_latent_side) < 1:
            raise InvalidSpecError("min_latent_side must be positive")

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    @property
    def expansion_factor(self) -> int:
        k = 1
        for layer in self.layers:
            k *= layer.upsample
        return k

    @property
    def receptive_margin(self) -> int:
        """Receptive-field radius of an output pixel, in output pixels.

        A kernel radius at layer l covers that many pixels at layer l's
        resolution; upsampling in later layers magnifies the distance.
        """
        margin = 0
        trailing = 1
        for layer in reversed(self.layers):
            margin += ((layer.kernel_size - 1) // 2) * trailing
            trailing *= layer.upsample
        return margin

    def to_dict(self) -> dict:
        return {
            "latent_channels": self.latent_channels,
            "layers": [[l.out_channels, l.kernel_size, l.upsample] for l in self.layers],
            "min_latent_side": list(self.min_latent_side),
            "hidden_activation": self.hidden_activation,
            "output_activation": self.output_activation,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorSpec":
        return cls(
            latent_channels=int(d["latent_channels"]),
            layers=tuple(LayerSpec(int(c), int(k), int(u)) for c, k, u in d["layers"]),
            min_latent_side=tuple(int(s) for s in d["min_latent_side"]),
            hidden_activation=d.get("hidden_activation", "leaky_relu"),
            output_activation=d.get("output_activation", "sigmoid"),
        )


def paper_generator_spec() -> GeneratorSpec:
    """7-layer spec: 128-channel latent, 9x9 minimum, 36x spatial expansion."""
    return GeneratorSpec()


def toy_generator_spec() -> GeneratorSpec:
    """Desk-scale 7-layer spec: 16-channel latent, 12x12 minimum, 16x expansion."""
    return GeneratorSpec(
        latent_channels=16,
        layers=(
            LayerSpec(32, 3, 2),
            LayerSpec(32, 3, 2),
            LayerSpec(16, 3, 2),
            LayerSpec(16, 3, 2),
            LayerSpec(8, 3, 1),
            LayerSpec(8, 3, 1),
            LayerSpec(3, 3, 1),
        ),
        min_latent_side=(12, 12),
    )


def _torch_generator_from(rng) -> torch.Generator:
    g = torch.Generator()
    if isinstance(rng, np.random.Generator):
        g.manual_seed(int(rng.integers(0, 2**63 - 1)))
    else:
        g.manual_seed(int(rng))
    return g


def _init_conv(conv: nn.Conv2d, g: torch.Generator):
    fan_in = conv.in_channels * conv.kernel_size[0] * conv.kernel_size[1]
    bound = math.sqrt(6.0 / fan_in)
    with torch.no_grad():
        conv.weight.uniform_(-bound, bound, generator=g)
        conv.bias.uniform_(-1.0 / math.sqrt(fan_in), 1.0 / math.sqrt(fan_in), generator=g)


class Generator(nn.Module):
    """Expandable texture generator: any latent >= the minimum sides works."""

    def __init__(self, spec: GeneratorSpec):
        super().__init__()
        spec.validate()
        self.spec = spec
        convs = []
        in_ch = spec.latent_channels
        for layer in spec.layers:
            convs.append(
                nn.Conv2d(in_ch, layer.out_channels, layer.kernel_size,
                          padding=(layer.kernel_size - 1) // 2)
            )
            in_ch = layer.out_channels
        self.convs = nn.ModuleList(convs)

    @property
    def boundary_margin(self) -> int:
        return self.spec.receptive_margin

    @property
    def expansion_factor(self) -> int:
        return self.spec.expansion_factor

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        if z.ndim != 4:
            raise InvalidArgumentError(f"latent batch must be (B, C, H, W), got {tuple(z.shape)}")
        if z.shape[1] != self.spec.latent_channels:
            raise InvalidArgumentError(
                f"latent has {z.shape[1]} channels, generator expects {self.spec.latent_channels}"
            )
        h_min, w_min = self.spec.min_latent_side
        if z.shape[2] < h_min or z.shape[3] < w_min:
            raise InvalidArgumentError(
                f"latent spatial size {tuple(z.shape[2:])} below minimum ({h_min}, {w_min})"
            )
        act = _ACTIVATIONS[self.spec.hidden_activation]
        out_act = _ACTIVATIONS[self.spec.output_activation]
        x = z
        for i, (layer, conv) in enumerate(zip(self.spec.layers, self.convs)):
            if layer.upsample > 1:
                x = F.interpolate(x, scale_factor=layer.upsample, mode="nearest")
            x = conv(x)
            x = out_act(x) if i == len(self.convs) - 1 else act(x)
        return x


def build_generator(spec: GeneratorSpec, rng) -> Generator:
    """Construct a generator with parameters drawn from the given rng."""
    gen = Generator(spec)
    g = _torch_generator_from(rng)
    for conv in gen.convs:
        _init_conv(conv, g)
    return gen


def generate(generator: Generator, z: LatentVariable) -> TexturePattern:
    """Run a single latent through the generator; deterministic given parameters."""
    was_training = generator.training
    generator.eval()
    try:
        with torch.no_grad():
            out = generator(z.data.unsqueeze(0))
    finally:
        generator.train(was_training)
    return TexturePattern(out[0])


@dataclass(frozen=True)
class AuxNetSpec:
    """Architecture of the scorer pairing a patch with a latent.

    Both inputs go through small conv encoders, the embeddings are
    concatenated, and a two-layer head emits one scalar.
    """

    patch_size: int = 150
    latent_channels: int = 128
    latent_side: tuple[int, int] = (9, 9)
    embed_dim: int = 64

    def validate(self):
        if self.patch_size < 8:
            raise InvalidSpecError("patch_size must be >= 8")
        if self.latent_channels < 1 or min(self.latent_side) < 1:
            raise InvalidSpecError("latent shape must be positive")
        if self.embed_dim < 1:
            raise InvalidSpecError("embed_dim must be positive")

    def to_dict(self) -> dict:
        return {
            "patch_size": self.patch_size,
            "latent_channels": self.latent_channels,
            "latent_side": list(self.latent_side),
            "embed_dim": self.embed_dim,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AuxNetSpec":
        return cls(
            patch_size=int(d["patch_size"]),
            latent_channels=int(d["latent_channels"]),
            latent_side=tuple(int(s) for s in d["latent_side"]),
            embed_dim=int(d["embed_dim"]),
        )


class AuxNet(nn.Module):
    """Scores (patch, latent) pairs; higher on jointly generated pairs."""

    def __init__(self, spec: AuxNetSpec):
        super().__init__()
        spec.validate()
        self.spec = spec
        d = spec.embed_dim
        self.patch_encoder = nn.Sequential(
            nn.Conv2d(3, 16, 5, stride=2, padding=2), nn.LeakyReLU(0.2),
            nn.Conv2d(16, 32, 3, stride=2, padding=1), nn.LeakyReLU(0.2),
            nn.Conv2d(32, 32, 3, stride=2, padding=1), nn.LeakyReLU(0.2),
            nn.AdaptiveAvgPool2d(4), nn.Flatten(),
            nn.Linear(32 * 16, d),
        )
        self.latent_encoder = nn.Sequential(
            nn.Conv2d(spec.latent_channels, 32, 3, padding=1), nn.LeakyReLU(0.2),
            nn.Conv2d(32, 32, 3, padding=1), nn.LeakyReLU(0.2),
            nn.AdaptiveAvgPool2d(3), nn.Flatten(),
            nn.Linear(32 * 9, d),
        )
        self.head = nn.Sequential(
            nn.Linear(2 * d, d), nn.LeakyReLU(0.2), nn.Linear(d, 1),
        )

    def forward(self, patches: torch.Tensor, latents: torch.Tensor) -> torch.Tensor:
        s = self.spec
        if patches.ndim != 4 or patches.shape[1] != 3 or patches.shape[2:] != (s.patch_size, s.patch_size):
            raise InvalidArgumentError(
                f"patch batch must be (B, 3, {s.patch_size}, {s.patch_size}), got {tuple(patches.shape)}"
            )
        expected = (s.latent_channels,) + tuple(s.latent_side)
        if latents.ndim != 4 or tuple(latents.shape[1:]) != expected:
            raise InvalidArgumentError(
                f"latent batch must be (B,) + {expected}, got {tuple(latents.shape)}"
            )
        if patches.shape[0] != latents.shape[0]:
            raise InvalidArgumentError("patch and latent batch sizes differ")
        e = torch.cat([self.patch_encoder(patches), self.latent_encoder(latents)], dim=1)
        return self.head(e).squeeze(1)


def build_aux_net(spec: AuxNetSpec, rng) -> AuxNet:
    """Construct an auxiliary scorer with parameters drawn from the given rng."""
    aux = AuxNet(spec)
    g = _torch_generator_from(rng)
    with torch.no_grad():
        for m in aux.modules():
            if isinstance(m, nn.Conv2d):
                _init_conv(m, g)
            elif isinstance(m, nn.Linear):
                fan_in = m.in_features
                bound = math.sqrt(6.0 / fan_in)
                m.weight.uniform_(-bound, bound, generator=g)
                m.bias.uniform_(-1.0 / math.sqrt(fan_in), 1.0 / math.sqrt(fan_in), generator=g)
    return aux


def aux_score(aux: AuxNet, patch, z) -> torch.Tensor:
    """Score one (patch, latent) pair; returns a finite scalar tensor."""
    p = patch.data if isinstance(patch, TexturePattern) else patch
    l = z.data if isinstance(z, LatentVariable) else z
    was_training = aux.training
    aux.eval()
    try:
        with torch.no_grad():
            score = aux(p.unsqueeze(0), l.unsqueeze(0))[0]
    finally:
        aux.train(was_training)
    return score
