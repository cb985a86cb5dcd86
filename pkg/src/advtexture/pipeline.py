"""Orchestration: stage-one generator training, stage-two latent search, baselines.

Everything stochastic flows from the run config's seed through one numpy
generator (plus torch generators derived from it), so a fixed seed gives
identical loss streams and checkpoints across runs on one platform.
"""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
import torch
import yaml

from . import data_io
from .detector import DetectorAdapter, default_box_extraction, extract_training_boxes
from .errors import DatasetError, DivergenceError, InvalidArgumentError
from .generator import (AuxNet, AuxNetSpec, Generator, GeneratorSpec, build_aux_net,
                        build_generator, generate, paper_generator_spec, toy_generator_spec)
from .objectives import EnergyConfig, LossReport, adversary_objective, energy, info_objective, \
    obj_loss, total_stage_one_loss, tv_loss
from .texture_core import LatentVariable, LocalLatentPattern, TexturePattern, \
    make_latent_from_local, random_toroidal_offsets, tile_pattern, toroidal_crop
from .transforms import EotRanges, PlacementConfig, apply_eot, place_patch, sample_eot, \
    sample_tps, tps_transform

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class StageConfig:
    steps: int
    lr: float
    batch_size: int

    def to_dict(self):
        return {"steps": self.steps, "lr": self.lr, "batch_size": self.batch_size}

    @classmethod
    def from_dict(cls, d, default):
        return cls(
            steps=int(d.get("steps", default.steps)),
            lr=float(d.get("lr", default.lr)),
            batch_size=int(d.get("batch_size", default.batch_size)),
        )


class BaselineKind(Enum):
    EGA = "ega"
    TCA = "tca"
    RCA2X = "rca2x"
    RCA6X = "rca6x"
    TILED_PATCH = "tiled_patch"
    RANDOM_TEXTURE = "random_texture"
    TCEGA = "tcega"


@dataclass
class RunConfig:
    """All knobs of a run; serializable to one YAML file."""

    seed: int = 0
    detector: str = "toy"
    detector_kwargs: dict = field(default_factory=dict)
    dataset_root: str = ""
    train_split: str = "train"
    test_split: str = "test"
    stage_one: StageConfig = StageConfig(steps=10000, lr=0.001, batch_size=8)
    stage_two: StageConfig = StageConfig(steps=2000, lr=0.03, batch_size=8)
    baseline: StageConfig = StageConfig(steps=10000, lr=0.03, batch_size=8)
    local_side: int = 4
    crop_size: int = 150
    energy: EnergyConfig = EnergyConfig()
    info_weight: float = 1.0
    tv_per_element: bool = True
    eot: EotRanges = EotRanges()
    tps_grid_size: int = 5
    tps_sigma: float = 0.03
    placement: PlacementConfig = PlacementConfig()
    generator: str | dict = "paper"
    aux_embed_dim: int = 64
    box_conf_threshold: float | None = None  # None: per detector family
    box_nms_iou: float = 0.4
    box_min_area_fraction: float | None = None
    eval_conf_threshold: float = 0.5
    eval_nms_iou: float = 0.4
    eval_apply_transforms: bool = True
    checkpoint_every: int = 500

    def validate(self):
        for name, stage in (("stage_one", self.stage_one), ("stage_two", self.stage_two),
                            ("baseline", self.baseline)):
            if stage.lr < 0 or stage.steps < 0 or stage.batch_size < 1:
                raise InvalidArgumentError(f"invalid {name} config {stage}")
        if self.local_side < 1 or self.crop_size < 2:
            raise InvalidArgumentError("local_side and crop_size must be positive")

    def to_dict(self) -> dict:
        gen = self.generator if isinstance(self.generator, str) else dict(self.generator)
        return {
            "seed": self.seed,
            "detector": self.detector,
            "detector_kwargs": dict(self.detector_kwargs),
            "dataset_root": str(self.dataset_root),
            "train_split": self.train_split,
            "test_split": self.test_split,
            "stage_one": self.stage_one.to_dict(),
            "stage_two": self.stage_two.to_dict(),
            "baseline": self.baseline.to_dict(),
            "local_side": self.local_side,
            "crop_size": self.crop_size,
            "energy": {"alpha": self.energy.alpha, "beta": self.energy.beta,
                       "box_aggregate": self.energy.box_aggregate},
            "info_weight": self.info_weight,
            "tv_per_element": self.tv_per_element,
            "eot": self.eot.to_dict(),
            "tps": {"grid_size": self.tps_grid_size, "sigma": self.tps_sigma},
            "placement": self.placement.to_dict(),
            "generator": gen,
            "aux_embed_dim": self.aux_embed_dim,
            "boxes": {"conf_threshold": self.box_conf_threshold, "nms_iou": self.box_nms_iou,
                      "min_area_fraction": self.box_min_area_fraction},
            "eval": {"conf_threshold": self.eval_conf_threshold, "nms_iou": self.eval_nms_iou,
                     "apply_transforms": self.eval_apply_transforms},
            "checkpoint_every": self.checkpoint_every,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        default = cls()
        en = d.get("energy", {})
        bx = d.get("boxes", {})
        ev = d.get("eval", {})
        tps = d.get("tps", {})
        cfg = cls(
            seed=int(d.get("seed", 0)),
            detector=d.get("detector", "toy"),
            detector_kwargs=dict(d.get("detector_kwargs", {})),
            dataset_root=d.get("dataset_root", ""),
            train_split=d.get("train_split", "train"),
            test_split=d.get("test_split", "test"),
            stage_one=StageConfig.from_dict(d.get("stage_one", {}), default.stage_one),
            stage_two=StageConfig.from_dict(d.get("stage_two", {}), default.stage_two),
            baseline=StageConfig.from_dict(d.get("baseline", {}), default.baseline),
            local_side=int(d.get("local_side", 4)),
            crop_size=int(d.get("crop_size", 150)),
            energy=EnergyConfig(alpha=float(en.get("alpha", 0.1)),
                                beta=float(en.get("beta", 1.0)),
                                box_aggregate=en.get("box_aggregate", "mean")),
            info_weight=float(d.get("info_weight", 1.0)),
            tv_per_element=bool(d.get("tv_per_element", True)),
            eot=EotRanges.from_dict(d.get("eot", {})),
            tps_grid_size=int(tps.get("grid_size", 5)),
            tps_sigma=float(tps.get("sigma", 0.03)),
            placement=PlacementConfig.from_dict(d.get("placement", {})),
            generator=d.get("generator", "paper"),
            aux_embed_dim=int(d.get("aux_embed_dim", 64)),
            box_conf_threshold=bx.get("conf_threshold"),
            box_nms_iou=float(bx.get("nms_iou", 0.4)),
            box_min_area_fraction=bx.get("min_area_fraction"),
            eval_conf_threshold=float(ev.get("conf_threshold", 0.5)),
            eval_nms_iou=float(ev.get("nms_iou", 0.4)),
            eval_apply_transforms=bool(ev.get("apply_transforms", True)),
            checkpoint_every=int(d.get("checkpoint_every", 500)),
        )
        cfg.validate()
        return cfg

    @classmethod
    def from_yaml(cls, path) -> "RunConfig":
        with open(path) as f:
            return cls.from_dict(yaml.safe_load(f) or {})

    def write_yaml(self, path):
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            yaml.safe_dump(self.to_dict(), f, sort_keys=False)

    def sha(self) -> str:
        return data_io.config_hash(self.to_dict())


def resolve_generator_spec(config: RunConfig) -> GeneratorSpec:
    if isinstance(config.generator, dict):
        return GeneratorSpec.from_dict(config.generator)
    if config.generator == "paper":
        return paper_generator_spec()
    if config.generator == "toy":
        return toy_generator_spec()
    raise InvalidArgumentError(f"unknown generator preset {config.generator!r}")


def aux_spec_for(config: RunConfig, gspec: GeneratorSpec) -> AuxNetSpec:
    return AuxNetSpec(
        patch_size=config.crop_size,
        latent_channels=gspec.latent_channels,
        latent_side=gspec.min_latent_side,
        embed_dim=config.aux_embed_dim,
    )


def box_cache_path(run_dir, config: RunConfig, split: str | None = None) -> Path:
    split = split or config.train_split
    return Path(run_dir) / f"boxes_{config.detector}_{split}.txt"


def prepare_boxes(config: RunConfig, run_dir, adapter: DetectorAdapter, manifest,
                  split: str | None = None, force: bool = False) -> dict:
    """Extract (or reuse) the placement-box cache for a detector + split."""
    path = box_cache_path(run_dir, config, split)
    if path.is_file() and not force:
        boxes, _ = data_io.load_box_cache(path)
        return boxes
    conf, min_area = default_box_extraction(adapter)
    if config.box_conf_threshold is not None:
        conf = config.box_conf_threshold
    if config.box_min_area_fraction is not None:
        min_area = config.box_min_area_fraction
    boxes = extract_training_boxes(adapter, manifest, conf, config.box_nms_iou, min_area)
    data_io.save_box_cache(path, boxes, meta={
        "detector": adapter.name,
        "split": split or config.train_split,
        "conf_threshold": conf,
        "nms_iou": config.box_nms_iou,
        "min_area_fraction": min_area,
        "config_sha": config.sha(),
    })
    return boxes


def load_boxes(config: RunConfig, run_dir, split: str | None = None) -> dict:
    path = box_cache_path(run_dir, config, split)
    if not path.is_file():
        raise DatasetError(
            f"box cache {path} missing; run `advtexture extract-boxes` first"
        )
    boxes, _ = data_io.load_box_cache(path)
    return boxes


def state_sha(module: torch.nn.Module) -> str:
    """Checksum of a module's parameters (order-stable)."""
    h = hashlib.sha256()
    for name, tensor in sorted(module.state_dict().items()):
        h.update(name.encode())
        h.update(tensor.detach().cpu().numpy().tobytes())
    return h.hexdigest()


class _AttackContext:
    """Shared state of one optimization loop: data, transforms, rngs."""

    def __init__(self, config: RunConfig, adapter: DetectorAdapter, manifest, boxes: dict,
                 rng: np.random.Generator):
        adapter.require_differentiable()
        self.config = config
        self.adapter = adapter
        self.boxes = boxes
        self.rng = rng
        self.ids = sorted(i for i, b in boxes.items() if b)
        if not self.ids:
            raise DatasetError("no image in the box cache has any placement box")
        self._records = {r.id: r for r in manifest.records}
        missing = [i for i in self.ids if i not in self._records]
        if missing:
            raise DatasetError(f"box cache references unknown images, e.g. {missing[:3]}")

    def image(self, image_id: str) -> torch.Tensor:
        return data_io.load_image(self._records[image_id].path)

    def energies(self, patches: list[torch.Tensor]):
        """Energies of transformed+placed patches plus logging scalars."""
        cfg = self.config
        modified = []
        for patch in patches:
            image_id = self.ids[int(self.rng.integers(len(self.ids)))]
            params = sample_eot(self.rng, cfg.eot)
            warp = sample_tps(self.rng, cfg.tps_grid_size, cfg.tps_sigma)
            transformed = tps_transform(apply_eot(patch, params, self.rng), warp)
            modified.append(place_patch(self.image(image_id), self.boxes[image_id],
                                        transformed, self.rng, cfg.placement))
        raw = self.adapter.detect_raw(modified)
        energies, u_objs, u_tvs = [], [], []
        for patch, dets in zip(patches, raw):
            if cfg.energy.box_aggregate == "max" and dets.scores.numel():
                u_obj = dets.scores.max()
            else:
                u_obj = obj_loss(dets.scores)
            u_tv = tv_loss(patch)
            if cfg.tv_per_element:
                u_tv = u_tv / patch.numel()
            energies.append(energy(u_obj, u_tv, cfg.energy))
            u_objs.append(float(u_obj))
            u_tvs.append(float(u_tv))
        return energies, float(np.mean(u_objs)), float(np.mean(u_tvs))


class _LossWriter:
    def __init__(self, run_dir, tag: str):
        self.path = None
        self.reports: list[LossReport] = []
        if run_dir is not None:
            self.path = Path(run_dir) / "logs" / f"{tag}_losses.ndjson"
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text("")

    def append(self, report: LossReport):
        self.reports.append(report)
        if self.path is not None:
            with self.path.open("a") as f:
                f.write(report.to_json_line() + "\n")


def _interior_crop_positions(rng, out_h, out_w, crop, n):
    if out_h < crop or out_w < crop:
        raise InvalidArgumentError(
            f"generator output {out_h}x{out_w} smaller than crop size {crop}"
        )
    rs = rng.integers(0, out_h - crop + 1, size=n)
    cs = rng.integers(0, out_w - crop + 1, size=n)
    return list(zip(rs.tolist(), cs.tolist()))


def _check_finite(value: torch.Tensor, save_diag):
    if not torch.isfinite(value):
        save_diag()
        raise DivergenceError(f"non-finite loss {value.item()}; diagnostic checkpoint saved")


def train_stage_one(config: RunConfig, run_dir, adapter: DetectorAdapter, manifest,
                    boxes: dict) -> tuple[Generator, AuxNet, list[LossReport]]:
    """Jointly train the texture generator and the pairing scorer.

    Per step: sample normal latents at the minimum spatial size, generate,
    crop one patch per sample at a random interior position, score the
    patch energy through the transform/placement/detector chain, score
    mutual information on (crop, latent) pairs against resampled latents,
    and take one optimizer step on both networks.
    """
    config.validate()
    rng = np.random.default_rng([config.seed, 1])
    tgen = torch.Generator().manual_seed(int(rng.integers(2**63 - 1)))
    gspec = resolve_generator_spec(config)
    generator = build_generator(gspec, rng)
    aux = build_aux_net(aux_spec_for(config, gspec), rng)
    ctx = _AttackContext(config, adapter, manifest, boxes, rng)

    h_min, w_min = gspec.min_latent_side
    cs = config.crop_size
    opt = torch.optim.Adam(
        list(generator.parameters()) + list(aux.parameters()), lr=config.stage_one.lr
    )
    writer = _LossWriter(run_dir, "stage1")
    best = math.inf

    def save(name, step):
        if run_dir is None:
            return None
        return data_io.save_checkpoint(
            Path(run_dir) / "checkpoints" / name, "stage1", {
                "generator_spec": gspec.to_dict(),
                "generator_state": generator.state_dict(),
                "aux_spec": aux.spec.to_dict(),
                "aux_state": aux.state_dict(),
                "config": config.to_dict(),
                "config_sha": config.sha(),
                "step": step,
            })

    b = config.stage_one.batch_size
    for step in range(config.stage_one.steps):
        z = torch.randn(b, gspec.latent_channels, h_min, w_min, generator=tgen)
        out = generator(z)
        positions = _interior_crop_positions(rng, out.shape[2], out.shape[3], cs, b)
        crops = torch.stack([out[i, :, r:r + cs, c:c + cs] for i, (r, c) in enumerate(positions)])

        energies, u_obj, u_tv = ctx.energies(list(crops))
        adv = adversary_objective(energies)

        z_resampled = torch.randn_like(z)
        joint = aux(crops, z)
        marginal = aux(crops, z_resampled)
        info = info_objective(joint, marginal)
        if config.info_weight == 1.0:
            total = total_stage_one_loss(adv, info)
        else:
            total = adv + config.info_weight * info
        _check_finite(total, lambda: save("stage1_diagnostic.pt", step))

        opt.zero_grad()
        total.backward()
        opt.step()

        writer.append(LossReport(step=step, u_obj=u_obj, u_tv=u_tv,
                                 energy=float(adv), info=float(info), total=float(total)))
        if float(adv) < best:
            best = float(adv)
            save("stage1_best.pt", step)
        if config.checkpoint_every and (step + 1) % config.checkpoint_every == 0:
            save(f"stage1_step{step + 1:06d}.pt", step)

    generator.eval()
    aux.eval()
    save("stage1_final.pt", config.stage_one.steps)
    return generator, aux, writer.reports


def load_stage_one(path) -> tuple[Generator, AuxNet, dict]:
    payload = data_io.load_checkpoint(path, expect_kind="stage1")
    gspec = GeneratorSpec.from_dict(payload["generator_spec"])
    generator = Generator(gspec)
    generator.load_state_dict(payload["generator_state"])
    generator.eval()
    aux = AuxNet(AuxNetSpec.from_dict(payload["aux_spec"]))
    aux.load_state_dict(payload["aux_state"])
    aux.eval()
    return generator, aux, payload


def optimize_latent_stage_two(generator: Generator, config: RunConfig, run_dir,
                              adapter: DetectorAdapter, manifest, boxes: dict
                              ) -> tuple[LocalLatentPattern, list[LossReport]]:
    """Search the best toroidal latent unit with the generator frozen.

    Latent samples are toroidal crops of the unit at per-sample random
    offsets; only the adversarial energy is minimized here.
    """
    config.validate()
    rng = np.random.default_rng([config.seed, 2])
    tgen = torch.Generator().manual_seed(int(rng.integers(2**63 - 1)))
    ctx = _AttackContext(config, adapter, manifest, boxes, rng)
    gspec = generator.spec
    h_min, w_min = gspec.min_latent_side
    cs = config.crop_size
    side = config.local_side

    for p in generator.parameters():
        p.requires_grad_(False)
    generator.eval()
    gen_sha = state_sha(generator)

    local = torch.randn(gspec.latent_channels, side, side, generator=tgen)
    local.requires_grad_(True)
    opt = torch.optim.Adam([local], lr=config.stage_two.lr)
    writer = _LossWriter(run_dir, "stage2")

    def save(name, step):
        if run_dir is None:
            return None
        return data_io.save_checkpoint(
            Path(run_dir) / "checkpoints" / name, "stage2", {
                "local_pattern": local.detach().clone(),
                "generator_sha": gen_sha,
                "config": config.to_dict(),
                "config_sha": config.sha(),
                "step": step,
            })

    b = config.stage_two.batch_size
    for step in range(config.stage_two.steps):
        zs = []
        for _ in range(b):
            off_r, off_c = random_toroidal_offsets(rng, side)
            zs.append(toroidal_crop(local, off_r, off_c, h_min, w_min))
        out = generator(torch.stack(zs))
        positions = _interior_crop_positions(rng, out.shape[2], out.shape[3], cs, b)
        crops = torch.stack([out[i, :, r:r + cs, c:c + cs] for i, (r, c) in enumerate(positions)])

        energies, u_obj, u_tv = ctx.energies(list(crops))
        adv = adversary_objective(energies)
        _check_finite(adv, lambda: save("stage2_diagnostic.pt", step))

        opt.zero_grad()
        adv.backward()
        opt.step()
        writer.append(LossReport(step=step, u_obj=u_obj, u_tv=u_tv,
                                 energy=float(adv), info=0.0, total=float(adv)))

    result = LocalLatentPattern(local.detach().clone())
    save("stage2_final.pt", config.stage_two.steps)
    return result, writer.reports


def load_stage_two(path) -> tuple[LocalLatentPattern, dict]:
    payload = data_io.load_checkpoint(path, expect_kind="stage2")
    return LocalLatentPattern(payload["local_pattern"]), payload


def synthesize_texture(generator: Generator, local: LocalLatentPattern | None,
                       latent_sides: tuple[int, int], rng=None) -> TexturePattern:
    """Emit a texture: tile the latent unit (with one), else sample a normal latent."""
    rows, cols = latent_sides
    if local is not None:
        latent = make_latent_from_local(local, rows, cols)
    else:
        if rng is None:
            raise InvalidArgumentError("sampling a texture without a latent unit needs an rng")
        tgen = torch.Generator().manual_seed(int(np.random.default_rng(rng).integers(2**63 - 1))
                                             if isinstance(rng, (int, np.integer))
                                             else int(rng.integers(2**63 - 1)))
        latent = LatentVariable(
            torch.randn(generator.spec.latent_channels, rows, cols, generator=tgen)
        )
    return generate(generator, latent)


def sample_crop_offsets(rng, pattern_side: int, crop: int, wrap: bool) -> tuple[int, int]:
    """Crop-position sampler shared by the pixel attacks.

    Toroidal mode draws offsets anywhere on the torus; plain mode draws
    only positions where the window lies fully inside the pattern.
    """
    if wrap:
        return random_toroidal_offsets(rng, pattern_side)
    if pattern_side < crop:
        raise InvalidArgumentError(f"pattern side {pattern_side} smaller than crop {crop}")
    off = rng.integers(0, pattern_side - crop + 1, size=2)
    return int(off[0]), int(off[1])


def optimize_pixel_attack(config: RunConfig, adapter: DetectorAdapter, manifest, boxes: dict,
                          side: int, wrap: bool, run_dir=None, tag: str = "pixels"
                          ) -> tuple[TexturePattern, list[LossReport]]:
    """Optimize raw texture pixels directly (toroidal or fixed-patch cropping).

    Parameters stay in [0, 1] by projection after each optimizer step.
    """
    config.validate()
    rng = np.random.default_rng([config.seed, 3, 1 if wrap else 0, side])
    tgen = torch.Generator().manual_seed(int(rng.integers(2**63 - 1)))
    ctx = _AttackContext(config, adapter, manifest, boxes, rng)
    cs = config.crop_size

    pixels = torch.rand(3, side, side, generator=tgen)
    pixels.requires_grad_(True)
    opt = torch.optim.Adam([pixels], lr=config.baseline.lr)
    writer = _LossWriter(run_dir, tag)

    b = config.baseline.batch_size
    for step in range(config.baseline.steps):
        crops = []
        for _ in range(b):
            off_r, off_c = sample_crop_offsets(rng, side, cs, wrap)
            if wrap:
                crops.append(toroidal_crop(pixels, off_r, off_c, cs, cs))
            else:
                crops.append(pixels[:, off_r:off_r + cs, off_c:off_c + cs])
        energies, u_obj, u_tv = ctx.energies(crops)
        adv = adversary_objective(energies)
        _check_finite(adv, lambda: None)
        opt.zero_grad()
        adv.backward()
        opt.step()
        with torch.no_grad():
            pixels.clamp_(0.0, 1.0)
        writer.append(LossReport(step=step, u_obj=u_obj, u_tv=u_tv,
                                 energy=float(adv), info=0.0, total=float(adv)))
    return TexturePattern(pixels.detach().clone()), writer.reports


def random_texture(rng, unit_size: int = 300, block: int = 30) -> TexturePattern:
    """A repetitive random-color texture unit: a grid of uniform color blocks."""
    rng = np.random.default_rng(rng) if isinstance(rng, (int, np.integer)) else rng
    nb = math.ceil(unit_size / block)
    colors = rng.uniform(0.0, 1.0, size=(3, nb, nb)).astype(np.float32)
    unit = np.repeat(np.repeat(colors, block, axis=1), block, axis=2)[:, :unit_size, :unit_size]
    return TexturePattern(torch.from_numpy(unit))


def run_baseline(kind: BaselineKind, config: RunConfig, run_dir,
                 adapter: DetectorAdapter | None = None, manifest=None, boxes: dict | None = None,
                 patch_path=None, generator: Generator | None = None) -> dict:
    """Produce one baseline texture plus its artifacts.

    Training baselines need adapter + manifest + boxes; tiled-patch needs
    patch_path; EGA/TCEGA accept a pre-trained generator to reuse.
    Returns {"texture": TexturePattern, ...extras}.
    """
    kind = BaselineKind(kind)
    cs = config.crop_size

    if kind is BaselineKind.RANDOM_TEXTURE:
        rng = np.random.default_rng([config.seed, 4])
        return {"texture": random_texture(rng, unit_size=2 * cs, block=max(1, cs // 5))}

    if kind is BaselineKind.TILED_PATCH:
        if patch_path is None:
            raise InvalidArgumentError("tiled_patch baseline needs an input patch file")
        unit = data_io.load_texture(patch_path)
        preview = TexturePattern(tile_pattern(unit, 2, 2))
        return {"texture": unit, "tiled_preview": preview}

    if kind in (BaselineKind.TCA, BaselineKind.RCA2X, BaselineKind.RCA6X):
        side = {BaselineKind.TCA: 2 * cs, BaselineKind.RCA2X: 2 * cs,
                BaselineKind.RCA6X: 6 * cs}[kind]
        wrap = kind is BaselineKind.TCA
        texture, reports = optimize_pixel_attack(
            config, adapter, manifest, boxes, side=side, wrap=wrap,
            run_dir=run_dir, tag=f"baseline_{kind.value}")
        return {"texture": texture, "reports": reports}

    # generative baselines
    if generator is None:
        generator, _aux, _ = train_stage_one(config, run_dir, adapter, manifest, boxes)
    h_min, w_min = generator.spec.min_latent_side
    if kind is BaselineKind.EGA:
        rng = np.random.default_rng([config.seed, 5])
        texture = synthesize_texture(generator, None, (h_min, w_min), rng)
        return {"texture": texture, "generator": generator}
    if kind is BaselineKind.TCEGA:
        local, reports = optimize_latent_stage_two(
            generator, config, run_dir, adapter, manifest, boxes)
        texture = synthesize_texture(generator, local, (h_min, w_min))
        return {"texture": texture, "generator": generator, "local": local,
                "reports": reports}
    raise InvalidArgumentError(f"unhandled baseline kind {kind}")
