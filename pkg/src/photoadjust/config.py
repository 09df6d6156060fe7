"""Training configuration: variants, defaults, and the flat key-value
config file format.

Variant names compose a loss kind with optional features, joined by "+":
``MSE``, ``Huber``, ``Huber+MT`` (multi-task scene parsing), ``Huber+S``
(semantic adjustment map as the context), ``Huber+MT+S``.  The S flag
switches the bilinear context from convolutional features to the K-way
preset map.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .features import BackboneConfig
from .losses import LossConfig
from .model import ModelConfig

TOY_RANK = 32
FULL_RANK = 512


def parse_variant(variant: str) -> tuple[str, bool, bool]:
    """Return (loss_kind, multitask, semantic_map) for a variant name."""
    tokens = variant.split("+")
    kind = tokens[0].strip().lower()
    if kind not in ("mse", "huber"):
        raise ValueError(f"variant must start with MSE or Huber, got {variant!r}")
    multitask = False
    semantic_map = False
    for tok in tokens[1:]:
        tok = tok.strip().upper()
        if tok == "MT":
            multitask = True
        elif tok == "S":
            semantic_map = True
        else:
            raise ValueError(f"unknown variant flag {tok!r} in {variant!r}")
    return kind, multitask, semantic_map


@dataclass
class TrainConfig:
    variant: str = "Huber+MT+S"
    learning_rate: float = 1e-4
    batch_size: int = 4
    backbone_lr_multiplier: float = 0.5
    epochs: int = 500
    pixels_per_image: int = 2048
    seed: int = 0
    k: int = 2
    canvas: int = 512
    rank: int | None = None  # defaults per profile: 32 toy, 512 full
    alpha: float = 0.8
    val_fraction: float = 1.0 / 7.0
    validate_every: int = 1  # epochs between validation passes
    grad_clip: float | None = None
    loss: LossConfig = field(default_factory=LossConfig)
    backbone: BackboneConfig = field(default_factory=BackboneConfig.toy)

    def __post_init__(self) -> None:
        if self.learning_rate <= 0 or self.backbone_lr_multiplier < 0:
            raise ValueError("learning rates must be positive (multiplier nonnegative)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        parse_variant(self.variant)  # validates

    @property
    def loss_kind(self) -> str:
        return parse_variant(self.variant)[0]

    @property
    def multitask(self) -> bool:
        return parse_variant(self.variant)[1]

    @property
    def semantic_map(self) -> bool:
        return parse_variant(self.variant)[2]

    def resolved_rank(self) -> int:
        if self.rank is not None:
            return self.rank
        return FULL_RANK if self.backbone.profile == "full" else TOY_RANK

    def loss_config(self) -> LossConfig:
        return replace(self.loss, kind=self.loss_kind)

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            backbone=self.backbone,
            rank=self.resolved_rank(),
            k=self.k,
            parse_classes=self.loss.parse_classes,
            context_mode="map" if self.semantic_map else "conv",
        )


# ---------------------------------------------------------------------------
# Flat key-value config files: one "key = value" per line, '#' comments.

_TRAIN_KEYS = {
    "variant": str,
    "learning_rate": float,
    "batch_size": int,
    "backbone_lr_multiplier": float,
    "epochs": int,
    "pixels_per_image": int,
    "seed": int,
    "k": int,
    "canvas": int,
    "rank": int,
    "alpha": float,
    "val_fraction": float,
    "validate_every": int,
    "grad_clip": float,
}
_LOSS_KEYS = {"delta": float, "lambda": float, "parse_classes": int}
_BACKBONE_KEYS = {
    "profile": str,
    "stem_channels": int,
    "block_channels": str,
    "rnn_hidden": int,
    "rnn_channels": int,
    "context_dim": int,
    "pretrained": bool,
    "pretrained_path": str,
}


def parse_config_file(text: str) -> dict[str, str]:
    kv: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno} is not 'key = value': {raw!r}")
        key, _, value = line.partition("=")
        kv[key.strip()] = value.strip()
    return kv


def _coerce(value: str, typ):
    if typ is bool:
        if value.lower() in ("1", "true", "yes"):
            return True
        if value.lower() in ("0", "false", "no"):
            return False
        raise ValueError(f"expected a boolean, got {value!r}")
    return typ(value)


def train_config_from_kv(kv: dict[str, str]) -> TrainConfig:
    """Build a TrainConfig from flat keys; unknown keys are an error."""
    known = set(_TRAIN_KEYS) | set(_LOSS_KEYS) | set(_BACKBONE_KEYS)
    unknown = set(kv) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")

    profile = kv.get("profile", "toy")
    backbone = BackboneConfig.full() if profile == "full" else BackboneConfig.toy()
    bk: dict = {}
    for key, typ in _BACKBONE_KEYS.items():
        if key in kv and key != "profile":
            if key == "block_channels":
                bk[key] = tuple(int(v) for v in kv[key].replace(",", " ").split())
            else:
                bk[key] = _coerce(kv[key], typ)
    backbone = replace(backbone, **bk)

    loss_kwargs = {}
    if "delta" in kv:
        loss_kwargs["delta"] = float(kv["delta"])
    if "lambda" in kv:
        loss_kwargs["lam"] = float(kv["lambda"])
    if "parse_classes" in kv:
        loss_kwargs["parse_classes"] = int(kv["parse_classes"])

    train_kwargs = {}
    for key, typ in _TRAIN_KEYS.items():
        if key in kv:
            train_kwargs[key] = _coerce(kv[key], typ)
    return TrainConfig(loss=LossConfig(**loss_kwargs), backbone=backbone, **train_kwargs)


def train_config_to_dict(config: TrainConfig) -> dict:
    return {
        "variant": config.variant,
        "learning_rate": config.learning_rate,
        "batch_size": config.batch_size,
        "backbone_lr_multiplier": config.backbone_lr_multiplier,
        "epochs": config.epochs,
        "pixels_per_image": config.pixels_per_image,
        "seed": config.seed,
        "k": config.k,
        "canvas": config.canvas,
        "rank": config.rank,
        "alpha": config.alpha,
        "val_fraction": config.val_fraction,
        "validate_every": config.validate_every,
        "grad_clip": config.grad_clip,
        "loss": {
            "kind": config.loss.kind,
            "delta": config.loss.delta,
            "lam": config.loss.lam,
            "parse_classes": config.loss.parse_classes,
        },
        "backbone": {
            "profile": config.backbone.profile,
            "stem_channels": config.backbone.stem_channels,
            "block_channels": list(config.backbone.block_channels),
            "rnn_hidden": config.backbone.rnn_hidden,
            "rnn_channels": config.backbone.rnn_channels,
            "context_dim": config.backbone.context_dim,
            "pretrained": config.backbone.pretrained,
            "pretrained_path": config.backbone.pretrained_path,
        },
    }


def train_config_from_dict(d: dict) -> TrainConfig:
    loss = LossConfig(**{k: v for k, v in d["loss"].items()})
    bk = dict(d["backbone"])
    bk["block_channels"] = tuple(bk["block_channels"])
    backbone = BackboneConfig(**bk)
    kwargs = {k: v for k, v in d.items() if k not in ("loss", "backbone")}
    return TrainConfig(loss=loss, backbone=backbone, **kwargs)
