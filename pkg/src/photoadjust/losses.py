"""Robust regression losses and the combined multi-task objective.

All color losses operate on the model's normalized color scale (see
``bilinear.scale_lab``); the Huber changepoint default of 0.04 is only
meaningful there.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import Tensor

from .data import IGNORE_LABEL


@dataclass
class LossConfig:
    kind: str = "huber"  # "huber" | "mse"
    delta: float = 0.04
    lam: float = 0.01  # weight of the scene-parsing cross entropy
    parse_classes: int = 150

    def __post_init__(self) -> None:
        if self.kind not in ("huber", "mse"):
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if self.parse_classes < 2:
            raise ValueError("parse_classes must be >= 2")


def huber(e: Tensor | float, delta: float) -> Tensor:
    """Quadratic for |e| <= delta, linear delta*(|e| - delta/2) beyond.

    Continuous and once-differentiable; the gradient magnitude is capped
    at delta.  Applied elementwise.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    if not torch.is_tensor(e):
        e = torch.as_tensor(e, dtype=torch.float64)
    abs_e = e.abs()
    return torch.where(abs_e <= delta, 0.5 * e * e, delta * (abs_e - 0.5 * delta))


def squared_error(e: Tensor | float) -> Tensor:
    """MSE baseline counterpart of ``huber``: 0.5 * e^2 elementwise."""
    if not torch.is_tensor(e):
        e = torch.as_tensor(e, dtype=torch.float64)
    return 0.5 * e * e


def channel_loss(error: Tensor, config: LossConfig) -> Tensor:
    """Per-channel robust loss summed over the last (channel) axis."""
    if config.kind == "huber":
        return huber(error, config.delta).sum(dim=-1)
    return squared_error(error).sum(dim=-1)


def parse_cross_entropy(logits: Tensor, labels: Tensor, ignore_label: int = IGNORE_LABEL) -> Tensor:
    """Mean negative log-softmax of the true class over non-ignored pixels.

    ``logits`` is (P, C); ``labels`` is (P,) with values in 0..C-1 or
    ``ignore_label``.
    """
    labels = labels.long()
    keep = labels != ignore_label
    if not bool(keep.any()):
        raise ValueError("all pixels carry the ignore label; nothing to train on")
    logits = logits[keep]
    labels = labels[keep]
    log_p = torch.log_softmax(logits, dim=-1)
    return -log_p.gather(1, labels[:, None]).mean()


def total_loss(l_reg: Tensor | float, l_parse: Tensor | float, lam: float) -> Tensor:
    """Combined objective: regression loss plus lam * parse loss."""
    if not torch.is_tensor(l_reg):
        l_reg = torch.as_tensor(l_reg, dtype=torch.float64)
    if not torch.is_tensor(l_parse):
        l_parse = torch.as_tensor(l_parse, dtype=l_reg.dtype)
    return l_reg + lam * l_parse
