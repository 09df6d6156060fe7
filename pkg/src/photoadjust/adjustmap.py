"""The semantic adjustment map: a K-way categorical preset head, the
exact-expectation regression loss, moving-average class reweighting, and
map extraction / serialization.

The likelihood of a target color under preset k is the unnormalized
robust likelihood exp(-loss_k), so the expected regression objective is
the posterior-weighted, class-weighted per-preset loss, computed exactly
over the K presets (no sampling).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image
from torch import Tensor, nn

from .bilinear import BilinearHead, unscale_lab
from .losses import LossConfig, channel_loss

# EMA constants for the soft class frequencies.
EMA_KEEP = 0.9
EMA_NEW = 0.1


class PosteriorHead(nn.Module):
    """Linear map from context vectors to K preset logits plus softmax.

    Zero-initialized: the initial posterior is uniform over presets.
    """

    def __init__(self, context_dim: int, k: int) -> None:
        super().__init__()
        if k < 1:
            raise ValueError("preset count must be >= 1")
        self.k = k
        self.linear = nn.Linear(context_dim, k)
        nn.init.zeros_(self.linear.weight)
        nn.init.zeros_(self.linear.bias)

    def logits(self, context: Tensor) -> Tensor:
        return self.linear(context)

    def forward(self, context: Tensor) -> Tensor:
        """Per-pixel categorical distribution over the K presets."""
        return torch.softmax(self.logits(context), dim=-1)


def per_preset_predictions(
    f_clr: Tensor, x_lab: Tensor, head: BilinearHead
) -> tuple[Tensor, Tensor]:
    """Evaluate the bilinear head at every one-hot context.

    Returns (residuals, outputs) of shape (..., K, 3): entry k is the head
    applied with context e_k, i.e. row k of V acting as that preset's
    context embedding.
    """
    k = head.m_context
    eye = torch.eye(k, dtype=f_clr.dtype, device=f_clr.device)
    context_fac = head.context_factor(eye)  # (K, rank)
    color_fac = head.color_factor(f_clr).unsqueeze(-2)  # (..., 1, rank)
    residuals = head.residual_from_factors(color_fac, context_fac)  # (..., K, 3)
    outputs = x_lab.unsqueeze(-2) + unscale_lab(residuals)
    return residuals, outputs


def expected_regression_loss(
    posterior: Tensor,
    per_preset_losses: Tensor,
    weights: Tensor | np.ndarray,
) -> Tensor:
    """Exact expectation of class-weighted per-preset losses.

    ``posterior`` is (P, K), ``per_preset_losses`` is (P, K) (robust loss
    of target vs the k-th prediction, already reduced over channels), and
    ``weights`` is the K-vector of class weights, treated as constants.
    Returns the mean over pixels.
    """
    if posterior.shape != per_preset_losses.shape:
        raise ValueError(
            f"posterior shape {tuple(posterior.shape)} != losses shape "
            f"{tuple(per_preset_losses.shape)}"
        )
    w = torch.as_tensor(weights, dtype=per_preset_losses.dtype, device=per_preset_losses.device)
    if w.ndim != 1 or w.shape[0] != posterior.shape[-1]:
        raise ValueError(f"expected {posterior.shape[-1]} class weights, got {tuple(w.shape)}")
    if bool((w <= 0).any()):
        raise ValueError("class weights must be positive")
    w = w.detach()
    return (posterior * w * per_preset_losses).sum(dim=-1).mean()


def preset_regression_losses(
    target_norm: Tensor, predictions_norm: Tensor, config: LossConfig
) -> Tensor:
    """Robust loss of the normalized target against each preset prediction.

    ``target_norm`` is (P, 3), ``predictions_norm`` is (P, K, 3); returns
    (P, K).
    """
    return channel_loss(target_norm.unsqueeze(-2) - predictions_norm, config)


@dataclass
class ClassWeightState:
    """Moving average of normalized soft class frequencies and the derived
    per-class loss weights.

    Initialized uniform; each update folds in the batch-mean posterior
    with fixed 0.9 / 0.1 EMA constants.  Weights are
    ``alpha * a + (1 - alpha)``: frequent classes keep weight near 1,
    rare classes get discounted losses and are therefore cheaper for the
    posterior to adopt.
    """

    k: int
    alpha: float = 0.8
    a: np.ndarray = field(default=None)  # type: ignore[assignment]
    t: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must be in [0, 1]")
        if self.a is None:
            self.a = np.full(self.k, 1.0 / self.k, dtype=np.float64)
        else:
            self.a = np.asarray(self.a, dtype=np.float64)
            if self.a.shape != (self.k,):
                raise ValueError(f"frequency vector shape {self.a.shape} != ({self.k},)")


def update_frequency_ema(
    state: ClassWeightState, batch_posteriors: Tensor | np.ndarray
) -> ClassWeightState:
    """Fold one batch's posteriors into the moving average (returns a new state)."""
    if isinstance(batch_posteriors, Tensor):
        batch_posteriors = batch_posteriors.detach().cpu().numpy()
    p = np.asarray(batch_posteriors, dtype=np.float64).reshape(-1, state.k)
    if p.shape[0] == 0:
        raise ValueError("empty batch")
    mean_p = p.mean(axis=0)
    new_a = EMA_KEEP * state.a + EMA_NEW * mean_p
    return ClassWeightState(k=state.k, alpha=state.alpha, a=new_a, t=state.t + 1)


def class_weights(state: ClassWeightState) -> np.ndarray:
    """w = alpha * a + (1 - alpha); every component lies in [1 - alpha, 1]."""
    return state.alpha * state.a + (1.0 - state.alpha)


def extract_adjustment_map(posterior: Tensor | np.ndarray) -> np.ndarray:
    """Per-pixel argmax preset index; ties break toward the lower index."""
    if isinstance(posterior, Tensor):
        posterior = posterior.detach().cpu().numpy()
    posterior = np.asarray(posterior)
    return np.argmax(posterior, axis=-1).astype(np.int64)


# ---------------------------------------------------------------------------
# AdjustmentMap serialization: indexed PNG and run-length-encoded JSON.

# distinct palette colors for up to 8 presets (RGB)
MAP_PALETTE = [
    (230, 60, 60),
    (60, 120, 230),
    (60, 200, 100),
    (240, 190, 50),
    (170, 80, 220),
    (70, 210, 210),
    (240, 130, 40),
    (140, 140, 140),
]


def map_to_png_bytes(assignments: np.ndarray, k: int) -> bytes:
    """Serialize a (H, W) assignment map as an indexed PNG (palette index =
    preset index)."""
    import io

    _validate_assignments(assignments, k)
    im = Image.fromarray(assignments.astype(np.uint8), mode="P")
    palette = []
    for i in range(256):
        palette.extend(MAP_PALETTE[i % len(MAP_PALETTE)] if i < k else (0, 0, 0))
    im.putpalette(palette)
    buf = io.BytesIO()
    im.save(buf, format="PNG")
    return buf.getvalue()


def map_from_png_bytes(data: bytes) -> np.ndarray:
    import io

    with Image.open(io.BytesIO(data)) as im:
        if im.mode not in ("P", "L"):
            raise ValueError(f"adjustment map PNG must be indexed or grayscale, got mode {im.mode}")
        return np.asarray(im, dtype=np.int64)


def map_to_rle(assignments: np.ndarray, k: int) -> dict:
    """Row-major run-length encoding: {width, height, K, runs: [[index, length], ...]}."""
    _validate_assignments(assignments, k)
    h, w = assignments.shape
    flat = assignments.reshape(-1)
    change = np.flatnonzero(np.diff(flat)) + 1
    starts = np.concatenate([[0], change])
    ends = np.concatenate([change, [flat.size]])
    runs = [[int(flat[s]), int(e - s)] for s, e in zip(starts, ends)]
    return {"width": w, "height": h, "K": k, "runs": runs}


def map_from_rle(rle: dict) -> np.ndarray:
    try:
        w = int(rle["width"])
        h = int(rle["height"])
        k = int(rle["K"])
        runs = rle["runs"]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed RLE map: {exc}") from exc
    total = sum(int(length) for _, length in runs)
    if total != w * h:
        raise ValueError(f"RLE runs cover {total} pixels, expected {w * h}")
    flat = np.empty(w * h, dtype=np.int64)
    pos = 0
    for index, length in runs:
        index = int(index)
        length = int(length)
        if not 0 <= index < k:
            raise ValueError(f"preset index {index} out of range 0..{k - 1}")
        if length <= 0:
            raise ValueError("run lengths must be positive")
        flat[pos : pos + length] = index
        pos += length
    return flat.reshape(h, w)


def save_map(path: str | Path, assignments: np.ndarray, k: int) -> None:
    """Write both serializations next to each other: .png and .json."""
    path = Path(path)
    if path.suffix == ".png":
        path.write_bytes(map_to_png_bytes(assignments, k))
    elif path.suffix == ".json":
        path.write_text(json.dumps(map_to_rle(assignments, k)))
    else:
        raise ValueError(f"unknown map extension {path.suffix!r} (use .png or .json)")


def load_map(path: str | Path) -> np.ndarray:
    path = Path(path)
    if path.suffix == ".png":
        return map_from_png_bytes(path.read_bytes())
    if path.suffix == ".json":
        return map_from_rle(json.loads(path.read_text()))
    raise ValueError(f"unknown map extension {path.suffix!r} (use .png or .json)")


def _validate_assignments(assignments: np.ndarray, k: int) -> None:
    assignments = np.asarray(assignments)
    if assignments.ndim != 2:
        raise ValueError(f"assignment map must be 2-D, got shape {assignments.shape}")
    if assignments.size and (assignments.min() < 0 or assignments.max() >= k):
        raise ValueError(
            f"assignment indices must lie in 0..{k - 1}, "
            f"found range [{assignments.min()}, {assignments.max()}]"
        )
