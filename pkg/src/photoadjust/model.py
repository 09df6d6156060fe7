"""Full adjustment model: feature extraction, bilinear head, preset
posterior, and parse head, with sparse (training) and dense (inference)
forward paths.

Two context modes exist:

* ``conv`` - the context entering the bilinear head is the 512-dim (or
  toy-sized) squeezed hypercolumn vector.
* ``map`` - the context is a K-way one-hot preset assignment; a posterior
  head predicts the assignment distribution from the squeezed vector, and
  inference either takes the argmax preset per pixel (hard, default) or
  blends predictions by the posterior (soft).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
from torch import Tensor, nn

from .adjustmap import PosteriorHead, extract_adjustment_map, per_preset_predictions
from .bilinear import BilinearHead, build_color_features, scale_lab, unscale_lab
from .features import BackboneConfig, FeatureExtractor, FeatureMaps

CONTEXT_MODES = ("conv", "map")


@dataclass
class ModelConfig:
    backbone: BackboneConfig = field(default_factory=BackboneConfig.toy)
    rank: int = 32
    k: int = 2
    parse_classes: int = 150
    context_mode: str = "map"

    def __post_init__(self) -> None:
        if self.context_mode not in CONTEXT_MODES:
            raise ValueError(f"unknown context mode {self.context_mode!r}")
        if self.rank < 1:
            raise ValueError("rank must be >= 1")
        if self.k < 1:
            raise ValueError("k must be >= 1")


@dataclass
class AdjustResult:
    adjusted: np.ndarray  # (H, W, 3) Lab
    assignments: np.ndarray | None  # (H, W) preset indices ("map" mode only)
    posterior: np.ndarray | None  # (H, W, K) ("map" mode only)


class AdjustmentModel(nn.Module):
    def __init__(self, config: ModelConfig) -> None:
        super().__init__()
        self.config = config
        self.features = FeatureExtractor(config.backbone)
        n_color = 3 + config.backbone.stem_channels
        m_context = config.k if config.context_mode == "map" else config.backbone.context_dim
        self.head = BilinearHead(n_color, m_context, config.rank)
        if config.context_mode == "map":
            self.posterior_head = PosteriorHead(config.backbone.context_dim, config.k)
        self.parse_head = nn.Linear(config.backbone.context_dim, config.parse_classes)

    # -- basics ------------------------------------------------------------

    @property
    def k(self) -> int:
        return self.config.k

    @property
    def context_mode(self) -> str:
        return self.config.context_mode

    @property
    def dtype(self) -> torch.dtype:
        return self.head.U.dtype

    def backbone_parameters(self) -> list[nn.Parameter]:
        """The finetuned group (stem + residual blocks), for the reduced
        learning rate."""
        return list(self.features.backbone.parameters())

    def head_parameters(self) -> list[nn.Parameter]:
        backbone_ids = {id(p) for p in self.backbone_parameters()}
        return [p for p in self.parameters() if id(p) not in backbone_ids]

    def prepare_input(self, lab_images: np.ndarray | Tensor) -> Tensor:
        """(B, H, W, 3) Lab (or a single (H, W, 3) image) -> (B, 3, H, W)
        on the normalized color scale."""
        x = torch.as_tensor(np.asarray(lab_images), dtype=self.dtype)
        if x.ndim == 3:
            x = x.unsqueeze(0)
        return scale_lab(x).permute(0, 3, 1, 2).contiguous()

    def forward_maps(self, x: Tensor) -> FeatureMaps:
        return self.features.forward_maps(x)

    # -- sparse pixel path (training) --------------------------------------

    def pixel_forward(
        self,
        maps: FeatureMaps,
        coords: Tensor,
        image_hw: tuple[int, int],
        lab_at_coords: Tensor,
    ) -> dict[str, Tensor]:
        """Evaluate the heads at sparse pixel coordinates.

        ``coords`` is (B, P, 2) in image pixels, ``lab_at_coords`` is
        (B, P, 3) in Lab units.  Returns context vectors, parse logits,
        and the mode-dependent prediction tensors (all normalized-scale
        residuals plus Lab outputs).
        """
        context = self.features.context_at(maps, coords, image_hw)
        first = self.features.first_layer_at(maps, coords, image_hw)
        f_clr = build_color_features(lab_at_coords, first)
        out: dict[str, Tensor] = {
            "context": context,
            "parse_logits": self.parse_head(context),
        }
        if self.context_mode == "conv":
            residual = self.head.residual(f_clr, context)
            out["residual"] = residual
            out["output"] = lab_at_coords + unscale_lab(residual)
        else:
            out["posterior"] = self.posterior_head(context)
            residuals, outputs = per_preset_predictions(f_clr, lab_at_coords, self.head)
            out["per_preset_residuals"] = residuals
            out["per_preset_outputs"] = outputs
        return out

    # -- dense inference ----------------------------------------------------

    def _dense_chunks(self, lab_image: np.ndarray, chunk: int):
        h, w = lab_image.shape[:2]
        x = self.prepare_input(lab_image)
        maps = self.forward_maps(x)
        rows, cols = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
        all_coords = np.stack([rows.reshape(-1), cols.reshape(-1)], axis=1)
        lab_flat = torch.as_tensor(lab_image.reshape(-1, 3), dtype=self.dtype)
        for start in range(0, h * w, chunk):
            sel = all_coords[start : start + chunk]
            coords = torch.as_tensor(sel, dtype=self.dtype).unsqueeze(0)
            lab = lab_flat[start : start + chunk].unsqueeze(0)
            yield start, maps, coords, lab

    @torch.no_grad()
    def adjust_image(
        self, lab_image: np.ndarray, mode: str = "hard", chunk: int = 16384
    ) -> AdjustResult:
        """Adjust a whole image with dense hypercolumn readout.

        In ``map`` context mode, ``mode`` selects hard (argmax, the
        default) or soft (posterior blend) inference.  Hard inference is
        exactly map extraction followed by map substitution.
        """
        h, w = lab_image.shape[:2]
        lab_orig = np.asarray(lab_image, dtype=np.float64).reshape(-1, 3)
        if self.context_mode == "conv":
            adjusted = np.empty((h * w, 3), dtype=np.float64)
            for start, maps, coords, lab in self._dense_chunks(lab_image, chunk):
                res = self.head.residual(
                    build_color_features(lab, self.features.first_layer_at(maps, coords, (h, w))),
                    self.features.context_at(maps, coords, (h, w)),
                )
                # add the residual to the original float64 pixels so a zero
                # residual is an exact identity
                delta = unscale_lab(res)[0].cpu().numpy().astype(np.float64)
                stop = start + coords.shape[1]
                adjusted[start:stop] = lab_orig[start:stop] + delta
            return AdjustResult(adjusted.reshape(h, w, 3), None, None)

        posterior = self.image_posterior(lab_image, chunk)
        assignments = extract_adjustment_map(posterior)
        if mode == "hard":
            adjusted = self.adjust_image_with_map(lab_image, assignments, chunk)
            return AdjustResult(adjusted, assignments, posterior)
        if mode == "soft":
            adjusted = np.empty((h * w, 3), dtype=np.float64)
            post_flat = torch.as_tensor(posterior.reshape(-1, self.k), dtype=self.dtype)
            for start, maps, coords, lab in self._dense_chunks(lab_image, chunk):
                residuals, _ = per_preset_predictions(
                    build_color_features(lab, self.features.first_layer_at(maps, coords, (h, w))),
                    lab,
                    self.head,
                )
                p = post_flat[start : start + coords.shape[1]].unsqueeze(0)
                blend = (p.unsqueeze(-1) * unscale_lab(residuals)).sum(dim=-2)
                delta = blend[0].cpu().numpy().astype(np.float64)
                stop = start + coords.shape[1]
                adjusted[start:stop] = lab_orig[start:stop] + delta
            return AdjustResult(adjusted.reshape(h, w, 3), assignments, posterior)
        raise ValueError(f"unknown inference mode {mode!r}")

    @torch.no_grad()
    def image_posterior(self, lab_image: np.ndarray, chunk: int = 16384) -> np.ndarray:
        """Dense (H, W, K) preset posterior ("map" context mode only)."""
        if self.context_mode != "map":
            raise ValueError("posterior is only defined in 'map' context mode")
        h, w = lab_image.shape[:2]
        posterior = np.empty((h * w, self.k), dtype=np.float64)
        for start, maps, coords, _ in self._dense_chunks(lab_image, chunk):
            p = self.posterior_head(self.features.context_at(maps, coords, (h, w)))
            posterior[start : start + coords.shape[1]] = p[0].cpu().numpy()
        return posterior.reshape(h, w, self.k)

    @torch.no_grad()
    def adjust_image_with_map(
        self, lab_image: np.ndarray, assignments: np.ndarray, chunk: int = 16384
    ) -> np.ndarray:
        """Adjust using a supplied preset assignment map, bypassing the
        model's own posterior."""
        if self.context_mode != "map":
            raise ValueError("map substitution requires 'map' context mode")
        h, w = lab_image.shape[:2]
        assignments = np.asarray(assignments)
        if assignments.shape != (h, w):
            raise ValueError(
                f"map shape {assignments.shape} does not match image shape {(h, w)}"
            )
        if assignments.size and (assignments.min() < 0 or assignments.max() >= self.k):
            raise ValueError(
                f"preset index out of range 0..{self.k - 1}: "
                f"[{assignments.min()}, {assignments.max()}]"
            )
        flat_map = torch.as_tensor(assignments.reshape(-1), dtype=torch.long)
        lab_orig = np.asarray(lab_image, dtype=np.float64).reshape(-1, 3)
        adjusted = np.empty((h * w, 3), dtype=np.float64)
        for start, maps, coords, lab in self._dense_chunks(lab_image, chunk):
            f_clr = build_color_features(lab, self.features.first_layer_at(maps, coords, (h, w)))
            sel = flat_map[start : start + coords.shape[1]]
            # one-hot context: tanh(V^T e_k + c) = tanh(V[k] + c)
            context_fac = torch.tanh(self.head.V[sel] + self.head.c_bias).unsqueeze(0)
            res = self.head.residual_from_factors(self.head.color_factor(f_clr), context_fac)
            delta = unscale_lab(res)[0].cpu().numpy().astype(np.float64)
            stop = start + coords.shape[1]
            adjusted[start:stop] = lab_orig[start:stop] + delta
        return adjusted.reshape(h, w, 3)
