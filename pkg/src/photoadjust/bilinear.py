"""Low-rank bilinear regression head.

The head combines per-pixel color features and context features
multiplicatively:

    residual = tanh(P^T (tanh(U^T f_clr + b) * tanh(V^T f_cxt + c)) + d)
    output   = input + unscale(residual)

All three tanh stages keep the residual strictly inside (-1, 1) per
channel on the normalized color scale, so a full-range edit of any
channel is expressible.  With zero parameters the head is exactly the
identity mapping.
"""

from __future__ import annotations

import math

import torch
from torch import Tensor, nn

# Normalized color scale: L/100, a/110, b/110.  Residuals, the Huber
# changepoint, and the bilinear head all live on this scale.
LAB_SCALE = (100.0, 110.0, 110.0)

EPS_NORM = 1e-8


def scale_lab(lab: Tensor) -> Tensor:
    """Map Lab (..., 3) to the model's normalized color scale."""
    scale = torch.tensor(LAB_SCALE, dtype=lab.dtype, device=lab.device)
    return lab / scale


def unscale_lab(lab_norm: Tensor) -> Tensor:
    scale = torch.tensor(LAB_SCALE, dtype=lab_norm.dtype, device=lab_norm.device)
    return lab_norm * scale


def l2_normalize(v: Tensor, dim: int = -1) -> Tensor:
    """x / (||x|| + eps); zero vectors map to zero."""
    return v / (v.norm(dim=dim, keepdim=True) + EPS_NORM)


def build_color_features(lab: Tensor, first_layer: Tensor) -> Tensor:
    """Concatenate scaled Lab with the L2-normalized first-layer vector.

    ``lab`` is (..., 3) in Lab units; ``first_layer`` is (..., C0) raw
    first-layer features.  Output is (..., 3 + C0).
    """
    return torch.cat([scale_lab(lab), l2_normalize(first_layer)], dim=-1)


class BilinearHead(nn.Module):
    """Factorized bilinear interaction of color and context features.

    ``n_color`` is the color feature length N, ``m_context`` the context
    feature length M (the preset count K when the context is a one-hot
    adjustment map), ``rank`` the decomposition rank.  Output channels are
    fixed at 3 (a Lab residual).
    """

    def __init__(self, n_color: int, m_context: int, rank: int) -> None:
        super().__init__()
        self.n_color = n_color
        self.m_context = m_context
        self.rank = rank
        self.U = nn.Parameter(torch.empty(n_color, rank))
        self.V = nn.Parameter(torch.empty(m_context, rank))
        self.P = nn.Parameter(torch.empty(rank, 3))
        self.b = nn.Parameter(torch.zeros(rank))
        self.c_bias = nn.Parameter(torch.zeros(rank))
        self.d_bias = nn.Parameter(torch.zeros(3))
        self.reset_parameters()

    def reset_parameters(self) -> None:
        # symmetric uniform fan-in scaling; zero biases give an exact
        # identity residual only in expectation, zero_() gives it exactly
        for w in (self.U, self.V, self.P):
            bound = 1.0 / math.sqrt(w.shape[0])
            nn.init.uniform_(w, -bound, bound)
        nn.init.zeros_(self.b)
        nn.init.zeros_(self.c_bias)
        nn.init.zeros_(self.d_bias)

    def color_factor(self, f_clr: Tensor) -> Tensor:
        """tanh(U^T f_clr + b): (..., N) -> (..., rank)."""
        if f_clr.shape[-1] != self.n_color:
            raise ValueError(
                f"color feature length {f_clr.shape[-1]} != expected {self.n_color}"
            )
        return torch.tanh(f_clr @ self.U + self.b)

    def context_factor(self, f_cxt: Tensor) -> Tensor:
        """tanh(V^T f_cxt + c): (..., M) -> (..., rank)."""
        if f_cxt.shape[-1] != self.m_context:
            raise ValueError(
                f"context feature length {f_cxt.shape[-1]} != expected {self.m_context}"
            )
        return torch.tanh(f_cxt @ self.V + self.c_bias)

    def residual(self, f_clr: Tensor, f_cxt: Tensor) -> Tensor:
        """Normalized-scale residual, each component strictly in (-1, 1)."""
        return torch.tanh((self.color_factor(f_clr) * self.context_factor(f_cxt)) @ self.P + self.d_bias)

    def residual_from_factors(self, color_fac: Tensor, context_fac: Tensor) -> Tensor:
        return torch.tanh((color_fac * context_fac) @ self.P + self.d_bias)

    def forward(self, f_clr: Tensor, f_cxt: Tensor, x_lab: Tensor) -> tuple[Tensor, Tensor]:
        """Return (residual, output Lab) with the skip connection applied."""
        res = self.residual(f_clr, f_cxt)
        return res, x_lab + unscale_lab(res)


def zero_parameters(module: nn.Module) -> nn.Module:
    """Zero every parameter in place; the head then maps every color to itself."""
    with torch.no_grad():
        for p in module.parameters():
            p.zero_()
    return module
