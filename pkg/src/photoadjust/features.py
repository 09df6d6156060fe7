"""Context feature extraction.

A small residual CNN backbone produces multi-scale feature maps, a
4-directional gated spatial RNN adds global context on top of the deepest
map, and per-pixel context vectors are read out sparsely as hypercolumns:
bilinear interpolation into every source map, per-source L2
normalization, concatenation, and a learned linear squeeze.

Convolutions use replicate padding so a constant image stays exactly
constant through the backbone, mirroring the boundary replication used by
the augmentation pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
from torch import Tensor, nn

from .bilinear import l2_normalize

_BN_EPS = 1e-5


@dataclass
class BackboneConfig:
    profile: str = "toy"  # "toy" | "full"
    stem_channels: int = 8
    block_channels: tuple[int, ...] = (16, 32, 64)
    rnn_hidden: int = 16
    rnn_channels: int = 32
    context_dim: int = 64
    pretrained: bool = False
    pretrained_path: str | None = None

    def __post_init__(self) -> None:
        # canonicalize so configs rebuilt from JSON lists compare equal
        self.block_channels = tuple(self.block_channels)
        if not self.block_channels or any(c <= 0 for c in self.block_channels):
            raise ValueError("block_channels must be nonempty and positive")
        if self.context_dim < 1:
            raise ValueError("context_dim must be >= 1")

    @staticmethod
    def toy(context_dim: int = 64) -> "BackboneConfig":
        return BackboneConfig(context_dim=context_dim)

    @staticmethod
    def full(pretrained: bool = False, pretrained_path: str | None = None) -> "BackboneConfig":
        return BackboneConfig(
            profile="full",
            stem_channels=64,
            block_channels=(256, 512, 1024),
            rnn_hidden=256,
            rnn_channels=1024,
            context_dim=512,
            pretrained=pretrained,
            pretrained_path=pretrained_path,
        )


@dataclass
class FeatureMaps:
    """Backbone outputs: near-input-resolution stem map, the residual block
    pyramid, and the spatial-RNN map (all (B, C, h, w))."""

    first_layer: Tensor
    blocks: list[Tensor]
    rnn: Tensor | None = None

    def sources(self) -> list[Tensor]:
        """Maps entering the hypercolumn, in a fixed documented order."""
        maps = list(self.blocks)
        if self.rnn is not None:
            maps.append(self.rnn)
        return maps


def _conv(cin: int, cout: int, k: int, stride: int, bias: bool) -> nn.Conv2d:
    return nn.Conv2d(
        cin, cout, k, stride=stride, padding=k // 2, padding_mode="replicate", bias=bias
    )


class ResidualBlock(nn.Module):
    """Two 3x3 convolutions with a projected skip; optional batch norm."""

    def __init__(self, cin: int, cout: int, stride: int, norm: bool) -> None:
        super().__init__()
        self.conv1 = _conv(cin, cout, 3, stride, bias=not norm)
        self.conv2 = _conv(cout, cout, 3, 1, bias=not norm)
        self.norm1 = nn.BatchNorm2d(cout, eps=_BN_EPS) if norm else nn.Identity()
        self.norm2 = nn.BatchNorm2d(cout, eps=_BN_EPS) if norm else nn.Identity()
        if stride != 1 or cin != cout:
            self.proj: nn.Module = _conv(cin, cout, 1, stride, bias=not norm)
        else:
            self.proj = nn.Identity()
        self.act = nn.ReLU()

    def forward(self, x: Tensor) -> Tensor:
        h = self.act(self.norm1(self.conv1(x)))
        h = self.norm2(self.conv2(h))
        return self.act(h + self.proj(x))


class Backbone(nn.Module):
    """Stem plus one stride-2-per-stage residual pyramid (toy profile) or a
    deeper stem with strides [1, 2, 2] (full profile)."""

    def __init__(self, config: BackboneConfig) -> None:
        super().__init__()
        self.config = config
        full = config.profile == "full"
        norm = full
        if full:
            self.stem = _conv(3, config.stem_channels, 7, 2, bias=not norm)
            self.pool: nn.Module = nn.MaxPool2d(3, stride=2, padding=1)
            strides = [1] + [2] * (len(config.block_channels) - 1)
        else:
            self.stem = _conv(3, config.stem_channels, 3, 1, bias=True)
            self.pool = nn.Identity()
            strides = [2] * len(config.block_channels)
        self.stem_norm = nn.BatchNorm2d(config.stem_channels, eps=_BN_EPS) if norm else nn.Identity()
        self.act = nn.ReLU()
        blocks = []
        cin = config.stem_channels
        for cout, stride in zip(config.block_channels, strides):
            blocks.append(ResidualBlock(cin, cout, stride, norm))
            cin = cout
        self.blocks = nn.ModuleList(blocks)

    def forward(self, x: Tensor) -> FeatureMaps:
        """``x`` is (B, 3, H, W) on the normalized color scale."""
        first = self.act(self.stem_norm(self.stem(x)))
        h = self.pool(first)
        maps = []
        for block in self.blocks:
            h = block(h)
            maps.append(h)
        return FeatureMaps(first_layer=first, blocks=maps)


class DirectionalGRU(nn.Module):
    """One sweep direction of the spatial RNN.

    The input-to-hidden pre-activations are normalized per step with
    statistics over the batch-and-orthogonal axis, then gated recurrent
    updates run along the sweep axis.
    """

    def __init__(self, in_channels: int, hidden: int) -> None:
        super().__init__()
        self.hidden = hidden
        self.w_in = nn.Parameter(torch.empty(in_channels, 3 * hidden))
        self.u_gates = nn.Parameter(torch.empty(hidden, 2 * hidden))
        self.u_cand = nn.Parameter(torch.empty(hidden, hidden))
        self.bias = nn.Parameter(torch.zeros(3 * hidden))
        self.norm_scale = nn.Parameter(torch.ones(3 * hidden))
        self.norm_shift = nn.Parameter(torch.zeros(3 * hidden))
        bound_in = (1.0 / in_channels) ** 0.5
        bound_h = (1.0 / hidden) ** 0.5
        nn.init.uniform_(self.w_in, -bound_in, bound_in)
        nn.init.uniform_(self.u_gates, -bound_h, bound_h)
        nn.init.uniform_(self.u_cand, -bound_h, bound_h)

    def _normalize(self, pre: Tensor) -> Tensor:
        # pre: (S, 3*hidden); statistics over the S axis (batch x orthogonal)
        mean = pre.mean(dim=0, keepdim=True)
        var = pre.var(dim=0, unbiased=False, keepdim=True)
        return (pre - mean) / torch.sqrt(var + _BN_EPS) * self.norm_scale + self.norm_shift

    def forward(self, steps: list[Tensor]) -> list[Tensor]:
        """``steps`` is a sequence of (S, C) inputs; returns hidden states."""
        s = steps[0].shape[0]
        h = steps[0].new_zeros(s, self.hidden)
        outputs = []
        for x in steps:
            pre = self._normalize(x @ self.w_in) + self.bias
            wu, wr, wn = pre.split(self.hidden, dim=1)
            gu, gr = (h @ self.u_gates).split(self.hidden, dim=1)
            u = torch.sigmoid(wu + gu)
            r = torch.sigmoid(wr + gr)
            cand = torch.tanh(wn + (r * h) @ self.u_cand)
            h = (1.0 - u) * h + u * cand
            outputs.append(h)
        return outputs


class SpatialRNN(nn.Module):
    """Four directional GRU sweeps concatenated and fused by a 1x1 conv."""

    DIRECTIONS = ("lr", "rl", "tb", "bt")

    def __init__(self, in_channels: int, hidden: int, out_channels: int) -> None:
        super().__init__()
        self.cells = nn.ModuleDict(
            {name: DirectionalGRU(in_channels, hidden) for name in self.DIRECTIONS}
        )
        self.fuse = nn.Conv2d(4 * hidden, out_channels, 1)

    @staticmethod
    def _unstack(x: Tensor, axis: int, reverse: bool) -> list[Tensor]:
        # x: (B, C, H, W); axis 3 sweeps over columns, axis 2 over rows.
        steps = x.unbind(dim=axis)
        if reverse:
            steps = steps[::-1]
        return [s.transpose(1, 2).reshape(-1, x.shape[1]) for s in steps]

    @staticmethod
    def _restack(
        outputs: list[Tensor], like: Tensor, axis: int, reverse: bool, hidden: int
    ) -> Tensor:
        b = like.shape[0]
        orth = like.shape[2] if axis == 3 else like.shape[3]
        if reverse:
            outputs = outputs[::-1]
        planes = [o.reshape(b, orth, hidden).transpose(1, 2) for o in outputs]
        return torch.stack(planes, dim=axis)

    def forward(self, x: Tensor) -> Tensor:
        sweeps = []
        for name in self.DIRECTIONS:
            axis = 3 if name in ("lr", "rl") else 2
            reverse = name in ("rl", "bt")
            steps = self._unstack(x, axis, reverse)
            out = self.cells[name](steps)
            sweeps.append(self._restack(out, x, axis, reverse, self.cells[name].hidden))
        return self.fuse(torch.cat(sweeps, dim=1))


def map_coordinates(coords: Tensor, map_hw: tuple[int, int], image_hw: tuple[int, int]) -> Tensor:
    """Image pixel coordinates -> fractional map coordinates.

    Pixel-center (align-corners-false) convention:
    map = (pixel + 0.5) * (map_size / image_size) - 0.5.
    """
    scale_r = map_hw[0] / image_hw[0]
    scale_c = map_hw[1] / image_hw[1]
    scale = coords.new_tensor([scale_r, scale_c])
    return (coords + 0.5) * scale - 0.5


def bilinear_readout(feature_map: Tensor, coords: Tensor, image_hw: tuple[int, int]) -> Tensor:
    """Interpolate a (B, C, h, w) map at (B, P, 2) image coordinates.

    Coordinates are (row, col) in image pixel units and must lie within
    the image; map-space positions are clamped at the borders.
    """
    b, c, h, w = feature_map.shape
    if coords.ndim != 3 or coords.shape[-1] != 2 or coords.shape[0] != b:
        raise ValueError(f"expected coordinates of shape (B, P, 2), got {tuple(coords.shape)}")
    if bool((coords[..., 0] < 0).any() or (coords[..., 0] > image_hw[0] - 1).any()):
        raise ValueError("row coordinate out of image bounds")
    if bool((coords[..., 1] < 0).any() or (coords[..., 1] > image_hw[1] - 1).any()):
        raise ValueError("column coordinate out of image bounds")
    mc = map_coordinates(coords.to(feature_map.dtype), (h, w), image_hw)
    r = mc[..., 0].clamp(0, h - 1)
    cc = mc[..., 1].clamp(0, w - 1)
    r0 = r.floor().long()
    c0 = cc.floor().long()
    r1 = (r0 + 1).clamp(max=h - 1)
    c1 = (c0 + 1).clamp(max=w - 1)
    fr = (r - r0).unsqueeze(-1)
    fc = (cc - c0).unsqueeze(-1)
    planes = feature_map.permute(0, 2, 3, 1)  # (B, h, w, C)
    batch = torch.arange(b, device=feature_map.device).unsqueeze(1).expand_as(r0)
    top = planes[batch, r0, c0] * (1 - fc) + planes[batch, r0, c1] * fc
    bot = planes[batch, r1, c0] * (1 - fc) + planes[batch, r1, c1] * fc
    return top * (1 - fr) + bot * fr


class HypercolumnSqueeze(nn.Module):
    """L2-normalize each interpolated source slice, concatenate, and project
    (a per-pixel linear map, i.e. a 1x1 convolution) to the context dim."""

    def __init__(self, source_dims: list[int], context_dim: int) -> None:
        super().__init__()
        self.source_dims = list(source_dims)
        self.project = nn.Linear(sum(source_dims), context_dim)

    def forward(self, maps: list[Tensor], coords: Tensor, image_hw: tuple[int, int]) -> Tensor:
        if len(maps) != len(self.source_dims):
            raise ValueError(f"expected {len(self.source_dims)} source maps, got {len(maps)}")
        slices = []
        for m, dim in zip(maps, self.source_dims):
            if m.shape[1] != dim:
                raise ValueError(f"source map has {m.shape[1]} channels, expected {dim}")
            slices.append(l2_normalize(bilinear_readout(m, coords, image_hw)))
        return self.project(torch.cat(slices, dim=-1))


class FeatureExtractor(nn.Module):
    """Backbone + spatial RNN + hypercolumn squeeze, as one trainable unit."""

    def __init__(self, config: BackboneConfig) -> None:
        super().__init__()
        self.config = config
        self.backbone = Backbone(config)
        self.rnn = SpatialRNN(config.block_channels[-1], config.rnn_hidden, config.rnn_channels)
        self.squeeze = HypercolumnSqueeze(
            list(config.block_channels) + [config.rnn_channels], config.context_dim
        )

    def forward_maps(self, x: Tensor) -> FeatureMaps:
        maps = self.backbone(x)
        maps.rnn = self.rnn(maps.blocks[-1])
        return maps

    def context_at(self, maps: FeatureMaps, coords: Tensor, image_hw: tuple[int, int]) -> Tensor:
        return self.squeeze(maps.sources(), coords, image_hw)

    def first_layer_at(self, maps: FeatureMaps, coords: Tensor, image_hw: tuple[int, int]) -> Tensor:
        """Raw (un-normalized) first-layer vectors at image coordinates."""
        return bilinear_readout(maps.first_layer, coords, image_hw)
